use nalgebra::{DMatrix, DVector};
use pronlearn::linalg::Matrix;
use pronlearn::metric::{factorize, logdet_div, mahalanobis, update_metric, MahalanobisMetric, UpdateStatus};
use pronlearn::rng;
use proptest::prelude::*;
use rand::Rng;

fn to_na(m: &Matrix<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn random_pd(r: &mut impl Rng, d: usize) -> Matrix<f64> {
    let m = DMatrix::from_fn(d, d, |_, _| r.gen_range(-1.0..1.0));
    let a = &m * m.transpose() + DMatrix::identity(d, d) * 0.5;
    Matrix::from_vec(d, d, a.transpose().as_slice().to_vec()).unwrap()
}

fn random_vec(r: &mut impl Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| r.gen_range(-1.0..1.0)).collect()
}

/// Upper-triangle parametrization of a symmetric 3×3 matrix.
fn sym(theta: &[f64]) -> DMatrix<f64> {
    let [a, b, c, d, e, f] = [theta[0], theta[1], theta[2], theta[3], theta[4], theta[5]];
    DMatrix::from_row_slice(3, 3, &[a, b, c, b, d, e, c, e, f])
}

/// `D_ld(A, A_t) + η (uᵀAu − vᵀAv)` up to constants; `+∞` outside the PD cone.
fn objective(theta: &[f64], a_t_inv: &DMatrix<f64>, u: &DVector<f64>, v: &DVector<f64>, eta: f64) -> f64 {
    let a = sym(theta);
    let Some(ch) = a.clone().cholesky() else {
        return f64::INFINITY;
    };
    let log_det: f64 = 2.0 * ch.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
    (&a * a_t_inv).trace() - log_det + eta * ((u.transpose() * &a * u)[0] - (v.transpose() * &a * v)[0])
}

/// Damped Newton with central-difference gradient and Hessian.
fn numerical_minimizer(a_t: &DMatrix<f64>, u: &DVector<f64>, v: &DVector<f64>, eta: f64) -> DMatrix<f64> {
    let inv = a_t.clone().try_inverse().unwrap();
    let f = |t: &[f64]| objective(t, &inv, u, v, eta);
    let mut theta = vec![a_t[(0, 0)], a_t[(0, 1)], a_t[(0, 2)], a_t[(1, 1)], a_t[(1, 2)], a_t[(2, 2)]];
    let grad = |t: &[f64], h: f64| -> DVector<f64> {
        DVector::from_fn(6, |i, _| {
            let mut p = t.to_vec();
            let mut m = t.to_vec();
            p[i] += h;
            m[i] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
    };
    for _ in 0..200 {
        let g = grad(&theta, 1e-6);
        let hess = DMatrix::from_fn(6, 6, |i, j| {
            let h = 1e-4;
            let mut p = theta.clone();
            let mut m = theta.clone();
            p[j] += h;
            m[j] -= h;
            (grad(&p, 1e-6)[i] - grad(&m, 1e-6)[i]) / (2.0 * h)
        });
        let hess = (&hess + hess.transpose()) * 0.5;
        let step = hess.clone().cholesky().map(|c| c.solve(&g)).unwrap_or_else(|| g.clone());
        let f0 = f(&theta);
        let mut t = 1.0;
        let next = loop {
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(x, s)| x - t * s).collect();
            if f(&cand) <= f0 || t < 1e-12 {
                break cand;
            }
            t *= 0.5;
        };
        let moved = next.iter().zip(&theta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        theta = next;
        if moved < 1e-13 {
            break;
        }
    }
    sym(&theta)
}

#[test]
fn closed_form_update_matches_numerical_minimizer() {
    let mut r = rng::rng(2024);
    let started = std::time::Instant::now();
    for case in 0..25 {
        let a_t = random_pd(&mut r, 3);
        let u = random_vec(&mut r, 3);
        let v = random_vec(&mut r, 3);
        let upd = update_metric(&MahalanobisMetric::new(a_t.clone()).unwrap(), &u, &v, 0.1).unwrap();
        assert!(matches!(upd.status, UpdateStatus::Applied { .. }));
        let oracle = numerical_minimizer(&to_na(&a_t), &DVector::from_vec(u), &DVector::from_vec(v), upd.eta);
        let err = (to_na(upd.metric.matrix()) - oracle).amax();
        assert!(err < 1e-4, "case {case}: ‖Δ‖∞ = {err:e}");
    }
    assert!(started.elapsed().as_secs() < 60);
}

#[test]
fn update_moves_distances_the_right_way() {
    let mut r = rng::rng(5);
    for _ in 0..50 {
        let m = MahalanobisMetric::new(random_pd(&mut r, 4)).unwrap();
        let w = random_vec(&mut r, 4);
        let zero = [0.0; 4];
        let before = mahalanobis(&m, &w, &zero).unwrap();
        let pulled = update_metric(&m, &w, &zero, 0.05).unwrap().metric;
        assert!(mahalanobis(&pulled, &w, &zero).unwrap() < before);
        let pushed = update_metric(&m, &zero, &w, 0.05).unwrap().metric;
        assert!(mahalanobis(&pushed, &w, &zero).unwrap() > before);
    }
}

#[test]
fn huge_steps_stay_positive_definite() {
    let mut r = rng::rng(6);
    let mut m = MahalanobisMetric::<f64>::identity(3);
    for _ in 0..200 {
        let u = random_vec(&mut r, 3);
        let v: Vec<f64> = random_vec(&mut r, 3).iter().map(|x| 10.0 * x).collect();
        let upd = update_metric(&m, &u, &v, 50.0).unwrap();
        let eig = to_na(upd.metric.matrix()).symmetric_eigen().eigenvalues.min();
        assert!(eig > 0.0);
        assert!(upd.metric.matrix().asymmetry() < 1e-9);
        m = upd.metric;
    }
}

#[test]
fn factor_reconstructs_the_metric() {
    let mut r = rng::rng(8);
    for _ in 0..20 {
        let a = random_pd(&mut r, 5);
        let g = factorize(&a).unwrap();
        let back = g.transpose().matmul(&g).unwrap();
        assert!(back.max_abs_diff(&a) < 1e-12);
        for i in 0..5 {
            for j in 0..i {
                assert_eq!(g[(i, j)], 0.0);
            }
        }
    }
}

#[test]
fn logdet_divergence_vanishes_only_at_equality() {
    let mut r = rng::rng(9);
    for _ in 0..100 {
        let a = random_pd(&mut r, 3);
        let b = random_pd(&mut r, 3);
        assert!(logdet_div(&a, &a).unwrap().abs() < 1e-9);
        let d = logdet_div(&a, &b).unwrap();
        assert!(d > 1e-9, "distinct matrices gave {d}");
        // Independent evaluation through eigenvalues of A_t⁻¹A.
        let na = to_na(&a);
        let nb = to_na(&b);
        let ch = nb.clone().cholesky().unwrap();
        let l_inv = ch.l().try_inverse().unwrap();
        let eig = (&l_inv * &na * l_inv.transpose()).symmetric_eigen().eigenvalues;
        let oracle: f64 = eig.iter().map(|l| l - l.ln() - 1.0).sum();
        assert!((d - oracle).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn mahalanobis_is_symmetric_and_non_negative(seed in any::<u64>()) {
        let mut r = rng::rng(seed);
        let m = MahalanobisMetric::new(random_pd(&mut r, 4)).unwrap();
        let x = random_vec(&mut r, 4);
        let y = random_vec(&mut r, 4);
        let xy = mahalanobis(&m, &x, &y).unwrap();
        let yx = mahalanobis(&m, &y, &x).unwrap();
        prop_assert!(xy >= 0.0);
        prop_assert!((xy - yx).abs() <= 1e-12 * (1.0 + xy));
        prop_assert_eq!(mahalanobis(&m, &x, &x).unwrap(), 0.0);
        let diff = DVector::from_vec(x.iter().zip(&y).map(|(a, b)| a - b).collect());
        let oracle = (diff.transpose() * to_na(m.matrix()) * &diff)[0];
        prop_assert!((xy - oracle).abs() < 1e-12);
    }
}
