use pronlearn::gbdt::{build_features, train_gbdt, GbdtModel, GbdtParams, Node};
use pronlearn::linalg::Matrix;
use pronlearn::rng;
use proptest::prelude::*;
use rand::Rng;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn random_data(seed: u64, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut r = rng::rng(seed);
    let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
    let ys = xs
        .iter()
        .map(|x| x[0] + 0.5 * x[1] * x[1] + r.gen_range(-0.3..0.3) > 0.1)
        .collect();
    (xs, ys)
}

#[test]
fn single_stump_by_hand() {
    let xs = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
    let ys = vec![false, false, true, true];
    let params = GbdtParams {
        trees: 1,
        depth: 1,
        shrinkage: 1.0,
        lambda: 1.0,
    };
    let t = train_gbdt(&xs, &ys, &params).unwrap();
    // Prior 1/2 → base 0; g = ±1/2, h = 1/4 per row; leaves −G/(H+λ) = ∓(1)/(1.5).
    assert_eq!(t.model.base_score, 0.0);
    assert_eq!(
        t.model.trees[0].nodes[0],
        Node::Split {
            feature: 0,
            threshold: 1.5,
            left: 1,
            right: 2
        }
    );
    assert!((t.model.margin(&[0.5]).unwrap() + 2.0 / 3.0).abs() < 1e-15);
    assert!((t.model.margin(&[2.5]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    assert!((t.model.predict(&[2.5]).unwrap() - sigmoid(2.0 / 3.0)).abs() < 1e-15);
    assert!((t.log_loss[0] - 2f64.ln()).abs() < 1e-15);
}

/// Exhaustive best stump under the second-order gain.
fn stump_oracle(xs: &[Vec<f64>], ys: &[bool], lambda: f64) -> impl Fn(&[f64]) -> f64 {
    let prior = ys.iter().filter(|&&y| y).count() as f64 / ys.len() as f64;
    let base = (prior / (1.0 - prior)).ln();
    let p = sigmoid(base);
    let g: Vec<f64> = ys.iter().map(|&y| p - f64::from(u8::from(y))).collect();
    let h = p * (1.0 - p);
    let score = |gs: f64, hs: f64| gs * gs / (hs + lambda);
    let (gt, ht) = (g.iter().sum::<f64>(), h * xs.len() as f64);
    let mut best = (0.0, 0usize, f64::INFINITY);
    for f in 0..xs[0].len() {
        let mut vals: Vec<f64> = xs.iter().map(|x| x[f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let (mut gl, mut hl) = (0.0, 0.0);
            for (x, gi) in xs.iter().zip(&g) {
                if x[f] < t {
                    gl += gi;
                    hl += h;
                }
            }
            let gain = score(gl, hl) + score(gt - gl, ht - hl) - score(gt, ht);
            if gain > best.0 + 1e-12 {
                best = (gain, f, t);
            }
        }
    }
    let (_, f, t) = best;
    let (mut gl, mut hl) = (0.0, 0.0);
    for (x, gi) in xs.iter().zip(&g) {
        if x[f] < t {
            gl += gi;
            hl += h;
        }
    }
    let (left, right) = (-gl / (hl + lambda), -(gt - gl) / (ht - hl + lambda));
    move |x: &[f64]| base + if x[f] < t { left } else { right }
}

#[test]
fn stump_matches_exhaustive_search() {
    for seed in 0..10 {
        let (xs, ys) = random_data(seed, 40, 3);
        let params = GbdtParams {
            trees: 1,
            depth: 1,
            shrinkage: 1.0,
            lambda: 1.0,
        };
        let model = train_gbdt(&xs, &ys, &params).unwrap().model;
        let oracle = stump_oracle(&xs, &ys, 1.0);
        for x in &xs {
            assert!((model.margin(x).unwrap() - oracle(x)).abs() < 1e-12);
        }
    }
}

#[test]
fn boosting_fits_training_data() {
    let (xs, ys) = random_data(3, 400, 4);
    let t = train_gbdt(&xs, &ys, &GbdtParams::default()).unwrap();
    for w in t.log_loss.windows(2) {
        assert!(w[1] <= w[0] + 1e-12);
    }
    let correct = xs
        .iter()
        .zip(&ys)
        .filter(|(x, &y)| (t.model.predict(x).unwrap() > 0.5) == y)
        .count();
    assert!(correct as f64 / xs.len() as f64 > 0.9);
}

#[test]
fn zero_shrinkage_predicts_the_prior() {
    let (xs, ys) = random_data(4, 100, 3);
    let params = GbdtParams {
        shrinkage: 0.0,
        ..GbdtParams::default()
    };
    let model = train_gbdt(&xs, &ys, &params).unwrap().model;
    let prior = ys.iter().filter(|&&y| y).count() as f64 / ys.len() as f64;
    let mut r = rng::rng(99);
    for _ in 0..50 {
        let x: Vec<f64> = (0..3).map(|_| r.gen_range(-5.0..5.0)).collect();
        assert!((model.predict(&x).unwrap() - prior).abs() < 1e-12);
    }
}

#[test]
fn splits_stay_inside_the_feature_vector() {
    let (xs, ys) = random_data(5, 200, 6);
    let model = train_gbdt(&xs, &ys, &GbdtParams::default()).unwrap().model;
    for tree in &model.trees {
        for node in &tree.nodes {
            if let Node::Split { feature, .. } = node {
                assert!(*feature < model.n_features);
            }
        }
    }
    assert!(model.predict(&[0.0; 5]).is_err());
}

#[test]
fn text_round_trip_is_exact() {
    let (xs, ys) = random_data(6, 150, 3);
    let model = train_gbdt(&xs, &ys, &GbdtParams::default()).unwrap().model;
    let back = GbdtModel::from_text(&model.to_text()).unwrap();
    assert_eq!(back, model);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.txt");
    model.save(&path).unwrap();
    assert_eq!(GbdtModel::load(&path).unwrap(), model);
    assert!(GbdtModel::from_text("not a model").is_err());
}

#[test]
fn degenerate_training_sets_are_rejected() {
    let xs = vec![vec![0.0], vec![1.0]];
    assert!(train_gbdt(&xs, &[true, true], &GbdtParams::default()).is_err());
    assert!(train_gbdt(&xs, &[true], &GbdtParams::default()).is_err());
    assert!(train_gbdt(&[vec![0.0], vec![f64::NAN]], &[true, false], &GbdtParams::default()).is_err());
}

#[test]
fn segment_pooling_by_hand() {
    let user = Matrix::from_rows(&[vec![1.0, 0.0], vec![3.0, 2.0], vec![5.0, 4.0]]).unwrap();
    let tts = Matrix::from_rows(&[vec![2.0, 2.0]]).unwrap();
    let f = build_features(&user, &tts, 2).unwrap();
    // 3 rows into 2 segments: rows [0, 1) and [1, 3). 1 row into 2: row 0 and padding.
    assert_eq!(f, vec![1.0, 0.0, 4.0, 3.0, 2.0, 2.0, 0.0, 0.0]);
    let narrow = Matrix::from_rows(&[vec![1.0]]).unwrap();
    assert!(build_features(&user, &narrow, 2).is_err());
}

proptest! {
    #[test]
    fn prediction_ignores_query_order(seed in 0u64..50) {
        let (xs, ys) = random_data(seed, 60, 3);
        let params = GbdtParams { trees: 10, ..GbdtParams::default() };
        let model = train_gbdt(&xs, &ys, &params).unwrap().model;
        let forward: Vec<f64> = xs.iter().map(|x| model.predict(x).unwrap()).collect();
        let mut backward: Vec<f64> = xs.iter().rev().map(|x| model.predict(x).unwrap()).collect();
        backward.reverse();
        prop_assert_eq!(forward, backward);
    }
}
