use pronlearn::dtw::{dtw, euclidean, fast_dtw, squared_euclidean};
use pronlearn::rng;
use proptest::prelude::*;
use rand::Rng;

/// Minimum path cost by enumerating every monotone unit-step path.
fn brute_force(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    fn walk(a: &[Vec<f64>], b: &[Vec<f64>], i: usize, j: usize, acc: f64, best: &mut f64) {
        let acc = acc + squared_euclidean(&a[i], &b[j]);
        if i + 1 == a.len() && j + 1 == b.len() {
            *best = best.min(acc);
            return;
        }
        if i + 1 < a.len() {
            walk(a, b, i + 1, j, acc, best);
        }
        if j + 1 < b.len() {
            walk(a, b, i, j + 1, acc, best);
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            walk(a, b, i + 1, j + 1, acc, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(a, b, 0, 0, 0.0, &mut best);
    best
}

fn random_seq(r: &mut impl Rng, len: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..len).map(|_| (0..dim).map(|_| r.gen_range(-1.0..1.0)).collect()).collect()
}

fn path_cost(a: &[Vec<f64>], b: &[Vec<f64>], path: &[(usize, usize)]) -> f64 {
    path.iter().map(|&(i, j)| squared_euclidean(&a[i], &b[j])).sum()
}

#[test]
fn exact_dtw_matches_enumeration() {
    let mut r = rng::rng(11);
    for _ in 0..50 {
        let (n, m) = (r.gen_range(1..=6), r.gen_range(1..=6));
        let a = random_seq(&mut r, n, 3);
        let b = random_seq(&mut r, m, 3);
        let res = dtw(&a, &b, |x: &Vec<f64>, y: &Vec<f64>| squared_euclidean(x, y)).unwrap();
        let oracle = brute_force(&a, &b);
        assert!((res.cost - oracle).abs() < 1e-12, "{} vs {oracle}", res.cost);
        assert!(res.path.is_valid(n, m));
        assert!((path_cost(&a, &b, res.path.pairs()) - res.cost).abs() < 1e-12);
    }
}

#[test]
fn wide_radius_fast_dtw_is_exact() {
    let mut r = rng::rng(12);
    for _ in 0..20 {
        let (n, m) = (r.gen_range(1..=40), r.gen_range(1..=40));
        let a = random_seq(&mut r, n, 4);
        let b = random_seq(&mut r, m, 4);
        let exact = dtw(&a, &b, |x: &Vec<f64>, y: &Vec<f64>| squared_euclidean(x, y)).unwrap();
        let fast = fast_dtw(&a, &b, n.max(m), squared_euclidean).unwrap();
        assert_eq!(fast.cost, exact.cost);
        assert_eq!(fast.path, exact.path);
    }
}

#[test]
fn narrow_radius_never_beats_exact() {
    let mut r = rng::rng(13);
    for _ in 0..20 {
        let a = random_seq(&mut r, 60, 4);
        let b = random_seq(&mut r, 50, 4);
        let exact = dtw(&a, &b, |x: &Vec<f64>, y: &Vec<f64>| euclidean(x, y)).unwrap();
        let fast = fast_dtw(&a, &b, 2, euclidean).unwrap();
        assert!(fast.cost >= exact.cost - 1e-12);
        assert!(fast.path.is_valid(60, 50));
    }
}

#[test]
fn scalar_sequences_by_hand() {
    // |1-1| + |2-2| + |3-2| + |4-4|: the repeated 2 absorbs the 3.
    let a = [1.0, 2.0, 3.0, 4.0];
    let b = [1.0, 2.0, 2.0, 4.0];
    let res = dtw(&a, &b, |x: &f64, y: &f64| (x - y).abs()).unwrap();
    assert_eq!(res.cost, 1.0);
    assert!(dtw::<f64, f64, _>(&[], &b, |x: &f64, y: &f64| (x - y).abs()).is_err());
}

fn frames() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..12)
}

proptest! {
    #[test]
    fn dtw_is_symmetric(a in frames(), b in frames()) {
        let ab = dtw(&a, &b, |x: &Vec<f64>, y: &Vec<f64>| euclidean(x, y)).unwrap();
        let ba = dtw(&b, &a, |x: &Vec<f64>, y: &Vec<f64>| euclidean(x, y)).unwrap();
        prop_assert!((ab.cost - ba.cost).abs() < 1e-9);
    }

    #[test]
    fn paths_are_valid(a in frames(), b in frames(), radius in 0usize..4) {
        let exact = dtw(&a, &b, |x: &Vec<f64>, y: &Vec<f64>| euclidean(x, y)).unwrap();
        prop_assert!(exact.path.is_valid(a.len(), b.len()));
        let fast = fast_dtw(&a, &b, radius, euclidean).unwrap();
        prop_assert!(fast.path.is_valid(a.len(), b.len()));
    }

    #[test]
    fn self_alignment_costs_nothing(a in frames()) {
        let res = dtw(&a, &a, |x: &Vec<f64>, y: &Vec<f64>| euclidean(x, y)).unwrap();
        prop_assert_eq!(res.cost, 0.0);
        let fast = fast_dtw(&a, &a, 1, euclidean).unwrap();
        prop_assert_eq!(fast.cost, 0.0);
    }
}
