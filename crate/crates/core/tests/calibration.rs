use pronlearn::calibration::{
    choose_threshold, evaluate_method, evaluate_scores, likert_report, pr_curve, EvalReport, MethodReport, PrPoint,
    ScoredPair,
};
use pronlearn::Error;
use proptest::prelude::*;

fn pairs(raw: &[(f64, bool)]) -> Vec<ScoredPair> {
    raw.iter().map(|&(s, l)| ScoredPair::new(s, l)).collect()
}

fn scored() -> impl Strategy<Value = Vec<ScoredPair>> {
    // Coarse scores so ties are common.
    prop::collection::vec((0u32..20, any::<bool>()), 1..60)
        .prop_map(|v| v.into_iter().map(|(s, l)| ScoredPair::new(f64::from(s) / 4.0, l)).collect())
}

fn recount(pairs: &[ScoredPair], threshold: f64) -> (usize, usize, usize, usize) {
    let tp = pairs.iter().filter(|p| p.label && p.score > threshold).count();
    let fp = pairs.iter().filter(|p| !p.label && p.score > threshold).count();
    let fn_ = pairs.iter().filter(|p| p.label && p.score <= threshold).count();
    let tn = pairs.iter().filter(|p| !p.label && p.score <= threshold).count();
    (tp, fp, fn_, tn)
}

fn counts(p: &PrPoint) -> (usize, usize, usize, usize) {
    (p.tp, p.fp, p.fn_, p.tn)
}

#[test]
fn confusion_counts_by_hand() {
    let ps = pairs(&[(0.1, false), (0.4, true), (0.35, false), (0.8, true), (0.3, true)]);
    let p = evaluate_scores(&ps, 0.3).unwrap();
    assert_eq!(counts(&p), (2, 1, 1, 1));
    assert!((p.precision - 2.0 / 3.0).abs() < 1e-15);
    assert!((p.recall - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn curve_by_hand() {
    let ps = pairs(&[(0.2, false), (0.2, true), (0.6, true), (0.9, false)]);
    let curve = pr_curve(&ps).unwrap();
    let thresholds: Vec<f64> = curve.iter().map(|p| p.threshold).collect();
    assert_eq!(thresholds, vec![f64::NEG_INFINITY, 0.4, 0.75, f64::INFINITY]);
    assert_eq!(counts(&curve[0]), (2, 2, 0, 0));
    assert_eq!(counts(&curve[1]), (1, 1, 1, 1));
    assert_eq!(counts(&curve[2]), (0, 1, 2, 1));
    assert_eq!(counts(&curve[3]), (0, 0, 2, 2));
    assert_eq!(curve[3].precision, 1.0);
}

#[test]
fn chooses_highest_recall_meeting_target() {
    let ps = pairs(&[(0.1, false), (0.2, false), (0.3, true), (0.4, false), (0.5, true), (0.6, true)]);
    let curve = pr_curve(&ps).unwrap();
    let p = choose_threshold(&curve, 0.95).unwrap();
    assert_eq!(p.threshold, 0.45);
    assert_eq!(p.recall, 2.0 / 3.0);
    let p = choose_threshold(&curve, 0.7).unwrap();
    assert_eq!(p.threshold, 0.25);
    assert_eq!(counts(&p), (3, 1, 0, 2));
}

#[test]
fn unattainable_target_is_infeasible() {
    let ps = pairs(&[(0.1, true), (0.2, false)]);
    let curve = pr_curve(&ps).unwrap();
    assert!(matches!(
        choose_threshold(&curve, 1.01),
        Err(Error::CalibrationInfeasible { .. })
    ));
    // The +inf sentinel flags nothing and so has vacuous precision 1.
    let p = choose_threshold(&curve, 1.0).unwrap();
    assert!(p.recall == 0.0 || p.precision == 1.0);
}

#[test]
fn non_finite_scores_are_rejected() {
    assert!(pr_curve(&pairs(&[(f64::NAN, true)])).is_err());
    assert!(evaluate_scores(&[], 0.5).is_err());
}

#[test]
fn infinite_thresholds_survive_json() {
    let p = PrPoint::from_counts(f64::INFINITY, 0, 0, 3, 4);
    let text = serde_json::to_string(&p).unwrap();
    assert!(text.contains("\"threshold\":\"inf\""));
    let back: PrPoint = serde_json::from_str(&text).unwrap();
    assert_eq!(back, p);
    let n = PrPoint::from_counts(f64::NEG_INFINITY, 3, 4, 0, 0);
    let back: PrPoint = serde_json::from_str(&serde_json::to_string(&n).unwrap()).unwrap();
    assert_eq!(back.threshold, f64::NEG_INFINITY);
}

#[test]
fn likert_by_hand() {
    let s = likert_report(&[3, 3, 1, 2], &[true, true, false, false]).unwrap();
    assert_eq!(s.percent, 50.0);
    assert_eq!(s.mean_likert, 2.25);
    assert!(likert_report(&[4], &[true]).is_err());
    assert!(likert_report(&[3], &[true, false]).is_err());
}

#[test]
fn method_report_averages_locales() {
    let scored = vec![
        ("a".to_string(), ScoredPair::new(0.9, true)),
        ("a".to_string(), ScoredPair::new(0.8, false)),
        ("b".to_string(), ScoredPair::new(0.9, true)),
        ("b".to_string(), ScoredPair::new(0.1, true)),
        ("b".to_string(), ScoredPair::new(0.1, false)),
    ];
    let r = MethodReport::new("m", 0.5, &scored).unwrap();
    assert_eq!(r.locales.len(), 2);
    assert_eq!(r.locales[0].precision, 0.5);
    assert_eq!(r.locales[0].recall, 1.0);
    assert_eq!(r.locales[1].precision, 1.0);
    assert_eq!(r.locales[1].recall, 0.5);
    assert_eq!(r.average_precision, 0.75);
    assert_eq!(r.average_recall, 0.75);
    assert_eq!(counts(&r.pooled), (2, 1, 1, 1));
    let report = EvalReport {
        intrinsic: vec![r],
        extrinsic: vec![],
    };
    let back: EvalReport = serde_json::from_str(&serde_json::to_string(&report).unwrap()).unwrap();
    assert_eq!(back, report);
    assert!(report.to_table().contains("75.00"));
}

proptest! {
    #[test]
    fn curve_is_monotone(ps in scored()) {
        let curve = pr_curve(&ps).unwrap();
        for w in curve.windows(2) {
            prop_assert!(w[0].threshold < w[1].threshold);
            prop_assert!(w[1].predicted_positive() <= w[0].predicted_positive());
            prop_assert!(w[1].recall <= w[0].recall);
        }
        for p in &curve {
            prop_assert_eq!(counts(p), recount(&ps, p.threshold));
        }
    }

    #[test]
    fn curve_ignores_monotone_transforms(ps in scored()) {
        let warped: Vec<ScoredPair> = ps.iter().map(|p| ScoredPair::new((3.0 * p.score).exp() - 7.0, p.label)).collect();
        let a = pr_curve(&ps).unwrap();
        let b = pr_curve(&warped).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(counts(x), counts(y));
        }
    }

    #[test]
    fn chosen_threshold_recounts_at_target(ps in scored(), target in 0.0f64..1.0) {
        let curve = pr_curve(&ps).unwrap();
        let p = choose_threshold(&curve, target).unwrap();
        let again = evaluate_method(&ps, |q| Ok(q.score), |q| q.label, p.threshold).unwrap();
        prop_assert!(again.precision >= target);
        prop_assert_eq!(counts(&again), counts(&p));
        // No threshold at any observed score or midpoint does better.
        let mut candidates: Vec<f64> = ps.iter().map(|q| q.score).collect();
        candidates.push(f64::NEG_INFINITY);
        for t in candidates {
            let (tp, fp, fn_, _) = recount(&ps, t);
            let prec = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
            let rec = if tp + fn_ == 0 { 1.0 } else { tp as f64 / (tp + fn_) as f64 };
            if prec >= target {
                prop_assert!(rec <= p.recall);
            }
        }
    }
}
