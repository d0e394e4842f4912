//! Precision/recall curves, threshold selection against a precision target,
//! and the intrinsic/extrinsic report. The positive class is
//! "mispronounced"; a pair is flagged when its score exceeds the threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub score: f64,
    pub label: bool,
}

impl ScoredPair {
    pub fn new(score: f64, label: bool) -> Self {
        Self { score, label }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    #[serde(with = "threshold_serde")]
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl PrPoint {
    pub fn from_counts(threshold: f64, tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 1.0 } else { tp as f64 / (tp + fn_) as f64 };
        Self {
            threshold,
            precision,
            recall,
            tp,
            fp,
            fn_,
            tn,
        }
    }

    pub fn predicted_positive(&self) -> usize {
        self.tp + self.fp
    }
}

/// Infinite sentinels travel through JSON as the strings `"inf"` and
/// `"-inf"`.
pub mod threshold_serde {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Text(t) => Err(de::Error::custom(format!("bad threshold `{t}`"))),
        }
    }
}

fn check_scores(pairs: &[ScoredPair]) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::Empty("no scored pairs".into()));
    }
    if pairs.iter().any(|p| !p.score.is_finite()) {
        return Err(Error::NonFinite("detector score".into()));
    }
    Ok(())
}

/// Confusion counts at one threshold.
pub fn evaluate_scores(pairs: &[ScoredPair], threshold: f64) -> Result<PrPoint> {
    check_scores(pairs)?;
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for p in pairs {
        match (p.score > threshold, p.label) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(PrPoint::from_counts(threshold, tp, fp, fn_, tn))
}

/// One point per candidate threshold, ascending: `-inf`, the midpoints
/// between consecutive distinct scores, and `+inf`.
pub fn pr_curve(pairs: &[ScoredPair]) -> Result<Vec<PrPoint>> {
    check_scores(pairs)?;
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| a.score.total_cmp(&b.score));
    let positives = sorted.iter().filter(|p| p.label).count();
    let negatives = sorted.len() - positives;

    // Sweep upward: everything at or below the threshold is predicted
    // negative.
    let mut curve = vec![PrPoint::from_counts(f64::NEG_INFINITY, positives, negatives, 0, 0)];
    let (mut fn_, mut tn) = (0, 0);
    let mut i = 0;
    while i < sorted.len() {
        let s = sorted[i].score;
        while i < sorted.len() && sorted[i].score == s {
            if sorted[i].label {
                fn_ += 1;
            } else {
                tn += 1;
            }
            i += 1;
        }
        let threshold = if i < sorted.len() {
            s + (sorted[i].score - s) / 2.0
        } else {
            f64::INFINITY
        };
        curve.push(PrPoint::from_counts(threshold, positives - fn_, negatives - tn, fn_, tn));
    }
    Ok(curve)
}

/// Among points meeting `target_precision`, the one with the highest recall;
/// ties go to higher precision, then to the lower threshold.
pub fn choose_threshold(curve: &[PrPoint], target_precision: f64) -> Result<PrPoint> {
    if curve.is_empty() {
        return Err(Error::Empty("empty precision/recall curve".into()));
    }
    curve
        .iter()
        .filter(|p| p.precision >= target_precision)
        .copied()
        .reduce(|best, p| {
            let better = p.recall > best.recall
                || (p.recall == best.recall && p.precision > best.precision)
                || (p.recall == best.recall && p.precision == best.precision && p.threshold < best.threshold);
            if better {
                p
            } else {
                best
            }
        })
        .ok_or(Error::CalibrationInfeasible {
            target: target_precision,
        })
}

/// Runs `detector` over `items` and scores its verdicts at `threshold`.
pub fn evaluate_method<I>(
    items: &[I],
    detector: impl Fn(&I) -> Result<f64>,
    label: impl Fn(&I) -> bool,
    threshold: f64,
) -> Result<PrPoint> {
    if items.is_empty() {
        return Err(Error::Empty("evaluation corpus".into()));
    }
    let pairs = items
        .iter()
        .map(|it| Ok(ScoredPair::new(detector(it)?, label(it))))
        .collect::<Result<Vec<_>>>()?;
    evaluate_scores(&pairs, threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikertSummary {
    pub percent: f64,
    pub mean_likert: f64,
}

/// Percent of correct entities and mean 3-point Likert score, where 1 means
/// the pronunciations differ, 2 partial similarity, 3 full similarity.
pub fn likert_report(scores: &[u8], correct: &[bool]) -> Result<LikertSummary> {
    if scores.is_empty() {
        return Err(Error::Empty("likert scores".into()));
    }
    if scores.len() != correct.len() {
        return Err(Error::invalid(format!(
            "{} likert scores but {} correctness flags",
            scores.len(),
            correct.len()
        )));
    }
    if let Some(bad) = scores.iter().find(|s| !(1..=3).contains(*s)) {
        return Err(Error::invalid(format!("likert score {bad} outside 1..=3")));
    }
    let n = scores.len() as f64;
    Ok(LikertSummary {
        percent: 100.0 * correct.iter().filter(|&&c| c).count() as f64 / n,
        mean_likert: scores.iter().map(|&s| f64::from(s)).sum::<f64>() / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocaleMetrics {
    pub locale: String,
    pub precision: f64,
    pub recall: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    #[serde(with = "threshold_serde")]
    pub threshold: f64,
    pub locales: Vec<LocaleMetrics>,
    /// Unweighted mean over locales.
    pub average_precision: f64,
    pub average_recall: f64,
    /// Pooled over all evaluation pairs.
    pub pooled: PrPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrinsicRow {
    pub locale: String,
    pub percent: f64,
    pub mean_likert: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub intrinsic: Vec<MethodReport>,
    pub extrinsic: Vec<ExtrinsicRow>,
}

impl MethodReport {
    /// Builds per-locale and pooled metrics from `(locale, pair)` scores.
    pub fn new(method: &str, threshold: f64, scored: &[(String, ScoredPair)]) -> Result<Self> {
        let pooled_pairs: Vec<ScoredPair> = scored.iter().map(|(_, p)| *p).collect();
        let pooled = evaluate_scores(&pooled_pairs, threshold)?;
        let mut locales: Vec<String> = scored.iter().map(|(l, _)| l.clone()).collect();
        locales.dedup();
        let mut rows = Vec::new();
        for locale in locales {
            if rows.iter().any(|r: &LocaleMetrics| r.locale == locale) {
                continue;
            }
            let pairs: Vec<ScoredPair> = scored.iter().filter(|(l, _)| *l == locale).map(|(_, p)| *p).collect();
            let pt = evaluate_scores(&pairs, threshold)?;
            rows.push(LocaleMetrics {
                locale,
                precision: pt.precision,
                recall: pt.recall,
                pairs: pairs.len(),
            });
        }
        let n = rows.len() as f64;
        Ok(Self {
            method: method.to_owned(),
            threshold,
            average_precision: rows.iter().map(|r| r.precision).sum::<f64>() / n,
            average_recall: rows.iter().map(|r| r.recall).sum::<f64>() / n,
            locales: rows,
            pooled,
        })
    }
}

impl EvalReport {
    /// Aligned plain-text tables.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        if !self.intrinsic.is_empty() {
            out.push_str(&format!(
                "{:<12} {:>10} {:>10} {:>10}\n",
                "method", "threshold", "precision", "recall"
            ));
            for m in &self.intrinsic {
                out.push_str(&format!(
                    "{:<12} {:>10.4} {:>10.2} {:>10.2}\n",
                    m.method,
                    m.threshold,
                    100.0 * m.average_precision,
                    100.0 * m.average_recall
                ));
            }
        }
        if !self.extrinsic.is_empty() {
            out.push_str(&format!("\n{:<8} {:>9} {:>7}\n", "locale", "accuracy", "likert"));
            for r in &self.extrinsic {
                out.push_str(&format!("{:<8} {:>8.2}% {:>7.2}\n", r.locale, r.percent, r.mean_likert));
            }
        }
        out
    }
}
