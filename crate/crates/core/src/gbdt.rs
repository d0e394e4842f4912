//! Gradient-boosted regression trees under logistic loss over pooled
//! phoneme-embedding pair features.
//!
//! Each round fits one tree to the loss gradients with exact greedy splits
//! (gain from gradient/hessian sums with L2 term `lambda`) and sets leaf
//! values by a Newton step `-G / (H + lambda)`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const DEFAULT_SEGMENTS: usize = 4;
const FORMAT_TAG: &str = "gbdt-v1";

/// Reduces each embedding sequence to `k` equal-width segment means (zero
/// rows pad sequences shorter than `k`) and concatenates user then TTS.
pub fn build_features(user: &Matrix<f64>, tts: &Matrix<f64>, k: usize) -> Result<Vec<f64>> {
    if user.cols() != tts.cols() {
        return Err(Error::shape(format!(
            "embedding widths differ: user {}, tts {}",
            user.cols(),
            tts.cols()
        )));
    }
    if k == 0 {
        return Err(Error::invalid("segment count must be positive"));
    }
    let mut out = Vec::with_capacity(2 * k * user.cols());
    pool_segments(user, k, &mut out);
    pool_segments(tts, k, &mut out);
    Ok(out)
}

fn pool_segments(m: &Matrix<f64>, k: usize, out: &mut Vec<f64>) {
    let e = m.cols();
    let n = m.rows().max(k);
    for seg in 0..k {
        let (lo, hi) = (seg * n / k, (seg + 1) * n / k);
        let mut acc = vec![0.0; e];
        for r in lo..hi.min(m.rows()) {
            for (a, v) in acc.iter_mut().zip(m.row(r)) {
                *a += v;
            }
        }
        let width = (hi - lo) as f64;
        out.extend(acc.into_iter().map(|a| a / width));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams {
    pub trees: usize,
    pub depth: usize,
    pub shrinkage: f64,
    pub lambda: f64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self {
            trees: 100,
            depth: 4,
            shrinkage: 0.1,
            lambda: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// Rows with `x[feature] < threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] < threshold { left } else { right },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub base_score: f64,
    pub shrinkage: f64,
    pub n_features: usize,
    pub trees: Vec<Tree>,
}

pub struct GbdtTraining {
    pub model: GbdtModel,
    /// Mean training log-loss before any tree, then after each round.
    pub log_loss: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_loss(margins: &[f64], labels: &[bool]) -> f64 {
    let total: f64 = margins
        .iter()
        .zip(labels)
        .map(|(&z, &y)| z.max(0.0) - if y { z } else { 0.0 } + (-z.abs()).exp().ln_1p())
        .sum();
    total / margins.len() as f64
}

pub fn train_gbdt(features: &[Vec<f64>], labels: &[bool], params: &GbdtParams) -> Result<GbdtTraining> {
    if features.is_empty() {
        return Err(Error::Empty("gbdt training set".into()));
    }
    if features.len() != labels.len() {
        return Err(Error::invalid("feature and label counts differ"));
    }
    if features.len() < 2 {
        return Err(Error::invalid("gbdt needs at least two examples"));
    }
    let positives = labels.iter().filter(|&&y| y).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::invalid("gbdt needs both classes"));
    }
    let d = features[0].len();
    if features.iter().any(|f| f.len() != d) {
        return Err(Error::shape("feature vectors differ in length"));
    }
    if features.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gbdt features".into()));
    }
    if params.depth == 0 || !(params.shrinkage >= 0.0) || !(params.lambda > 0.0) {
        return Err(Error::invalid("gbdt needs depth ≥ 1, shrinkage ≥ 0, lambda > 0"));
    }

    let prior = positives as f64 / labels.len() as f64;
    let base_score = (prior / (1.0 - prior)).ln();
    let n = features.len();
    let mut margins = vec![base_score; n];
    let mut losses = vec![log_loss(&margins, labels)];

    // Column-sorted row order, computed once.
    let order: Vec<Vec<usize>> = (0..d)
        .map(|f| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| features[a][f].total_cmp(&features[b][f]).then(a.cmp(&b)));
            idx
        })
        .collect();

    let mut trees = Vec::with_capacity(params.trees);
    for _ in 0..params.trees {
        let (grad, hess): (Vec<f64>, Vec<f64>) = margins
            .iter()
            .zip(labels)
            .map(|(&z, &y)| {
                let p = sigmoid(z);
                (p - if y { 1.0 } else { 0.0 }, p * (1.0 - p))
            })
            .unzip();
        let tree = grow_tree(features, &order, &grad, &hess, params);
        for (m, x) in margins.iter_mut().zip(features) {
            *m += params.shrinkage * tree.predict(x);
        }
        losses.push(log_loss(&margins, labels));
        trees.push(tree);
    }
    Ok(GbdtTraining {
        model: GbdtModel {
            base_score,
            shrinkage: params.shrinkage,
            n_features: d,
            trees,
        },
        log_loss: losses,
    })
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Level-wise growth: every open node of a level is split in one pass over
/// each pre-sorted feature column.
fn grow_tree(
    features: &[Vec<f64>],
    order: &[Vec<usize>],
    grad: &[f64],
    hess: &[f64],
    params: &GbdtParams,
) -> Tree {
    let n = features.len();
    let lambda = params.lambda;
    let score = |g: f64, h: f64| g * g / (h + lambda);
    let leaf = |g: f64, h: f64| -g / (h + lambda);

    let mut nodes = vec![Node::Leaf(0.0)];
    // Node of each row among the currently open nodes; `usize::MAX` once the
    // row has settled in a leaf.
    let mut slot = vec![0usize; n];
    let mut open = vec![0usize];

    for level in 0..=params.depth {
        let m = open.len();
        let mut g_tot = vec![0.0; m];
        let mut h_tot = vec![0.0; m];
        for i in 0..n {
            if slot[i] != usize::MAX {
                g_tot[slot[i]] += grad[i];
                h_tot[slot[i]] += hess[i];
            }
        }
        if level == params.depth {
            for (s, &node) in open.iter().enumerate() {
                nodes[node] = Node::Leaf(leaf(g_tot[s], h_tot[s]));
            }
            break;
        }

        let mut best: Vec<Option<Candidate>> = vec![None; m];
        let mut g_left = vec![0.0; m];
        let mut h_left = vec![0.0; m];
        let mut count_left = vec![0usize; m];
        let mut count = vec![0usize; m];
        for &s in slot.iter().filter(|&&s| s != usize::MAX) {
            count[s] += 1;
        }
        let mut last = vec![f64::NAN; m];
        for (f, idx) in order.iter().enumerate() {
            g_left.iter_mut().for_each(|v| *v = 0.0);
            h_left.iter_mut().for_each(|v| *v = 0.0);
            count_left.iter_mut().for_each(|v| *v = 0);
            last.iter_mut().for_each(|v| *v = f64::NAN);
            for &i in idx {
                let s = slot[i];
                if s == usize::MAX {
                    continue;
                }
                let x = features[i][f];
                // A split between the previous distinct value and this one.
                if count_left[s] > 0 && x > last[s] {
                    let gain = score(g_left[s], h_left[s])
                        + score(g_tot[s] - g_left[s], h_tot[s] - h_left[s])
                        - score(g_tot[s], h_tot[s]);
                    let threshold = last[s] + (x - last[s]) / 2.0;
                    if gain > 1e-12 && best[s].map_or(true, |b| gain > b.gain) {
                        best[s] = Some(Candidate {
                            gain,
                            feature: f,
                            threshold,
                        });
                    }
                }
                g_left[s] += grad[i];
                h_left[s] += hess[i];
                count_left[s] += 1;
                last[s] = x;
            }
        }

        let mut next_open = Vec::new();
        let mut next_slot_of = vec![(usize::MAX, usize::MAX); m];
        for (s, &node) in open.iter().enumerate() {
            match best[s] {
                Some(c) if count[s] >= 2 => {
                    let left = nodes.len();
                    nodes.push(Node::Leaf(0.0));
                    nodes.push(Node::Leaf(0.0));
                    nodes[node] = Node::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left,
                        right: left + 1,
                    };
                    next_slot_of[s] = (next_open.len(), next_open.len() + 1);
                    next_open.push(left);
                    next_open.push(left + 1);
                }
                _ => nodes[node] = Node::Leaf(leaf(g_tot[s], h_tot[s])),
            }
        }
        for i in 0..n {
            let s = slot[i];
            if s == usize::MAX {
                continue;
            }
            slot[i] = match (best[s], next_slot_of[s]) {
                (Some(c), (l, r)) if l != usize::MAX => {
                    if features[i][c.feature] < c.threshold {
                        l
                    } else {
                        r
                    }
                }
                _ => usize::MAX,
            };
        }
        open = next_open;
        if open.is_empty() {
            break;
        }
    }
    Tree { nodes }
}

impl GbdtModel {
    pub fn margin(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::shape(format!(
                "model expects {} features, got {}",
                self.n_features,
                x.len()
            )));
        }
        Ok(self.base_score + self.shrinkage * self.trees.iter().map(|t| t.predict(x)).sum::<f64>())
    }

    /// Probability that the pair is a mispronunciation.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.margin(x)?))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{FORMAT_TAG}").unwrap();
        writeln!(s, "base_score {}", self.base_score).unwrap();
        writeln!(s, "shrinkage {}", self.shrinkage).unwrap();
        writeln!(s, "features {}", self.n_features).unwrap();
        for (t, tree) in self.trees.iter().enumerate() {
            writeln!(s, "tree {t} {}", tree.nodes.len()).unwrap();
            for (id, node) in tree.nodes.iter().enumerate() {
                match node {
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => writeln!(s, "{id} split {feature} {threshold} {left} {right}").unwrap(),
                    Node::Leaf(v) => writeln!(s, "{id} leaf {v}").unwrap(),
                }
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Parse(format!("gbdt model: {msg}"));
        let mut lines = text.lines();
        if lines.next() != Some(FORMAT_TAG) {
            return Err(Error::Format(format!("expected `{FORMAT_TAG}` header")));
        }
        let mut field = |name: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| bad("truncated header"))?;
            line.strip_prefix(name)
                .map(|v| v.trim().to_owned())
                .ok_or_else(|| bad(&format!("expected `{name}`")))
        };
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(&format!("bad number `{s}`")));
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad(&format!("bad integer `{s}`")));
        let base_score = num(&field("base_score")?)?;
        let shrinkage = num(&field("shrinkage")?)?;
        let n_features = int(&field("features")?)?;
        let mut trees = Vec::new();
        while let Some(line) = lines.next() {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 || parts[0] != "tree" {
                return Err(bad(&format!("expected tree header, got `{line}`")));
            }
            let count = int(parts[2])?;
            let mut nodes = Vec::with_capacity(count);
            for id in 0..count {
                let line = lines.next().ok_or_else(|| bad("truncated tree"))?;
                let p: Vec<&str> = line.split_whitespace().collect();
                if p.first().map(|s| int(s)).transpose()? != Some(id) {
                    return Err(bad(&format!("node ids out of order at `{line}`")));
                }
                let node = match (p.get(1).copied(), p.len()) {
                    (Some("leaf"), 3) => Node::Leaf(num(p[2])?),
                    (Some("split"), 6) => Node::Split {
                        feature: int(p[2])?,
                        threshold: num(p[3])?,
                        left: int(p[4])?,
                        right: int(p[5])?,
                    },
                    _ => return Err(bad(&format!("malformed node `{line}`"))),
                };
                if let Node::Split { feature, left, right, .. } = node {
                    if feature >= n_features || left >= count || right >= count || left <= id || right <= id {
                        return Err(bad(&format!("node `{line}` references out of range")));
                    }
                }
                nodes.push(node);
            }
            trees.push(Tree { nodes });
        }
        Ok(Self {
            base_score,
            shrinkage,
            n_features,
            trees,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}
