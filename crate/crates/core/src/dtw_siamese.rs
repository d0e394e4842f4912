//! DTW-SiameseNet: a tied LSTM + attention-pooling window encoder `f_W` and
//! a learned Mahalanobis frame distance `D_A`, trained on triplets and used
//! inside the DTW recursion.
//!
//! Training alternates two steps per triplet batch: an SGD step on the
//! encoder against the summed triplet loss with `A` held fixed, then the
//! closed-form LogDet-regularized update of `A` for each triplet that still
//! violates its margin. Triplets whose loss is already non-positive update
//! neither.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::MelSpectrogram;
use crate::dtw::{dtw, squared_euclidean, DtwResult};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::metric::{update_metric, MahalanobisMetric, UpdateStatus};
use crate::nn::{Checkpoint, Graph, LstmCell, ParamId, ParameterSet, SgdConfig, Tensor, Var};
use crate::rng;
use crate::verdict::DetectionVerdict;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTrainConfig {
    /// Triplet margin ρ.
    pub rho: f64,
    pub u_bound: f64,
    pub l_bound: f64,
    /// LogDet regularization weight η (constant schedule).
    pub eta: f64,
    /// Frames per encoder window.
    pub window: usize,
    /// Encoder output dimension, also the size of `A`.
    pub dim: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MetricTrainConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            u_bound: 1.0,
            l_bound: 3.0,
            eta: 0.1,
            window: 8,
            dim: 32,
            learning_rate: 1e-3,
            momentum: 0.9,
            epochs: 10,
            batch_size: 16,
            seed: 7,
        }
    }
}

impl MetricTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < self.l_bound - self.u_bound) {
            return Err(Error::invalid(format!(
                "need 0 < rho < l_bound - u_bound, got rho={} u_bound={} l_bound={}",
                self.rho, self.u_bound, self.l_bound
            )));
        }
        if !(self.eta > 0.0) {
            return Err(Error::invalid("eta must be positive"));
        }
        if self.window == 0 || self.dim == 0 || self.batch_size == 0 {
            return Err(Error::invalid("window, dim and batch size must be at least 1"));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("learning rate must be positive and momentum in [0, 1)"));
        }
        Ok(())
    }
}

/// Anchor, positive and negative frame windows (`frames × n_mels`).
#[derive(Debug, Clone, PartialEq)]
pub struct Triplet {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy)]
struct EncoderLayers {
    lstm: LstmCell,
    /// Attention scoring vector, `dim × 1`.
    score: ParamId,
}

/// Window encoder shared by both branches. In bypass mode it passes each
/// raw frame through unchanged.
#[derive(Debug, Clone)]
pub struct TwinEncoder {
    n_mels: usize,
    window: usize,
    dim: usize,
    params: ParameterSet,
    layers: Option<EncoderLayers>,
}

/// Median-centres a log-Mel frame and scales it by 1/10, removing overall
/// gain before the encoder sees it.
pub fn normalize_frame(frame: &[f64]) -> Vec<f64> {
    if frame.is_empty() {
        return Vec::new();
    }
    let mut sorted = frame.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    frame.iter().map(|v| (v - median) / 10.0).collect()
}

/// Windows of `window` frames starting at every frame (stride 1); frames
/// past the end are zeros.
pub fn frame_windows(frames: &[Vec<f64>], window: usize) -> Vec<Vec<Vec<f64>>> {
    let width = frames.first().map_or(0, Vec::len);
    (0..frames.len())
        .map(|i| {
            (i..i + window)
                .map(|t| frames.get(t).cloned().unwrap_or_else(|| vec![0.0; width]))
                .collect()
        })
        .collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl TwinEncoder {
    pub fn new(n_mels: usize, window: usize, dim: usize, seed: u64) -> Result<Self> {
        if n_mels == 0 || window == 0 || dim == 0 {
            return Err(Error::invalid("encoder sizes must be positive"));
        }
        let mut r = rng::rng_for(seed, "twin-encoder-init");
        let mut ps = ParameterSet::new();
        let lstm = LstmCell::new(&mut ps, "encoder.lstm", n_mels, dim, &mut r)?;
        let score = ps.add_uniform("encoder.score", &[dim, 1], crate::nn::glorot_bound(dim, 1), &mut r)?;
        Ok(Self {
            n_mels,
            window,
            dim,
            params: ps,
            layers: Some(EncoderLayers { lstm, score }),
        })
    }

    pub fn bypass(n_mels: usize) -> Self {
        Self {
            n_mels,
            window: 1,
            dim: n_mels,
            params: ParameterSet::new(),
            layers: None,
        }
    }

    pub fn is_bypass(&self) -> bool {
        self.layers.is_none()
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    fn check_window(&self, w: &[Vec<f64>]) -> Result<()> {
        if w.len() != self.window || w.iter().any(|f| f.len() != self.n_mels) {
            return Err(Error::shape(format!(
                "encoder expects {} frames of {} mels",
                self.window, self.n_mels
            )));
        }
        Ok(())
    }

    /// Graph path over a batch of windows: row `b` of the result is the
    /// encoding of `windows[b]`. Not available in bypass mode.
    pub fn encode_graph(&self, g: &mut Graph, ps: &ParameterSet, windows: &[&[Vec<f64>]]) -> Result<Var> {
        let layers = self
            .layers
            .ok_or_else(|| Error::invalid("bypass encoder has no trainable graph"))?;
        if windows.is_empty() {
            return Err(Error::Empty("encoder batch".into()));
        }
        for w in windows {
            self.check_window(w)?;
        }
        let b = windows.len();
        let mut steps = Vec::with_capacity(self.window);
        for t in 0..self.window {
            let mut data = Vec::with_capacity(b * self.n_mels);
            for w in windows {
                data.extend(normalize_frame(&w[t]));
            }
            steps.push(g.input(Tensor::matrix(b, self.n_mels, data)?));
        }
        let mut state = layers.lstm.zero_state(g, b);
        let score = g.param(ps, layers.score);
        let mut hs = Vec::with_capacity(self.window);
        let mut scores = Vec::with_capacity(self.window);
        for x in steps {
            state = layers.lstm.step(g, ps, x, state)?;
            hs.push(state.h);
            scores.push(g.matmul(state.h, score)?);
        }
        let scores = g.concat_cols(&scores)?;
        let alpha = g.softmax_rows(scores);
        let mut pooled = None;
        for (t, h) in hs.into_iter().enumerate() {
            let a = g.slice_cols(alpha, t, t + 1)?;
            let term = g.mul_col(h, a)?;
            pooled = Some(match pooled {
                None => term,
                Some(acc) => g.add(acc, term)?,
            });
        }
        Ok(pooled.expect("window is non-empty"))
    }

    /// Plain forward pass of one window; agrees with [`encode_graph`] up to
    /// rounding. In bypass mode a window must hold exactly one frame.
    pub fn encode(&self, window: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.check_window(window)?;
        let Some(layers) = self.layers else {
            return Ok(window[0].clone());
        };
        let projected: Vec<Vec<f64>> = window
            .iter()
            .map(|f| self.input_projection(&layers, &normalize_frame(f)))
            .collect();
        Ok(self.recur(&layers, projected.iter().map(Vec::as_slice)))
    }

    /// Encodes every stride-1 window of `mel` (one raw frame each in bypass
    /// mode).
    pub fn encode_mel(&self, mel: &MelSpectrogram<f64>) -> Result<Vec<Vec<f64>>> {
        if mel.n_mels() != self.n_mels {
            return Err(Error::shape(format!(
                "encoder expects {} mels, got {}",
                self.n_mels,
                mel.n_mels()
            )));
        }
        let Some(layers) = self.layers else {
            return Ok(mel.frames().to_vec());
        };
        // The input projection of each frame is shared by every window that
        // covers it.
        let projected: Vec<Vec<f64>> = mel
            .frames()
            .iter()
            .map(|f| self.input_projection(&layers, &normalize_frame(f)))
            .collect();
        let pad = self.input_projection(&layers, &vec![0.0; self.n_mels]);
        Ok((0..projected.len())
            .map(|i| {
                let rows = (i..i + self.window).map(|t| projected.get(t).map_or(pad.as_slice(), Vec::as_slice));
                self.recur(&layers, rows)
            })
            .collect())
    }

    fn input_projection(&self, layers: &EncoderLayers, x: &[f64]) -> Vec<f64> {
        let w = self.params.value(layers.lstm.w_input).data();
        let four = 4 * self.dim;
        let mut z = vec![0.0; four];
        for (k, &xk) in x.iter().enumerate() {
            let row = &w[k * four..(k + 1) * four];
            for (zj, &wj) in z.iter_mut().zip(row) {
                *zj += xk * wj;
            }
        }
        z
    }

    fn recur<'a>(&self, layers: &EncoderLayers, inputs: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
        let d = self.dim;
        let four = 4 * d;
        let wh = self.params.value(layers.lstm.w_hidden).data();
        let bias = self.params.value(layers.lstm.bias).data();
        let score = self.params.value(layers.score).data();
        let mut h = vec![0.0; d];
        let mut c = vec![0.0; d];
        let mut hs = Vec::with_capacity(self.window);
        let mut z = vec![0.0; four];
        for xz in inputs {
            z.copy_from_slice(xz);
            for (k, &hk) in h.iter().enumerate() {
                let row = &wh[k * four..(k + 1) * four];
                for (zj, &wj) in z.iter_mut().zip(row) {
                    *zj += hk * wj;
                }
            }
            for (zj, &bj) in z.iter_mut().zip(bias) {
                *zj += bj;
            }
            for j in 0..d {
                let i = sigmoid(z[j]);
                let f = sigmoid(z[d + j]);
                let g = z[2 * d + j].tanh();
                let o = sigmoid(z[3 * d + j]);
                c[j] = f * c[j] + i * g;
                h[j] = o * c[j].tanh();
            }
            hs.push(h.clone());
        }
        let e: Vec<f64> = hs
            .iter()
            .map(|h| h.iter().zip(score).map(|(a, b)| a * b).sum())
            .collect();
        let max = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = e.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = w.iter().sum();
        let mut out = vec![0.0; d];
        for (h, wt) in hs.iter().zip(&w) {
            for (o, v) in out.iter_mut().zip(h) {
                *o += v * (wt / total);
            }
        }
        out
    }
}

/// Summed triplet loss `Σ ρ + D_A(f(x), f(y)) − D_A(f(x), f(z))` over the
/// rows selected by `mask` (1 keeps a triplet, 0 drops it). `factor` is `G`
/// with `GᵀG = A`, held fixed.
pub fn triplet_loss_graph(
    encoder: &TwinEncoder,
    g: &mut Graph,
    ps: &ParameterSet,
    triplets: &[&Triplet],
    factor: &Matrix<f64>,
    rho: f64,
    mask: &[f64],
) -> Result<Var> {
    let xs: Vec<&[Vec<f64>]> = triplets.iter().map(|t| t.x.as_slice()).collect();
    let ys: Vec<&[Vec<f64>]> = triplets.iter().map(|t| t.y.as_slice()).collect();
    let zs: Vec<&[Vec<f64>]> = triplets.iter().map(|t| t.z.as_slice()).collect();
    let fx = encoder.encode_graph(g, ps, &xs)?;
    let fy = encoder.encode_graph(g, ps, &ys)?;
    let fz = encoder.encode_graph(g, ps, &zs)?;
    let gt = factor.transpose();
    let gt = g.input(Tensor::matrix(gt.rows(), gt.cols(), gt.as_slice().to_vec())?);
    let mut dist = |a: Var, b: Var| -> Result<Var> {
        let diff = g.sub(a, b)?;
        let p = g.matmul(diff, gt)?;
        let sq = g.mul(p, p)?;
        Ok(g.sum_cols(sq))
    };
    let dxy = dist(fx, fy)?;
    let dxz = dist(fx, fz)?;
    let margin = g.sub(dxy, dxz)?;
    let loss = g.add_scalar(margin, rho);
    let mask = g.input(Tensor::matrix(mask.len(), 1, mask.to_vec())?);
    let kept = g.mul(loss, mask)?;
    Ok(g.sum(kept))
}

/// `ρ + D_A(f(x), f(y)) − D_A(f(x), f(z))` for one triplet.
pub fn triplet_loss(metric: &MahalanobisMetric<f64>, encoder: &TwinEncoder, t: &Triplet, rho: f64) -> Result<f64> {
    let (fx, fy, fz) = (encoder.encode(&t.x)?, encoder.encode(&t.y)?, encoder.encode(&t.z)?);
    Ok(rho + metric.distance(&fx, &fy)? - metric.distance(&fx, &fz)?)
}

#[derive(Debug, Clone)]
pub struct DtwSiameseModel {
    pub metric: MahalanobisMetric<f64>,
    pub encoder: TwinEncoder,
    pub config: MetricTrainConfig,
}

pub struct MetricTraining {
    pub model: DtwSiameseModel,
    /// Mean hinge loss `max(0, ·)` over all triplets, measured before each
    /// epoch's updates; the last entry is measured after training.
    pub epoch_loss: Vec<f64>,
    pub metric_updates: usize,
    pub rejected_updates: usize,
}

impl DtwSiameseModel {
    /// Bypass model: identity metric over raw frames.
    pub fn bypass(n_mels: usize) -> Self {
        Self {
            metric: MahalanobisMetric::identity(n_mels),
            encoder: TwinEncoder::bypass(n_mels),
            config: MetricTrainConfig {
                window: 1,
                dim: n_mels,
                ..MetricTrainConfig::default()
            },
        }
    }

    pub fn with_metric(&self, metric: MahalanobisMetric<f64>) -> Result<Self> {
        if metric.dim() != self.encoder.dim() {
            return Err(Error::shape("metric size must match encoder output"));
        }
        Ok(Self {
            metric,
            ..self.clone()
        })
    }

    /// Encoded windows of `mel` mapped through `G`, so that squared
    /// Euclidean distance between them is `D_A`.
    pub fn project(&self, mel: &MelSpectrogram<f64>) -> Result<Vec<Vec<f64>>> {
        self.encoder
            .encode_mel(mel)?
            .iter()
            .map(|v| self.metric.project(v))
            .collect()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let a = self.metric.matrix();
        let mut tensors = vec![(
            "metric.A".to_owned(),
            Tensor::matrix(a.rows(), a.cols(), a.as_slice().to_vec()).expect("square matrix"),
        )];
        tensors.extend(self.encoder.params.named_tensors());
        Checkpoint::new(
            serde_json::json!({
                "kind": "dtw-siamese",
                "config": self.config,
                "n_mels": self.encoder.n_mels,
                "bypass": self.encoder.is_bypass(),
            }),
            tensors,
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.metadata["kind"] != "dtw-siamese" {
            return Err(Error::Format("checkpoint is not a dtw-siamese model".into()));
        }
        let config: MetricTrainConfig = serde_json::from_value(ck.metadata["config"].clone())?;
        let n_mels: usize = serde_json::from_value(ck.metadata["n_mels"].clone())?;
        let bypass: bool = serde_json::from_value(ck.metadata["bypass"].clone())?;
        let mut encoder = if bypass {
            TwinEncoder::bypass(n_mels)
        } else {
            TwinEncoder::new(n_mels, config.window, config.dim, config.seed)?
        };
        encoder.params.load_named(&ck.tensors)?;
        let a = ck
            .tensor("metric.A")
            .ok_or_else(|| Error::Format("checkpoint lacks `metric.A`".into()))?;
        let metric = MahalanobisMetric::new(Matrix::from_vec(a.rows(), a.cols(), a.data().to_vec())?)?;
        if metric.dim() != encoder.dim() {
            return Err(Error::shape("checkpoint metric does not match encoder output"));
        }
        Ok(Self { metric, encoder, config })
    }
}

/// DTW over encoded windows with frame distance `D_A`; the score is the
/// per-step normalized cost.
pub fn learned_dtw(a: &MelSpectrogram<f64>, b: &MelSpectrogram<f64>, model: &DtwSiameseModel) -> Result<DtwResult<f64>> {
    if a.n_mels() != b.n_mels() {
        return Err(Error::shape(format!("n_mels differ: {} vs {}", a.n_mels(), b.n_mels())));
    }
    let pa = model.project(a)?;
    let pb = model.project(b)?;
    learned_dtw_projected(&pa, &pb)
}

/// DTW between sequences already produced by [`DtwSiameseModel::project`].
pub fn learned_dtw_projected(pa: &[Vec<f64>], pb: &[Vec<f64>]) -> Result<DtwResult<f64>> {
    dtw(pa, pb, |x: &Vec<f64>, y: &Vec<f64>| squared_euclidean(x, y))
}

pub fn dtw_siamese_detect(
    user: &MelSpectrogram<f64>,
    tts: &MelSpectrogram<f64>,
    model: &DtwSiameseModel,
    threshold: f64,
) -> Result<DetectionVerdict> {
    DetectionVerdict::new(learned_dtw(user, tts, model)?.normalized_cost(), threshold)
}

/// Trains from `A = I` and a freshly initialized encoder.
pub fn train(triplets: &[Triplet], n_mels: usize, config: MetricTrainConfig) -> Result<MetricTraining> {
    train_monitored(triplets, n_mels, config, |_| Ok(()))
}

/// [`train`] with `monitor` called on `A` after every accepted metric
/// update; an error from `monitor` aborts training.
pub fn train_monitored(
    triplets: &[Triplet],
    n_mels: usize,
    config: MetricTrainConfig,
    mut monitor: impl FnMut(&MahalanobisMetric<f64>) -> Result<()>,
) -> Result<MetricTraining> {
    config.validate()?;
    if triplets.is_empty() {
        return Err(Error::Empty("triplets".into()));
    }
    if triplets.iter().all(|t| t.x == t.y && t.y == t.z) {
        return Err(Error::invalid("degenerate triplets: anchor, positive and negative all identical"));
    }
    let mut encoder = TwinEncoder::new(n_mels, config.window, config.dim, config.seed)?;
    for t in triplets {
        for w in [&t.x, &t.y, &t.z] {
            encoder.check_window(w)?;
        }
    }
    let mut metric = MahalanobisMetric::identity(config.dim);
    let sgd = SgdConfig {
        lr: config.learning_rate,
        momentum: config.momentum,
    };
    let mut r = rng::rng_for(config.seed, "triplet-batches");
    let mut order: Vec<usize> = (0..triplets.len()).collect();
    let mut epoch_loss = Vec::with_capacity(config.epochs + 1);
    let (mut updates, mut rejected) = (0, 0);
    let mean_hinge = |metric: &MahalanobisMetric<f64>, encoder: &TwinEncoder| -> Result<f64> {
        let mut total = 0.0;
        for t in triplets {
            total += triplet_loss(metric, encoder, t, config.rho)?.max(0.0);
        }
        Ok(total / triplets.len() as f64)
    };

    for epoch in 0..config.epochs {
        epoch_loss.push(mean_hinge(&metric, &encoder)?);
        order.shuffle(&mut r);
        for batch in order.chunks(config.batch_size) {
            let batch: Vec<&Triplet> = batch.iter().map(|&i| &triplets[i]).collect();
            let losses = batch
                .iter()
                .map(|t| triplet_loss(&metric, &encoder, t, config.rho))
                .collect::<Result<Vec<_>>>()?;
            let mask: Vec<f64> = losses.iter().map(|&l| f64::from(u8::from(l > 0.0))).collect();
            if mask.iter().all(|&m| m == 0.0) {
                continue;
            }

            let mut g = Graph::new();
            let loss = triplet_loss_graph(&encoder, &mut g, &encoder.params, &batch, metric.factor(), config.rho, &mask)?;
            g.backward(loss)?;
            encoder.params.zero_grad();
            g.accumulate_into(&mut encoder.params);
            if !encoder.params.grads_finite() {
                return Err(Error::NonFinite(format!("encoder gradients in epoch {epoch}")));
            }
            encoder.params.step_sgd(&sgd);

            for t in &batch {
                let (fx, fy, fz) = (encoder.encode(&t.x)?, encoder.encode(&t.y)?, encoder.encode(&t.z)?);
                let l = config.rho + metric.distance(&fx, &fy)? - metric.distance(&fx, &fz)?;
                if l <= 0.0 {
                    continue;
                }
                let u: Vec<f64> = fx.iter().zip(&fy).map(|(a, b)| a - b).collect();
                let v: Vec<f64> = fx.iter().zip(&fz).map(|(a, b)| a - b).collect();
                let step = update_metric(&metric, &u, &v, config.eta)?;
                match step.status {
                    UpdateStatus::Applied { .. } => {
                        metric = step.metric;
                        updates += 1;
                        monitor(&metric)?;
                    }
                    UpdateStatus::Rejected => rejected += 1,
                    UpdateStatus::NoOp => {}
                }
            }
        }
        log::debug!("dtw-siamese epoch {epoch}: hinge {:.5}", epoch_loss[epoch]);
    }
    epoch_loss.push(mean_hinge(&metric, &encoder)?);
    Ok(MetricTraining {
        model: DtwSiameseModel {
            metric,
            encoder,
            config,
        },
        epoch_loss,
        metric_updates: updates,
        rejected_updates: rejected,
    })
}

/// One recording pair of the training split.
#[derive(Debug, Clone, Copy)]
pub struct TripletSource<'a> {
    pub entity: &'a str,
    pub user: &'a MelSpectrogram<f64>,
    pub tts: &'a MelSpectrogram<f64>,
    pub mispronounced: bool,
}

/// Samples `count` window triplets: the anchor is a user window of a
/// correctly pronounced pair, the positive is the TTS window at the same
/// frame, and the negative is a random window of another entity's TTS
/// recording.
pub fn sample_triplets(sources: &[TripletSource<'_>], count: usize, window: usize, seed: u64) -> Result<Vec<Triplet>> {
    let anchors: Vec<&TripletSource<'_>> = sources.iter().filter(|s| !s.mispronounced).collect();
    if anchors.is_empty() {
        return Err(Error::Empty("no correctly pronounced pairs to anchor triplets".into()));
    }
    if sources.iter().all(|s| s.entity == anchors[0].entity) {
        return Err(Error::invalid("negatives need at least two entities"));
    }
    let mut r = rng::rng_for(seed, "triplet-sampler");
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let a = anchors[r.gen_range(0..anchors.len())];
        let n = a.user.n_frames().min(a.tts.n_frames());
        if n == 0 {
            continue;
        }
        let neg = &sources[r.gen_range(0..sources.len())];
        if neg.entity == a.entity || neg.tts.n_frames() == 0 {
            continue;
        }
        let i = r.gen_range(0..n);
        let j = r.gen_range(0..neg.tts.n_frames());
        out.push(Triplet {
            x: window_at(a.user.frames(), i, window),
            y: window_at(a.tts.frames(), i, window),
            z: window_at(neg.tts.frames(), j, window),
        });
    }
    Ok(out)
}

fn window_at(frames: &[Vec<f64>], start: usize, window: usize) -> Vec<Vec<f64>> {
    let width = frames.first().map_or(0, Vec::len);
    (start..start + window)
        .map(|t| frames.get(t).cloned().unwrap_or_else(|| vec![0.0; width]))
        .collect()
}
