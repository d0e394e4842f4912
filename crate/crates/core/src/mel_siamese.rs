//! Convolutional Siamese classifier over Mel-spectrogram pairs.
//!
//! Each twin runs three stride-1 "same" convolutions (kernels 3, 5, 7), each
//! followed by ReLU and 2×2 max pooling. The twins share one parameter set;
//! their flattened outputs are concatenated (first input, then second) and a
//! dense head with a sigmoid output gives the probability that the two
//! recordings carry the same pronunciation.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dsp::MelSpectrogram;
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, Checkpoint, Conv2d, Dense, Graph, ParameterSet, Tensor, Var};
use crate::rng;
use crate::verdict::DetectionVerdict;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvSiameseConfig {
    pub n_mels: usize,
    pub frames: usize,
    pub filters: usize,
    pub kernels: [usize; 3],
    /// Width of the hidden layer of the dense head.
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ConvSiameseConfig {
    fn default() -> Self {
        Self {
            n_mels: 40,
            frames: 64,
            filters: 8,
            kernels: [3, 5, 7],
            hidden: 32,
            epochs: 20,
            batch_size: 16,
            learning_rate: 1e-3,
            seed: 7,
        }
    }
}

impl ConvSiameseConfig {
    fn validate(&self) -> Result<()> {
        if self.n_mels < 8 || self.frames < 8 {
            return Err(Error::invalid("conv siamese input needs at least 8 mels and 8 frames"));
        }
        if self.filters == 0 || self.hidden == 0 || self.batch_size == 0 {
            return Err(Error::invalid("conv siamese sizes must be positive"));
        }
        if self.kernels.iter().any(|k| k % 2 == 0) {
            return Err(Error::invalid("conv kernels must be odd"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        Ok(())
    }

    /// Length of one twin's flattened feature vector.
    pub fn feature_len(&self) -> usize {
        self.filters * (self.n_mels / 8) * (self.frames / 8)
    }
}

/// One training pair; `same` is true when both recordings carry the same
/// pronunciation.
#[derive(Debug, Clone)]
pub struct MelPair {
    pub a: MelSpectrogram<f64>,
    pub b: MelSpectrogram<f64>,
    pub same: bool,
}

#[derive(Debug, Clone)]
pub struct ConvTwinNet {
    config: ConvSiameseConfig,
    params: ParameterSet,
    convs: [Conv2d; 3],
    hidden: Dense,
    output: Dense,
}

/// Shifts log energies so the floor maps to zero and scales by 1/10, then
/// center-crops or zero-pads the frame axis to `frames`. Output layout is
/// `[1, n_mels, frames]`.
pub fn normalize_input(mel: &MelSpectrogram<f64>, n_mels: usize, frames: usize) -> Result<Tensor> {
    if mel.n_mels() != n_mels {
        return Err(Error::shape(format!("expected {n_mels} mels, got {}", mel.n_mels())));
    }
    let floor = mel.log_floor();
    let n = mel.n_frames();
    // Crop offset into the source, or pad offset into the output.
    let (src0, dst0) = if n >= frames { ((n - frames) / 2, 0) } else { (0, (frames - n) / 2) };
    let mut data = vec![0.0; n_mels * frames];
    for t in 0..frames.min(n) {
        let frame = &mel.frames()[src0 + t];
        for (m, &v) in frame.iter().enumerate() {
            data[m * frames + dst0 + t] = (v - floor) / 10.0;
        }
    }
    Tensor::new(vec![1, n_mels, frames], data)
}

impl ConvTwinNet {
    pub fn new(config: ConvSiameseConfig) -> Result<Self> {
        config.validate()?;
        let mut r = rng::rng_for(config.seed, "conv-siamese-init");
        let mut ps = ParameterSet::new();
        let f = config.filters;
        let [k1, k2, k3] = config.kernels;
        let convs = [
            Conv2d::new(&mut ps, "conv1", 1, f, k1, &mut r)?,
            Conv2d::new(&mut ps, "conv2", f, f, k2, &mut r)?,
            Conv2d::new(&mut ps, "conv3", f, f, k3, &mut r)?,
        ];
        let hidden = Dense::new(&mut ps, "head.hidden", 2 * config.feature_len(), config.hidden, &mut r)?;
        let output = Dense::new(&mut ps, "head.output", config.hidden, 1, &mut r)?;
        Ok(Self {
            config,
            params: ps,
            convs,
            hidden,
            output,
        })
    }

    pub fn config(&self) -> &ConvSiameseConfig {
        &self.config
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    pub fn input(&self, mel: &MelSpectrogram<f64>) -> Result<Tensor> {
        normalize_input(mel, self.config.n_mels, self.config.frames)
    }

    /// Flattened twin features of one `[1, n_mels, frames]` input.
    pub fn twin(&self, g: &mut Graph, ps: &ParameterSet, x: Var) -> Result<Var> {
        let mut h = x;
        for conv in &self.convs {
            h = conv.forward(g, ps, h)?;
            h = g.relu(h);
            h = g.max_pool2d(h)?;
        }
        Ok(g.flatten(h))
    }

    /// Pre-sigmoid similarity logit, `[1×1]`.
    pub fn logit(&self, g: &mut Graph, ps: &ParameterSet, a: Var, b: Var) -> Result<Var> {
        let fa = self.twin(g, ps, a)?;
        let fb = self.twin(g, ps, b)?;
        let joint = g.concat_cols(&[fa, fb])?;
        let h = self.hidden.forward(g, ps, joint)?;
        let h = g.relu(h);
        self.output.forward(g, ps, h)
    }

    pub fn twin_features(&self, mel: &MelSpectrogram<f64>) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let x = g.input(self.input(mel)?);
        let f = self.twin(&mut g, &self.params, x)?;
        Ok(g.value(f).data().to_vec())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(
            serde_json::json!({ "kind": "mel-siamese", "config": self.config }),
            self.params.named_tensors(),
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.metadata["kind"] != "mel-siamese" {
            return Err(Error::Format("checkpoint is not a mel-siamese model".into()));
        }
        let config: ConvSiameseConfig = serde_json::from_value(ck.metadata["config"].clone())?;
        let mut model = Self::new(config)?;
        model.params.load_named(&ck.tensors)?;
        Ok(model)
    }
}

/// Probability in (0, 1) that `a` and `b` carry the same pronunciation.
pub fn score_pair(model: &ConvTwinNet, a: &MelSpectrogram<f64>, b: &MelSpectrogram<f64>) -> Result<f64> {
    let mut g = Graph::new();
    let xa = g.input(model.input(a)?);
    let xb = g.input(model.input(b)?);
    let z = model.logit(&mut g, &model.params, xa, xb)?;
    g.check_finite()?;
    let z = g.value(z).data()[0];
    Ok(1.0 / (1.0 + (-z).exp()))
}

/// Verdict on the dissimilarity `1 − score(user, tts)`.
pub fn mel_siamese_detect(
    model: &ConvTwinNet,
    user: &MelSpectrogram<f64>,
    tts: &MelSpectrogram<f64>,
    threshold: f64,
) -> Result<DetectionVerdict> {
    DetectionVerdict::new(1.0 - score_pair(model, user, tts)?, threshold)
}

pub struct ConvSiameseTraining {
    pub model: ConvTwinNet,
    /// Mean binary cross-entropy per epoch.
    pub epoch_loss: Vec<f64>,
    pub train_accuracy: f64,
}

/// Adam on binary cross-entropy over the sigmoid output.
pub fn train_conv_siamese(pairs: &[MelPair], config: ConvSiameseConfig) -> Result<ConvSiameseTraining> {
    if pairs.is_empty() {
        return Err(Error::Empty("conv siamese training pairs".into()));
    }
    if pairs.iter().all(|p| p.same) || pairs.iter().all(|p| !p.same) {
        return Err(Error::invalid("conv siamese training needs both classes"));
    }
    let mut model = ConvTwinNet::new(config)?;
    let inputs = pairs
        .iter()
        .map(|p| Ok((model.input(&p.a)?, model.input(&p.b)?)))
        .collect::<Result<Vec<_>>>()?;
    let adam = AdamConfig {
        lr: model.config.learning_rate,
        ..AdamConfig::default()
    };
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut r = rng::rng_for(model.config.seed, "conv-siamese-batches");
    let mut epoch_loss = Vec::with_capacity(model.config.epochs);
    for epoch in 0..model.config.epochs {
        order.shuffle(&mut r);
        let mut total = 0.0;
        for batch in order.chunks(model.config.batch_size) {
            let mut g = Graph::new();
            let mut logits = Vec::with_capacity(batch.len());
            for &i in batch {
                let a = g.input(inputs[i].0.clone());
                let b = g.input(inputs[i].1.clone());
                logits.push(model.logit(&mut g, &model.params, a, b)?);
            }
            let targets: Vec<f64> = batch.iter().map(|&i| f64::from(u8::from(pairs[i].same))).collect();
            let stacked = g.concat_rows(&logits)?;
            let loss = g.bce_with_logits(stacked, &targets)?;
            g.backward(loss)?;
            total += g.value(loss).data()[0] * batch.len() as f64;
            model.params.zero_grad();
            g.accumulate_into(&mut model.params);
            if !model.params.grads_finite() {
                return Err(Error::NonFinite(format!("conv siamese gradients in epoch {epoch}")));
            }
            model.params.step_adam(&adam);
        }
        let mean = total / pairs.len() as f64;
        log::debug!("conv siamese epoch {epoch}: loss {mean:.5}");
        epoch_loss.push(mean);
    }
    let correct = pairs
        .iter()
        .map(|p| Ok((score_pair(&model, &p.a, &p.b)? > 0.5) == p.same))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|&c| c)
        .count();
    Ok(ConvSiameseTraining {
        train_accuracy: correct as f64 / pairs.len() as f64,
        model,
        epoch_loss,
    })
}
