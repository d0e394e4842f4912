//! ASR → TTS phoneme translation model whose symbol embedding tables serve
//! as dense phoneme representations for both phonesets.
//!
//! Encoder: source embeddings → LSTM → residual multi-head self-attention.
//! Decoder: target embeddings of the previous symbol → LSTM (initialized
//! from the encoder's final state) → multi-head attention over the encoder
//! outputs → affine projection of `[state, context]` onto the target
//! vocabulary. Both vocabularies carry two extra rows, begin and end.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{
    AdamConfig, Checkpoint, Dense, Graph, LstmCell, LstmState, MultiHeadAttention, ParamId, ParameterSet, Var,
};
use crate::phoneme::{PhonemeSequence, Phoneset};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seq2SeqConfig {
    /// LSTM width of encoder and decoder.
    pub hidden: usize,
    pub embed_dim: usize,
    pub encoder_heads: usize,
    pub decoder_heads: usize,
    pub max_len: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for Seq2SeqConfig {
    fn default() -> Self {
        Self {
            hidden: 100,
            embed_dim: 64,
            encoder_heads: 2,
            decoder_heads: 2,
            max_len: 32,
            epochs: 30,
            batch_size: 16,
            learning_rate: 1e-3,
            clip_norm: 5.0,
            seed: 7,
        }
    }
}

impl Seq2SeqConfig {
    fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.embed_dim == 0 || self.max_len == 0 || self.batch_size == 0 {
            return Err(Error::invalid("seq2seq sizes must be positive"));
        }
        if self.hidden % self.encoder_heads != 0 || self.hidden % self.decoder_heads != 0 {
            return Err(Error::invalid("attention heads must divide the hidden width"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Layers {
    src_emb: ParamId,
    tgt_emb: ParamId,
    encoder: LstmCell,
    self_attn: MultiHeadAttention,
    decoder: LstmCell,
    cross_attn: MultiHeadAttention,
    output: Dense,
}

#[derive(Debug, Clone)]
pub struct Seq2SeqModel {
    config: Seq2SeqConfig,
    source: Phoneset,
    target: Phoneset,
    params: ParameterSet,
    layers: Layers,
}

/// Per-symbol dense vectors for one phoneset; the last two rows belong to
/// the begin and end markers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub phoneset: String,
    pub vectors: Matrix<f64>,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn vector(&self, symbol: usize) -> &[f64] {
        self.vectors.row(symbol)
    }
}

/// Rows of `table` for each symbol of `seq` (a `0 × E` matrix for an empty
/// sequence).
pub fn embed_sequence(table: &EmbeddingTable, seq: &PhonemeSequence) -> Result<Matrix<f64>> {
    if seq.phoneset != table.phoneset {
        return Err(Error::Phoneset(format!(
            "sequence uses `{}`, table belongs to `{}`",
            seq.phoneset, table.phoneset
        )));
    }
    let markers = 2;
    if let Some(&bad) = seq.items.iter().find(|&&i| i + markers >= table.vectors.rows()) {
        return Err(Error::Phoneset(format!("symbol index {bad} outside `{}`", table.phoneset)));
    }
    let mut data = Vec::with_capacity(seq.len() * table.dim());
    for &i in &seq.items {
        data.extend_from_slice(table.vector(i));
    }
    Matrix::from_vec(seq.len(), table.dim(), data)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Parses `asr<TAB>tts` lines with space-separated symbols; blank lines and
/// `#` comments are skipped.
pub fn parse_pair_corpus(text: &str, source: &Phoneset, target: &Phoneset) -> Result<Vec<(PhonemeSequence, PhonemeSequence)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(n, line)| {
            let (a, t) = line
                .split_once('\t')
                .ok_or_else(|| Error::Parse(format!("line {}: expected `asr<TAB>tts`", n + 1)))?;
            Ok((source.parse_sequence(a)?, target.parse_sequence(t)?))
        })
        .collect()
}

pub struct Seq2SeqTraining {
    pub model: Seq2SeqModel,
    /// Mean per-symbol cross-entropy of each epoch.
    pub epoch_loss: Vec<f64>,
}

impl Seq2SeqModel {
    pub fn new(source: &Phoneset, target: &Phoneset, config: Seq2SeqConfig) -> Result<Self> {
        config.validate()?;
        let mut r = rng::rng_for(config.seed, "seq2seq-init");
        let mut ps = ParameterSet::new();
        let (e, h) = (config.embed_dim, config.hidden);
        let src_rows = source.len() + 2;
        let tgt_rows = target.len() + 2;
        let layers = Layers {
            src_emb: ps.add_uniform("src_emb", &[src_rows, e], crate::nn::glorot_bound(src_rows, e), &mut r)?,
            tgt_emb: ps.add_uniform("tgt_emb", &[tgt_rows, e], crate::nn::glorot_bound(tgt_rows, e), &mut r)?,
            encoder: LstmCell::new(&mut ps, "encoder", e, h, &mut r)?,
            self_attn: MultiHeadAttention::new(&mut ps, "self_attn", h, config.encoder_heads, &mut r)?,
            decoder: LstmCell::new(&mut ps, "decoder", e, h, &mut r)?,
            cross_attn: MultiHeadAttention::new(&mut ps, "cross_attn", h, config.decoder_heads, &mut r)?,
            output: Dense::new(&mut ps, "output", 2 * h, tgt_rows, &mut r)?,
        };
        Ok(Self {
            config,
            source: source.clone(),
            target: target.clone(),
            params: ps,
            layers,
        })
    }

    pub fn config(&self) -> &Seq2SeqConfig {
        &self.config
    }

    pub fn source(&self) -> &Phoneset {
        &self.source
    }

    pub fn target(&self) -> &Phoneset {
        &self.target
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    fn bos(n: usize) -> usize {
        n
    }

    fn eos(n: usize) -> usize {
        n + 1
    }

    fn check(&self, asr: &PhonemeSequence) -> Result<()> {
        self.source.check(asr)?;
        if asr.len() > self.config.max_len {
            return Err(Error::invalid(format!(
                "sequence of {} symbols exceeds max length {}",
                asr.len(),
                self.config.max_len
            )));
        }
        Ok(())
    }

    /// Encoder outputs (`len + 1` rows including the end marker) and final
    /// LSTM state.
    fn encode_graph(&self, g: &mut Graph, asr: &PhonemeSequence) -> Result<(Var, LstmState)> {
        let ps = &self.params;
        let table = g.param(ps, self.layers.src_emb);
        let mut ids = asr.items.clone();
        ids.push(Self::eos(self.source.len()));
        let emb = g.gather_rows(table, &ids)?;
        let xs = (0..ids.len())
            .map(|t| g.slice_rows(emb, t, t + 1))
            .collect::<Result<Vec<_>>>()?;
        let (hs, last) = self.layers.encoder.run(g, ps, &xs)?;
        let states = g.concat_rows(&hs)?;
        let attn = self.layers.self_attn.forward(g, ps, states, states)?;
        let out = g.add(states, attn.output)?;
        Ok((out, last))
    }

    /// Teacher-forced mean cross-entropy over `tts + [end]`.
    fn loss_graph(&self, g: &mut Graph, asr: &PhonemeSequence, tts: &PhonemeSequence) -> Result<Var> {
        let ps = &self.params;
        let (memory, mut state) = self.encode_graph(g, asr)?;
        let n = self.target.len();
        let mut inputs = vec![Self::bos(n)];
        inputs.extend_from_slice(&tts.items);
        let mut targets = tts.items.clone();
        targets.push(Self::eos(n));
        let table = g.param(ps, self.layers.tgt_emb);
        let emb = g.gather_rows(table, &inputs)?;
        let mut hs = Vec::with_capacity(inputs.len());
        for t in 0..inputs.len() {
            let x = g.slice_rows(emb, t, t + 1)?;
            state = self.layers.decoder.step(g, ps, x, state)?;
            hs.push(state.h);
        }
        let queries = g.concat_rows(&hs)?;
        let ctx = self.layers.cross_attn.forward(g, ps, queries, memory)?;
        let joint = g.concat_cols(&[queries, ctx.output])?;
        let logits = self.layers.output.forward(g, ps, joint)?;
        g.softmax_cross_entropy(logits, &targets)
    }

    /// Encoder output vectors, one per source symbol plus the end marker.
    pub fn encode(&self, asr: &PhonemeSequence) -> Result<Matrix<f64>> {
        self.check(asr)?;
        let mut g = Graph::new();
        let (out, _) = self.encode_graph(&mut g, asr)?;
        let t = g.value(out);
        Matrix::from_vec(t.rows(), t.cols(), t.data().to_vec())
    }

    /// Greedy decoding; also returns the per-step attention rows of every
    /// decoder head.
    pub fn decode_traced(&self, asr: &PhonemeSequence) -> Result<(PhonemeSequence, Vec<Vec<Vec<f64>>>)> {
        self.check(asr)?;
        let ps = &self.params;
        let n = self.target.len();
        let mut g = Graph::new();
        let (memory, mut state) = self.encode_graph(&mut g, asr)?;
        let table = g.param(ps, self.layers.tgt_emb);
        let mut prev = Self::bos(n);
        let mut out = Vec::new();
        let mut trace = Vec::new();
        while out.len() < self.config.max_len {
            let x = g.gather_rows(table, &[prev])?;
            state = self.layers.decoder.step(&mut g, ps, x, state)?;
            let ctx = self.layers.cross_attn.forward(&mut g, ps, state.h, memory)?;
            trace.push(ctx.weights.iter().map(|w| g.value(*w).data().to_vec()).collect());
            let joint = g.concat_cols(&[state.h, ctx.output])?;
            let logits = self.layers.output.forward(&mut g, ps, joint)?;
            let row = g.value(logits).data();
            let next = (0..row.len())
                .filter(|&k| k != Self::bos(n))
                .fold(Self::eos(n), |best, k| if row[k] > row[best] { k } else { best });
            if next == Self::eos(n) {
                break;
            }
            out.push(next);
            prev = next;
        }
        g.check_finite()?;
        Ok((self.target.sequence(out)?, trace))
    }

    pub fn decode(&self, asr: &PhonemeSequence) -> Result<PhonemeSequence> {
        Ok(self.decode_traced(asr)?.0)
    }

    /// Source (ASR) and target (TTS) symbol embedding tables.
    pub fn extract_embeddings(&self) -> (EmbeddingTable, EmbeddingTable) {
        let table = |id: ParamId, phoneset: &Phoneset| {
            let t = self.params.value(id);
            EmbeddingTable {
                phoneset: phoneset.id().to_owned(),
                vectors: Matrix::from_vec(t.rows(), t.cols(), t.data().to_vec()).expect("2-D table"),
            }
        };
        (
            table(self.layers.src_emb, &self.source),
            table(self.layers.tgt_emb, &self.target),
        )
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(
            serde_json::json!({
                "kind": "seq2seq",
                "config": self.config,
                "source": self.source,
                "target": self.target,
            }),
            self.params.named_tensors(),
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.metadata["kind"] != "seq2seq" {
            return Err(Error::Format("checkpoint is not a seq2seq model".into()));
        }
        let config: Seq2SeqConfig = serde_json::from_value(ck.metadata["config"].clone())?;
        let source: Phoneset = serde_json::from_value(ck.metadata["source"].clone())?;
        let target: Phoneset = serde_json::from_value(ck.metadata["target"].clone())?;
        let mut model = Self::new(&source, &target, config)?;
        model.params.load_named(&ck.tensors)?;
        Ok(model)
    }
}

/// Trains with teacher forcing and Adam on mini-batches (the batch loss is
/// the mean of per-pair mean cross-entropies).
pub fn train_seq2seq(
    corpus: &[(PhonemeSequence, PhonemeSequence)],
    source: &Phoneset,
    target: &Phoneset,
    config: Seq2SeqConfig,
) -> Result<Seq2SeqTraining> {
    if corpus.is_empty() {
        return Err(Error::Empty("seq2seq corpus".into()));
    }
    let mut model = Seq2SeqModel::new(source, target, config)?;
    for (a, t) in corpus {
        model.check(a)?;
        target.check(t)?;
        if t.len() > model.config.max_len {
            return Err(Error::invalid(format!(
                "target of {} symbols exceeds max length {}",
                t.len(),
                model.config.max_len
            )));
        }
    }
    let adam = AdamConfig {
        lr: model.config.learning_rate,
        ..AdamConfig::default()
    };
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut r = rng::rng_for(model.config.seed, "seq2seq-batches");
    let mut epoch_loss = Vec::with_capacity(model.config.epochs);
    for epoch in 0..model.config.epochs {
        order.shuffle(&mut r);
        let mut total = 0.0;
        for batch in order.chunks(model.config.batch_size) {
            let mut g = Graph::new();
            let losses = batch
                .iter()
                .map(|&i| model.loss_graph(&mut g, &corpus[i].0, &corpus[i].1))
                .collect::<Result<Vec<_>>>()?;
            let stacked = g.concat_rows(&losses)?;
            let loss = g.mean(stacked);
            g.backward(loss)?;
            total += g.value(loss).data()[0] * batch.len() as f64;
            model.params.zero_grad();
            g.accumulate_into(&mut model.params);
            if !model.params.grads_finite() {
                return Err(Error::NonFinite(format!("seq2seq gradients in epoch {epoch}")));
            }
            model.params.clip_grad_norm(model.config.clip_norm);
            model.params.step_adam(&adam);
        }
        let mean = total / corpus.len() as f64;
        log::debug!("seq2seq epoch {epoch}: loss {mean:.5}");
        epoch_loss.push(mean);
    }
    Ok(Seq2SeqTraining { model, epoch_loss })
}

impl Seq2SeqTraining {
    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_loss.last().copied()
    }
}
