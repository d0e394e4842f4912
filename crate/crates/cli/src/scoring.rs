//! Method selection, model loading and per-example dissimilarity scores.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use pronlearn::datagen::{CorpusMode, Example, GeneratedCorpus, Role};
use pronlearn::dsp::{mel_spectrogram, MelConfig};
use pronlearn::dtw::dtw_score;
use pronlearn::dtw_siamese::{learned_dtw, DtwSiameseModel};
use pronlearn::embeddings::{embed_sequence, EmbeddingTable, Seq2SeqModel};
use pronlearn::gbdt::{build_features, GbdtModel, DEFAULT_SEGMENTS};
use pronlearn::mel_siamese::{score_pair, ConvTwinNet};
use pronlearn::nn::Checkpoint;
use pronlearn::phoneme::normalized_distance;
use pronlearn::{MelSpectrogram, Result};

use crate::failure::{CliResult, Failure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, ValueEnum)]
pub enum Method {
    P2p,
    Gbdt,
    Dtw,
    Fastdtw,
    MelSiamese,
    DtwSiamese,
    /// Seq2seq phoneme embeddings only (training target for `gbdt`).
    Embeddings,
    /// Scores each pair by its ground-truth label; checks the plumbing.
    Oracle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::P2p => "p2p",
            Method::Gbdt => "gbdt",
            Method::Dtw => "dtw",
            Method::Fastdtw => "fastdtw",
            Method::MelSiamese => "mel-siamese",
            Method::DtwSiamese => "dtw-siamese",
            Method::Embeddings => "embeddings",
            Method::Oracle => "oracle",
        }
    }

    pub fn parse(name: &str) -> CliResult<Self> {
        Self::from_str(name, true).map_err(|_| Failure::usage(format!("unknown method `{name}`")))
    }

    pub fn needs_audio(self) -> bool {
        matches!(self, Method::Dtw | Method::Fastdtw | Method::MelSiamese | Method::DtwSiamese)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn seq2seq_path(dir: &Path, locale: &str) -> PathBuf {
    dir.join(format!("seq2seq-{locale}.ckpt"))
}

pub fn gbdt_path(dir: &Path, locale: &str) -> PathBuf {
    dir.join(format!("gbdt-{locale}.txt"))
}

pub fn checkpoint_path(dir: &Path, method: Method) -> PathBuf {
    dir.join(format!("{}.ckpt", method.name()))
}

pub fn log_path(dir: &Path, method: Method) -> PathBuf {
    dir.join(format!("train-{}.json", method.name()))
}

pub fn load_corpus(path: &Path) -> CliResult<GeneratedCorpus> {
    if !path.join("corpus.jsonl").is_file() {
        return Err(Failure::io(format!("no corpus at {}", path.display())));
    }
    Ok(GeneratedCorpus::read_dir(path)?)
}

/// Log-Mel spectrograms of an example's user and TTS recordings.
pub fn load_mels(root: &Path, ex: &Example) -> Result<(MelSpectrogram, MelSpectrogram)> {
    let config = MelConfig::default();
    let user = GeneratedCorpus::load_audio(root, ex, Role::User)?;
    let tts = GeneratedCorpus::load_audio(root, ex, Role::Tts)?;
    Ok((mel_spectrogram(&user, &config)?, mel_spectrogram(&tts, &config)?))
}

enum Loaded {
    None,
    Gbdt(HashMap<String, (EmbeddingTable, EmbeddingTable, GbdtModel)>),
    Mel(ConvTwinNet),
    Dtw(DtwSiameseModel),
}

/// A method bound to its trained models for one corpus.
pub struct Scorer<'a> {
    method: Method,
    corpus: &'a GeneratedCorpus,
    root: &'a Path,
    loaded: Loaded,
}

impl<'a> Scorer<'a> {
    pub fn new(method: Method, corpus: &'a GeneratedCorpus, root: &'a Path, model: Option<&Path>) -> CliResult<Self> {
        if method == Method::Embeddings {
            return Err(Failure::usage("`embeddings` is a training target, not a detector"));
        }
        if method.needs_audio() && corpus.mode != CorpusMode::Audio {
            return Err(Failure::usage(format!("method {method} needs an audio corpus")));
        }
        let model_dir = || {
            model.ok_or_else(|| Failure::usage(format!("method {method} needs --model")))
        };
        let loaded = match method {
            Method::Gbdt => {
                let dir = model_dir()?;
                let mut per_locale = HashMap::new();
                for inv in &corpus.inventories {
                    let s2s = Seq2SeqModel::from_checkpoint(&Checkpoint::load(seq2seq_path(dir, &inv.locale))?)?;
                    let (asr, tts) = s2s.extract_embeddings();
                    if asr.phoneset != inv.asr.id() || tts.phoneset != inv.tts.id() {
                        return Err(Failure::usage(format!("embeddings for {} do not match the corpus phonesets", inv.locale)));
                    }
                    let gbdt = GbdtModel::load(gbdt_path(dir, &inv.locale))?;
                    per_locale.insert(inv.locale.clone(), (asr, tts, gbdt));
                }
                Loaded::Gbdt(per_locale)
            }
            Method::MelSiamese => {
                let ck = Checkpoint::load(checkpoint_path(model_dir()?, method))?;
                Loaded::Mel(ConvTwinNet::from_checkpoint(&ck)?)
            }
            Method::DtwSiamese => {
                let ck = Checkpoint::load(checkpoint_path(model_dir()?, method))?;
                Loaded::Dtw(DtwSiameseModel::from_checkpoint(&ck)?)
            }
            _ => Loaded::None,
        };
        Ok(Self {
            method,
            corpus,
            root,
            loaded,
        })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    /// Non-negative dissimilarity; larger means more likely mispronounced.
    pub fn score(&self, ex: &Example) -> Result<f64> {
        let inv = self.corpus.inventory(&ex.locale)?;
        match (&self.loaded, self.method) {
            (_, Method::Oracle) => Ok(f64::from(u8::from(ex.label))),
            (_, Method::P2p) => normalized_distance(&ex.asr_pron, &inv.p2p.apply(&ex.tts_pron)?),
            (Loaded::Gbdt(models), _) => {
                let (asr, tts, gbdt) = &models[&ex.locale];
                let x = build_features(
                    &embed_sequence(asr, &ex.asr_pron)?,
                    &embed_sequence(tts, &ex.tts_pron)?,
                    DEFAULT_SEGMENTS,
                )?;
                gbdt.predict(&x)
            }
            (_, Method::Dtw) => {
                let (u, t) = load_mels(self.root, ex)?;
                dtw_score(&u, &t, None)
            }
            (_, Method::Fastdtw) => {
                let (u, t) = load_mels(self.root, ex)?;
                dtw_score(&u, &t, Some(pronlearn::dtw::DEFAULT_RADIUS))
            }
            (Loaded::Mel(net), _) => {
                let (u, t) = load_mels(self.root, ex)?;
                Ok(1.0 - score_pair(net, &u, &t)?)
            }
            (Loaded::Dtw(model), _) => {
                let (u, t) = load_mels(self.root, ex)?;
                Ok(learned_dtw(&u, &t, model)?.normalized_cost())
            }
            _ => unreachable!("scorer constructed without its model"),
        }
    }
}
