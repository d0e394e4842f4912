use std::fs;
use std::path::Path;

use log::info;
use pronlearn::datagen::{Example, GeneratedCorpus, LocaleInventory};
use pronlearn::dtw_siamese::{sample_triplets, train as train_metric, MetricTrainConfig, TripletSource};
use pronlearn::embeddings::{embed_sequence, train_seq2seq, Seq2SeqConfig, Seq2SeqModel};
use pronlearn::gbdt::{build_features, train_gbdt, GbdtParams, DEFAULT_SEGMENTS};
use pronlearn::mel_siamese::{train_conv_siamese, ConvSiameseConfig, MelPair};
use pronlearn::nn::Checkpoint;
use pronlearn::rng::{derive, rng};
use pronlearn::MelSpectrogram;
use rand::seq::SliceRandom;
use serde::Serialize;

use super::{split_of, write_json};
use crate::failure::{CliResult, Failure};
use crate::scoring::{checkpoint_path, gbdt_path, load_corpus, load_mels, log_path, seq2seq_path, Method};
use crate::TrainArgs;

#[derive(Serialize)]
struct LocaleLog {
    locale: String,
    examples: usize,
    epoch_loss: Vec<f64>,
}

#[derive(Serialize)]
struct TrainLog {
    method: String,
    seed: u64,
    examples: usize,
    initial_loss: f64,
    final_loss: f64,
    epoch_loss: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    locales: Vec<LocaleLog>,
    #[serde(skip_serializing_if = "Option::is_none")]
    metric_updates: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    train_accuracy: Option<f64>,
}

impl TrainLog {
    fn new(method: Method, seed: u64, examples: usize, epoch_loss: Vec<f64>) -> CliResult<Self> {
        if epoch_loss.iter().any(|l| !l.is_finite()) {
            return Err(Failure {
                code: crate::failure::NUMERIC,
                message: format!("{method} training diverged"),
            });
        }
        Ok(Self {
            method: method.name().to_owned(),
            seed,
            examples,
            initial_loss: epoch_loss.first().copied().unwrap_or(f64::NAN),
            final_loss: epoch_loss.last().copied().unwrap_or(f64::NAN),
            epoch_loss,
            locales: Vec::new(),
            metric_updates: None,
            train_accuracy: None,
        })
    }
}

pub fn train(a: &TrainArgs) -> CliResult<()> {
    let corpus = load_corpus(&a.corpus)?;
    if let Some(lr) = a.learning_rate {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Failure::usage(format!("learning rate must be positive, got {lr}")));
        }
    }
    if a.epochs == Some(0) {
        return Err(Failure::usage("epochs must be at least 1"));
    }
    if a.method.needs_audio() && corpus.mode != pronlearn::datagen::CorpusMode::Audio {
        return Err(Failure::usage(format!("method {} needs an audio corpus", a.method)));
    }
    fs::create_dir_all(&a.out).map_err(|e| Failure::io(format!("{}: {e}", a.out.display())))?;
    let train_idx = split_of(&corpus).train;
    let log = match a.method {
        Method::Embeddings => train_embeddings(a, &corpus, &train_idx, false)?,
        Method::Gbdt => train_embeddings(a, &corpus, &train_idx, true)?,
        Method::MelSiamese => train_mel(a, &corpus, &train_idx)?,
        Method::DtwSiamese => train_dtw(a, &corpus, &train_idx)?,
        m => return Err(Failure::usage(format!("method {m} has nothing to train"))),
    };
    write_json(&log_path(&a.out, a.method), &log)?;
    println!(
        "{}: {} examples, loss {:.5} -> {:.5}",
        log.method, log.examples, log.initial_loss, log.final_loss
    );
    Ok(())
}

fn locale_examples<'c>(corpus: &'c GeneratedCorpus, idx: &[usize], locale: &str) -> Vec<&'c Example> {
    idx.iter().map(|&i| &corpus.examples[i]).filter(|e| e.locale == locale).collect()
}

fn seq2seq_config(a: &TrainArgs, locale: &str) -> Seq2SeqConfig {
    let base = Seq2SeqConfig::default();
    Seq2SeqConfig {
        epochs: a.epochs.unwrap_or(base.epochs),
        learning_rate: a.learning_rate.unwrap_or(base.learning_rate),
        seed: derive(a.seed, locale),
        ..base
    }
}

/// An existing checkpoint is reused when it was trained for the same
/// phonesets and configuration.
fn reusable_seq2seq(path: &Path, inv: &LocaleInventory, config: &Seq2SeqConfig) -> Option<Seq2SeqModel> {
    let model = Seq2SeqModel::from_checkpoint(&Checkpoint::load(path).ok()?).ok()?;
    (model.source() == &inv.asr && model.target() == &inv.tts && model.config() == config).then_some(model)
}

/// Seq2seq per locale on the correctly pronounced training pairs, then
/// optionally a GBDT per locale on pooled embedding features.
fn train_embeddings(a: &TrainArgs, corpus: &GeneratedCorpus, idx: &[usize], gbdt: bool) -> CliResult<TrainLog> {
    let mut locales = Vec::new();
    let mut total = 0;
    for inv in &corpus.inventories {
        let examples = locale_examples(corpus, idx, &inv.locale);
        let config = seq2seq_config(a, &inv.locale);
        let path = seq2seq_path(&a.out, &inv.locale);
        let s2s = match reusable_seq2seq(&path, inv, &config).filter(|_| gbdt) {
            Some(m) => {
                info!("{}: reusing {}", inv.locale, path.display());
                m
            }
            None => {
                let pairs: Vec<_> = examples
                    .iter()
                    .filter(|e| !e.label)
                    .map(|e| (e.asr_pron.clone(), e.tts_pron.clone()))
                    .collect();
                info!("{}: seq2seq on {} pairs", inv.locale, pairs.len());
                let t = train_seq2seq(&pairs, &inv.asr, &inv.tts, config)?;
                t.model.to_checkpoint().save(&path)?;
                if !gbdt {
                    total += pairs.len();
                    locales.push(LocaleLog {
                        locale: inv.locale.clone(),
                        examples: pairs.len(),
                        epoch_loss: t.epoch_loss,
                    });
                    continue;
                }
                t.model
            }
        };
        if !gbdt {
            continue;
        }
        let (asr, tts) = s2s.extract_embeddings();
        let features = examples
            .iter()
            .map(|e| build_features(&embed_sequence(&asr, &e.asr_pron)?, &embed_sequence(&tts, &e.tts_pron)?, DEFAULT_SEGMENTS))
            .collect::<pronlearn::Result<Vec<_>>>()?;
        let labels: Vec<bool> = examples.iter().map(|e| e.label).collect();
        info!("{}: gbdt on {} rows", inv.locale, features.len());
        let t = train_gbdt(&features, &labels, &GbdtParams::default())?;
        t.model.save(gbdt_path(&a.out, &inv.locale))?;
        total += features.len();
        locales.push(LocaleLog {
            locale: inv.locale.clone(),
            examples: features.len(),
            epoch_loss: t.log_loss,
        });
    }
    // Per-locale curves averaged position-wise for the headline numbers.
    let len = locales.iter().map(|l| l.epoch_loss.len()).min().unwrap_or(0);
    let mean: Vec<f64> = (0..len)
        .map(|k| locales.iter().map(|l| l.epoch_loss[k]).sum::<f64>() / locales.len() as f64)
        .collect();
    let method = if gbdt { Method::Gbdt } else { Method::Embeddings };
    let mut log = TrainLog::new(method, a.seed, total, mean)?;
    log.locales = locales;
    Ok(log)
}

fn train_mels(root: &Path, examples: &[&Example]) -> CliResult<Vec<(MelSpectrogram, MelSpectrogram)>> {
    Ok(examples.iter().map(|e| load_mels(root, e)).collect::<pronlearn::Result<Vec<_>>>()?)
}

fn train_mel(a: &TrainArgs, corpus: &GeneratedCorpus, idx: &[usize]) -> CliResult<TrainLog> {
    let mut chosen: Vec<&Example> = idx.iter().map(|&i| &corpus.examples[i]).collect();
    chosen.shuffle(&mut rng(derive(a.seed, "mel-siamese-pairs")));
    chosen.truncate(a.max_pairs);
    let mels = train_mels(&a.corpus, &chosen)?;
    let pairs: Vec<MelPair> = mels
        .into_iter()
        .zip(&chosen)
        .map(|((u, t), e)| MelPair {
            a: u,
            b: t,
            same: !e.label,
        })
        .collect();
    let base = ConvSiameseConfig::default();
    let config = ConvSiameseConfig {
        epochs: a.epochs.unwrap_or(base.epochs),
        learning_rate: a.learning_rate.unwrap_or(base.learning_rate),
        seed: a.seed,
        ..base
    };
    let t = train_conv_siamese(&pairs, config)?;
    t.model.to_checkpoint().save(checkpoint_path(&a.out, Method::MelSiamese))?;
    let mut log = TrainLog::new(Method::MelSiamese, a.seed, pairs.len(), t.epoch_loss)?;
    log.train_accuracy = Some(t.train_accuracy);
    Ok(log)
}

fn train_dtw(a: &TrainArgs, corpus: &GeneratedCorpus, idx: &[usize]) -> CliResult<TrainLog> {
    let examples: Vec<&Example> = idx.iter().map(|&i| &corpus.examples[i]).collect();
    let mels = train_mels(&a.corpus, &examples)?;
    let n_mels = mels
        .first()
        .map(|(u, _)| u.n_mels())
        .ok_or_else(|| Failure::usage("empty training split"))?;
    let sources: Vec<TripletSource<'_>> = examples
        .iter()
        .zip(&mels)
        .map(|(e, (u, t))| TripletSource {
            entity: &e.entity_id,
            user: u,
            tts: t,
            mispronounced: e.label,
        })
        .collect();
    let base = MetricTrainConfig::default();
    let config = MetricTrainConfig {
        epochs: a.epochs.unwrap_or(base.epochs),
        learning_rate: a.learning_rate.unwrap_or(base.learning_rate),
        seed: a.seed,
        ..base
    };
    config.validate().map_err(|e| Failure::usage(e.to_string()))?;
    let triplets = sample_triplets(&sources, a.triplets, config.window, derive(a.seed, "triplets"))?;
    info!("dtw-siamese: {} triplets from {} pairs", triplets.len(), sources.len());
    let t = train_metric(&triplets, n_mels, config)?;
    t.model.to_checkpoint().save(checkpoint_path(&a.out, Method::DtwSiamese))?;
    let mut log = TrainLog::new(Method::DtwSiamese, a.seed, triplets.len(), t.epoch_loss)?;
    log.metric_updates = Some(t.metric_updates);
    Ok(log)
}
