use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use pronlearn::calibration::{likert_report, threshold_serde, ExtrinsicRow};
use pronlearn::correction::{
    lookup, run_pipeline, CorrectionPolicy, EngagementSignal, Interaction, PronunciationStore, StoredPronunciation,
    TaskKind,
};
use pronlearn::datagen::{CorpusMode, Example, GeneratedCorpus, Role};
use pronlearn::dsp::TimeSpan;
use pronlearn::phoneme::normalized_distance;
use pronlearn::rng::{derive, rng};
use rand::Rng;
use serde::Serialize;

use super::{split_of, write_json, ThresholdFile};
use crate::failure::{CliResult, Failure};
use crate::scoring::{load_corpus, Method, Scorer};
use crate::SimulateArgs;

/// Signal timestamps start here so reruns write identical stores.
const BASE_TIMESTAMP: i64 = 1_700_000_000;

#[derive(Serialize)]
struct Outcome<'a> {
    user_id: &'a str,
    entity_id: &'a str,
    example_id: &'a str,
    label: bool,
    score: f64,
    mispronounced: bool,
    corrected: bool,
    signals: &'a [EngagementSignal],
}

#[derive(Serialize)]
struct Report {
    method: String,
    #[serde(with = "threshold_serde")]
    threshold: f64,
    policy: CorrectionPolicy,
    users: usize,
    interactions: usize,
    flagged: usize,
    corrections_applied: usize,
    correct_corrections: usize,
    correction_precision: Option<f64>,
    store_path: String,
    store_records: usize,
    extrinsic_before: Vec<ExtrinsicRow>,
    extrinsic_after: Vec<ExtrinsicRow>,
}

fn random_signals(r: &mut impl Rng, offset: i64) -> CliResult<Vec<EngagementSignal>> {
    let n = r.gen_range(1..=3);
    (0..n)
        .map(|k| {
            let kind = match r.gen_range(0..3) {
                0 => TaskKind::Call,
                1 => TaskKind::Directions,
                _ => TaskKind::Other,
            };
            let completed = r.gen_bool(0.75);
            let duration = r.gen_range(0.0..60.0);
            let at = DateTime::<Utc>::from_timestamp(BASE_TIMESTAMP + offset * 60 + k, 0)
                .expect("timestamp in range")
                + Duration::milliseconds(r.gen_range(0..1000));
            Ok(EngagementSignal::new(kind, completed, duration, at)?)
        })
        .collect()
}

fn correction_of(corpus: &GeneratedCorpus, root: &Path, ex: &Example) -> CliResult<StoredPronunciation> {
    Ok(match corpus.mode {
        CorpusMode::Phoneme => StoredPronunciation::Phonemes(ex.asr_pron.clone()),
        CorpusMode::Audio => {
            let wav = GeneratedCorpus::load_audio(root, ex, Role::User)?;
            let full = GeneratedCorpus::audio_path(root, ex, Role::User);
            let rel = full.strip_prefix(root).unwrap_or(&full);
            StoredPronunciation::Audio {
                path: rel.to_string_lossy().replace('\\', "/"),
                span: TimeSpan::new(0.0, wav.duration())?,
            }
        }
    })
}

/// 3 when the spoken pronunciation is right, 2 when it is within a third
/// of the length in edits, otherwise 1.
fn likert(corpus: &GeneratedCorpus, ex: &Example, correct: bool) -> CliResult<u8> {
    if correct {
        return Ok(3);
    }
    let inv = corpus.inventory(&ex.locale)?;
    let d = normalized_distance(&inv.truth.apply(&ex.asr_pron)?, &ex.tts_pron)?;
    Ok(if d <= 1.0 / 3.0 { 2 } else { 1 })
}

fn extrinsic(corpus: &GeneratedCorpus, rows: &[(&Example, bool)]) -> CliResult<Vec<ExtrinsicRow>> {
    let mut out = Vec::new();
    for inv in &corpus.inventories {
        let mut scores = Vec::new();
        let mut correct = Vec::new();
        for &(ex, ok) in rows.iter().filter(|(e, _)| e.locale == inv.locale) {
            scores.push(likert(corpus, ex, ok)?);
            correct.push(ok);
        }
        if scores.is_empty() {
            continue;
        }
        let s = likert_report(&scores, &correct)?;
        out.push(ExtrinsicRow {
            locale: inv.locale.clone(),
            percent: s.percent,
            mean_likert: s.mean_likert,
        });
    }
    Ok(out)
}

pub fn simulate_correction(a: &SimulateArgs) -> CliResult<()> {
    let policy = CorrectionPolicy {
        min_duration_seconds: a.policy_min_seconds,
        ..CorrectionPolicy::default()
    };
    policy.validate().map_err(|e| Failure::usage(e.to_string()))?;
    if a.users == 0 {
        return Err(Failure::usage("need at least one user"));
    }
    let th = ThresholdFile::load(&a.threshold_file)?;
    let method = Method::parse(&th.method)?;
    let corpus = load_corpus(&a.corpus)?;
    let scorer = Scorer::new(method, &corpus, &a.corpus, a.model.as_deref())?;

    fs::create_dir_all(&a.out).map_err(|e| Failure::io(format!("{}: {e}", a.out.display())))?;
    let store_path = a.out.join("store.ndjson");
    if store_path.exists() {
        fs::remove_file(&store_path)?;
    }
    let mut store = PronunciationStore::open(&store_path)?;
    let mut outcomes = BufWriter::new(File::create(a.out.join("outcomes.jsonl"))?);

    let mut r = rng(derive(a.seed, "simulate-correction"));
    let evaluation = split_of(&corpus).evaluation;
    let mut flagged = 0;
    let mut applied = 0;
    let mut correct_applied = 0;
    let mut seen: Vec<(&Example, String)> = Vec::with_capacity(evaluation.len());
    for (k, &i) in evaluation.iter().enumerate() {
        let ex = &corpus.examples[i];
        let user = format!("user-{:03}", r.gen_range(0..a.users));
        let interaction = Interaction {
            user_id: user.clone(),
            entity_id: ex.entity_id.clone(),
            payload: ex,
            correction: correction_of(&corpus, &a.corpus, ex)?,
            signals: random_signals(&mut r, k as i64)?,
        };
        let outcome = run_pipeline(|e: &&Example| scorer.score(e), &mut store, &interaction, th.threshold, &policy)?;
        flagged += usize::from(outcome.verdict.mispronounced);
        if outcome.corrected {
            applied += 1;
            correct_applied += usize::from(ex.label);
        }
        let line = Outcome {
            user_id: &user,
            entity_id: &ex.entity_id,
            example_id: &ex.id,
            label: ex.label,
            score: outcome.verdict.score,
            mispronounced: outcome.verdict.mispronounced,
            corrected: outcome.corrected,
            signals: &interaction.signals,
        };
        serde_json::to_writer(&mut outcomes, &line)?;
        outcomes.write_all(b"\n")?;
        seen.push((ex, user));
    }
    outcomes.flush()?;
    store.compact()?;

    // Before: the TTS pronunciation is heard. After: a stored user
    // pronunciation replaces it for that user.
    let before: Vec<(&Example, bool)> = seen.iter().map(|(e, _)| (*e, !e.label)).collect();
    let after: Vec<(&Example, bool)> = seen
        .iter()
        .map(|(e, u)| (*e, !e.label || lookup(&store, u, &e.entity_id).is_some()))
        .collect();
    let report = Report {
        method: method.name().to_owned(),
        threshold: th.threshold,
        policy,
        users: a.users,
        interactions: seen.len(),
        flagged,
        corrections_applied: applied,
        correct_corrections: correct_applied,
        correction_precision: (applied > 0).then(|| correct_applied as f64 / applied as f64),
        store_path: "store.ndjson".to_owned(),
        store_records: store.len(),
        extrinsic_before: extrinsic(&corpus, &before)?,
        extrinsic_after: extrinsic(&corpus, &after)?,
    };
    write_json(&a.out.join("report.json"), &report)?;
    println!(
        "{}: {} interactions, {} flagged, {} corrections ({} correct), {} stored",
        report.method, report.interactions, flagged, applied, correct_applied, report.store_records
    );
    for (b, aft) in report.extrinsic_before.iter().zip(&report.extrinsic_after) {
        println!(
            "{:<8} correct {:>6.2}% -> {:>6.2}%  likert {:.3} -> {:.3}",
            b.locale, b.percent, aft.percent, b.mean_likert, aft.mean_likert
        );
    }
    Ok(())
}
