//! Engagement-gated, per-user pronunciation correction.
//!
//! A detected mispronunciation is only acted on when the user's follow-up
//! behaviour (for example a completed call of sufficient length) confirms
//! the recognized entity was the intended one. The corrected pronunciation
//! is stored for that user alone.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::dsp::TimeSpan;
use crate::error::{Error, Result};
use crate::phoneme::PhonemeSequence;
use crate::verdict::DetectionVerdict;

pub const STORE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Call,
    Directions,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementSignal {
    pub task_kind: TaskKind,
    pub completed: bool,
    pub duration_seconds: f64,
    pub timestamp: DateTime<Utc>,
}

impl EngagementSignal {
    pub fn new(task_kind: TaskKind, completed: bool, duration_seconds: f64, timestamp: DateTime<Utc>) -> Result<Self> {
        if !(duration_seconds >= 0.0) || !duration_seconds.is_finite() {
            return Err(Error::invalid(format!("duration must be non-negative, got {duration_seconds}")));
        }
        Ok(Self {
            task_kind,
            completed,
            duration_seconds,
            timestamp,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionPolicy {
    pub min_duration_seconds: f64,
    pub require_completion: bool,
    pub min_qualified_events: usize,
}

impl Default for CorrectionPolicy {
    fn default() -> Self {
        Self {
            min_duration_seconds: 10.0,
            require_completion: true,
            min_qualified_events: 1,
        }
    }
}

impl CorrectionPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_duration_seconds >= 0.0) || !self.min_duration_seconds.is_finite() {
            return Err(Error::invalid("min_duration_seconds must be non-negative"));
        }
        if self.min_qualified_events == 0 {
            return Err(Error::invalid("min_qualified_events must be at least 1"));
        }
        Ok(())
    }

    pub fn admits(&self, s: &EngagementSignal) -> bool {
        (s.completed || !self.require_completion) && s.duration_seconds >= self.min_duration_seconds
    }
}

/// True iff stage one flagged a mispronunciation and enough signals pass
/// the policy.
pub fn qualify(verdict: &DetectionVerdict, signals: &[EngagementSignal], policy: &CorrectionPolicy) -> bool {
    verdict.mispronounced && signals.iter().filter(|s| policy.admits(s)).count() >= policy.min_qualified_events
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoredPronunciation {
    Phonemes(PhonemeSequence),
    Audio { path: String, span: TimeSpan },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionSource {
    UserDerived,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PronunciationRecord {
    pub user_id: String,
    pub entity_id: String,
    pub pronunciation: StoredPronunciation,
    pub source: CorrectionSource,
    pub created_at: DateTime<Utc>,
    pub evidence: Vec<EngagementSignal>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    pronunciation_store: u32,
}

/// Map `(user, entity) → record`, optionally backed by an append-only
/// NDJSON log (a version line, then one record per line; the latest record
/// for a key wins). Opening a file store compacts the log.
#[derive(Debug, Default)]
pub struct PronunciationStore {
    path: Option<PathBuf>,
    records: BTreeMap<(String, String), PronunciationRecord>,
}

impl PronunciationStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if absent) the store at `path`. A torn final line,
    /// left by a write interrupted mid-record, is dropped.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut records = BTreeMap::new();
        if path.exists() {
            let lines: Vec<String> = BufReader::new(File::open(&path)?).lines().collect::<std::io::Result<_>>()?;
            let mut it = lines.iter().enumerate().filter(|(_, l)| !l.trim().is_empty());
            let (_, first) = it
                .next()
                .ok_or_else(|| Error::Format(format!("{}: missing version line", path.display())))?;
            let header: Header = serde_json::from_str(first)
                .map_err(|e| Error::Format(format!("{}: bad version line: {e}", path.display())))?;
            if header.pronunciation_store != STORE_VERSION {
                return Err(Error::Format(format!(
                    "{}: store version {} unsupported",
                    path.display(),
                    header.pronunciation_store
                )));
            }
            let last = lines.len() - 1;
            for (n, line) in it {
                match serde_json::from_str::<PronunciationRecord>(line) {
                    Ok(r) => {
                        records.insert((r.user_id.clone(), r.entity_id.clone()), r);
                    }
                    Err(e) if n == last => log::warn!("{}: dropping torn final record: {e}", path.display()),
                    Err(e) => return Err(Error::Parse(format!("{} line {}: {e}", path.display(), n + 1))),
                }
            }
        }
        let store = Self {
            path: Some(path),
            records,
        };
        store.compact()?;
        Ok(store)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Rewrites the log with one line per live record via a temporary file
    /// and an atomic rename.
    pub fn compact(&self) -> Result<()> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let tmp = path.with_extension("tmp");
        {
            let mut f = File::create(&tmp)?;
            writeln!(f, "{}", serde_json::to_string(&Header { pronunciation_store: STORE_VERSION })?)?;
            for r in self.records.values() {
                writeln!(f, "{}", serde_json::to_string(r)?)?;
            }
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Appends `record` durably, then makes it visible. On failure the
    /// store is unchanged.
    pub fn put(&mut self, record: PronunciationRecord) -> Result<()> {
        if let Some(path) = &self.path {
            let mut line = serde_json::to_string(&record)?;
            line.push('\n');
            let mut f = OpenOptions::new().append(true).open(path)?;
            f.write_all(line.as_bytes())?;
            f.sync_data()?;
        }
        self.records
            .insert((record.user_id.clone(), record.entity_id.clone()), record);
        Ok(())
    }

    pub fn get(&self, user_id: &str, entity_id: &str) -> Option<&PronunciationRecord> {
        self.records.get(&(user_id.to_owned(), entity_id.to_owned()))
    }

    /// Every record of one user, by entity.
    pub fn user_records<'a>(&'a self, user_id: &'a str) -> impl Iterator<Item = &'a PronunciationRecord> + 'a {
        self.records
            .range((user_id.to_owned(), String::new())..)
            .take_while(move |((u, _), _)| u == user_id)
            .map(|(_, r)| r)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &PronunciationRecord> {
        self.records.values()
    }
}

/// Writes (or replaces) the user's pronunciation of `entity_id`. The
/// creation time is the latest evidence timestamp, so replays are
/// reproducible.
pub fn apply_correction(
    store: &mut PronunciationStore,
    user_id: &str,
    entity_id: &str,
    pronunciation: StoredPronunciation,
    evidence: Vec<EngagementSignal>,
) -> Result<()> {
    let created_at = evidence
        .iter()
        .map(|s| s.timestamp)
        .max()
        .ok_or_else(|| Error::Empty("correction evidence".into()))?;
    store.put(PronunciationRecord {
        user_id: user_id.to_owned(),
        entity_id: entity_id.to_owned(),
        pronunciation,
        source: CorrectionSource::UserDerived,
        created_at,
        evidence,
    })
}

pub fn lookup<'a>(store: &'a PronunciationStore, user_id: &str, entity_id: &str) -> Option<&'a PronunciationRecord> {
    store.get(user_id, entity_id)
}

/// One user/entity interaction: the detector input `payload`, the
/// pronunciation to store if corrected, and the follow-up signals.
#[derive(Debug, Clone)]
pub struct Interaction<P> {
    pub user_id: String,
    pub entity_id: String,
    pub payload: P,
    pub correction: StoredPronunciation,
    pub signals: Vec<EngagementSignal>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutcome {
    pub verdict: DetectionVerdict,
    pub corrected: bool,
}

/// Detect, qualify, then store the user's pronunciation when both stages
/// pass. Only admitted signals are kept as evidence.
pub fn run_pipeline<P>(
    detector: impl Fn(&P) -> Result<f64>,
    store: &mut PronunciationStore,
    interaction: &Interaction<P>,
    threshold: f64,
    policy: &CorrectionPolicy,
) -> Result<PipelineOutcome> {
    policy.validate()?;
    let verdict = DetectionVerdict::new(detector(&interaction.payload)?, threshold)?;
    let corrected = qualify(&verdict, &interaction.signals, policy);
    if corrected {
        let evidence = interaction
            .signals
            .iter()
            .filter(|s| policy.admits(s))
            .cloned()
            .collect();
        apply_correction(
            store,
            &interaction.user_id,
            &interaction.entity_id,
            interaction.correction.clone(),
            evidence,
        )?;
    }
    Ok(PipelineOutcome { verdict, corrected })
}
