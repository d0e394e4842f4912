use std::fs::{self, OpenOptions};
use std::io::Write;

use chrono::{DateTime, TimeZone, Utc};
use pronlearn::correction::{
    apply_correction, lookup, qualify, run_pipeline, CorrectionPolicy, EngagementSignal, Interaction,
    PronunciationRecord, PronunciationStore, StoredPronunciation, TaskKind,
};
use pronlearn::dsp::TimeSpan;
use pronlearn::phoneme::PhonemeSequence;
use pronlearn::verdict::DetectionVerdict;
use proptest::prelude::*;

fn at(seconds: i64) -> DateTime<Utc> {
    Utc.timestamp_opt(1_700_000_000 + seconds, 0).unwrap()
}

fn signal(completed: bool, duration: f64, t: i64) -> EngagementSignal {
    EngagementSignal::new(TaskKind::Call, completed, duration, at(t)).unwrap()
}

fn phonemes(items: Vec<usize>) -> StoredPronunciation {
    StoredPronunciation::Phonemes(PhonemeSequence {
        phoneset: "en-US-asr".into(),
        items,
    })
}

fn signal_strategy() -> impl Strategy<Value = EngagementSignal> {
    (any::<bool>(), 0.0f64..30.0, 0i64..1000).prop_map(|(c, d, t)| signal(c, d, t))
}

fn policy_strategy() -> impl Strategy<Value = CorrectionPolicy> {
    (0.0f64..30.0, any::<bool>(), 1usize..4).prop_map(|(m, c, k)| CorrectionPolicy {
        min_duration_seconds: m,
        require_completion: c,
        min_qualified_events: k,
    })
}

#[test]
fn default_policy_gate() {
    let p = CorrectionPolicy::default();
    let flagged = DetectionVerdict::new(0.8, 0.5).unwrap();
    let clean = DetectionVerdict::new(0.2, 0.5).unwrap();
    assert!(qualify(&flagged, &[signal(true, 12.0, 0)], &p));
    assert!(qualify(&flagged, &[signal(true, 10.0, 0)], &p));
    assert!(!qualify(&flagged, &[signal(true, 9.9, 0)], &p));
    assert!(!qualify(&flagged, &[signal(false, 60.0, 0)], &p));
    assert!(!qualify(&flagged, &[], &p));
    assert!(!qualify(&clean, &[signal(true, 60.0, 0)], &p));
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(EngagementSignal::new(TaskKind::Other, true, -1.0, at(0)).is_err());
    assert!(EngagementSignal::new(TaskKind::Other, true, f64::NAN, at(0)).is_err());
    let bad = CorrectionPolicy {
        min_qualified_events: 0,
        ..CorrectionPolicy::default()
    };
    assert!(bad.validate().is_err());
    let mut store = PronunciationStore::in_memory();
    assert!(apply_correction(&mut store, "u", "e", phonemes(vec![1]), vec![]).is_err());
}

#[test]
fn created_at_is_the_latest_evidence() {
    let mut store = PronunciationStore::in_memory();
    let ev = vec![signal(true, 20.0, 50), signal(true, 20.0, 300), signal(true, 20.0, 10)];
    apply_correction(&mut store, "u", "e", phonemes(vec![1, 2]), ev).unwrap();
    assert_eq!(lookup(&store, "u", "e").unwrap().created_at, at(300));
    assert!(lookup(&store, "v", "e").is_none());
}

#[test]
fn pipeline_stores_only_admitted_evidence() {
    let mut store = PronunciationStore::in_memory();
    let interaction = Interaction {
        user_id: "u1".into(),
        entity_id: "e1".into(),
        payload: 0.9,
        correction: phonemes(vec![3, 4]),
        signals: vec![signal(true, 30.0, 1), signal(false, 30.0, 2), signal(true, 3.0, 3)],
    };
    let policy = CorrectionPolicy::default();
    let out = run_pipeline(|&s: &f64| Ok(s), &mut store, &interaction, 0.5, &policy).unwrap();
    assert!(out.verdict.mispronounced && out.corrected);
    let rec = lookup(&store, "u1", "e1").unwrap();
    assert_eq!(rec.evidence, vec![signal(true, 30.0, 1)]);
    assert_eq!(rec.pronunciation, phonemes(vec![3, 4]));

    let below = Interaction {
        payload: 0.4,
        entity_id: "e2".into(),
        ..interaction
    };
    let out = run_pipeline(|&s: &f64| Ok(s), &mut store, &below, 0.5, &policy).unwrap();
    assert!(!out.corrected);
    assert_eq!(store.len(), 1);
}

#[test]
fn file_store_survives_reload_bit_equal() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("store.ndjson");
    let mut store = PronunciationStore::open(&path).unwrap();
    for (i, user) in ["alice", "bob", "alice"].iter().enumerate() {
        let entity = format!("e{}", i % 2);
        apply_correction(&mut store, user, &entity, phonemes(vec![i, i + 1]), vec![signal(true, 11.5, i as i64)])
            .unwrap();
    }
    let audio = StoredPronunciation::Audio {
        path: "audio/x_user_0.wav".into(),
        span: TimeSpan::new(0.0, 0.4375).unwrap(),
    };
    apply_correction(&mut store, "carol", "e9", audio, vec![signal(true, 40.123456789, 7)]).unwrap();
    let before: Vec<PronunciationRecord> = store.records().cloned().collect();
    drop(store);

    let reopened = PronunciationStore::open(&path).unwrap();
    let after: Vec<PronunciationRecord> = reopened.records().cloned().collect();
    assert_eq!(after, before);
    let bytes = fs::read(&path).unwrap();
    drop(reopened);
    PronunciationStore::open(&path).unwrap();
    assert_eq!(fs::read(&path).unwrap(), bytes);
    assert!(String::from_utf8(bytes).unwrap().starts_with("{\"pronunciation_store\":1}\n"));
}

#[test]
fn torn_final_line_is_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("store.ndjson");
    let mut store = PronunciationStore::open(&path).unwrap();
    apply_correction(&mut store, "u", "a", phonemes(vec![1]), vec![signal(true, 20.0, 0)]).unwrap();
    apply_correction(&mut store, "u", "b", phonemes(vec![2]), vec![signal(true, 20.0, 1)]).unwrap();
    drop(store);
    let mut f = OpenOptions::new().append(true).open(&path).unwrap();
    f.write_all(b"{\"user_id\":\"u\",\"entity_id\":\"c\",\"pronun").unwrap();
    drop(f);
    let store = PronunciationStore::open(&path).unwrap();
    assert_eq!(store.len(), 2);
    assert!(lookup(&store, "u", "c").is_none());
}

#[test]
fn corrupt_or_foreign_stores_fail_to_open() {
    let dir = tempfile::tempdir().unwrap();
    let mid = dir.path().join("mid.ndjson");
    fs::write(&mid, "{\"pronunciation_store\":1}\ngarbage\n{\"also\":\"bad\"}\n").unwrap();
    assert!(PronunciationStore::open(&mid).is_err());
    let version = dir.path().join("v.ndjson");
    fs::write(&version, "{\"pronunciation_store\":2}\n").unwrap();
    assert!(PronunciationStore::open(&version).is_err());
}

#[derive(Debug, Clone)]
struct Op {
    user: usize,
    entity: usize,
    symbol: usize,
    t: i64,
}

fn ops() -> impl Strategy<Value = Vec<Op>> {
    prop::collection::vec(
        (0usize..4, 0usize..4, 0usize..10, 0i64..100).prop_map(|(user, entity, symbol, t)| Op {
            user,
            entity,
            symbol,
            t,
        }),
        0..40,
    )
}

fn replay<'a>(ops: impl Iterator<Item = &'a Op>) -> PronunciationStore {
    let mut store = PronunciationStore::in_memory();
    for op in ops {
        apply_correction(
            &mut store,
            &format!("user{}", op.user),
            &format!("e{}", op.entity),
            phonemes(vec![op.symbol]),
            vec![signal(true, 15.0, op.t)],
        )
        .unwrap();
    }
    store
}

proptest! {
    #[test]
    fn qualify_matches_recount(score in 0.0f64..1.0, threshold in 0.0f64..1.0,
                               signals in prop::collection::vec(signal_strategy(), 0..6),
                               policy in policy_strategy()) {
        let v = DetectionVerdict::new(score, threshold).unwrap();
        let admitted = signals
            .iter()
            .filter(|s| (s.completed || !policy.require_completion) && s.duration_seconds >= policy.min_duration_seconds)
            .count();
        prop_assert_eq!(qualify(&v, &signals, &policy), score > threshold && admitted >= policy.min_qualified_events);
    }

    #[test]
    fn qualify_is_monotone_in_signals(signals in prop::collection::vec(signal_strategy(), 0..6),
                                      extra in signal_strategy(),
                                      policy in policy_strategy()) {
        let v = DetectionVerdict::new(0.9, 0.5).unwrap();
        let mut more = signals.clone();
        more.push(extra);
        prop_assert!(!qualify(&v, &signals, &policy) || qualify(&v, &more, &policy));
    }

    #[test]
    fn users_are_isolated(ops in ops()) {
        let shared = replay(ops.iter());
        for user in 0..4 {
            let alone = replay(ops.iter().filter(|o| o.user == user));
            let id = format!("user{user}");
            let a: Vec<&PronunciationRecord> = shared.user_records(&id).collect();
            let b: Vec<&PronunciationRecord> = alone.user_records(&id).collect();
            prop_assert_eq!(a, b);
            prop_assert!(shared.user_records(&id).all(|r| r.user_id == id));
        }
    }
}
