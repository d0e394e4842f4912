//! Seeded synthetic corpora with known ground truth, in phoneme form and as
//! sinusoid-bank audio.
//!
//! Every locale gets a 24-symbol ASR phoneset and a 20-symbol TTS phoneset.
//! ASR symbols `0..20` correspond one-to-one with TTS symbols; ASR symbols
//! `20..24` are allophones of TTS `0..4`. The P2P mapping table sends each
//! TTS symbol to its primary ASR symbol, so an allophone in the user's
//! pronunciation reads as a substitution to P2P while the two pronunciations
//! are in fact the same. TTS symbols `14..20` are "foreign" phones that are
//! common in non-native names and in the alternate reading of homographs.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{read_wav, write_wav, Waveform, DEFAULT_SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::phoneme::{edit_distance, PhonemeSequence, Phoneset, PhonesetKind, SymbolMapping};
use crate::rng;

pub const PAPER_LOCALES: [&str; 10] = [
    "en-US", "en-CA", "en-GB", "en-AU", "en-IN", "fr-FR", "es-ES", "es-MX", "es-US", "ja-JP",
];

pub const ASR_SYMBOLS: usize = 24;
pub const TTS_SYMBOLS: usize = 20;
const ALLOPHONES: usize = ASR_SYMBOLS - TTS_SYMBOLS;
const NATIVE_SYMBOLS: usize = 14;

pub const VARIANTS_PER_ENTITY: usize = 3;
pub const PHONE_SECONDS: f64 = 0.080;
pub const CROSSFADE_SECONDS: f64 = 0.005;

const MIN_LEN: usize = 4;
const MAX_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusMode {
    Phoneme,
    Audio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub locales: Vec<String>,
    pub entities_per_locale: usize,
    pub mispronunciation_rate: f64,
    pub homograph_rate: f64,
    pub non_native_rate: f64,
    /// Probability that the user's ASR transcription realizes an
    /// allophone-bearing phone with its secondary ASR symbol.
    pub allophone_rate: f64,
    pub seed: u64,
}

impl DatasetSpec {
    /// Phoneme-dataset defaults: 30% non-native names, 22% homographs, a
    /// mispronunciation rate inside the reported 15–28% band.
    pub fn phoneme() -> Self {
        Self {
            locales: PAPER_LOCALES.iter().map(|s| s.to_string()).collect(),
            entities_per_locale: 500,
            mispronunciation_rate: 0.20,
            homograph_rate: 0.22,
            non_native_rate: 0.30,
            allophone_rate: 0.20,
            seed: 7,
        }
    }

    /// Audio-dataset defaults: ~17% non-native, ~22% homographs, 40–50%
    /// human mispronunciations.
    pub fn audio() -> Self {
        Self {
            entities_per_locale: 200,
            mispronunciation_rate: 0.45,
            non_native_rate: 0.17,
            ..Self::phoneme()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mispronunciation_rate", self.mispronunciation_rate),
            ("homograph_rate", self.homograph_rate),
            ("non_native_rate", self.non_native_rate),
            ("allophone_rate", self.allophone_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        if self.entities_per_locale == 0 {
            return Err(Error::invalid("entities_per_locale must be at least 1"));
        }
        if self.locales.is_empty() {
            return Err(Error::invalid("locales must not be empty"));
        }
        for (i, l) in self.locales.iter().enumerate() {
            if l.is_empty() || l.chars().any(|c| c.is_whitespace() || c == '/' || c == '_') {
                return Err(Error::invalid(format!("locales: malformed tag `{l}`")));
            }
            if self.locales[..i].contains(l) {
                return Err(Error::invalid(format!("locales: duplicate `{l}`")));
            }
        }
        Ok(())
    }
}

/// Phonesets, mappings and tone table for one locale.
#[derive(Debug, Clone, PartialEq)]
pub struct LocaleInventory {
    pub locale: String,
    pub asr: Phoneset,
    pub tts: Phoneset,
    /// Ground truth ASR → TTS (many-to-one).
    pub truth: SymbolMapping,
    /// P2P comparison table TTS → nearest ASR symbol.
    pub p2p: SymbolMapping,
    /// Two partial frequencies (Hz) per TTS symbol.
    pub tones: Vec<(f64, f64)>,
}

impl LocaleInventory {
    pub fn new(locale: &str) -> Result<Self> {
        let asr = Phoneset::new(
            format!("{locale}-asr"),
            locale,
            PhonesetKind::Asr,
            (0..ASR_SYMBOLS).map(|i| format!("a{i:02}")).collect(),
        )?;
        let tts = Phoneset::new(
            format!("{locale}-tts"),
            locale,
            PhonesetKind::Tts,
            (0..TTS_SYMBOLS).map(|i| format!("T{i:02}")).collect(),
        )?;
        let truth_table = (0..ASR_SYMBOLS).map(|a| a % TTS_SYMBOLS).collect();
        let truth = SymbolMapping::new(&asr, &tts, truth_table)?;
        let p2p = SymbolMapping::new(&tts, &asr, (0..TTS_SYMBOLS).collect())?;

        // Spread the two partials over disjoint grids so every symbol has a
        // distinct dominant low partial.
        let mut r = rng::rng_for(0x70_4E5, locale);
        let mut low: Vec<usize> = (0..TTS_SYMBOLS).collect();
        let mut high: Vec<usize> = (0..TTS_SYMBOLS).collect();
        low.shuffle(&mut r);
        high.shuffle(&mut r);
        let tones = (0..TTS_SYMBOLS)
            .map(|k| (250.0 + 80.0 * low[k] as f64, 2000.0 + 90.0 * high[k] as f64))
            .collect();
        Ok(Self {
            locale: locale.to_owned(),
            asr,
            tts,
            truth,
            p2p,
            tones,
        })
    }
}

/// Loudness, background noise and per-phone amplitude jitter of one
/// rendering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Voice {
    pub gain: f64,
    pub noise: f64,
    pub jitter: f64,
}

impl Voice {
    pub fn tts() -> Self {
        Self {
            gain: 0.5,
            noise: 0.002,
            jitter: 0.05,
        }
    }

    /// A participant: gain in [0.15, 0.9], log-uniform noise in
    /// [5e-4, 2e-2], 15% amplitude jitter.
    pub fn sample(r: &mut impl Rng) -> Self {
        Self {
            gain: r.gen_range(0.15..0.9),
            noise: 10f64.powf(r.gen_range(-3.3..-1.7)),
            jitter: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub locale: String,
    pub entity_id: String,
    pub variant: usize,
    pub asr_pron: PhonemeSequence,
    pub tts_pron: PhonemeSequence,
    pub label: bool,
    pub homograph: bool,
    pub non_native: bool,
    /// Present in audio mode.
    pub user_voice: Option<Voice>,
    pub user_seed: u64,
    pub tts_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedCorpus {
    pub mode: CorpusMode,
    pub spec: DatasetSpec,
    pub inventories: Vec<LocaleInventory>,
    pub examples: Vec<Example>,
}

/// Applies `n_edits` random substitutions, insertions or deletions over a
/// `alphabet`-symbol inventory. Edits that cancel out are redrawn, so the
/// output always differs from the input.
pub fn perturb(seq: &PhonemeSequence, alphabet: usize, n_edits: usize, seed: u64) -> Result<PhonemeSequence> {
    if seq.is_empty() {
        return Err(Error::Empty("perturb needs a non-empty sequence".into()));
    }
    if n_edits == 0 {
        return Err(Error::invalid("perturb needs at least one edit"));
    }
    if alphabet < 2 {
        return Err(Error::invalid("perturb needs an alphabet of at least two symbols"));
    }
    let mut r = rng::rng(seed);
    loop {
        let mut items = seq.items.clone();
        for _ in 0..n_edits {
            edit_once(&mut items, alphabet, &mut r);
        }
        if items != seq.items {
            return Ok(PhonemeSequence {
                phoneset: seq.phoneset.clone(),
                items,
            });
        }
    }
}

fn edit_once(items: &mut Vec<usize>, alphabet: usize, r: &mut ChaCha8Rng) {
    match r.gen_range(0..3) {
        0 if items.len() > 1 => {
            let p = r.gen_range(0..items.len());
            items.remove(p);
        }
        1 => {
            let p = r.gen_range(0..=items.len());
            items.insert(p, r.gen_range(0..alphabet));
        }
        _ => {
            let p = r.gen_range(0..items.len());
            let s = (items[p] + r.gen_range(1..alphabet)) % alphabet;
            items[p] = s;
        }
    }
}

/// Renders TTS-space symbols as 80 ms two-partial tones joined by 5 ms
/// linear crossfades, peak-normalized to `voice.gain` before noise.
pub fn synthesize_audio(
    seq: &[usize],
    tones: &[(f64, f64)],
    voice: &Voice,
    seed: u64,
) -> Result<Waveform<f64>> {
    if seq.is_empty() {
        return Err(Error::Empty("synthesize_audio needs a non-empty sequence".into()));
    }
    if let Some(&bad) = seq.iter().find(|&&s| s >= tones.len()) {
        return Err(Error::invalid(format!("symbol {bad} has no tone")));
    }
    let rate = DEFAULT_SAMPLE_RATE;
    let phone = (PHONE_SECONDS * rate as f64).round() as usize;
    let fade = (CROSSFADE_SECONDS * rate as f64).round() as usize;
    let n = seq.len() * phone - (seq.len() - 1) * fade;
    let mut out = vec![0.0; n];
    let mut r = rng::rng(seed);
    let two_pi = std::f64::consts::TAU;
    for (k, &s) in seq.iter().enumerate() {
        let (f1, f2) = tones[s];
        let amp = 1.0 + voice.jitter * r.gen_range(-1.0..1.0);
        let (p1, p2): (f64, f64) = (r.gen_range(0.0..two_pi), r.gen_range(0.0..two_pi));
        let start = k * (phone - fade);
        for i in 0..phone {
            let t = i as f64 / rate as f64;
            let mut env = 1.0;
            if k > 0 && i < fade {
                env = i as f64 / fade as f64;
            }
            if k + 1 < seq.len() && i >= phone - fade {
                env = (phone - i) as f64 / fade as f64;
            }
            out[start + i] +=
                env * amp * (0.6 * (two_pi * f1 * t + p1).sin() + 0.4 * (two_pi * f2 * t + p2).sin());
        }
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if peak > 0.0 { 0.9 * voice.gain / peak } else { 0.0 };
    for v in &mut out {
        let noise: f64 = if voice.noise > 0.0 { gaussian(&mut r) * voice.noise } else { 0.0 };
        *v = (*v * scale + noise).clamp(-1.0, 1.0);
    }
    Waveform::new(out, rate)
}

fn gaussian(r: &mut impl Rng) -> f64 {
    // Box–Muller; one draw per call keeps the stream position simple.
    let u1: f64 = r.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = r.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

struct Entity {
    canonical: Vec<usize>,
    tts: Vec<usize>,
    label: bool,
    homograph: bool,
    non_native: bool,
}

fn sample_entity(spec: &DatasetSpec, seed: u64) -> Entity {
    let mut r = rng::rng(seed);
    let non_native = r.gen_bool(spec.non_native_rate);
    let homograph = r.gen_bool(spec.homograph_rate);
    let label = r.gen_bool(spec.mispronunciation_rate);
    let len = r.gen_range(MIN_LEN..=MAX_LEN);
    let foreign_p = if non_native { 0.5 } else { 0.05 };
    let canonical: Vec<usize> = (0..len)
        .map(|_| {
            if r.gen_bool(foreign_p) {
                r.gen_range(NATIVE_SYMBOLS..TTS_SYMBOLS)
            } else {
                r.gen_range(0..NATIVE_SYMBOLS)
            }
        })
        .collect();
    let tts = if !label {
        canonical.clone()
    } else if homograph {
        // The other reading of a homograph swaps two phones for foreign ones.
        let mut alt = canonical.clone();
        let positions = rand::seq::index::sample(&mut r, len, 2);
        for p in positions.iter() {
            let choices: Vec<usize> = (NATIVE_SYMBOLS..TTS_SYMBOLS).filter(|&s| s != alt[p]).collect();
            alt[p] = *choices.choose(&mut r).expect("foreign inventory has several symbols");
        }
        alt
    } else {
        let n_edits = r.gen_range(1..=3);
        let seq = PhonemeSequence {
            phoneset: String::new(),
            items: canonical.clone(),
        };
        perturb(&seq, TTS_SYMBOLS, n_edits, r.gen()).expect("valid perturbation").items
    };
    Entity {
        canonical,
        tts,
        label,
        homograph,
        non_native,
    }
}

/// The user's ASR transcription of a TTS-space pronunciation.
fn transcribe(canonical: &[usize], allophone_rate: f64, r: &mut impl Rng) -> Vec<usize> {
    canonical
        .iter()
        .map(|&t| {
            if t < ALLOPHONES && r.gen_bool(allophone_rate) {
                t + TTS_SYMBOLS
            } else {
                t
            }
        })
        .collect()
}

fn generate(spec: &DatasetSpec, mode: CorpusMode) -> Result<GeneratedCorpus> {
    spec.validate()?;
    let variants = match mode {
        CorpusMode::Phoneme => 1,
        CorpusMode::Audio => VARIANTS_PER_ENTITY,
    };
    let mut inventories = Vec::with_capacity(spec.locales.len());
    let mut examples = Vec::new();
    for locale in &spec.locales {
        let inv = LocaleInventory::new(locale)?;
        let locale_seed = rng::derive(spec.seed, locale);
        for e in 0..spec.entities_per_locale {
            let entity_seed = rng::derive_index(locale_seed, e as u64);
            let entity = sample_entity(spec, entity_seed);
            let entity_id = format!("{locale}-{e:05}");
            let tts_pron = inv.tts.sequence(entity.tts.clone())?;
            for v in 0..variants {
                let mut r = rng::rng(rng::derive_index(rng::derive(entity_seed, "variant"), v as u64));
                let asr_pron = inv.asr.sequence(transcribe(&entity.canonical, spec.allophone_rate, &mut r))?;
                let user_voice = match mode {
                    CorpusMode::Phoneme => None,
                    CorpusMode::Audio => Some(Voice::sample(&mut r)),
                };
                let id = match mode {
                    CorpusMode::Phoneme => entity_id.clone(),
                    CorpusMode::Audio => format!("{entity_id}-v{v}"),
                };
                examples.push(Example {
                    id,
                    locale: locale.clone(),
                    entity_id: entity_id.clone(),
                    variant: v,
                    asr_pron,
                    tts_pron: tts_pron.clone(),
                    label: entity.label,
                    homograph: entity.homograph,
                    non_native: entity.non_native,
                    user_voice,
                    user_seed: r.gen(),
                    tts_seed: rng::derive(entity_seed, "tts"),
                });
            }
        }
        inventories.push(inv);
    }
    Ok(GeneratedCorpus {
        mode,
        spec: spec.clone(),
        inventories,
        examples,
    })
}

pub fn gen_phoneme_corpus(spec: &DatasetSpec) -> Result<GeneratedCorpus> {
    generate(spec, CorpusMode::Phoneme)
}

/// Phoneme corpus lifted to audio with three participant variants per
/// entity. Waveforms are rendered on demand.
pub fn gen_audio_corpus(spec: &DatasetSpec) -> Result<GeneratedCorpus> {
    generate(spec, CorpusMode::Audio)
}

/// Which side of an example a recording belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    User,
    Tts,
}

impl Role {
    fn as_str(self) -> &'static str {
        match self {
            Role::User => "user",
            Role::Tts => "tts",
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ExampleRecord {
    id: String,
    locale: String,
    entity_id: String,
    variant: usize,
    asr: String,
    tts: String,
    label: bool,
    homograph: bool,
    non_native: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    user_voice: Option<Voice>,
    user_seed: u64,
    tts_seed: u64,
}

#[derive(Serialize, Deserialize)]
struct CorpusHeader {
    mode: CorpusMode,
    spec: DatasetSpec,
}

impl GeneratedCorpus {
    pub fn inventory(&self, locale: &str) -> Result<&LocaleInventory> {
        self.inventories
            .iter()
            .find(|i| i.locale == locale)
            .ok_or_else(|| Error::invalid(format!("corpus has no locale `{locale}`")))
    }

    /// Synthesizes one side of an audio example. The user side renders the
    /// ground-truth TTS-space reading of the ASR transcription.
    pub fn render(&self, ex: &Example, role: Role) -> Result<Waveform<f64>> {
        let inv = self.inventory(&ex.locale)?;
        match role {
            Role::User => {
                let voice = ex
                    .user_voice
                    .ok_or_else(|| Error::invalid("phoneme-mode example has no audio"))?;
                let canonical = inv.truth.apply(&ex.asr_pron)?;
                synthesize_audio(&canonical.items, &inv.tones, &voice, ex.user_seed)
            }
            Role::Tts => synthesize_audio(&ex.tts_pron.items, &inv.tones, &Voice::tts(), ex.tts_seed),
        }
    }

    pub fn audio_path(root: &Path, ex: &Example, role: Role) -> PathBuf {
        root.join("audio")
            .join(format!("{}_{}_{}.wav", ex.entity_id, role.as_str(), ex.variant))
    }

    /// Writes `corpus.jsonl` (header line, then one example per line),
    /// `phonesets/` and, in audio mode, `audio/<entity>_{user,tts}_<v>.wav`.
    pub fn write_dir(&self, root: &Path) -> Result<()> {
        fs::create_dir_all(root.join("phonesets"))?;
        let mut out = serde_json::to_string(&CorpusHeader {
            mode: self.mode,
            spec: self.spec.clone(),
        })?;
        out.push('\n');
        for ex in &self.examples {
            let inv = self.inventory(&ex.locale)?;
            let rec = ExampleRecord {
                id: ex.id.clone(),
                locale: ex.locale.clone(),
                entity_id: ex.entity_id.clone(),
                variant: ex.variant,
                asr: inv.asr.render(&ex.asr_pron)?,
                tts: inv.tts.render(&ex.tts_pron)?,
                label: ex.label,
                homograph: ex.homograph,
                non_native: ex.non_native,
                user_voice: ex.user_voice,
                user_seed: ex.user_seed,
                tts_seed: ex.tts_seed,
            };
            out.push_str(&serde_json::to_string(&rec)?);
            out.push('\n');
        }
        fs::write(root.join("corpus.jsonl"), out)?;
        for inv in &self.inventories {
            let dir = root.join("phonesets");
            inv.asr.save(dir.join(format!("{}.asr.txt", inv.locale)))?;
            inv.tts.save(dir.join(format!("{}.tts.txt", inv.locale)))?;
            fs::write(
                dir.join(format!("{}.p2p.tsv", inv.locale)),
                inv.p2p.to_text(&inv.tts, &inv.asr),
            )?;
        }
        if self.mode == CorpusMode::Audio {
            fs::create_dir_all(root.join("audio"))?;
            for ex in &self.examples {
                for role in [Role::User, Role::Tts] {
                    write_wav(Self::audio_path(root, ex, role), &self.render(ex, role)?)?;
                }
            }
        }
        Ok(())
    }

    /// Reads a corpus directory written by [`GeneratedCorpus::write_dir`].
    /// Phonesets and the P2P table come from the files.
    pub fn read_dir(root: &Path) -> Result<Self> {
        let text = fs::read_to_string(root.join("corpus.jsonl"))?;
        let mut lines = text.lines();
        let header: CorpusHeader = serde_json::from_str(
            lines
                .next()
                .ok_or_else(|| Error::Parse("corpus.jsonl is empty".into()))?,
        )?;
        let mut inventories = Vec::new();
        for locale in &header.spec.locales {
            let dir = root.join("phonesets");
            let mut inv = LocaleInventory::new(locale)?;
            inv.asr = Phoneset::load(dir.join(format!("{locale}.asr.txt")))?;
            inv.tts = Phoneset::load(dir.join(format!("{locale}.tts.txt")))?;
            let p2p = fs::read_to_string(dir.join(format!("{locale}.p2p.tsv")))?;
            inv.p2p = SymbolMapping::from_text(&p2p, &inv.tts, &inv.asr)?;
            inventories.push(inv);
        }
        let mut corpus = Self {
            mode: header.mode,
            spec: header.spec,
            inventories,
            examples: Vec::new(),
        };
        for (n, line) in lines.enumerate() {
            let rec: ExampleRecord =
                serde_json::from_str(line).map_err(|e| Error::Parse(format!("corpus.jsonl line {}: {e}", n + 2)))?;
            let inv = corpus.inventory(&rec.locale)?;
            let ex = Example {
                asr_pron: inv.asr.parse_sequence(&rec.asr)?,
                tts_pron: inv.tts.parse_sequence(&rec.tts)?,
                id: rec.id,
                locale: rec.locale,
                entity_id: rec.entity_id,
                variant: rec.variant,
                label: rec.label,
                homograph: rec.homograph,
                non_native: rec.non_native,
                user_voice: rec.user_voice,
                user_seed: rec.user_seed,
                tts_seed: rec.tts_seed,
            };
            corpus.examples.push(ex);
        }
        Ok(corpus)
    }

    /// Loads one recording of an audio corpus from disk.
    pub fn load_audio(root: &Path, ex: &Example, role: Role) -> Result<Waveform<f64>> {
        read_wav(Self::audio_path(root, ex, role))
    }

    pub fn label_rate(&self) -> f64 {
        self.examples.iter().filter(|e| e.label).count() as f64 / self.examples.len().max(1) as f64
    }

    /// Deterministic entity-level split into `(train, calibration,
    /// evaluation)` example indices with shares 1/2, 1/4, 1/4. All variants
    /// of an entity land in the same part.
    pub fn split(&self, seed: u64) -> Split {
        let mut entities: Vec<&str> = self.examples.iter().map(|e| e.entity_id.as_str()).collect();
        entities.dedup();
        let mut order: Vec<usize> = (0..entities.len()).collect();
        order.shuffle(&mut rng::rng_for(seed, "split"));
        let mut part = vec![0u8; entities.len()];
        let n = entities.len();
        for (rank, &e) in order.iter().enumerate() {
            part[e] = if rank < n / 2 {
                0
            } else if rank < n / 2 + n / 4 {
                1
            } else {
                2
            };
        }
        let mut split = Split::default();
        let mut entity = 0;
        for (i, ex) in self.examples.iter().enumerate() {
            if i > 0 && ex.entity_id != self.examples[i - 1].entity_id {
                entity += 1;
            }
            match part[entity] {
                0 => split.train.push(i),
                1 => split.calibration.push(i),
                _ => split.evaluation.push(i),
            }
        }
        split
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub calibration: Vec<usize>,
    pub evaluation: Vec<usize>,
}

/// True when `asr` and `tts` are the same pronunciation under the ground
/// truth mapping.
pub fn same_pronunciation(inv: &LocaleInventory, asr: &PhonemeSequence, tts: &PhonemeSequence) -> Result<bool> {
    let mapped = inv.truth.apply(asr)?;
    Ok(edit_distance(&mapped.items, &tts.items) == 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invalid_rate_names_the_field() {
        let spec = DatasetSpec {
            homograph_rate: 1.5,
            ..DatasetSpec::phoneme()
        };
        let err = spec.validate().unwrap_err().to_string();
        assert!(err.contains("homograph_rate"), "{err}");
    }

    #[test]
    fn crossfaded_length() {
        let inv = LocaleInventory::new("en-US").unwrap();
        let w = synthesize_audio(&[0, 1, 2, 3, 4], &inv.tones, &Voice::tts(), 1).unwrap();
        assert_eq!(w.len(), 5 * 1280 - 4 * 80);
    }

    #[test]
    fn inventories_are_locale_specific() {
        let a = LocaleInventory::new("en-US").unwrap();
        let b = LocaleInventory::new("fr-FR").unwrap();
        assert_ne!(a.tones, b.tones);
        assert_eq!(a.asr.len(), ASR_SYMBOLS);
        assert_eq!(a.tts.len(), TTS_SYMBOLS);
    }
}
