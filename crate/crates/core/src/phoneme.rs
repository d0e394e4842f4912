//! Phoneme inventories, phoneme sequences, edit distance, and the
//! phoneme-to-phoneme (P2P) baseline detector.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::verdict::DetectionVerdict;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhonesetKind {
    #[serde(rename = "ASR")]
    Asr,
    #[serde(rename = "TTS")]
    Tts,
}

impl fmt::Display for PhonesetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhonesetKind::Asr => f.write_str("ASR"),
            PhonesetKind::Tts => f.write_str("TTS"),
        }
    }
}

impl FromStr for PhonesetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ASR" => Ok(PhonesetKind::Asr),
            "TTS" => Ok(PhonesetKind::Tts),
            other => Err(Error::Parse(format!("unknown phoneset kind `{other}`"))),
        }
    }
}

/// A finite, ordered inventory of phoneme symbols for one locale and one
/// subsystem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PhonesetRepr", into = "PhonesetRepr")]
pub struct Phoneset {
    id: String,
    locale: String,
    kind: PhonesetKind,
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct PhonesetRepr {
    id: String,
    locale: String,
    kind: PhonesetKind,
    symbols: Vec<String>,
}

impl TryFrom<PhonesetRepr> for Phoneset {
    type Error = Error;

    fn try_from(r: PhonesetRepr) -> Result<Self> {
        Phoneset::new(r.id, r.locale, r.kind, r.symbols)
    }
}

impl From<Phoneset> for PhonesetRepr {
    fn from(p: Phoneset) -> Self {
        PhonesetRepr {
            id: p.id,
            locale: p.locale,
            kind: p.kind,
            symbols: p.symbols,
        }
    }
}

impl Phoneset {
    pub fn new(
        id: impl Into<String>,
        locale: impl Into<String>,
        kind: PhonesetKind,
        symbols: Vec<String>,
    ) -> Result<Self> {
        let id = id.into();
        if symbols.is_empty() {
            return Err(Error::invalid(format!("phoneset `{id}` has no symbols")));
        }
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, s) in symbols.iter().enumerate() {
            if s.is_empty() || s.chars().any(char::is_whitespace) {
                return Err(Error::invalid(format!("phoneset `{id}`: bad symbol {s:?}")));
            }
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::invalid(format!("phoneset `{id}`: duplicate symbol `{s}`")));
            }
        }
        Ok(Self {
            id,
            locale: locale.into(),
            kind,
            symbols,
            index,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn locale(&self) -> &str {
        &self.locale
    }

    pub fn kind(&self) -> PhonesetKind {
        self.kind
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn index_of(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    pub fn symbol(&self, index: usize) -> Option<&str> {
        self.symbols.get(index).map(String::as_str)
    }

    /// Builds a sequence from symbol indices, validating each one.
    pub fn sequence(&self, items: Vec<usize>) -> Result<PhonemeSequence> {
        if let Some(bad) = items.iter().find(|&&i| i >= self.len()) {
            return Err(Error::invalid(format!(
                "index {bad} out of range for phoneset `{}` ({} symbols)",
                self.id,
                self.len()
            )));
        }
        Ok(PhonemeSequence {
            phoneset: self.id.clone(),
            items,
        })
    }

    /// Parses a whitespace-separated symbol string.
    pub fn parse_sequence(&self, text: &str) -> Result<PhonemeSequence> {
        let items = text
            .split_whitespace()
            .map(|s| {
                self.index_of(s).ok_or_else(|| {
                    Error::Parse(format!("symbol `{s}` not in phoneset `{}`", self.id))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PhonemeSequence {
            phoneset: self.id.clone(),
            items,
        })
    }

    pub fn render(&self, seq: &PhonemeSequence) -> Result<String> {
        self.check(seq)?;
        Ok(seq
            .items
            .iter()
            .map(|&i| self.symbols[i].as_str())
            .collect::<Vec<_>>()
            .join(" "))
    }

    /// Ensures `seq` references this phoneset with in-range indices.
    pub fn check(&self, seq: &PhonemeSequence) -> Result<()> {
        if seq.phoneset != self.id {
            return Err(Error::Phoneset(format!(
                "sequence uses `{}`, expected `{}`",
                seq.phoneset, self.id
            )));
        }
        if seq.items.iter().any(|&i| i >= self.len()) {
            return Err(Error::invalid(format!(
                "sequence has index out of range for `{}`",
                self.id
            )));
        }
        Ok(())
    }

    /// Text form: a `#phoneset <id> <locale> <ASR|TTS>` header, then one
    /// symbol per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("#phoneset {} {} {}\n", self.id, self.locale, self.kind);
        for s in &self.symbols {
            out.push_str(s);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty phoneset file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != "#phoneset" {
            return Err(Error::Parse(format!("bad phoneset header `{header}`")));
        }
        let kind = fields[3].parse()?;
        let symbols = lines.map(str::to_owned).collect();
        Self::new(fields[1], fields[2], kind, symbols)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// An ordered list of symbol indices tied to one phoneset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PhonemeSequence {
    pub phoneset: String,
    pub items: Vec<usize>,
}

impl PhonemeSequence {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Maps every symbol of a source phoneset (TTS) onto its nearest symbol in a
/// target phoneset (ASR), so sequences from both can be compared directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolMapping {
    source: String,
    target: String,
    table: Vec<usize>,
}

impl SymbolMapping {
    pub fn new(source: &Phoneset, target: &Phoneset, table: Vec<usize>) -> Result<Self> {
        if table.len() != source.len() {
            return Err(Error::invalid(format!(
                "mapping covers {} of {} symbols of `{}`",
                table.len(),
                source.len(),
                source.id()
            )));
        }
        if table.iter().any(|&t| t >= target.len()) {
            return Err(Error::invalid("mapping target index out of range"));
        }
        Ok(Self {
            source: source.id().to_owned(),
            target: target.id().to_owned(),
            table,
        })
    }

    /// Identity mapping between phonesets declared compatible: every source
    /// symbol must exist by name in the target.
    pub fn identity(source: &Phoneset, target: &Phoneset) -> Result<Self> {
        let table = source
            .symbols()
            .iter()
            .map(|s| {
                target.index_of(s).ok_or_else(|| {
                    Error::Phoneset(format!(
                        "`{s}` from `{}` missing in `{}`",
                        source.id(),
                        target.id()
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(source, target, table)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn target(&self) -> &str {
        &self.target
    }

    pub fn table(&self) -> &[usize] {
        &self.table
    }

    pub fn apply(&self, seq: &PhonemeSequence) -> Result<PhonemeSequence> {
        if seq.phoneset != self.source {
            return Err(Error::Phoneset(format!(
                "mapping expects `{}`, got `{}`",
                self.source, seq.phoneset
            )));
        }
        let items = seq
            .items
            .iter()
            .map(|&i| {
                self.table
                    .get(i)
                    .copied()
                    .ok_or_else(|| Error::invalid("sequence index outside mapping"))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PhonemeSequence {
            phoneset: self.target.clone(),
            items,
        })
    }

    /// Two-column tab-separated text: `source_symbol<TAB>target_symbol`.
    pub fn to_text(&self, source: &Phoneset, target: &Phoneset) -> String {
        let mut out = String::new();
        for (s, &t) in self.table.iter().enumerate() {
            out.push_str(&source.symbols()[s]);
            out.push('\t');
            out.push_str(&target.symbols()[t]);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str, source: &Phoneset, target: &Phoneset) -> Result<Self> {
        let mut table = vec![None; source.len()];
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (s, t) = line
                .split_once('\t')
                .ok_or_else(|| Error::Parse(format!("line {}: expected two columns", lineno + 1)))?;
            let si = source
                .index_of(s.trim())
                .ok_or_else(|| Error::Parse(format!("line {}: unknown symbol `{s}`", lineno + 1)))?;
            let ti = target
                .index_of(t.trim())
                .ok_or_else(|| Error::Parse(format!("line {}: unknown symbol `{t}`", lineno + 1)))?;
            table[si] = Some(ti);
        }
        let table = table
            .into_iter()
            .enumerate()
            .map(|(i, t)| {
                t.ok_or_else(|| {
                    Error::Parse(format!("no mapping for `{}`", source.symbols()[i]))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(source, target, table)
    }
}

/// Unit-cost edit distance between two slices.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = diag + usize::from(x != y);
            diag = row[j + 1];
            row[j + 1] = sub.min(row[j] + 1).min(diag + 1);
        }
    }
    row[b.len()]
}

fn same_alphabet(a: &PhonemeSequence, b: &PhonemeSequence) -> Result<()> {
    if a.phoneset != b.phoneset {
        return Err(Error::Phoneset(format!(
            "cannot compare `{}` with `{}` without a symbol mapping",
            a.phoneset, b.phoneset
        )));
    }
    Ok(())
}

/// Minimum number of insertions, deletions and substitutions turning `a`
/// into `b`. Both sequences must use the same phoneset.
pub fn levenshtein(a: &PhonemeSequence, b: &PhonemeSequence) -> Result<usize> {
    same_alphabet(a, b)?;
    Ok(edit_distance(&a.items, &b.items))
}

/// `levenshtein(a, b) / max(len(a), len(b))`; zero when both are empty.
pub fn normalized_distance(a: &PhonemeSequence, b: &PhonemeSequence) -> Result<f64> {
    let d = levenshtein(a, b)?;
    let denom = a.len().max(b.len());
    if denom == 0 {
        return Ok(0.0);
    }
    Ok(d as f64 / denom as f64)
}

/// P2P baseline: maps the TTS sequence into the ASR alphabet and flags a
/// mispronunciation when the normalized edit distance exceeds `threshold`.
pub fn p2p_detect(
    asr: &PhonemeSequence,
    tts: &PhonemeSequence,
    mapping: &SymbolMapping,
    threshold: f64,
) -> Result<DetectionVerdict> {
    if mapping.target() != asr.phoneset {
        return Err(Error::Phoneset(format!(
            "mapping targets `{}`, ASR sequence uses `{}`",
            mapping.target(),
            asr.phoneset
        )));
    }
    let mapped = mapping.apply(tts)?;
    DetectionVerdict::new(normalized_distance(asr, &mapped)?, threshold)
}
