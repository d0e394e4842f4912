use std::collections::HashSet;
use std::fs;

use pronlearn::datagen::{gen_audio_corpus, gen_phoneme_corpus, DatasetSpec};
use serde::Serialize;

use super::write_json;
use crate::failure::{CliResult, Failure};
use crate::{GenArgs, Mode};

#[derive(Serialize)]
struct Summary {
    mode: &'static str,
    seed: u64,
    locales: usize,
    entities: usize,
    examples: usize,
    label_rate: f64,
    spec_mispronunciation_rate: f64,
    homograph_fraction: f64,
    non_native_fraction: f64,
}

pub fn gen_data(a: &GenArgs) -> CliResult<()> {
    let mut spec = match a.mode {
        Mode::Phoneme => DatasetSpec::phoneme(),
        Mode::Audio => DatasetSpec::audio(),
    };
    spec.seed = a.seed;
    if let Some(list) = &a.locales {
        spec.locales = list.split(',').map(|s| s.trim().to_owned()).filter(|s| !s.is_empty()).collect();
    }
    if let Some(n) = a.entities {
        spec.entities_per_locale = n;
    }
    if let Some(r) = a.mispronunciation_rate {
        spec.mispronunciation_rate = r;
    }
    if let Some(r) = a.homograph_rate {
        spec.homograph_rate = r;
    }
    if let Some(r) = a.non_native_rate {
        spec.non_native_rate = r;
    }
    if let Some(r) = a.allophone_rate {
        spec.allophone_rate = r;
    }
    spec.validate().map_err(|e| Failure::usage(e.to_string()))?;

    let corpus = match a.mode {
        Mode::Phoneme => gen_phoneme_corpus(&spec)?,
        Mode::Audio => gen_audio_corpus(&spec)?,
    };
    fs::create_dir_all(&a.out).map_err(|e| Failure::io(format!("{}: {e}", a.out.display())))?;
    corpus.write_dir(&a.out)?;

    let entities: HashSet<&str> = corpus.examples.iter().map(|e| e.entity_id.as_str()).collect();
    let n = corpus.examples.len() as f64;
    let frac = |f: fn(&pronlearn::datagen::Example) -> bool| corpus.examples.iter().filter(|e| f(e)).count() as f64 / n;
    let summary = Summary {
        mode: match a.mode {
            Mode::Phoneme => "phoneme",
            Mode::Audio => "audio",
        },
        seed: spec.seed,
        locales: spec.locales.len(),
        entities: entities.len(),
        examples: corpus.examples.len(),
        label_rate: corpus.label_rate(),
        spec_mispronunciation_rate: spec.mispronunciation_rate,
        homograph_fraction: frac(|e| e.homograph),
        non_native_fraction: frac(|e| e.non_native),
    };
    write_json(&a.out.join("summary.json"), &summary)?;
    println!("{:<22} {}", "mode", summary.mode);
    println!("{:<22} {}", "locales", summary.locales);
    println!("{:<22} {}", "entities", summary.entities);
    println!("{:<22} {}", "examples", summary.examples);
    println!(
        "{:<22} {:.4} (spec {:.4})",
        "label rate", summary.label_rate, summary.spec_mispronunciation_rate
    );
    println!("{:<22} {:.4}", "homograph fraction", summary.homograph_fraction);
    println!("{:<22} {:.4}", "non-native fraction", summary.non_native_fraction);
    Ok(())
}
