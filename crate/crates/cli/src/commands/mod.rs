mod data;
mod detect;
mod simulate;
mod train;

use std::fs;
use std::path::Path;

use pronlearn::calibration::threshold_serde;
use pronlearn::datagen::{GeneratedCorpus, Split};
use serde::{Deserialize, Serialize};

use crate::failure::{CliResult, Failure};

pub use data::gen_data;
pub use detect::{calibrate, evaluate};
pub use simulate::simulate_correction;
pub use train::train;

/// Output of `calibrate`, input of `evaluate` and `simulate-correction`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFile {
    pub method: String,
    pub target_precision: f64,
    #[serde(with = "threshold_serde")]
    pub threshold: f64,
    pub achieved_precision: f64,
    pub achieved_recall: f64,
    pub pairs: usize,
}

impl ThresholdFile {
    fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
    }
}

/// The split is keyed by the corpus seed so every command sees the same
/// partition regardless of its own `--seed`.
fn split_of(corpus: &GeneratedCorpus) -> Split {
    corpus.split(corpus.spec.seed)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}
