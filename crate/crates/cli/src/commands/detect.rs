use log::info;
use pronlearn::calibration::{choose_threshold, pr_curve, EvalReport, MethodReport, ScoredPair};
use pronlearn::datagen::GeneratedCorpus;

use super::{split_of, write_json, ThresholdFile};
use crate::failure::{CliResult, Failure};
use crate::scoring::{load_corpus, Method, Scorer};
use crate::{CalibrateArgs, EvaluateArgs};

/// `(locale, scored pair)` for each example index.
fn score_split(scorer: &Scorer<'_>, corpus: &GeneratedCorpus, idx: &[usize]) -> CliResult<Vec<(String, ScoredPair)>> {
    let mut out = Vec::with_capacity(idx.len());
    for (k, &i) in idx.iter().enumerate() {
        let ex = &corpus.examples[i];
        out.push((ex.locale.clone(), ScoredPair::new(scorer.score(ex)?, ex.label)));
        if (k + 1) % 1000 == 0 {
            info!("{}: scored {}/{}", scorer.method(), k + 1, idx.len());
        }
    }
    Ok(out)
}

pub fn calibrate(a: &CalibrateArgs) -> CliResult<()> {
    if !(a.target_precision >= 0.0) {
        return Err(Failure::usage(format!(
            "target precision must be a non-negative number, got {}",
            a.target_precision
        )));
    }
    let corpus = load_corpus(&a.corpus)?;
    let scorer = Scorer::new(a.method, &corpus, &a.corpus, a.model.as_deref())?;
    let scored = score_split(&scorer, &corpus, &split_of(&corpus).calibration)?;
    let pairs: Vec<ScoredPair> = scored.into_iter().map(|(_, p)| p).collect();
    let point = choose_threshold(&pr_curve(&pairs)?, a.target_precision)?;
    let file = ThresholdFile {
        method: a.method.name().to_owned(),
        target_precision: a.target_precision,
        threshold: point.threshold,
        achieved_precision: point.precision,
        achieved_recall: point.recall,
        pairs: pairs.len(),
    };
    write_json(&a.out, &file)?;
    println!(
        "{}: threshold {:.6} precision {:.4} recall {:.4} ({} pairs)",
        file.method, file.threshold, file.achieved_precision, file.achieved_recall, file.pairs
    );
    Ok(())
}

pub fn evaluate(a: &EvaluateArgs) -> CliResult<()> {
    let corpus = load_corpus(&a.corpus)?;
    let evaluation = split_of(&corpus).evaluation;
    let mut report = EvalReport::default();
    for path in &a.threshold_files {
        let th = ThresholdFile::load(path)?;
        let method = Method::parse(&th.method)?;
        let scorer = Scorer::new(method, &corpus, &a.corpus, a.model.as_deref())?;
        let scored = score_split(&scorer, &corpus, &evaluation)?;
        report.intrinsic.push(MethodReport::new(method.name(), th.threshold, &scored)?);
    }
    write_json(&a.out, &report)?;
    print!("{}", report.to_table());
    Ok(())
}
