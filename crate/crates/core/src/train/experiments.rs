//! Experiment drivers: a single training run with its artifacts, the ablation
//! suite and leave-two-out source exclusion.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Filter, Split};
use crate::error::{Error, Result};
use crate::fusion::Variant;
use crate::heads::TASKS;
use crate::metrics::EvalReport;
use crate::nn::Module;
use crate::train::config::TrainConfig;
use crate::train::evaluate::{evaluate, EvalOptions};
use crate::train::trainer::{train, EpochLog, TrainData, TrainOutcome};

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn log_jsonl(log: &[EpochLog]) -> Result<String> {
    let mut s = String::new();
    for e in log {
        s.push_str(&serde_json::to_string(e)?);
        s.push('\n');
    }
    Ok(s)
}

/// Test-split evaluation options under the config's language and exclusions.
pub fn test_options(cfg: &TrainConfig) -> EvalOptions {
    EvalOptions { filter: cfg.filter(Split::Test), tasks: vec![] }
}

/// Trains, then writes `config.json`, `train_log.jsonl`, the best checkpoint
/// under `checkpoint/` and its `test_report.json` into `out`.
pub fn run_training(cfg: &TrainConfig, out: &Path) -> Result<(TrainOutcome, EvalReport)> {
    cfg.validate()?;
    let data = TrainData::load(cfg)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write(&out.join("config.json"), &cfg.to_json()?)?;
    let outcome = train(cfg, &data, &mut |_| {})?;
    write(&out.join("train_log.jsonl"), &log_jsonl(&outcome.log)?)?;
    outcome.best.save(&out.join("checkpoint"))?;
    let report = evaluate(&outcome.best, cfg.test_manifest(), &test_options(cfg))?;
    write(&out.join("test_report.json"), &report.to_json()?)?;
    Ok((outcome, report))
}

/// One variant of the ablation table, averaged over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub params: usize,
    /// EER (%) per task `[oe, ce, m]`, mean over seeds
    pub eer: [f64; 3],
    pub mean_eer: f64,
    pub reports: Vec<EvalReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, v: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == v.as_str())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<12} {:>10} {:>8} {:>8} {:>8} {:>8}", "variant", "params", "OE", "CE", "M", "mean");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<12} {:>10} {:>8.3} {:>8.3} {:>8.3} {:>8.3}",
                r.variant, r.params, r.eer[0], r.eer[1], r.eer[2], r.mean_eer
            );
        }
        s
    }
}

/// Trains every variant on the same data for each seed, with identical
/// budgets, and reports test EER.
pub fn run_ablation_suite(cfg: &TrainConfig, seeds: &[u64]) -> Result<AblationTable> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("ablation needs at least one seed".into()));
    }
    cfg.validate()?;
    let data = TrainData::load(cfg)?;
    let mut rows = Vec::new();
    for v in Variant::ALL {
        let mut reports = Vec::new();
        let mut params = 0;
        for &seed in seeds {
            let c = TrainConfig { variant: v, seed, ..cfg.clone() };
            let mut outcome = train(&c, &data, &mut |_| {})?;
            params = outcome.best.model.param_count();
            let r = evaluate(&outcome.best, c.test_manifest(), &test_options(&c))?;
            log::info!("ablation {v} seed {seed}: mean EER {:.3}", r.mean_eer());
            reports.push(r);
        }
        let mut eer = [0.0; 3];
        for (t, e) in eer.iter_mut().enumerate() {
            *e = reports.iter().map(|r| r.tasks[TASKS[t]].eer).sum::<f64>() / reports.len() as f64;
        }
        rows.push(AblationRow { variant: v.as_str().into(), params, eer, mean_eer: eer.iter().sum::<f64>() / 3.0, reports });
    }
    Ok(AblationTable { seeds: seeds.to_vec(), rows })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LotoReport {
    pub holdout: [usize; 2],
    pub train_records: usize,
    /// test records of the held-out sources, emotion tasks only
    pub heldout: EvalReport,
    /// test records of the remaining sources, emotion tasks only
    pub in_distribution: EvalReport,
}

pub fn check_holdout(holdout: &[usize], sources: usize) -> Result<[usize; 2]> {
    let bad = |m: String| Err(Error::InvalidArgument(m));
    let [a, b] = holdout else {
        return bad(format!("holdout must name exactly two sources, got {holdout:?}"));
    };
    if a == b {
        return bad(format!("holdout sources must differ, got {a} twice"));
    }
    if let Some(m) = [a, b].into_iter().find(|&&m| m >= sources) {
        return bad(format!("holdout source {m} out of range for {sources} sources"));
    }
    if sources <= 2 {
        return bad("holdout covers every source".into());
    }
    Ok([*a, *b])
}

/// Trains without the two held-out sources and evaluates the emotion tasks
/// on test records of those sources and of the rest.
pub fn run_loto(cfg: &TrainConfig, holdout: &[usize]) -> Result<LotoReport> {
    let holdout = check_holdout(holdout, cfg.classes[2])?;
    let mut c = cfg.clone();
    c.exclude_sources.extend(holdout);
    c.validate()?;
    let data = TrainData::load(&c)?;
    if data.train.labels[2].iter().chain(&data.dev.labels[2]).any(|m| holdout.contains(m)) {
        return Err(Error::InvalidArgument("held-out sources leaked into training data".into()));
    }
    let outcome = train(&c, &data, &mut |_| {})?;
    let held: BTreeSet<usize> = holdout.into();
    let heldout = EvalOptions {
        filter: Filter { lang: c.lang, split: Some(Split::Test), exclude_sources: BTreeSet::new(), only_sources: Some(held) },
        tasks: vec![0, 1],
    };
    let mut inside = test_options(&c);
    inside.tasks = vec![0, 1];
    Ok(LotoReport {
        holdout,
        train_records: data.train.len(),
        heldout: evaluate(&outcome.best, c.test_manifest(), &heldout)?,
        in_distribution: evaluate(&outcome.best, c.test_manifest(), &inside)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn holdout_validation() {
        assert_eq!(check_holdout(&[5, 6], 7).unwrap(), [5, 6]);
        assert!(check_holdout(&[5], 7).is_err());
        assert!(check_holdout(&[5, 6, 1], 7).is_err());
        assert!(check_holdout(&[5, 5], 7).is_err());
        assert!(check_holdout(&[5, 7], 7).is_err());
        assert!(check_holdout(&[0, 1], 2).is_err());
    }
}
