use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{Filter, Lang, Split};
use crate::error::{Error, Result};
use crate::fusion::Variant;
use crate::model::ModelConfig;

/// Training run description, stored as JSON.
///
/// Manifest paths in a config file are resolved against the file's directory.
/// Feature dimensions are read from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub dropout: f64,
    /// task weights `[oe, ce, m]`
    pub lambda: [f64; 3],
    /// multiplier applied to the learning rate on a dev-loss plateau
    pub lr_factor: f64,
    /// non-improving epochs before the learning rate is cut
    pub lr_patience: usize,
    /// non-improving epochs after the best one before training stops
    pub early_stop_patience: usize,
    pub seed: u64,
    pub variant: Variant,
    /// head cardinalities `[oe, ce, m]`
    pub classes: [usize; 3],
    pub d_m: usize,
    pub train_manifest: PathBuf,
    /// defaults to the training manifest
    pub dev_manifest: Option<PathBuf>,
    /// defaults to the training manifest
    pub test_manifest: Option<PathBuf>,
    /// language used for training and model selection
    pub lang: Option<Lang>,
    /// sources removed from training and dev data
    pub exclude_sources: BTreeSet<usize>,
    /// train on all folds but `fold.index` of a seeded `fold.k`-way resplit
    pub fold: Option<Fold>,
    /// batch size for evaluation passes
    pub eval_batch_size: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fold {
    pub k: usize,
    pub index: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            lr: 1e-3,
            batch_size: 32,
            dropout: 0.3,
            lambda: [1.0; 3],
            lr_factor: 0.5,
            lr_patience: 3,
            early_stop_patience: 5,
            seed: 0,
            variant: Variant::Full,
            classes: [5, 5, 7],
            d_m: 128,
            train_manifest: PathBuf::new(),
            dev_manifest: None,
            test_manifest: None,
            lang: None,
            exclude_sources: BTreeSet::new(),
            fold: None,
            eval_batch_size: 64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 || self.batch_size == 0 || self.eval_batch_size == 0 {
            return bad("epochs and batch sizes must be at least 1".into());
        }
        if self.lr_patience == 0 || self.early_stop_patience == 0 {
            return bad("patience values must be at least 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.lr_factor > 0.0 && self.lr_factor <= 1.0) {
            return bad(format!("lr_factor must be in (0, 1], got {}", self.lr_factor));
        }
        if self.lambda.iter().any(|&l| !(l >= 0.0 && l.is_finite())) || self.lambda.iter().all(|&l| l == 0.0) {
            return bad(format!("lambda must be non-negative with at least one positive weight, got {:?}", self.lambda));
        }
        if let Some(&m) = self.exclude_sources.iter().find(|&&m| m >= self.classes[2]) {
            return bad(format!("excluded source {m} is out of range for {} sources", self.classes[2]));
        }
        if self.exclude_sources.len() >= self.classes[2] {
            return bad("cannot exclude every source".into());
        }
        if let Some(f) = self.fold {
            if f.k < 2 || f.index >= f.k {
                return bad(format!("fold index {} of {} is invalid", f.index, f.k));
            }
        }
        if self.train_manifest.as_os_str().is_empty() {
            return bad("train_manifest is required".into());
        }
        self.model_config(1, [1, 1, 1]).validate()
    }

    pub fn model_config(&self, ptm_dim: usize, spec_dims: [usize; 3]) -> ModelConfig {
        ModelConfig { ptm_dim, spec_dims, d_m: self.d_m, classes: self.classes, dropout: self.dropout, variant: self.variant }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Reads a config file, resolving manifest paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.train_manifest);
        cfg.dev_manifest.as_mut().map(fix);
        cfg.test_manifest.as_mut().map(fix);
        Ok(cfg)
    }

    pub fn dev_manifest(&self) -> &Path {
        self.dev_manifest.as_deref().unwrap_or(&self.train_manifest)
    }

    pub fn test_manifest(&self) -> &Path {
        self.test_manifest.as_deref().unwrap_or(&self.train_manifest)
    }

    /// Filter for the given split under this config's language and source
    /// exclusions.
    pub fn filter(&self, split: Split) -> Filter {
        Filter { lang: self.lang, split: Some(split), exclude_sources: self.exclude_sources.clone(), only_sources: None }
    }
}
