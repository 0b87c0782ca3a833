//! Synthetic stand-in corpus with the label structure of an emotion-conversion
//! traceback dataset.
//!
//! PTM vectors: class means sit on a two-level tree. The source `m` picks a
//! branch, an offset along the all-ones direction; the original emotion `oe`
//! picks a leaf, `oe + 1` times a fixed ±1 alternating pattern. Leaves differ
//! in magnitude, not sign, since max pooling over neighbouring coordinates
//! cannot tell a pattern from its negation. Gaussian noise of scale `sigma` is
//! added per coordinate.
//!
//! Spectrograms: a sinusoid along the time axis with a random phase whose
//! frequency (cycles per clip) indexes the current emotion `ce`, scaled by a
//! per-language envelope over frequency bands, plus the same noise.
//!
//! Labels are drawn independently and uniformly. Each (language, split) pair
//! uses its own RNG stream.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::container::write_tensor;
use crate::data::manifest::{write_manifest, Lang, Record, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Source branch order along the all-ones axis. Interleaved so that no
/// source, including the usual held-out pair 5 and 6, sits at an extreme.
const SOURCE_RANK: [usize; 7] = [0, 2, 4, 6, 1, 3, 5];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    pub langs: Vec<Lang>,
    pub seed: u64,
    pub ptm_dim: usize,
    pub spec_dims: [usize; 3],
    /// `[oe, ce, m]`
    pub classes: [usize; 3],
    /// spacing of source branches along the all-ones direction
    pub branch_step: f64,
    /// spacing of emotion leaves along the alternating pattern
    pub leaf_step: f64,
    /// time-axis cycles per clip for each current-emotion class
    pub ce_cycles: Vec<f64>,
    pub spec_amplitude: f64,
    pub sigma: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_train: 2000,
            n_dev: 500,
            n_test: 500,
            langs: vec![Lang::E, Lang::C],
            seed: 42,
            ptm_dim: 768,
            spec_dims: [40, 64, 4],
            classes: [5, 5, 7],
            branch_step: 1.0,
            leaf_step: 1.0,
            ce_cycles: vec![2.0, 4.0, 7.0, 11.0, 16.0],
            spec_amplitude: 1.0,
            sigma: 0.5,
        }
    }
}

impl SynthConfig {
    /// `n` training samples per language with dev and test a quarter of that.
    pub fn with_train_count(n: usize, seed: u64) -> Self {
        SynthConfig { n_train: n, n_dev: (n / 4).max(1), n_test: (n / 4).max(1), seed, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_train == 0 || self.n_dev == 0 || self.n_test == 0 {
            return bad("split sizes must be positive".into());
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return bad(format!("sigma must be finite and non-negative, got {}", self.sigma));
        }
        if self.langs.is_empty() {
            return bad("at least one language is required".into());
        }
        if self.ptm_dim == 0 || self.spec_dims.contains(&0) {
            return bad("feature dims must be positive".into());
        }
        if self.classes.iter().any(|&k| k < 2) {
            return bad("every task needs at least 2 classes".into());
        }
        if self.classes[2] > SOURCE_RANK.len() {
            return bad(format!("at most {} sources are supported", SOURCE_RANK.len()));
        }
        if self.ce_cycles.len() != self.classes[1] {
            return bad(format!("ce_cycles needs {} entries, got {}", self.classes[1], self.ce_cycles.len()));
        }
        let half = self.spec_dims[1] as f64 / 2.0;
        if self.ce_cycles.iter().any(|&c| !(c > 0.0 && c < half)) {
            return bad(format!("ce_cycles must lie in (0, {half}) for {} frames", self.spec_dims[1]));
        }
        Ok(())
    }

    fn split_size(&self, split: Split) -> usize {
        match split {
            Split::Train => self.n_train,
            Split::Dev => self.n_dev,
            Split::Test => self.n_test,
        }
    }

    /// Noise-free PTM mean of class `(m, oe)`.
    pub fn ptm_mean(&self, m: usize, oe: usize) -> Vec<f64> {
        let branch = self.branch_step * (SOURCE_RANK[m] as f64 - (self.classes[2] - 1) as f64 / 2.0);
        let leaf = self.leaf_step * (oe + 1) as f64;
        (0..self.ptm_dim).map(|i| branch + if i % 2 == 0 { leaf } else { -leaf }).collect()
    }

    fn envelope(&self, lang: Lang, f: usize) -> f64 {
        let x = f as f64 / (self.spec_dims[0].max(2) - 1) as f64;
        match lang {
            Lang::E => 1.0 - 0.5 * x,
            Lang::C => 0.5 + 0.5 * x,
        }
    }
}

/// One generated sample.
pub struct Sample {
    pub ptm: Vec<f32>,
    pub spec: Vec<f32>,
    /// `[oe, ce, m]`
    pub labels: [usize; 3],
}

fn stream(cfg: &SynthConfig, lang: Lang, split: Split) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let l = match lang {
        Lang::E => 0,
        Lang::C => 1,
    };
    let s = match split {
        Split::Train => 0,
        Split::Dev => 1,
        Split::Test => 2,
    };
    rng.set_stream(l * 3 + s + 1);
    rng
}

fn sample<R: Rng>(cfg: &SynthConfig, lang: Lang, rng: &mut R) -> Sample {
    let [k_oe, k_ce, k_m] = cfg.classes;
    let labels = [rng.random_range(0..k_oe), rng.random_range(0..k_ce), rng.random_range(0..k_m)];
    let [oe, ce, m] = labels;
    let noise = |rng: &mut R| cfg.sigma * rng.sample::<f64, _>(StandardNormal);
    let ptm = cfg.ptm_mean(m, oe).into_iter().map(|mu| (mu + noise(rng)) as f32).collect();
    let [nf, nt, nb] = cfg.spec_dims;
    let phase = rng.random_range(0.0..2.0 * PI);
    let w = 2.0 * PI * cfg.ce_cycles[ce] / nt as f64;
    let mut spec = Vec::with_capacity(nf * nt * nb);
    for f in 0..nf {
        let env = cfg.spec_amplitude * cfg.envelope(lang, f);
        for t in 0..nt {
            let v = env * (w * t as f64 + phase).sin();
            for _ in 0..nb {
                spec.push((v + noise(rng)) as f32);
            }
        }
    }
    Sample { ptm, spec, labels }
}

/// All samples of one (language, split) pair, in generation order.
pub fn generate_split(cfg: &SynthConfig, lang: Lang, split: Split) -> Vec<Sample> {
    let mut rng = stream(cfg, lang, split);
    (0..cfg.split_size(split)).map(|_| sample(cfg, lang, &mut rng)).collect()
}

/// Accuracies of oracle classifiers that know the generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleBaselines {
    /// nearest class mean over all `(m, oe)` leaves, read out as `oe`
    pub oe_nearest_mean: f64,
    /// the same nearest leaf, read out as `m`
    pub m_nearest_mean: f64,
    /// strongest of the candidate frequencies in the band-averaged time series
    pub ce_matched_filter: f64,
}

/// Scores the oracles on `samples` (percent).
pub fn oracle_baselines(cfg: &SynthConfig, samples: &[Sample]) -> OracleBaselines {
    let [k_oe, _, k_m] = cfg.classes;
    let means: Vec<(usize, usize, Vec<f64>)> =
        (0..k_m).flat_map(|m| (0..k_oe).map(move |oe| (m, oe))).map(|(m, oe)| (m, oe, cfg.ptm_mean(m, oe))).collect();
    let [nf, nt, nb] = cfg.spec_dims;
    let mut hits = [0usize; 3];
    for s in samples {
        let (m, oe, _) = means
            .iter()
            .min_by(|a, b| dist2(&a.2, &s.ptm).total_cmp(&dist2(&b.2, &s.ptm)))
            .expect("at least one class");
        hits[0] += (*oe == s.labels[0]) as usize;
        hits[2] += (*m == s.labels[2]) as usize;
        let series: Vec<f64> = (0..nt)
            .map(|t| (0..nf).flat_map(|f| (0..nb).map(move |b| (f * nt + t) * nb + b)).map(|i| s.spec[i] as f64).sum())
            .collect();
        let power = |cycles: f64| {
            let w = 2.0 * PI * cycles / nt as f64;
            let (re, im) = series
                .iter()
                .enumerate()
                .fold((0.0, 0.0), |(re, im), (t, &x)| (re + x * (w * t as f64).cos(), im + x * (w * t as f64).sin()));
            re * re + im * im
        };
        let ce = (0..cfg.ce_cycles.len())
            .max_by(|&a, &b| power(cfg.ce_cycles[a]).total_cmp(&power(cfg.ce_cycles[b])))
            .expect("at least one class");
        hits[1] += (ce == s.labels[1]) as usize;
    }
    let pct = |h: usize| 100.0 * h as f64 / samples.len().max(1) as f64;
    OracleBaselines { oe_nearest_mean: pct(hits[0]), m_nearest_mean: pct(hits[2]), ce_matched_filter: pct(hits[1]) }
}

fn dist2(a: &[f64], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, &y)| (x - y as f64).powi(2)).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthReport {
    pub config: SynthConfig,
    pub n_records: usize,
    /// oracle accuracies on each language's test split
    pub test_oracles: Vec<(Lang, OracleBaselines)>,
}

/// Writes containers under `out/ptm` and `out/spec`, `out/manifest.jsonl`
/// and `out/synth_report.json`. Returns the manifest path.
pub fn synth_generate(cfg: &SynthConfig, out: &Path) -> Result<(PathBuf, SynthReport)> {
    cfg.validate()?;
    for sub in ["ptm", "spec"] {
        let d = out.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let [nf, nt, nb] = cfg.spec_dims;
    let mut records = Vec::new();
    let mut oracles = Vec::new();
    for &lang in &cfg.langs {
        for split in [Split::Train, Split::Dev, Split::Test] {
            let samples = generate_split(cfg, lang, split);
            for (i, s) in samples.iter().enumerate() {
                let id = format!("{lang}-{split}-{i:05}");
                let ptm_rel = PathBuf::from("ptm").join(format!("{id}.mcn"));
                let spec_rel = PathBuf::from("spec").join(format!("{id}.mcn"));
                write_tensor(&out.join(&ptm_rel), &Tensor::from_vec(&[cfg.ptm_dim], s.ptm.clone())?)?;
                write_tensor(&out.join(&spec_rel), &Tensor::from_vec(&[nf, nt, nb], s.spec.clone())?)?;
                let [oe, ce, m] = s.labels;
                records.push(Record { id, ptm_path: ptm_rel, spec_path: spec_rel, oe, ce, m, lang, split });
            }
            if split == Split::Test {
                oracles.push((lang, oracle_baselines(cfg, &samples)));
            }
        }
    }
    let manifest = out.join("manifest.jsonl");
    write_manifest(&manifest, &records)?;
    let report = SynthReport { config: cfg.clone(), n_records: records.len(), test_oracles: oracles };
    let rp = out.join("synth_report.json");
    fs::write(&rp, serde_json::to_string_pretty(&report)?).map_err(|e| Error::io(&rp, e))?;
    Ok((manifest, report))
}
