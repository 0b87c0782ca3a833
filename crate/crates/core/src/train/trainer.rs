//! The epoch loop.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{check_labels, load_manifest, Dataset, Split};
use crate::error::{Error, Result};
use crate::fpenv::FlushDenormals;
use crate::heads::multitask_loss;
use crate::metrics::{accuracy, predictions};
use crate::model::MiCuNet;
use crate::nn::{Mode, Module, RngState};
use crate::optim::Adam;
use crate::tensor::Tensor;
use crate::train::checkpoint::{Checkpoint, DevMetrics};
use crate::train::config::TrainConfig;
use crate::train::schedule::Plateau;

/// Stream of the batch-shuffling generator; weights use stream 0 of the same seed.
const SHUFFLE_STREAM: u64 = 1;
/// Seed offset of the fold resplit generator.
const FOLD_SALT: u64 = 0x5f0d;

/// One line of the per-epoch log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// learning rate used during the epoch
    pub lr: f64,
    pub train_loss: f64,
    pub dev_loss: f64,
    pub dev_task_losses: [f64; 3],
    /// percent, `[oe, ce, m]`
    pub dev_accuracy: [f64; 3],
    pub improved: bool,
}

/// Passed to the step hook after the forward pass of every training batch.
pub struct StepInfo<'a> {
    pub epoch: usize,
    pub batch: usize,
    pub loss: f64,
    /// gate weights `[n, branches]` of this batch, for variants with fusion
    pub gate_weights: Option<&'a Tensor<f64>>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    pub log: Vec<EpochLog>,
    pub stopped_early: bool,
}

/// Datasets a run trains and selects on.
#[derive(Clone, Debug)]
pub struct TrainData {
    pub train: Dataset,
    pub dev: Dataset,
}

impl TrainData {
    /// Loads the train and dev splits named by `cfg`, applying its language,
    /// source exclusions and fold.
    pub fn load(cfg: &TrainConfig) -> Result<Self> {
        let train_recs = load_manifest(&cfg.train_manifest, &cfg.filter(Split::Train))?;
        let dev_recs = load_manifest(cfg.dev_manifest(), &cfg.filter(Split::Dev))?;
        check_labels(&train_recs, cfg.classes)?;
        check_labels(&dev_recs, cfg.classes)?;
        let mut train = Dataset::load(&train_recs)?;
        if let Some(f) = cfg.fold {
            let idx = fold_train_indices(train.len(), f.k, f.index, cfg.seed);
            if idx.is_empty() {
                return Err(Error::Empty(format!("fold {} of {} leaves no training records", f.index, f.k)));
            }
            train = train.subset(&idx);
        }
        let dev = Dataset::load(&dev_recs)?;
        if train.ptm_dim() != dev.ptm_dim() || train.spec_dims() != dev.spec_dims() {
            return Err(Error::shape("dev features", &[train.ptm_dim()], &[dev.ptm_dim()]));
        }
        Ok(TrainData { train, dev })
    }
}

/// Indices kept for training when fold `index` of a seeded `k`-way split of
/// `n` records is held out. Folds partition a seeded permutation into
/// contiguous blocks whose sizes differ by at most one.
pub fn fold_train_indices(n: usize, k: usize, index: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ FOLD_SALT));
    let lo = index * n / k;
    let hi = (index + 1) * n / k;
    let mut kept: Vec<usize> = perm[..lo].iter().chain(&perm[hi..]).copied().collect();
    kept.sort_unstable();
    kept
}

/// Loss and accuracies of `model` in eval mode over a whole dataset.
pub fn dev_metrics(model: &mut MiCuNet<f32>, ds: &Dataset, lambda: [f64; 3], batch: usize) -> Result<DevMetrics> {
    let _ftz = FlushDenormals::new();
    let n = ds.len();
    let mut total = 0.0;
    let mut parts = [0.0; 3];
    let mut preds: [Vec<usize>; 3] = Default::default();
    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(batch) {
        let (p, s, labels) = ds.batch(chunk)?;
        let out = model.forward(&p, &s, Mode::Eval)?;
        let (loss, task, _) = multitask_loss(&out.logits, [&labels[0], &labels[1], &labels[2]], lambda)?;
        let w = chunk.len() as f64 / n as f64;
        total += loss * w;
        for t in 0..3 {
            parts[t] += task[t] * w;
            let k = out.logits[t].dim(1);
            preds[t].extend(predictions(&out.logits[t].to_f64_vec(), k));
        }
    }
    let mut acc = [0.0; 3];
    for t in 0..3 {
        acc[t] = accuracy(&preds[t], &ds.labels[t])?;
    }
    Ok(DevMetrics { loss: total, task_losses: parts, accuracy: acc })
}

/// Trains from scratch. `hook` sees every step after its forward pass.
pub fn train(cfg: &TrainConfig, data: &TrainData, hook: &mut dyn FnMut(&StepInfo)) -> Result<TrainOutcome> {
    cfg.validate()?;
    let _ftz = FlushDenormals::new();
    let mcfg = cfg.model_config(data.train.ptm_dim(), data.train.spec_dims());
    let mut model = MiCuNet::<f32>::new(&mcfg, cfg.seed)?;
    let mut adam = Adam::<f32>::new(cfg.lr);
    let mut plateau = Plateau::new(cfg.lr, cfg.lr_factor, cfg.lr_patience, cfg.early_stop_patience);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(SHUFFLE_STREAM);
    let n = data.train.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = Vec::new();
    let mut best: Option<Checkpoint> = None;
    let mut stopped_early = false;
    let lambda = cfg.lambda;
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let lr = adam.lr;
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut train_loss = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (p, s, labels) = data.train.batch(chunk)?;
            let out = model.forward(&p, &s, Mode::Train)?;
            let (loss, _, grads) = multitask_loss(&out.logits, [&labels[0], &labels[1], &labels[2]], lambda)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch: b });
            }
            hook(&StepInfo { epoch, batch: b, loss, gate_weights: model.fusion_state().map(|s| &s.weights) });
            model.zero_grad();
            model.backward(&grads)?;
            adam.step(&mut model)?;
            train_loss += loss * chunk.len() as f64 / n as f64;
        }
        let dev = dev_metrics(&mut model, &data.dev, lambda, cfg.eval_batch_size)?;
        if !dev.loss.is_finite() {
            return Err(Error::NonFinite(format!("dev loss at epoch {epoch}")));
        }
        let d = plateau.observe(dev.loss);
        log.push(EpochLog {
            epoch,
            lr,
            train_loss,
            dev_loss: dev.loss,
            dev_task_losses: dev.task_losses,
            dev_accuracy: dev.accuracy,
            improved: d.improved,
        });
        log::info!(
            "epoch {epoch}: train {train_loss:.4} dev {:.4} acc {:.1}/{:.1}/{:.1} lr {lr:.2e}{} ({:.1}s)",
            dev.loss,
            dev.accuracy[0],
            dev.accuracy[1],
            dev.accuracy[2],
            if d.improved { " *" } else { "" },
            started.elapsed().as_secs_f64()
        );
        if d.improved {
            let state = RngState { seed: cfg.seed, word_pos: rng.get_word_pos() };
            best = Some(Checkpoint::new(cfg, model.clone(), epoch, lr, dev, state));
        }
        adam.lr = d.lr;
        if d.stop {
            stopped_early = epoch < cfg.epochs;
            break;
        }
    }
    let best = best.expect("the first epoch always improves on an infinite best loss");
    Ok(TrainOutcome { best, log, stopped_early })
}
