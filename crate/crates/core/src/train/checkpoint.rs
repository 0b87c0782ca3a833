//! Checkpoints: a directory holding `meta.json` and one tensor container per
//! parameter or buffer under `tensors/`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{read_tensor, write_tensor};
use crate::error::{Error, Result};
use crate::model::{MiCuNet, ModelConfig};
use crate::nn::{Module, RngState};
use crate::tensor::Tensor;
use crate::train::config::TrainConfig;

pub const FORMAT_VERSION: u32 = 1;
const META: &str = "meta.json";
const TENSORS: &str = "tensors";

/// Dev-set figures of the checkpointed epoch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DevMetrics {
    pub loss: f64,
    /// unweighted cross-entropy per task
    pub task_losses: [f64; 3],
    /// percent, per task
    pub accuracy: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub buffer: bool,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub train: TrainConfig,
    pub model: ModelConfig,
    /// 1-based epoch the weights were taken from
    pub epoch: usize,
    pub lr: f64,
    pub dev: DevMetrics,
    /// batch-shuffling stream after that epoch
    pub shuffle_rng: RngState,
    pub dropout_rng: Vec<RngState>,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub model: MiCuNet<f32>,
}

/// Parameter and buffer tensors in visiting order.
fn tensors(model: &mut MiCuNet<f32>) -> Vec<(TensorEntry, Tensor<f32>)> {
    let mut out = Vec::new();
    model.visit_params(&mut |p| {
        out.push((TensorEntry { name: p.name.clone(), buffer: false, shape: p.value.shape().to_vec() }, p.value.clone()))
    });
    model.visit_buffers(&mut |name, b| {
        out.push((TensorEntry { name: name.to_string(), buffer: true, shape: b.shape().to_vec() }, b.clone()))
    });
    out
}

fn tensor_file(dir: &Path, name: &str) -> PathBuf {
    dir.join(TENSORS).join(format!("{name}.mcn"))
}

impl Checkpoint {
    pub fn new(
        train: &TrainConfig,
        mut model: MiCuNet<f32>,
        epoch: usize,
        lr: f64,
        dev: DevMetrics,
        shuffle_rng: RngState,
    ) -> Self {
        let entries = tensors(&mut model).into_iter().map(|(e, _)| e).collect();
        let meta = CheckpointMeta {
            format_version: FORMAT_VERSION,
            train: train.clone(),
            model: model.config().clone(),
            epoch,
            lr,
            dev,
            shuffle_rng,
            dropout_rng: model.dropout_states(),
            tensors: entries,
        };
        Checkpoint { meta, model }
    }

    /// Writes into a sibling temporary directory first and renames it into
    /// place, so a failed write leaves any previous checkpoint at `dir` intact.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let name = dir.file_name().ok_or_else(|| Error::Checkpoint(format!("bad checkpoint path {}", dir.display())))?;
        let tmp = dir.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
        let res = self.write_into(&tmp).and_then(|()| {
            if dir.exists() {
                fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            fs::rename(&tmp, dir).map_err(|e| Error::io(dir, e))
        });
        if res.is_err() {
            let _ = fs::remove_dir_all(&tmp);
        }
        res
    }

    fn write_into(&self, tmp: &Path) -> Result<()> {
        if tmp.exists() {
            fs::remove_dir_all(tmp).map_err(|e| Error::io(tmp, e))?;
        }
        let tdir = tmp.join(TENSORS);
        fs::create_dir_all(&tdir).map_err(|e| Error::io(&tdir, e))?;
        let mut model = self.model.clone();
        for (entry, t) in tensors(&mut model) {
            write_tensor(&tensor_file(tmp, &entry.name), &t)?;
        }
        let mut json = serde_json::to_string_pretty(&self.meta)?;
        json.push('\n');
        let p = tmp.join(META);
        fs::write(&p, json).map_err(|e| Error::io(&p, e))
    }

    /// Loads a checkpoint directory, or the `checkpoint/` directory inside a
    /// training output directory.
    pub fn load(path: &Path) -> Result<Self> {
        let dir = if !path.join(META).is_file() && path.join("checkpoint").join(META).is_file() {
            path.join("checkpoint")
        } else {
            path.to_path_buf()
        };
        let mp = dir.join(META);
        let text = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
        let meta: CheckpointMeta = serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", mp.display())))?;
        if meta.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {} (expected {FORMAT_VERSION})",
                meta.format_version
            )));
        }
        let mut model = MiCuNet::<f32>::new(&meta.model, 0)?;
        let expected: Vec<TensorEntry> = tensors(&mut model).into_iter().map(|(e, _)| e).collect();
        if expected != meta.tensors {
            return Err(Error::Checkpoint("tensor list does not match the configured architecture".into()));
        }
        let mut failure = None;
        let mut load = |name: &str, slot: &mut Tensor<f32>| {
            if failure.is_some() {
                return;
            }
            match read_tensor(&tensor_file(&dir, name)) {
                Ok(t) if t.shape() == slot.shape() => *slot = t,
                Ok(t) => failure = Some(Error::shape(format!("checkpoint tensor {name}"), slot.shape(), t.shape())),
                Err(e) => failure = Some(e),
            }
        };
        model.visit_params(&mut |p| load(&p.name, &mut p.value));
        model.visit_buffers(&mut |name, b| load(name, b));
        if let Some(e) = failure {
            return Err(e);
        }
        model.set_dropout_states(&meta.dropout_rng)?;
        Ok(Checkpoint { meta, model })
    }
}
