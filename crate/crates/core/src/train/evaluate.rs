//! Checkpoint evaluation and embedding export.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::data::{check_labels, load_manifest, write_tensor, Dataset, Filter, Lang};
use crate::error::{Error, Result};
use crate::fpenv::FlushDenormals;
use crate::heads::TASKS;
use crate::metrics::{EvalReport, TaskReport};
use crate::model::MiCuNet;
use crate::nn::{softmax, Mode};
use crate::tensor::Tensor;
use crate::train::checkpoint::Checkpoint;

/// Eval-mode outputs over a dataset, row-aligned with it.
#[derive(Clone, Debug)]
pub struct Inference {
    /// class probabilities `[n, k]` per task
    pub probs: [Tensor<f64>; 3],
    /// fused embeddings `[n, d_m]`
    pub z_fused: Tensor<f32>,
}

pub fn infer(model: &mut MiCuNet<f32>, ds: &Dataset, batch: usize) -> Result<Inference> {
    let _ftz = FlushDenormals::new();
    let n = ds.len();
    let classes = model.config().classes;
    let d_m = model.config().d_m;
    let mut probs: [Vec<f64>; 3] = Default::default();
    let mut z = Vec::with_capacity(n * d_m);
    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(batch.max(1)) {
        let (p, s, _) = ds.batch(chunk)?;
        let out = model.forward(&p, &s, Mode::Eval)?;
        for t in 0..3 {
            probs[t].extend(softmax(&out.logits[t].cast::<f64>()).into_data());
        }
        z.extend_from_slice(out.z_fused.data());
    }
    let [a, b, c] = probs;
    Ok(Inference {
        probs: [Tensor::from_vec(&[n, classes[0]], a)?, Tensor::from_vec(&[n, classes[1]], b)?, Tensor::from_vec(&[n, classes[2]], c)?],
        z_fused: Tensor::from_vec(&[n, d_m], z)?,
    })
}

/// Which records of a manifest to evaluate.
#[derive(Clone, Debug, Default)]
pub struct EvalOptions {
    pub filter: Filter,
    /// tasks to report, by index into `[oe, ce, m]`; all when empty
    pub tasks: Vec<usize>,
}

fn lang_label(lang: Option<Lang>) -> String {
    lang.map_or_else(|| "E+C".to_string(), |l| l.to_string())
}

/// Loads the filtered records, rejecting labels the checkpoint's heads
/// cannot represent.
fn load_eval_set(ck: &Checkpoint, manifest: &Path, opts: &EvalOptions) -> Result<Dataset> {
    let recs = load_manifest(manifest, &opts.filter)?;
    check_labels(&recs, ck.meta.model.classes)?;
    let ds = Dataset::load(&recs)?;
    let m = &ck.meta.model;
    if ds.ptm_dim() != m.ptm_dim {
        return Err(Error::shape("PTM features vs checkpoint", &[m.ptm_dim], &[ds.ptm_dim()]));
    }
    if ds.spec_dims() != m.spec_dims {
        return Err(Error::shape("spectrograms vs checkpoint", &m.spec_dims, &ds.spec_dims()));
    }
    Ok(ds)
}

/// Metrics of `inf` against the dataset labels.
pub fn report(ck: &Checkpoint, ds: &Dataset, inf: &Inference, opts: &EvalOptions) -> Result<EvalReport> {
    let tasks: Vec<usize> = if opts.tasks.is_empty() { vec![0, 1, 2] } else { opts.tasks.clone() };
    let mut out = EvalReport {
        split: opts.filter.split.map(|s| s.to_string()),
        train_lang: Some(lang_label(ck.meta.train.lang)),
        test_lang: Some(lang_label(opts.filter.lang)),
        tag: None,
        variant: ck.meta.model.variant.as_str().to_string(),
        seed: ck.meta.train.seed,
        n_samples: ds.len(),
        tasks: Default::default(),
    };
    if let (Some(tr), Some(te)) = (ck.meta.train.lang, opts.filter.lang) {
        out.tag = Some(format!("({tr}-Tr)({te}-Te)"));
    }
    for t in tasks {
        let k = ck.meta.model.classes[t];
        out.tasks.insert(TASKS[t].to_string(), TaskReport::from_scores(inf.probs[t].data(), k, &ds.labels[t])?);
    }
    Ok(out)
}

/// Eval-mode metrics of a checkpoint on the filtered records of `manifest`.
pub fn evaluate(ck: &Checkpoint, manifest: &Path, opts: &EvalOptions) -> Result<EvalReport> {
    let ds = load_eval_set(ck, manifest, opts)?;
    let mut model = ck.model.clone();
    let inf = infer(&mut model, &ds, ck.meta.train.eval_batch_size)?;
    report(ck, &ds, &inf, opts)
}

#[derive(Serialize)]
struct LabelRow<'a> {
    row: usize,
    id: &'a str,
    lang: Lang,
    oe: usize,
    ce: usize,
    m: usize,
}

/// Writes the fused embeddings `[n, d_m]` to `out` and a row-aligned JSON
/// lines label file next to it (`<out>.labels.jsonl`). Returns the embeddings.
pub fn export_embeddings(ck: &Checkpoint, manifest: &Path, filter: &Filter, out: &Path) -> Result<Tensor<f32>> {
    let opts = EvalOptions { filter: filter.clone(), tasks: vec![] };
    let ds = load_eval_set(ck, manifest, &opts)?;
    let mut model = ck.model.clone();
    let inf = infer(&mut model, &ds, ck.meta.train.eval_batch_size)?;
    write_tensor(out, &inf.z_fused)?;
    let mut text = String::new();
    for i in 0..ds.len() {
        let row = LabelRow {
            row: i,
            id: &ds.ids[i],
            lang: ds.langs[i],
            oe: ds.labels[0][i],
            ce: ds.labels[1][i],
            m: ds.labels[2][i],
        };
        text.push_str(&serde_json::to_string(&row)?);
        text.push('\n');
    }
    let side = labels_path(out);
    fs::write(&side, text).map_err(|e| Error::io(&side, e))?;
    Ok(inf.z_fused)
}

pub fn labels_path(out: &Path) -> std::path::PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".labels.jsonl");
    s.into()
}
