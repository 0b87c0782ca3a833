//! Accuracy, macro-F1, macro one-vs-rest EER and confusion matrices.
//!
//! Scores are row-major `[n, k]` probability matrices. Predictions take the
//! argmax of a row, ties going to the lowest class index. All percentages are
//! in `[0, 100]`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of the largest entry; the first one wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Argmax of every row of a `[n, k]` score matrix.
pub fn predictions(scores: &[f64], k: usize) -> Vec<usize> {
    scores.chunks(k).map(argmax).collect()
}

fn check_pair(preds: &[usize], labels: &[usize]) -> Result<()> {
    if preds.is_empty() {
        return Err(Error::Empty("no predictions to score".into()));
    }
    if preds.len() != labels.len() {
        return Err(Error::shape("metrics", &[labels.len()], &[preds.len()]));
    }
    Ok(())
}

fn check_labels(labels: &[usize], k: usize) -> Result<()> {
    match labels.iter().find(|&&l| l >= k) {
        Some(&l) => Err(Error::LabelOutOfRange { task: "metrics".into(), label: l, classes: k }),
        None => Ok(()),
    }
}

pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    check_pair(preds, labels)?;
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(100.0 * hits as f64 / preds.len() as f64)
}

/// `matrix[true][pred]` counts.
pub fn confusion_matrix(preds: &[usize], labels: &[usize], k: usize) -> Result<Vec<Vec<u64>>> {
    check_pair(preds, labels)?;
    check_labels(labels, k)?;
    check_labels(preds, k)?;
    let mut m = vec![vec![0u64; k]; k];
    for (&p, &l) in preds.iter().zip(labels) {
        m[l][p] += 1;
    }
    Ok(m)
}

/// Unweighted mean of per-class F1 over all `k` classes. A class that never
/// occurs in either truth or prediction scores 0.
pub fn macro_f1(preds: &[usize], labels: &[usize], k: usize) -> Result<f64> {
    let m = confusion_matrix(preds, labels, k)?;
    let mut total = 0.0;
    for c in 0..k {
        let tp = m[c][c] as f64;
        let support: u64 = m[c].iter().sum();
        let predicted: u64 = m.iter().map(|row| row[c]).sum();
        let denom = (support + predicted) as f64;
        if denom > 0.0 {
            total += 2.0 * tp / denom;
        }
    }
    Ok(100.0 * total / k as f64)
}

/// Equal error rate (as a fraction) of one binary problem where higher scores
/// mean "positive". `None` if either side is empty.
///
/// Thresholds are the sorted unique scores plus one above the maximum; a
/// sample is accepted when its score is at or above the threshold. The
/// crossing of FAR and FRR is interpolated linearly between the two
/// bracketing thresholds.
pub fn binary_eer(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // walking thresholds upward: everything below the threshold is rejected
    let (np, nn) = (n_pos as f64, n_neg as f64);
    let mut rejected_pos = 0usize;
    let mut rejected_neg = 0usize;
    let mut prev: Option<(f64, f64)> = None;
    let mut i = 0;
    loop {
        let far = (n_neg - rejected_neg) as f64 / nn;
        let frr = rejected_pos as f64 / np;
        if let Some(e) = crossing(prev, (far, frr)) {
            return Some(e);
        }
        prev = Some((far, frr));
        if i == order.len() {
            unreachable!("FAR reaches 0 and FRR reaches 1 above the top score");
        }
        // move past the next group of tied scores
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]].total_cmp(&s).is_eq() {
            if positive[order[i]] {
                rejected_pos += 1;
            } else {
                rejected_neg += 1;
            }
            i += 1;
        }
    }
}

fn crossing(prev: Option<(f64, f64)>, (far, frr): (f64, f64)) -> Option<f64> {
    let d = far - frr;
    if d == 0.0 {
        return Some(far);
    }
    let (pfar, pfrr) = prev?;
    let pd = pfar - pfrr;
    if pd > 0.0 && d < 0.0 {
        let a = pd / (pd - d);
        return Some(pfar + a * (far - pfar));
    }
    None
}

/// Macro one-vs-rest EER.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OvrEer {
    /// mean over scored classes, in percent
    pub eer: f64,
    /// per-class EER in percent, `None` for skipped classes
    pub per_class: Vec<Option<f64>>,
    /// classes with no positives or no negatives
    pub skipped: Vec<usize>,
}

/// Column `c` of each row is the one-vs-rest score for class `c`.
pub fn macro_ovr_eer(scores: &[f64], k: usize, labels: &[usize]) -> Result<OvrEer> {
    if labels.is_empty() {
        return Err(Error::Empty("no scores to evaluate".into()));
    }
    if scores.len() != labels.len() * k {
        return Err(Error::shape("macro_ovr_eer", &[labels.len(), k], &[scores.len() / k.max(1), k]));
    }
    check_labels(labels, k)?;
    let mut per_class = Vec::with_capacity(k);
    let mut skipped = Vec::new();
    for c in 0..k {
        let col: Vec<f64> = scores.chunks(k).map(|r| r[c]).collect();
        let pos: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        let e = binary_eer(&col, &pos).map(|e| 100.0 * e);
        if e.is_none() {
            skipped.push(c);
        }
        per_class.push(e);
    }
    let scored: Vec<f64> = per_class.iter().flatten().copied().collect();
    if scored.is_empty() {
        return Err(Error::Empty("every class lacks positives or negatives".into()));
    }
    if !skipped.is_empty() {
        log::info!("EER skipped classes {skipped:?} (no positives or no negatives)");
    }
    Ok(OvrEer { eer: scored.iter().sum::<f64>() / scored.len() as f64, per_class, skipped })
}

/// Metrics of one task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub eer: f64,
    pub eer_skipped_classes: Vec<usize>,
    /// `confusion[true][pred]`
    pub confusion: Vec<Vec<u64>>,
}

impl TaskReport {
    pub fn from_scores(scores: &[f64], k: usize, labels: &[usize]) -> Result<Self> {
        let preds = predictions(scores, k);
        let eer = macro_ovr_eer(scores, k, labels)?;
        Ok(TaskReport {
            accuracy: accuracy(&preds, labels)?,
            macro_f1: macro_f1(&preds, labels, k)?,
            eer: eer.eer,
            eer_skipped_classes: eer.skipped,
            confusion: confusion_matrix(&preds, labels, k)?,
        })
    }
}

/// Evaluation of a checkpoint on one filtered manifest. Serialises with a
/// fixed key order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: Option<String>,
    /// languages the checkpoint was trained on
    pub train_lang: Option<String>,
    /// language filter of the evaluated records
    pub test_lang: Option<String>,
    /// e.g. `(E-Tr)(C-Te)` for cross-lingual runs
    pub tag: Option<String>,
    pub variant: String,
    pub seed: u64,
    pub n_samples: usize,
    pub tasks: BTreeMap<String, TaskReport>,
}

impl EvalReport {
    /// Mean EER over the reported tasks.
    pub fn mean_eer(&self) -> f64 {
        self.tasks.values().map(|t| t.eer).sum::<f64>() / self.tasks.len().max(1) as f64
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
