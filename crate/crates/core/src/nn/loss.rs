use super::activation::log_softmax_row;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Mean cross-entropy of `logits [batch, k]` against integer labels, computed
/// through log-softmax. Returns the loss and `d loss / d logits` scaled by `weight`.
pub fn cross_entropy<T: Scalar>(
    task: &str,
    logits: &Tensor<T>,
    labels: &[usize],
    weight: f64,
) -> Result<(f64, Tensor<T>)> {
    logits.expect_shape(&format!("cross_entropy({task})"), &[Some(labels.len()), None])?;
    let k = logits.dim(1);
    let n = labels.len();
    let mut loss = 0.0;
    let mut grad = vec![T::zero(); n * k];
    let scale = T::of(weight / n as f64);
    for (i, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(Error::LabelOutOfRange {
                task: task.to_string(),
                label: y,
                classes: k,
            });
        }
        let lp = log_softmax_row(logits.row(i));
        loss -= lp[y].f64();
        for (j, &l) in lp.iter().enumerate() {
            let p = l.exp();
            let target = if j == y { T::one() } else { T::zero() };
            grad[i * k + j] = (p - target) * scale;
        }
    }
    Ok((weight * loss / n as f64, Tensor::from_vec(logits.shape(), grad)?))
}
