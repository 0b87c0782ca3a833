use crate::error::{Error, Result};

/// `|x - y|₂`. Rejects vectors of different length.
pub fn euc_dist(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape("euc_dist", &[x.len()], &[y.len()]));
    }
    Ok(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}
