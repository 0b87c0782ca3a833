//! The three task heads (original emotion, current emotion, manipulation
//! source) and the weighted multitask cross-entropy.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{cross_entropy, softmax, Dense, Dropout, Mode, Module, Param, Relu, RngState};
use crate::tensor::{Scalar, Tensor};

pub const TASKS: [&str; 3] = ["oe", "ce", "m"];
pub const HEAD_HIDDEN: usize = 128;

/// `dense(d→128) + ReLU + dropout → dense(128→K)`.
#[derive(Clone, Debug)]
pub struct Head<T> {
    pub hidden: Dense<T>,
    pub out: Dense<T>,
    relu: Relu,
    dropout: Dropout,
}

impl<T: Scalar> Head<T> {
    fn new<R: Rng + ?Sized>(name: &str, d_in: usize, k: usize, dropout: f64, rng: &mut R) -> Self {
        let seed = rng.random();
        Head {
            hidden: Dense::new(&format!("{name}.hidden"), d_in, HEAD_HIDDEN, rng),
            out: Dense::new(&format!("{name}.out"), HEAD_HIDDEN, k, rng),
            relu: Relu::new(),
            dropout: Dropout::new(dropout, seed),
        }
    }

    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let h = self.relu.forward(&self.hidden.forward(x)?);
        self.out.forward(&self.dropout.forward(&h, mode))
    }

    fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.dropout.backward(&self.out.backward(g)?)?;
        self.hidden.backward(&self.relu.backward(&g)?)
    }
}

impl<T: Scalar> Module<T> for Head<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.hidden.visit_params(f);
        self.out.visit_params(f);
    }
}

/// Three independent heads reading the same fused embedding.
#[derive(Clone, Debug)]
pub struct Heads<T> {
    pub heads: Vec<Head<T>>,
}

impl<T: Scalar> Heads<T> {
    pub fn new<R: Rng + ?Sized>(d_in: usize, classes: [usize; 3], dropout: f64, rng: &mut R) -> Result<Self> {
        if let Some(i) = classes.iter().position(|&k| k < 2) {
            return Err(Error::InvalidArgument(format!(
                "task {} needs at least 2 classes, got {}",
                TASKS[i], classes[i]
            )));
        }
        let heads = TASKS
            .iter()
            .zip(classes)
            .map(|(t, k)| Head::new(&format!("heads.{t}"), d_in, k, dropout, rng))
            .collect();
        Ok(Heads { heads })
    }

    pub fn classes(&self) -> [usize; 3] {
        [0, 1, 2].map(|i| self.heads[i].out.out_dim())
    }

    /// Logits for each task.
    pub fn forward(&mut self, z: &Tensor<T>, mode: Mode) -> Result<Vec<Tensor<T>>> {
        self.heads.iter_mut().map(|h| h.forward(z, mode)).collect()
    }

    /// Probability vectors for each task.
    pub fn probs(&mut self, z: &Tensor<T>, mode: Mode) -> Result<Vec<Tensor<T>>> {
        Ok(self.forward(z, mode)?.iter().map(softmax).collect())
    }

    /// Sums the input gradients of all heads. A `None` entry skips that head.
    pub fn backward(&mut self, grads: &[Option<Tensor<T>>]) -> Result<Tensor<T>> {
        let mut total: Option<Tensor<T>> = None;
        for (h, g) in self.heads.iter_mut().zip(grads) {
            let Some(g) = g else { continue };
            let dx = h.backward(g)?;
            match total.as_mut() {
                Some(t) => t.add_assign(&dx)?,
                None => total = Some(dx),
            }
        }
        total.ok_or_else(|| Error::Empty("no head gradients".into()))
    }

    pub fn dropout_states(&self) -> Vec<RngState> {
        self.heads.iter().map(|h| h.dropout.rng_state()).collect()
    }

    pub fn set_dropout_states(&mut self, states: &[RngState]) -> Result<()> {
        if states.len() != self.heads.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} dropout states, found {}",
                self.heads.len(),
                states.len()
            )));
        }
        for (h, s) in self.heads.iter_mut().zip(states) {
            h.dropout.set_rng_state(*s);
        }
        Ok(())
    }
}

impl<T: Scalar> Module<T> for Heads<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        for h in &mut self.heads {
            h.visit_params(f);
        }
    }
}

/// Weighted sum of per-task mean cross-entropies.
///
/// Returns the total, the unweighted per-task losses, and the logit gradients
/// (`None` for tasks whose weight is zero).
pub fn multitask_loss<T: Scalar>(
    logits: &[Tensor<T>],
    labels: [&[usize]; 3],
    lambda: [f64; 3],
) -> Result<(f64, [f64; 3], Vec<Option<Tensor<T>>>)> {
    if logits.len() != 3 {
        return Err(Error::shape("multitask_loss", &[3], &[logits.len()]));
    }
    let mut total = 0.0;
    let mut parts = [0.0; 3];
    let mut grads = Vec::with_capacity(3);
    for i in 0..3 {
        let (loss, g) = cross_entropy(TASKS[i], &logits[i], labels[i], lambda[i])?;
        parts[i] = if lambda[i] != 0.0 { loss / lambda[i] } else { cross_entropy(TASKS[i], &logits[i], labels[i], 1.0)?.0 };
        total += loss;
        grads.push((lambda[i] != 0.0).then_some(g));
    }
    Ok((total, parts, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn heads() -> Heads<f64> {
        Heads::new(8, [5, 5, 7], 0.3, &mut ChaCha8Rng::seed_from_u64(3)).unwrap()
    }

    #[test]
    fn default_output_lengths_and_simplex() {
        let mut h = heads();
        let z = Tensor::from_vec(&[2, 8], (0..16).map(|i| i as f64 / 8.0 - 1.0).collect()).unwrap();
        let p = h.probs(&z, Mode::Eval).unwrap();
        let lens: Vec<usize> = p.iter().map(|t| t.dim(1)).collect();
        assert_eq!(lens, vec![5, 5, 7]);
        for t in &p {
            for i in 0..2 {
                assert!((t.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn heads_are_independent() {
        let mut h = heads();
        let z = Tensor::from_vec(&[1, 8], vec![0.3; 8]).unwrap();
        let before = h.probs(&z, Mode::Eval).unwrap();
        h.heads[0].out.weight.value.data_mut()[0] += 1.0;
        h.heads[0].hidden.bias.value.data_mut()[2] -= 0.5;
        let after = h.probs(&z, Mode::Eval).unwrap();
        assert_ne!(before[0].data(), after[0].data());
        assert_eq!(before[1].data(), after[1].data());
        assert_eq!(before[2].data(), after[2].data());
    }

    #[test]
    fn loss_examples() {
        let logits = vec![
            Tensor::<f64>::zeros(&[2, 5]),
            Tensor::zeros(&[2, 5]),
            Tensor::zeros(&[2, 7]),
        ];
        let (total, parts, _) = multitask_loss(&logits, [&[0, 1], &[2, 3], &[4, 6]], [1.0; 3]).unwrap();
        assert!((parts[0] - 5f64.ln()).abs() < 1e-12);
        assert!((parts[1] - 1.6094).abs() < 1e-4);
        assert!((total - (2.0 * 5f64.ln() + 7f64.ln())).abs() < 1e-12);

        let (oe_only, _, g) = multitask_loss(&logits, [&[0, 1], &[2, 3], &[4, 6]], [1.0, 0.0, 0.0]).unwrap();
        assert!((oe_only - 5f64.ln()).abs() < 1e-12);
        assert!(g[1].is_none() && g[2].is_none());

        let mut sharp = Tensor::<f64>::zeros(&[1, 5]);
        sharp.data_mut()[2] = 60.0;
        let mut sharp7 = Tensor::<f64>::zeros(&[1, 7]);
        sharp7.data_mut()[6] = 60.0;
        let (l, _, _) = multitask_loss(&[sharp.clone(), sharp, sharp7], [&[2], &[2], &[6]], [1.0; 3]).unwrap();
        assert!(l < 1e-20);
    }

    #[test]
    fn out_of_range_label_names_the_task() {
        let logits = vec![Tensor::<f64>::zeros(&[1, 5]), Tensor::zeros(&[1, 5]), Tensor::zeros(&[1, 7])];
        let err = multitask_loss(&logits, [&[0], &[0], &[7]], [1.0; 3]).unwrap_err();
        assert!(matches!(err, Error::LabelOutOfRange { ref task, .. } if task == "m"));
    }

    #[test]
    fn too_few_classes_rejected() {
        assert!(Heads::<f64>::new(8, [5, 1, 7], 0.3, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }
}
