use crate::error::{Error, Result};
use crate::nn::Module;
use crate::tensor::{Scalar, Tensor};

/// Bias-corrected Adam.
///
/// Moment buffers are created on the first step and matched to parameters by
/// visiting order; the name is kept alongside so a mismatch is caught instead
/// of silently mixing moments.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    moments: Vec<(String, Tensor<T>, Tensor<T>)>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update using the gradients currently stored in `module`.
    ///
    /// A non-finite gradient anywhere rejects the whole step before any
    /// parameter is touched.
    pub fn step<M: Module<T> + ?Sized>(&mut self, module: &mut M) -> Result<()> {
        if self.lr <= 0.0 || !self.lr.is_finite() {
            return Err(Error::InvalidArgument(format!("learning rate must be > 0, got {}", self.lr)));
        }
        let mut bad = None;
        let mut index = 0;
        let mut names = Vec::new();
        module.visit_params(&mut |p| {
            if bad.is_none() && !p.grad.is_finite() {
                bad = Some(p.name.clone());
            }
            names.push((p.name.clone(), p.value.shape().to_vec()));
        });
        if let Some(name) = bad {
            return Err(Error::NanGradient(name));
        }
        if self.moments.is_empty() {
            self.moments = names
                .iter()
                .map(|(n, s)| (n.clone(), Tensor::zeros(s), Tensor::zeros(s)))
                .collect();
        } else if self.moments.len() != names.len()
            || self.moments.iter().zip(&names).any(|(m, (n, _))| &m.0 != n)
        {
            return Err(Error::InvalidArgument(
                "parameter set changed between optimizer steps".into(),
            ));
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);
        let (lr, eps) = (self.lr, self.eps);
        let moments = &mut self.moments;
        module.visit_params(&mut |p| {
            let (_, m, v) = &mut moments[index];
            index += 1;
            let (pm, pv) = (m.data_mut(), v.data_mut());
            let g = p.grad.data();
            for (i, w) in p.value.data_mut().iter_mut().enumerate() {
                let gi = g[i].f64();
                let mi = b1 * pm[i].f64() + (1.0 - b1) * gi;
                let vi = b2 * pv[i].f64() + (1.0 - b2) * gi * gi;
                pm[i] = T::of(mi);
                pv[i] = T::of(vi);
                let upd = lr * (mi / bc1) / ((vi / bc2).sqrt() + eps);
                *w = T::of(w.f64() - upd);
            }
        });
        Ok(())
    }
}
