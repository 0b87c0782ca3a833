use super::param::{Mode, Module, Param};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

const EPS: f64 = 1e-5;
const MOMENTUM: f64 = 0.1;

/// Batch normalisation over axis 1 of `[batch, channels, ...]`.
///
/// Running statistics are buffers: they are checkpointed but never touched by
/// the optimizer.
#[derive(Clone, Debug)]
pub struct BatchNorm<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    name: String,
    channels: usize,
    cache: Option<Cache<T>>,
    // normalised-input buffer kept between steps to avoid reallocating it
    spare: Vec<T>,
}

#[derive(Clone, Debug)]
struct Cache<T> {
    shape: Vec<usize>,
    xhat: Vec<T>,
    inv_std: Vec<T>,
    train: bool,
}

// Reductions accumulate in f64 over eight independent lanes.
fn lanes<T: Scalar>(x: &[T], f: impl Fn(usize, T) -> f64) -> f64 {
    let mut acc = [0.0f64; 8];
    let full = x.len() / 8 * 8;
    for (i, ch) in x[..full].chunks_exact(8).enumerate() {
        for l in 0..8 {
            acc[l] += f(i * 8 + l, ch[l]);
        }
    }
    for (i, &v) in x.iter().enumerate().skip(full) {
        acc[0] += f(i, v);
    }
    acc.iter().sum()
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        BatchNorm {
            gamma: Param::new(format!("{name}.gamma"), Tensor::full(&[channels], T::one())),
            beta: Param::zeros(format!("{name}.beta"), &[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
            name: name.to_string(),
            channels,
            cache: None,
            spare: Vec::new(),
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.forward_owned(x.clone(), mode)
    }

    /// Like [`forward`](Self::forward) but normalises `x` in place.
    pub fn forward_owned(&mut self, mut x: Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        if x.rank() < 3 || x.dim(1) != self.channels {
            let mut exp = x.shape().to_vec();
            if exp.len() > 1 {
                exp[1] = self.channels;
            }
            return Err(Error::shape(format!("batchnorm({})", self.name), &exp, x.shape()));
        }
        let n = x.dim(0);
        let c = self.channels;
        let s = x.len() / (n * c);
        let m = (n * s) as f64;
        let shape = x.shape().to_vec();
        let eps = T::of(EPS);
        let (mean, inv_std): (Vec<T>, Vec<T>) = match mode {
            Mode::Train => {
                let xd = x.data();
                let mut mean = vec![T::zero(); c];
                let mut inv = vec![T::zero(); c];
                for ch in 0..c {
                    let slices = || (0..n).map(move |b| &xd[(b * c + ch) * s..(b * c + ch + 1) * s]);
                    let mu = slices().map(|sl| lanes(sl, |_, v| v.f64())).sum::<f64>() / m;
                    let sq: f64 = slices()
                        .map(|sl| {
                            lanes(sl, |_, v| {
                                let d = v.f64() - mu;
                                d * d
                            })
                        })
                        .sum();
                    let var = sq / m;
                    mean[ch] = T::of(mu);
                    inv[ch] = T::one() / (T::of(var) + eps).sqrt();
                    let unbiased = if m > 1.0 { sq / (m - 1.0) } else { var };
                    let rm = &mut self.running_mean.data_mut()[ch];
                    *rm = T::of((1.0 - MOMENTUM) * rm.f64() + MOMENTUM * mu);
                    let rv = &mut self.running_var.data_mut()[ch];
                    *rv = T::of((1.0 - MOMENTUM) * rv.f64() + MOMENTUM * unbiased);
                }
                (mean, inv)
            }
            Mode::Eval => (
                self.running_mean.data().to_vec(),
                self.running_var
                    .data()
                    .iter()
                    .map(|&v| T::one() / (v + eps).sqrt())
                    .collect(),
            ),
        };
        let g = self.gamma.value.data();
        let bt = self.beta.value.data();
        let mut xhat = std::mem::take(&mut self.spare);
        xhat.clear();
        xhat.resize(x.len(), T::zero());
        let xd = x.data_mut();
        for b in 0..n {
            for ch in 0..c {
                let r = (b * c + ch) * s..(b * c + ch + 1) * s;
                let (mu, k, gm, bb) = (mean[ch], inv_std[ch], g[ch], bt[ch]);
                for (v, h) in xd[r.clone()].iter_mut().zip(&mut xhat[r]) {
                    *h = (*v - mu) * k;
                    *v = gm * *h + bb;
                }
            }
        }
        self.cache = Some(Cache { shape, xhat, inv_std, train: mode == Mode::Train });
        Ok(x)
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        self.backward_owned(grad.clone())
    }

    /// Like [`backward`](Self::backward) but overwrites `grad` with the input gradient.
    pub fn backward_owned(&mut self, mut grad: Tensor<T>) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::NoForwardCache(self.name.clone()))?;
        if grad.shape() != cache.shape.as_slice() {
            return Err(Error::shape("batchnorm backward", &cache.shape, grad.shape()));
        }
        let n = cache.shape[0];
        let c = self.channels;
        let s = grad.len() / (n * c);
        let m = (n * s) as f64;
        let gamma = self.gamma.value.data().to_vec();
        let xhat = &cache.xhat;
        let gd = grad.data_mut();
        for ch in 0..c {
            let range = |b: usize| (b * c + ch) * s..(b * c + ch + 1) * s;
            let mut sum_g = 0.0;
            let mut sum_gx = 0.0;
            for b in 0..n {
                let (g, h) = (&gd[range(b)], &xhat[range(b)]);
                sum_g += lanes(g, |_, v| v.f64());
                sum_gx += lanes(g, |i, v| v.f64() * h[i].f64());
            }
            self.gamma.grad.data_mut()[ch] += T::of(sum_gx);
            self.beta.grad.data_mut()[ch] += T::of(sum_g);
            let k = gamma[ch] * cache.inv_std[ch];
            let (mg, mgx) = (T::of(sum_g / m), T::of(sum_gx / m));
            for b in 0..n {
                for (g, &h) in gd[range(b)].iter_mut().zip(&xhat[range(b)]) {
                    *g = if cache.train { k * (*g - mg - h * mgx) } else { k * *g };
                }
            }
        }
        self.spare = cache.xhat;
        Ok(grad)
    }
}

impl<T: Scalar> Module<T> for BatchNorm<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        f(&format!("{}.running_mean", self.name), &mut self.running_mean);
        f(&format!("{}.running_var", self.name), &mut self.running_var);
    }
}
