use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::param::Mode;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Debug, Default)]
pub struct Relu {
    mask: Vec<bool>,
    cached: bool,
}

impl Relu {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward<T: Scalar>(&mut self, x: &Tensor<T>) -> Tensor<T> {
        self.forward_owned(x.clone())
    }

    /// Like [`forward`](Self::forward) but rectifies `x` in place.
    pub fn forward_owned<T: Scalar>(&mut self, mut x: Tensor<T>) -> Tensor<T> {
        self.mask.clear();
        self.mask.extend(x.data().iter().map(|&v| v > T::zero()));
        for (v, &m) in x.data_mut().iter_mut().zip(&self.mask) {
            if !m {
                *v = T::zero();
            }
        }
        self.cached = true;
        x
    }

    pub fn backward<T: Scalar>(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        self.backward_owned(grad.clone())
    }

    /// Like [`backward`](Self::backward) but masks `grad` in place.
    pub fn backward_owned<T: Scalar>(&mut self, mut grad: Tensor<T>) -> Result<Tensor<T>> {
        if !self.cached {
            return Err(Error::NoForwardCache("relu".into()));
        }
        if self.mask.len() != grad.len() {
            return Err(Error::shape("relu backward", &[self.mask.len()], grad.shape()));
        }
        self.cached = false;
        for (g, &m) in grad.data_mut().iter_mut().zip(&self.mask) {
            if !m {
                *g = T::zero();
            }
        }
        Ok(grad)
    }
}

#[derive(Clone, Debug)]
pub struct Tanh<T> {
    out: Option<Tensor<T>>,
}

impl<T: Scalar> Default for Tanh<T> {
    fn default() -> Self {
        Tanh { out: None }
    }
}

impl<T: Scalar> Tanh<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Tensor<T> {
        let y = x.map(|v| v.tanh());
        self.out = Some(y.clone());
        y
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self
            .out
            .take()
            .ok_or_else(|| Error::NoForwardCache("tanh".into()))?;
        if y.shape() != grad.shape() {
            return Err(Error::shape("tanh backward", y.shape(), grad.shape()));
        }
        let data = grad
            .data()
            .iter()
            .zip(y.data())
            .map(|(&g, &t)| g * (T::one() - t * t))
            .collect();
        Tensor::from_vec(grad.shape(), data)
    }
}

/// Serializable position of a dropout RNG stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RngState {
    pub seed: u64,
    /// ChaCha word position, stored as a decimal string-compatible integer.
    pub word_pos: u128,
}

/// Inverted dropout; identity in eval mode.
#[derive(Clone, Debug)]
pub struct Dropout {
    rate: f64,
    seed: u64,
    rng: ChaCha8Rng,
    mask: Option<Option<Vec<f64>>>,
}

impl Dropout {
    pub fn new(rate: f64, seed: u64) -> Self {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
        Dropout {
            rate,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            mask: None,
        }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn reseed(&mut self, seed: u64) {
        self.seed = seed;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn rng_state(&self) -> RngState {
        RngState {
            seed: self.seed,
            word_pos: self.rng.get_word_pos(),
        }
    }

    pub fn set_rng_state(&mut self, state: RngState) {
        self.reseed(state.seed);
        self.rng.set_word_pos(state.word_pos);
    }

    pub fn forward<T: Scalar>(&mut self, x: &Tensor<T>, mode: Mode) -> Tensor<T> {
        if mode == Mode::Eval || self.rate == 0.0 {
            self.mask = Some(None);
            return x.clone();
        }
        let keep = 1.0 - self.rate;
        let mask: Vec<f64> = (0..x.len())
            .map(|_| {
                if self.rng.random::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        let data = x
            .data()
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| v * T::of(m))
            .collect();
        self.mask = Some(Some(mask));
        Tensor::from_vec(x.shape(), data).expect("same shape")
    }

    pub fn backward<T: Scalar>(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        match self.mask.take() {
            None => Err(Error::NoForwardCache("dropout".into())),
            Some(None) => Ok(grad.clone()),
            Some(Some(mask)) => {
                let data = grad
                    .data()
                    .iter()
                    .zip(&mask)
                    .map(|(&g, &m)| g * T::of(m))
                    .collect();
                Tensor::from_vec(grad.shape(), data)
            }
        }
    }
}

/// Max-subtracted softmax of one row, in place.
pub fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v = *v / sum;
    }
}

/// Softmax over the last axis.
pub fn softmax<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let k = *x.shape().last().expect("rank >= 1");
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(k) {
        softmax_in_place(row);
    }
    out
}

/// Vector-Jacobian product of softmax given its output row `p`.
pub fn softmax_backward_row<T: Scalar>(p: &[T], g: &[T], out: &mut [T]) {
    let dot: T = p.iter().zip(g).map(|(&a, &b)| a * b).sum();
    for ((o, &pi), &gi) in out.iter_mut().zip(p).zip(g) {
        *o = pi * (gi - dot);
    }
}

/// Numerically stabilised log-softmax of one row.
pub fn log_softmax_row<T: Scalar>(row: &[T]) -> Vec<T> {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
    row.iter().map(|&v| v - lse).collect()
}
