use rand::Rng;

use super::param::{Module, Param};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Affine map `y = x Wᵀ + b` over the last axis; leading axes are treated as rows.
#[derive(Clone, Debug)]
pub struct Dense<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    in_dim: usize,
    out_dim: usize,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Dense<T> {
    pub fn new<R: Rng + ?Sized>(name: &str, in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        Dense {
            weight: Param::kaiming(format!("{name}.weight"), &[out_dim, in_dim], in_dim, rng),
            bias: Param::zeros(format!("{name}.bias"), &[out_dim]),
            in_dim,
            out_dim,
            input: None,
        }
    }

    /// Both weight and bias start at zero.
    pub fn zeroed(name: &str, in_dim: usize, out_dim: usize) -> Self {
        Dense {
            weight: Param::zeros(format!("{name}.weight"), &[out_dim, in_dim]),
            bias: Param::zeros(format!("{name}.bias"), &[out_dim]),
            in_dim,
            out_dim,
            input: None,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    fn check(&self, x: &Tensor<T>) -> Result<usize> {
        let last = *x.shape().last().unwrap_or(&0);
        if last != self.in_dim {
            let mut expected = x.shape().to_vec();
            if let Some(l) = expected.last_mut() {
                *l = self.in_dim;
            }
            return Err(Error::shape(
                format!("dense({})", self.weight.name),
                &expected,
                x.shape(),
            ));
        }
        Ok(x.len() / self.in_dim)
    }

    /// Forward without caching, for inference paths.
    pub fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let rows = self.check(x)?;
        let mut out_shape = x.shape().to_vec();
        *out_shape.last_mut().expect("rank >= 1") = self.out_dim;
        let mut y = vec![T::zero(); rows * self.out_dim];
        for r in 0..rows {
            y[r * self.out_dim..(r + 1) * self.out_dim].copy_from_slice(self.bias.value.data());
        }
        let w = self.weight.value.data();
        // y (rows×out) += x (rows×in) · Wᵀ (in×out)
        T::gemm(
            rows,
            self.in_dim,
            self.out_dim,
            T::one(),
            x.data(),
            self.in_dim as isize,
            1,
            w,
            1,
            self.in_dim as isize,
            T::one(),
            &mut y,
            self.out_dim as isize,
            1,
        );
        Tensor::from_vec(&out_shape, y)
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.apply(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .input
            .take()
            .ok_or_else(|| Error::NoForwardCache(self.weight.name.clone()))?;
        let rows = x.len() / self.in_dim;
        if grad.len() != rows * self.out_dim {
            let mut expected = x.shape().to_vec();
            *expected.last_mut().expect("rank >= 1") = self.out_dim;
            return Err(Error::shape("dense backward", &expected, grad.shape()));
        }
        let g = grad.data();
        // dW (out×in) += Gᵀ (out×rows) · X (rows×in)
        T::gemm(
            self.out_dim,
            rows,
            self.in_dim,
            T::one(),
            g,
            1,
            self.out_dim as isize,
            x.data(),
            self.in_dim as isize,
            1,
            T::one(),
            self.weight.grad.data_mut(),
            self.in_dim as isize,
            1,
        );
        let db = self.bias.grad.data_mut();
        for r in 0..rows {
            for (d, &v) in db.iter_mut().zip(&g[r * self.out_dim..(r + 1) * self.out_dim]) {
                *d += v;
            }
        }
        // dX (rows×in) = G (rows×out) · W (out×in)
        let mut dx = vec![T::zero(); x.len()];
        T::gemm(
            rows,
            self.out_dim,
            self.in_dim,
            T::one(),
            g,
            self.out_dim as isize,
            1,
            self.weight.value.data(),
            self.in_dim as isize,
            1,
            T::zero(),
            &mut dx,
            self.in_dim as isize,
            1,
        );
        Tensor::from_vec(x.shape(), dx)
    }
}

impl<T: Scalar> Module<T> for Dense<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}
