//! Stride-1, zero "same" padded convolutions in the cross-correlation convention.
//!
//! Both layers share one im2col engine over three spatial axes. The first spatial
//! axis is processed slice by slice so kernel taps that only ever read padding
//! (common once pooling has shrunk that axis to 1 or 2 cells) are skipped
//! instead of multiplied by zero. Put the shortest axis first.

use rand::Rng;

use super::param::{Module, Param};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Debug)]
struct ConvCore<T> {
    weight: Param<T>,
    bias: Param<T>,
    cin: usize,
    cout: usize,
    kernel: [usize; 3],
}

impl<T: Scalar> ConvCore<T> {
    fn new<R: Rng + ?Sized>(
        name: &str,
        cin: usize,
        cout: usize,
        kernel: [usize; 3],
        weight_shape: &[usize],
        rng: &mut R,
    ) -> Self {
        let fan_in = cin * kernel.iter().product::<usize>();
        ConvCore {
            weight: Param::kaiming(format!("{name}.weight"), weight_shape, fan_in, rng),
            bias: Param::zeros(format!("{name}.bias"), &[cout]),
            cin,
            cout,
            kernel,
        }
    }

    fn taps(&self) -> usize {
        self.kernel.iter().product()
    }

    /// Offsets along the first spatial axis that stay in range for output slice `z`.
    fn valid_first(&self, z: usize, d1: usize) -> Vec<usize> {
        let h = (self.kernel[0] / 2) as isize;
        (0..self.kernel[0])
            .filter(|&o| {
                let zz = z as isize + o as isize - h;
                zz >= 0 && zz < d1 as isize
            })
            .collect()
    }

    fn weight_index(&self, co: usize, ci: usize, o1: usize, o2: usize, o3: usize) -> usize {
        let [k1, k2, k3] = self.kernel;
        (((co * self.cin + ci) * k1 + o1) * k2 + o2) * k3 + o3
    }

    /// Weight matrix `[cout, cin · |valid| · k2 · k3]` for one output slice.
    fn gather_weight(&self, valid: &[usize]) -> Vec<T> {
        let [_, k2, k3] = self.kernel;
        let w = self.weight.value.data();
        let mut out = Vec::with_capacity(self.cout * self.cin * valid.len() * k2 * k3);
        for co in 0..self.cout {
            for ci in 0..self.cin {
                for &o1 in valid {
                    for o2 in 0..k2 {
                        for o3 in 0..k3 {
                            out.push(w[self.weight_index(co, ci, o1, o2, o3)]);
                        }
                    }
                }
            }
        }
        out
    }

    fn scatter_weight_grad(&mut self, valid: &[usize], g: &[T]) {
        let [_, k2, k3] = self.kernel;
        let mut idx = 0;
        for co in 0..self.cout {
            for ci in 0..self.cin {
                for &o1 in valid {
                    for o2 in 0..k2 {
                        for o3 in 0..k3 {
                            let wi = self.weight_index(co, ci, o1, o2, o3);
                            self.weight.grad.data_mut()[wi] += g[idx];
                            idx += 1;
                        }
                    }
                }
            }
        }
    }

    /// Visits every (row, source plane, destination row range) of the column
    /// matrix for output slice `z` and samples `s0..s1`. Rows are ordered
    /// (ci, o1 ∈ valid, o2, o3), columns (sample, i, j).
    fn for_each_segment(
        &self,
        (s0, s1): (usize, usize),
        dims: [usize; 3],
        z: usize,
        valid: &[usize],
        mut f: impl FnMut(usize, usize, usize),
    ) {
        let [d1, d2, d3] = dims;
        let [k1, k2, k3] = self.kernel;
        let (h1, h2, h3) = ((k1 / 2) as isize, (k2 / 2) as isize, (k3 / 2) as isize);
        let plane = d2 * d3;
        let np = (s1 - s0) * plane;
        let vol = plane * d1;
        let mut row = 0;
        for ci in 0..self.cin {
            for &o1 in valid {
                let zz = (z as isize + o1 as isize - h1) as usize;
                for o2 in 0..k2 {
                    for o3 in 0..k3 {
                        let (jlo, jhi) = clip_range(d3, o3 as isize - h3);
                        let shift = o3 as isize - h3;
                        for s in s0..s1 {
                            let src_plane = (s * self.cin + ci) * vol + zz * plane;
                            let dst_plane = row * np + (s - s0) * plane;
                            for i in 0..d2 {
                                let ii = i as isize + o2 as isize - h2;
                                if ii < 0 || ii >= d2 as isize || jlo >= jhi {
                                    continue;
                                }
                                let src = src_plane + ((ii as usize * d3 + jlo) as isize + shift) as usize;
                                f(src, dst_plane + i * d3 + jlo, jhi - jlo);
                            }
                        }
                        row += 1;
                    }
                }
            }
        }
    }

    fn im2col(&self, x: &[T], range: (usize, usize), dims: [usize; 3], z: usize, valid: &[usize], cols: &mut Vec<T>) {
        let [_, k2, k3] = self.kernel;
        let rows = self.cin * valid.len() * k2 * k3;
        cols.clear();
        cols.resize(rows * (range.1 - range.0) * dims[1] * dims[2], T::zero());
        self.for_each_segment(range, dims, z, valid, |src, dst, len| {
            cols[dst..dst + len].copy_from_slice(&x[src..src + len]);
        });
    }

    fn col2im_add(&self, cols: &[T], dx: &mut [T], range: (usize, usize), dims: [usize; 3], z: usize, valid: &[usize]) {
        self.for_each_segment(range, dims, z, valid, |src, dst, len| {
            for (d, &c) in dx[src..src + len].iter_mut().zip(&cols[dst..dst + len]) {
                *d += c;
            }
        });
    }

    /// Sample ranges small enough for one chunk of columns to stay in cache.
    fn chunks(n: usize, plane: usize) -> impl Iterator<Item = (usize, usize)> {
        let per = (CHUNK_COLS / plane.max(1)).max(1);
        (0..n).step_by(per).map(move |s0| (s0, (s0 + per).min(n)))
    }

    fn forward(&self, x: &[T], n: usize, dims: [usize; 3]) -> Vec<T> {
        let [d1, d2, d3] = dims;
        let plane = d2 * d3;
        let vol = plane * d1;
        let mut y = vec![T::zero(); n * self.cout * vol];
        let bias = self.bias.value.data();
        let mut cols = Vec::new();
        let mut yz = Vec::new();
        for z in 0..d1 {
            let valid = self.valid_first(z, d1);
            let w = self.gather_weight(&valid);
            let r = w.len() / self.cout;
            for (s0, s1) in Self::chunks(n, plane) {
                let np = (s1 - s0) * plane;
                self.im2col(x, (s0, s1), dims, z, &valid, &mut cols);
                yz.clear();
                yz.resize(self.cout * np, T::zero());
                T::gemm(self.cout, r, np, T::one(), &w, r as isize, 1, &cols, np as isize, 1, T::zero(), &mut yz, np as isize, 1);
                for s in s0..s1 {
                    for co in 0..self.cout {
                        let src = &yz[co * np + (s - s0) * plane..][..plane];
                        let dst = &mut y[(s * self.cout + co) * vol + z * plane..][..plane];
                        for (d, &v) in dst.iter_mut().zip(src) {
                            *d = v + bias[co];
                        }
                    }
                }
            }
        }
        y
    }

    /// Accumulates weight and bias gradients. Returns the input gradient
    /// unless `input_grad` is false.
    fn backward(&mut self, x: &[T], dy: &[T], n: usize, dims: [usize; 3], input_grad: bool) -> Option<Vec<T>> {
        let [d1, d2, d3] = dims;
        let plane = d2 * d3;
        let vol = plane * d1;
        let mut dx = input_grad.then(|| vec![T::zero(); x.len()]);
        let mut cols = Vec::new();
        let mut gz = Vec::new();
        let mut dcols = Vec::new();
        for z in 0..d1 {
            let valid = self.valid_first(z, d1);
            let w = self.gather_weight(&valid);
            let r = w.len() / self.cout;
            let mut dw = vec![T::zero(); self.cout * r];
            for (s0, s1) in Self::chunks(n, plane) {
                let np = (s1 - s0) * plane;
                gz.clear();
                gz.resize(self.cout * np, T::zero());
                let db = self.bias.grad.data_mut();
                for s in s0..s1 {
                    for co in 0..self.cout {
                        let src = &dy[(s * self.cout + co) * vol + z * plane..][..plane];
                        gz[co * np + (s - s0) * plane..][..plane].copy_from_slice(src);
                        db[co] += src.iter().copied().sum::<T>();
                    }
                }
                self.im2col(x, (s0, s1), dims, z, &valid, &mut cols);
                // dW_z += G_z · colsᵀ
                T::gemm(self.cout, np, r, T::one(), &gz, np as isize, 1, &cols, 1, np as isize, T::one(), &mut dw, r as isize, 1);
                if let Some(dx) = dx.as_mut() {
                    // dcols = W_zᵀ · G_z
                    dcols.clear();
                    dcols.resize(r * np, T::zero());
                    T::gemm(r, self.cout, np, T::one(), &w, 1, r as isize, &gz, np as isize, 1, T::zero(), &mut dcols, np as isize, 1);
                    self.col2im_add(&dcols, dx, (s0, s1), dims, z, &valid);
                }
            }
            self.scatter_weight_grad(&valid, &dw);
        }
        dx
    }
}

/// Target column count of one im2col chunk.
const CHUNK_COLS: usize = 4096;

/// Output indices `j` in `0..d` for which `j + off` stays inside `0..d`.
fn clip_range(d: usize, off: isize) -> (usize, usize) {
    let lo = (-off).max(0) as usize;
    let hi = (d as isize - off).clamp(0, d as isize) as usize;
    (lo.min(hi), hi)
}

/// 1-D convolution, kernel size 3, over `[batch, channels, length]`.
#[derive(Clone, Debug)]
pub struct Conv1d<T> {
    core: ConvCore<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Conv1d<T> {
    pub fn new<R: Rng + ?Sized>(name: &str, cin: usize, cout: usize, rng: &mut R) -> Self {
        Conv1d {
            core: ConvCore::new(name, cin, cout, [1, 3, 1], &[cout, cin, 3], rng),
            input: None,
        }
    }

    pub fn weight(&mut self) -> &mut Param<T> {
        &mut self.core.weight
    }

    pub fn bias(&mut self) -> &mut Param<T> {
        &mut self.core.bias
    }

    fn dims(&self, x: &Tensor<T>) -> Result<(usize, [usize; 3])> {
        x.expect_shape(
            &format!("conv1d({})", self.core.weight.name),
            &[None, Some(self.core.cin), None],
        )?;
        Ok((x.dim(0), [1, x.dim(2), 1]))
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, dims) = self.dims(x)?;
        let y = self.core.forward(x.data(), n, dims);
        self.input = Some(x.clone());
        Tensor::from_vec(&[n, self.core.cout, dims[1]], y)
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        self.backward_inner(grad, true).map(|dx| dx.expect("input gradient requested"))
    }

    /// Parameter gradients only, for layers that read the network input.
    pub fn backward_params(&mut self, grad: &Tensor<T>) -> Result<()> {
        self.backward_inner(grad, false).map(drop)
    }

    fn backward_inner(&mut self, grad: &Tensor<T>, input_grad: bool) -> Result<Option<Tensor<T>>> {
        let x = self
            .input
            .take()
            .ok_or_else(|| Error::NoForwardCache(self.core.weight.name.clone()))?;
        let (n, dims) = self.dims(&x)?;
        grad.expect_shape("conv1d backward", &[Some(n), Some(self.core.cout), Some(dims[1])])?;
        self.core
            .backward(x.data(), grad.data(), n, dims, input_grad)
            .map(|dx| Tensor::from_vec(x.shape(), dx))
            .transpose()
    }
}

impl<T: Scalar> Module<T> for Conv1d<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.core.weight);
        f(&mut self.core.bias);
    }
}

/// 3-D convolution, kernel 3×3×3, over `[batch, channels, d1, d2, d3]`.
#[derive(Clone, Debug)]
pub struct Conv3d<T> {
    core: ConvCore<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Conv3d<T> {
    pub fn new<R: Rng + ?Sized>(name: &str, cin: usize, cout: usize, rng: &mut R) -> Self {
        Conv3d {
            core: ConvCore::new(name, cin, cout, [3, 3, 3], &[cout, cin, 3, 3, 3], rng),
            input: None,
        }
    }

    pub fn weight(&mut self) -> &mut Param<T> {
        &mut self.core.weight
    }

    fn dims(&self, x: &Tensor<T>) -> Result<(usize, [usize; 3])> {
        x.expect_shape(
            &format!("conv3d({})", self.core.weight.name),
            &[None, Some(self.core.cin), None, None, None],
        )?;
        debug_assert_eq!(self.core.taps(), 27);
        Ok((x.dim(0), [x.dim(2), x.dim(3), x.dim(4)]))
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, dims) = self.dims(x)?;
        let y = self.core.forward(x.data(), n, dims);
        self.input = Some(x.clone());
        Tensor::from_vec(&[n, self.core.cout, dims[0], dims[1], dims[2]], y)
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        self.backward_inner(grad, true).map(|dx| dx.expect("input gradient requested"))
    }

    /// Parameter gradients only, for layers that read the network input.
    pub fn backward_params(&mut self, grad: &Tensor<T>) -> Result<()> {
        self.backward_inner(grad, false).map(drop)
    }

    fn backward_inner(&mut self, grad: &Tensor<T>, input_grad: bool) -> Result<Option<Tensor<T>>> {
        let x = self
            .input
            .take()
            .ok_or_else(|| Error::NoForwardCache(self.core.weight.name.clone()))?;
        let (n, dims) = self.dims(&x)?;
        grad.expect_shape(
            "conv3d backward",
            &[Some(n), Some(self.core.cout), Some(dims[0]), Some(dims[1]), Some(dims[2])],
        )?;
        self.core
            .backward(x.data(), grad.data(), n, dims, input_grad)
            .map(|dx| Tensor::from_vec(x.shape(), dx))
            .transpose()
    }
}

impl<T: Scalar> Module<T> for Conv3d<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.core.weight);
        f(&mut self.core.bias);
    }
}
