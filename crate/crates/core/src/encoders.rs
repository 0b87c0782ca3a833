//! Modality encoders, cross-modal alignment and the single-modality CNN
//! baseline.
//!
//! The pretrained-model embedding is read as a 1-channel sequence over its own
//! dimension; the spectrogram volume `[F, T, B]` goes through three 3-D conv
//! blocks and is then turned into a sequence over its time axis.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{
    BatchNorm, Attention, Conv1d, Conv3d, Dense, Dropout, MaxPool, Mode, Module, Param, Relu,
    pooled_shape,
};
use crate::tensor::{Scalar, Tensor};

/// Width of every encoder output and of the attention blocks.
pub const WIDTH: usize = 128;
const SPEC_CHANNELS: [usize; 3] = [32, 64, 128];
const SPEC_MIN: [usize; 3] = [8, 8, 1];

/// Conv stack for pretrained-model embeddings: two conv1d(k=3) layers with
/// 64 and 128 filters, each followed by ReLU and pool-by-2.
#[derive(Clone, Debug)]
pub struct PtmCnn<T> {
    pub conv1: Conv1d<T>,
    pub conv2: Conv1d<T>,
    relu1: Relu,
    relu2: Relu,
    pool1: MaxPool,
    pool2: MaxPool,
    in_dim: usize,
    padded: usize,
    warned: bool,
}

impl<T: Scalar> PtmCnn<T> {
    pub fn new<R: Rng + ?Sized>(name: &str, in_dim: usize, rng: &mut R) -> Result<Self> {
        if in_dim == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
        }
        Ok(PtmCnn {
            conv1: Conv1d::new(&format!("{name}.conv1"), 1, 64, rng),
            conv2: Conv1d::new(&format!("{name}.conv2"), 64, WIDTH, rng),
            relu1: Relu::new(),
            relu2: Relu::new(),
            pool1: MaxPool::new(),
            pool2: MaxPool::new(),
            in_dim,
            padded: in_dim.div_ceil(4) * 4,
            warned: false,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    /// Number of frames produced for one embedding.
    pub fn seq_len(&self) -> usize {
        self.padded / 4
    }

    /// `[N, D]` to channel-major maps `[N, 128, D/4]`.
    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.expect_shape("ptm encoder", &[None, Some(self.in_dim)])?;
        let n = x.dim(0);
        let x = if self.padded != self.in_dim {
            if !self.warned {
                log::warn!(
                    "embedding dimension {} is not a multiple of 4; right-padding to {}",
                    self.in_dim,
                    self.padded
                );
                self.warned = true;
            }
            let mut data = vec![T::zero(); n * self.padded];
            for i in 0..n {
                data[i * self.padded..i * self.padded + self.in_dim].copy_from_slice(x.row(i));
            }
            Tensor::from_vec(&[n, 1, self.padded], data)?
        } else {
            x.clone().reshape(&[n, 1, self.padded])?
        };
        let h = self.conv1.forward(&x)?;
        let h = self.pool1.forward(&self.relu1.forward(&h))?;
        let h = self.conv2.forward(&h)?;
        self.pool2.forward(&self.relu2.forward(&h))
    }

    /// Parameter gradients only; skips the input gradient of the first layer.
    pub fn backward_params(&mut self, grad: &Tensor<T>) -> Result<()> {
        let g = self.backward_hidden(grad)?;
        self.conv1.backward_params(&g)
    }

    fn backward_hidden(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.relu2.backward(&self.pool2.backward(grad)?)?;
        let g = self.conv2.backward(&g)?;
        self.relu1.backward(&self.pool1.backward(&g)?)
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.backward_hidden(grad)?;
        let g = self.conv1.backward(&g)?;
        let n = g.dim(0);
        if self.padded == self.in_dim {
            return g.reshape(&[n, self.in_dim]);
        }
        let mut out = Vec::with_capacity(n * self.in_dim);
        for i in 0..n {
            out.extend_from_slice(&g.data()[i * self.padded..i * self.padded + self.in_dim]);
        }
        Tensor::from_vec(&[n, self.in_dim], out)
    }
}

impl<T: Scalar> Module<T> for PtmCnn<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.conv1.visit_params(f);
        self.conv2.visit_params(f);
    }
}

/// PTM branch of the fusion model: [`PtmCnn`] read as a frame sequence
/// `[N, D/4, 128]`.
#[derive(Clone, Debug)]
pub struct PtmEncoder<T> {
    pub cnn: PtmCnn<T>,
}

impl<T: Scalar> PtmEncoder<T> {
    pub fn new<R: Rng + ?Sized>(name: &str, in_dim: usize, rng: &mut R) -> Result<Self> {
        Ok(PtmEncoder { cnn: PtmCnn::new(name, in_dim, rng)? })
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.cnn.forward(x)?.transpose12())
    }

    /// Frame sequence and its temporal average.
    pub fn encode(&mut self, x: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let seq = self.forward(x)?;
        let pooled = mean_over_seq(&seq);
        Ok((seq, pooled))
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        self.cnn.backward(&grad.transpose12())
    }

    pub fn backward_params(&mut self, grad: &Tensor<T>) -> Result<()> {
        self.cnn.backward_params(&grad.transpose12())
    }
}

impl<T: Scalar> Module<T> for PtmEncoder<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.cnn.visit_params(f);
    }
}

#[derive(Clone, Debug)]
struct SpecBlock<T> {
    conv: Conv3d<T>,
    bn: BatchNorm<T>,
    relu: Relu,
    pool: MaxPool,
}

/// Conv stack for spectrogram volumes: three blocks of
/// conv3d(3×3×3) + batch-norm + ReLU + max-pool with 32, 64, 128 channels.
#[derive(Clone, Debug)]
pub struct SpecCnn<T> {
    blocks: Vec<SpecBlock<T>>,
    in_dims: [usize; 3],
    padded: [usize; 3],
    warned: bool,
}

impl<T: Scalar> SpecCnn<T> {
    pub fn new<R: Rng + ?Sized>(name: &str, dims: [usize; 3], rng: &mut R) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidArgument(format!("spectrogram dims must be positive, got {dims:?}")));
        }
        let mut cin = 1;
        let blocks = SPEC_CHANNELS
            .iter()
            .enumerate()
            .map(|(i, &cout)| {
                let b = SpecBlock {
                    conv: Conv3d::new(&format!("{name}.block{i}.conv"), cin, cout, rng),
                    bn: BatchNorm::new(&format!("{name}.block{i}.bn"), cout),
                    relu: Relu::new(),
                    pool: MaxPool::new(),
                };
                cin = cout;
                b
            })
            .collect();
        let padded = [0, 1, 2].map(|i| dims[i].max(SPEC_MIN[i]));
        Ok(SpecCnn { blocks, in_dims: dims, padded, warned: false })
    }

    pub fn in_dims(&self) -> [usize; 3] {
        self.in_dims
    }

    /// Spatial dims after each block, starting from the (padded) input.
    pub fn block_dims(&self) -> Vec<[usize; 3]> {
        let mut d = self.padded;
        (0..self.blocks.len())
            .map(|_| {
                let s = pooled_shape(&[1, 1, d[0], d[1], d[2]]);
                d = [s[2], s[3], s[4]];
                d
            })
            .collect()
    }

    /// `(F', T', B')` of the final feature maps.
    pub fn out_dims(&self) -> [usize; 3] {
        *self.block_dims().last().expect("three blocks")
    }

    /// `[N, F, T, B]` to the band-major `[N, 1, B, F, T]` the convolutions
    /// work in, zero-padded up to the minimum dims.
    fn pad(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let n = x.dim(0);
        let [f, t, b] = self.in_dims;
        if self.padded != self.in_dims && !self.warned {
            log::warn!("spectrogram dims {:?} smaller than the conv stack needs; zero-padding to {:?}", self.in_dims, self.padded);
            self.warned = true;
        }
        let [pf, pt, pb] = self.padded;
        let mut out = vec![T::zero(); n * pf * pt * pb];
        let xd = x.data();
        for s in 0..n {
            for i in 0..f {
                for j in 0..t {
                    for k in 0..b {
                        out[((s * pb + k) * pf + i) * pt + j] = xd[((s * f + i) * t + j) * b + k];
                    }
                }
            }
        }
        Tensor::from_vec(&[n, 1, pb, pf, pt], out)
    }

    fn unpad(&self, g: &Tensor<T>) -> Result<Tensor<T>> {
        let n = g.dim(0);
        let [f, t, b] = self.in_dims;
        let [pf, pt, pb] = self.padded;
        let gd = g.data();
        let mut out = vec![T::zero(); n * f * t * b];
        for s in 0..n {
            for i in 0..f {
                for j in 0..t {
                    for k in 0..b {
                        out[((s * f + i) * t + j) * b + k] = gd[((s * pb + k) * pf + i) * pt + j];
                    }
                }
            }
        }
        Tensor::from_vec(&[n, f, t, b], out)
    }

    /// `[N, F, T, B]` to band-major maps `[N, 128, B', F', T']`.
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let [f, t, b] = self.in_dims;
        x.expect_shape("spectrogram encoder", &[None, Some(f), Some(t), Some(b)])?;
        let mut h = self.pad(x)?;
        for blk in &mut self.blocks {
            let y = blk.conv.forward(&h)?;
            let y = blk.bn.forward_owned(y, mode)?;
            let y = blk.relu.forward_owned(y);
            h = blk.pool.forward(&y)?;
        }
        Ok(h)
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.backward_impl(grad, true)?.expect("input gradient requested");
        self.unpad(&g)
    }

    /// Parameter gradients only; skips the input gradient of the first block.
    pub fn backward_params(&mut self, grad: &Tensor<T>) -> Result<()> {
        self.backward_impl(grad, false).map(drop)
    }

    fn backward_impl(&mut self, grad: &Tensor<T>, input_grad: bool) -> Result<Option<Tensor<T>>> {
        let mut g = grad.clone();
        for (i, blk) in self.blocks.iter_mut().enumerate().rev() {
            let y = blk.pool.backward(&g)?;
            let y = blk.relu.backward_owned(y)?;
            let y = blk.bn.backward_owned(y)?;
            if i == 0 && !input_grad {
                blk.conv.backward_params(&y)?;
                return Ok(None);
            }
            g = blk.conv.backward(&y)?;
        }
        Ok(Some(g))
    }
}

impl<T: Scalar> Module<T> for SpecCnn<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        for b in &mut self.blocks {
            b.conv.visit_params(f);
            b.bn.visit_params(f);
        }
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        for b in &mut self.blocks {
            b.bn.visit_buffers(f);
        }
    }
}

/// Spectrogram branch of the fusion model: [`SpecCnn`] maps rearranged into
/// one frame per remaining time step, each frame's `128·F'·B'` cells densely
/// projected to 128.
#[derive(Clone, Debug)]
pub struct SpecEncoder<T> {
    pub cnn: SpecCnn<T>,
    pub proj: Dense<T>,
    map_shape: Option<Vec<usize>>,
}

fn maps_to_frames<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (n, c, b, f, t) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3), x.dim(4));
    let xd = x.data();
    let cell = c * b * f;
    let mut out = vec![T::zero(); x.len()];
    for s in 0..n {
        for (k, src) in xd[s * cell * t..(s + 1) * cell * t].chunks(t).enumerate() {
            for (ti, &v) in src.iter().enumerate() {
                out[(s * t + ti) * cell + k] = v;
            }
        }
    }
    Tensor::from_vec(&[n, t, cell], out).expect("same element count")
}

fn frames_to_maps<T: Scalar>(g: &Tensor<T>, shape: &[usize]) -> Tensor<T> {
    let (n, t) = (shape[0], shape[4]);
    let cell = shape[1] * shape[2] * shape[3];
    let gd = g.data();
    let mut out = vec![T::zero(); g.len()];
    for s in 0..n {
        for (k, dst) in out[s * cell * t..(s + 1) * cell * t].chunks_mut(t).enumerate() {
            for (ti, d) in dst.iter_mut().enumerate() {
                *d = gd[(s * t + ti) * cell + k];
            }
        }
    }
    Tensor::from_vec(shape, out).expect("same element count")
}

impl<T: Scalar> SpecEncoder<T> {
    pub fn new<R: Rng + ?Sized>(name: &str, dims: [usize; 3], rng: &mut R) -> Result<Self> {
        let cnn = SpecCnn::new(name, dims, rng)?;
        let [f, _, b] = cnn.out_dims();
        let proj = Dense::new(&format!("{name}.frame_proj"), WIDTH * f * b, WIDTH, rng);
        Ok(SpecEncoder { cnn, proj, map_shape: None })
    }

    /// `[N, F, T, B]` to a frame sequence `[N, T', 128]`.
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        Ok(self.encode(x, mode)?.0)
    }

    /// Frame sequence and the global average of the final feature maps.
    pub fn encode(&mut self, x: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, Tensor<T>)> {
        let maps = self.cnn.forward(x, mode)?;
        let (n, c) = (maps.dim(0), maps.dim(1));
        let cells = maps.len() / (n * c);
        let inv = T::one() / T::of(cells as f64);
        let pooled: Vec<T> = maps
            .data()
            .chunks(cells)
            .map(|ch| ch.iter().copied().sum::<T>() * inv)
            .collect();
        self.map_shape = Some(maps.shape().to_vec());
        let seq = self.proj.forward(&maps_to_frames(&maps))?;
        Ok((seq, Tensor::from_vec(&[n, c], pooled)?))
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self
            .map_shape
            .take()
            .ok_or_else(|| Error::NoForwardCache("spec encoder".into()))?;
        let g = self.proj.backward(grad)?;
        self.cnn.backward(&frames_to_maps(&g, &shape))
    }

    pub fn backward_params(&mut self, grad: &Tensor<T>) -> Result<()> {
        let shape = self
            .map_shape
            .take()
            .ok_or_else(|| Error::NoForwardCache("spec encoder".into()))?;
        let g = self.proj.backward(grad)?;
        self.cnn.backward_params(&frames_to_maps(&g, &shape))
    }
}

impl<T: Scalar> Module<T> for SpecEncoder<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.cnn.visit_params(f);
        self.proj.visit_params(f);
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        self.cnn.visit_buffers(f);
    }
}

/// Average over the sequence axis: `[N, L, C]` to `[N, C]`.
pub fn mean_over_seq<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (n, l, c) = (x.dim(0), x.dim(1), x.dim(2));
    let mut out = vec![T::zero(); n * c];
    let inv = T::one() / T::of(l as f64);
    for s in 0..n {
        for t in 0..l {
            let row = &x.data()[(s * l + t) * c..(s * l + t + 1) * c];
            for (o, &v) in out[s * c..(s + 1) * c].iter_mut().zip(row) {
                *o += v;
            }
        }
    }
    out.iter_mut().for_each(|v| *v *= inv);
    Tensor::from_vec(&[n, c], out).expect("shape")
}

fn mean_over_seq_backward<T: Scalar>(g: &Tensor<T>, l: usize) -> Tensor<T> {
    let (n, c) = (g.dim(0), g.dim(1));
    let inv = T::one() / T::of(l as f64);
    let mut out = Vec::with_capacity(n * l * c);
    for s in 0..n {
        for _ in 0..l {
            out.extend(g.row(s).iter().map(|&v| v * inv));
        }
    }
    Tensor::from_vec(&[n, l, c], out).expect("shape")
}

/// Self-attention on each modality, then bidirectional cross-attention, then
/// temporal average pooling. All attention blocks are residual.
#[derive(Clone, Debug)]
pub struct CrossModal<T> {
    pub self_p: Attention<T>,
    pub self_s: Attention<T>,
    /// queries from the PTM sequence, keys/values from the spectrogram
    pub cross_ps: Attention<T>,
    /// queries from the spectrogram, keys/values from the PTM sequence
    pub cross_sp: Attention<T>,
    lens: Option<(usize, usize)>,
}

impl<T: Scalar> CrossModal<T> {
    pub fn new<R: Rng + ?Sized>(name: &str, rng: &mut R) -> Self {
        CrossModal {
            self_p: Attention::new(&format!("{name}.self_p"), WIDTH, rng),
            self_s: Attention::new(&format!("{name}.self_s"), WIDTH, rng),
            cross_ps: Attention::new(&format!("{name}.cross_ps"), WIDTH, rng),
            cross_sp: Attention::new(&format!("{name}.cross_sp"), WIDTH, rng),
            lens: None,
        }
    }

    /// Returns the attended, pooled `(p, s)` vectors, each `[N, 128]`.
    pub fn forward(&mut self, p_seq: &Tensor<T>, s_seq: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let p1 = self.self_p.forward(p_seq, p_seq)?;
        let s1 = self.self_s.forward(s_seq, s_seq)?;
        let p2 = self.cross_ps.forward(&p1, &s1)?;
        let s2 = self.cross_sp.forward(&s1, &p1)?;
        self.lens = Some((p_seq.dim(1), s_seq.dim(1)));
        Ok((mean_over_seq(&p2), mean_over_seq(&s2)))
    }

    /// Returns gradients for the two input sequences.
    pub fn backward(&mut self, dp: &Tensor<T>, ds: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let (lp, ls) = self
            .lens
            .take()
            .ok_or_else(|| Error::NoForwardCache("cross-modal alignment".into()))?;
        let dp2 = mean_over_seq_backward(dp, lp);
        let ds2 = mean_over_seq_backward(ds, ls);
        let (mut dp1, mut ds1) = self.cross_ps.backward(&dp2)?;
        let (ds1_q, dp1_kv) = self.cross_sp.backward(&ds2)?;
        dp1.add_assign(&dp1_kv)?;
        ds1.add_assign(&ds1_q)?;
        let (mut dpq, dpkv) = self.self_p.backward(&dp1)?;
        dpq.add_assign(&dpkv)?;
        let (mut dsq, dskv) = self.self_s.backward(&ds1)?;
        dsq.add_assign(&dskv)?;
        Ok((dpq, dsq))
    }
}

impl<T: Scalar> Module<T> for CrossModal<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.self_p.visit_params(f);
        self.self_s.visit_params(f);
        self.cross_ps.visit_params(f);
        self.cross_sp.visit_params(f);
    }
}

/// Joint embedding `z0 = [p, s]`, `[N, a]` and `[N, b]` to `[N, a + b]`.
pub fn make_joint<T: Scalar>(p: &Tensor<T>, s: &Tensor<T>) -> Result<Tensor<T>> {
    p.expect_shape("make_joint p", &[None, None])?;
    s.expect_shape("make_joint s", &[Some(p.dim(0)), None])?;
    let (n, a, b) = (p.dim(0), p.dim(1), s.dim(1));
    let mut out = Vec::with_capacity(n * (a + b));
    for i in 0..n {
        out.extend_from_slice(p.row(i));
        out.extend_from_slice(s.row(i));
    }
    Tensor::from_vec(&[n, a + b], out)
}

/// Inverse of [`make_joint`]: splits `[N, a + b]` after column `a`.
pub fn split_joint<T: Scalar>(z: &Tensor<T>, a: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let (n, w) = (z.dim(0), z.dim(1));
    if a > w {
        return Err(Error::shape("split_joint", &[n, a], z.shape()));
    }
    let mut p = Vec::with_capacity(n * a);
    let mut s = Vec::with_capacity(n * (w - a));
    for i in 0..n {
        p.extend_from_slice(&z.row(i)[..a]);
        s.extend_from_slice(&z.row(i)[a..]);
    }
    Ok((Tensor::from_vec(&[n, a], p)?, Tensor::from_vec(&[n, w - a], s)?))
}

/// Input modality of a single-representation baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselineInput {
    Ptm { dim: usize },
    Spec { dims: [usize; 3] },
}

#[derive(Clone, Debug)]
enum BaselineCnn<T> {
    Ptm(PtmCnn<T>),
    Spec(SpecCnn<T>),
}

/// Single-modality, single-task classifier: a conv stack, flattened, then a
/// 120-unit ReLU layer (with dropout) and a softmax output.
#[derive(Clone, Debug)]
pub struct Baseline<T> {
    cnn: BaselineCnn<T>,
    pub hidden: Dense<T>,
    pub out: Dense<T>,
    relu: Relu,
    dropout: Dropout,
    maps_shape: Option<Vec<usize>>,
}

pub const BASELINE_HIDDEN: usize = 120;

impl<T: Scalar> Baseline<T> {
    pub fn new<R: Rng + ?Sized>(
        input: BaselineInput,
        n_classes: usize,
        dropout: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::InvalidArgument(format!("baseline needs at least 2 classes, got {n_classes}")));
        }
        let (cnn, flat) = match input {
            BaselineInput::Ptm { dim } => {
                let c = PtmCnn::new("baseline.ptm", dim, rng)?;
                let flat = WIDTH * c.seq_len();
                (BaselineCnn::Ptm(c), flat)
            }
            BaselineInput::Spec { dims } => {
                let c = SpecCnn::new("baseline.spec", dims, rng)?;
                let flat = WIDTH * c.out_dims().iter().product::<usize>();
                (BaselineCnn::Spec(c), flat)
            }
        };
        let seed = rng.random();
        Ok(Baseline {
            cnn,
            hidden: Dense::new("baseline.hidden", flat, BASELINE_HIDDEN, rng),
            out: Dense::new("baseline.out", BASELINE_HIDDEN, n_classes, rng),
            relu: Relu::new(),
            dropout: Dropout::new(dropout, seed),
            maps_shape: None,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.out.out_dim()
    }

    /// Class logits `[N, K]`. PTM input is `[N, D]`, spectrogram input `[N, F, T, B]`.
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let maps = match &mut self.cnn {
            BaselineCnn::Ptm(c) => c.forward(x)?,
            BaselineCnn::Spec(c) => c.forward(x, mode)?,
        };
        let n = maps.dim(0);
        self.maps_shape = Some(maps.shape().to_vec());
        let flat = maps.reshape(&[n, self.hidden.in_dim()])?;
        let h = self.relu.forward(&self.hidden.forward(&flat)?);
        let h = self.dropout.forward(&h, mode);
        self.out.forward(&h)
    }

    /// Class probabilities in eval mode.
    pub fn classify(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(crate::nn::softmax(&self.forward(x, Mode::Eval)?))
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.backward_head(grad)?;
        match &mut self.cnn {
            BaselineCnn::Ptm(c) => c.backward(&g),
            BaselineCnn::Spec(c) => c.backward(&g),
        }
    }

    pub fn backward_params(&mut self, grad: &Tensor<T>) -> Result<()> {
        let g = self.backward_head(grad)?;
        match &mut self.cnn {
            BaselineCnn::Ptm(c) => c.backward_params(&g),
            BaselineCnn::Spec(c) => c.backward_params(&g),
        }
    }

    fn backward_head(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self
            .maps_shape
            .take()
            .ok_or_else(|| Error::NoForwardCache("baseline".into()))?;
        let g = self.out.backward(grad)?;
        let g = self.relu.backward(&self.dropout.backward(&g)?)?;
        self.hidden.backward(&g)?.reshape(&shape)
    }
}

impl<T: Scalar> Module<T> for Baseline<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        match &mut self.cnn {
            BaselineCnn::Ptm(c) => c.visit_params(f),
            BaselineCnn::Spec(c) => c.visit_params(f),
        }
        self.hidden.visit_params(f);
        self.out.visit_params(f);
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        if let BaselineCnn::Spec(c) = &mut self.cnn {
            c.visit_buffers(f);
        }
    }
}
