use rand::Rng;

use super::activation::{softmax_backward_row, softmax_in_place};
use super::dense::Dense;
use super::param::{Module, Param};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Single-head scaled dot-product attention with a residual connection:
/// `out = q_in + softmax(Q Kᵀ / √d) V`, where `Q` comes from `q_in` and `K`, `V`
/// from `kv_in`. Passing the same sequence twice gives self-attention.
#[derive(Clone, Debug)]
pub struct Attention<T> {
    pub wq: Dense<T>,
    pub wk: Dense<T>,
    pub wv: Dense<T>,
    width: usize,
    name: String,
    cache: Option<AttnCache<T>>,
}

#[derive(Clone, Debug)]
struct AttnCache<T> {
    n: usize,
    lq: usize,
    lk: usize,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    attn: Vec<T>,
}

impl<T: Scalar> Attention<T> {
    pub fn new<R: Rng + ?Sized>(name: &str, width: usize, rng: &mut R) -> Self {
        Attention {
            wq: Dense::new(&format!("{name}.q"), width, width, rng),
            wk: Dense::new(&format!("{name}.k"), width, width, rng),
            wv: Dense::new(&format!("{name}.v"), width, width, rng),
            width,
            name: name.to_string(),
            cache: None,
        }
    }

    fn check(&self, x: &Tensor<T>, what: &str) -> Result<(usize, usize)> {
        x.expect_shape(
            &format!("attention({}) {what}", self.name),
            &[None, None, Some(self.width)],
        )?;
        if x.dim(1) == 0 {
            return Err(Error::Empty(format!("{} {what} sequence", self.name)));
        }
        Ok((x.dim(0), x.dim(1)))
    }

    pub fn forward(&mut self, q_in: &Tensor<T>, kv_in: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, lq) = self.check(q_in, "query")?;
        let (n2, lk) = self.check(kv_in, "key/value")?;
        if n != n2 {
            return Err(Error::shape("attention batch", q_in.shape(), kv_in.shape()));
        }
        let d = self.width;
        let q = self.wq.forward(q_in)?.into_data();
        let k = self.wk.forward(kv_in)?.into_data();
        let v = self.wv.forward(kv_in)?.into_data();
        let scale = T::one() / T::of(d as f64).sqrt();
        let mut attn = vec![T::zero(); n * lq * lk];
        let mut out = q_in.data().to_vec();
        for s in 0..n {
            let qs = &q[s * lq * d..(s + 1) * lq * d];
            let ks = &k[s * lk * d..(s + 1) * lk * d];
            let vs = &v[s * lk * d..(s + 1) * lk * d];
            let a = &mut attn[s * lq * lk..(s + 1) * lq * lk];
            // S = Q Kᵀ · scale
            T::gemm(lq, d, lk, scale, qs, d as isize, 1, ks, 1, d as isize, T::zero(), a, lk as isize, 1);
            for row in a.chunks_mut(lk) {
                softmax_in_place(row);
            }
            // out += A V
            T::gemm(
                lq,
                lk,
                d,
                T::one(),
                a,
                lk as isize,
                1,
                vs,
                d as isize,
                1,
                T::one(),
                &mut out[s * lq * d..(s + 1) * lq * d],
                d as isize,
                1,
            );
        }
        self.cache = Some(AttnCache { n, lq, lk, q, k, v, attn });
        Tensor::from_vec(q_in.shape(), out)
    }

    /// Returns `(d q_in, d kv_in)`.
    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let c = self
            .cache
            .take()
            .ok_or_else(|| Error::NoForwardCache(self.name.clone()))?;
        let d = self.width;
        let (n, lq, lk) = (c.n, c.lq, c.lk);
        grad.expect_shape("attention backward", &[Some(n), Some(lq), Some(d)])?;
        let scale = T::one() / T::of(d as f64).sqrt();
        let g = grad.data();
        let mut dq = vec![T::zero(); n * lq * d];
        let mut dk = vec![T::zero(); n * lk * d];
        let mut dv = vec![T::zero(); n * lk * d];
        let mut da = vec![T::zero(); lq * lk];
        let mut ds = vec![T::zero(); lq * lk];
        for s in 0..n {
            let gs = &g[s * lq * d..(s + 1) * lq * d];
            let a = &c.attn[s * lq * lk..(s + 1) * lq * lk];
            let qs = &c.q[s * lq * d..(s + 1) * lq * d];
            let ks = &c.k[s * lk * d..(s + 1) * lk * d];
            let vs = &c.v[s * lk * d..(s + 1) * lk * d];
            // dA = G Vᵀ
            T::gemm(lq, d, lk, T::one(), gs, d as isize, 1, vs, 1, d as isize, T::zero(), &mut da, lk as isize, 1);
            // dV = Aᵀ G
            T::gemm(
                lk,
                lq,
                d,
                T::one(),
                a,
                1,
                lk as isize,
                gs,
                d as isize,
                1,
                T::zero(),
                &mut dv[s * lk * d..(s + 1) * lk * d],
                d as isize,
                1,
            );
            for ((arow, garow), srow) in a.chunks(lk).zip(da.chunks(lk)).zip(ds.chunks_mut(lk)) {
                softmax_backward_row(arow, garow, srow);
            }
            // dQ = dS K · scale ; dK = dSᵀ Q · scale
            T::gemm(
                lq,
                lk,
                d,
                scale,
                &ds,
                lk as isize,
                1,
                ks,
                d as isize,
                1,
                T::zero(),
                &mut dq[s * lq * d..(s + 1) * lq * d],
                d as isize,
                1,
            );
            T::gemm(
                lk,
                lq,
                d,
                scale,
                &ds,
                1,
                lk as isize,
                qs,
                d as isize,
                1,
                T::zero(),
                &mut dk[s * lk * d..(s + 1) * lk * d],
                d as isize,
                1,
            );
        }
        let mut dq_in = self.wq.backward(&Tensor::from_vec(&[n, lq, d], dq)?)?;
        dq_in.add_assign(grad)?;
        let mut dkv_in = self.wk.backward(&Tensor::from_vec(&[n, lk, d], dk)?)?;
        dkv_in.add_assign(&self.wv.backward(&Tensor::from_vec(&[n, lk, d], dv)?)?)?;
        Ok((dq_in, dkv_in))
    }

    /// Attention weights of the last forward pass, `[batch, lq, lk]`.
    pub fn last_weights(&self) -> Option<Tensor<T>> {
        self.cache
            .as_ref()
            .map(|c| Tensor::from_vec(&[c.n, c.lq, c.lk], c.attn.clone()).expect("cached shape"))
    }
}

impl<T: Scalar> Module<T> for Attention<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.wq.visit_params(f);
        self.wk.visit_params(f);
        self.wv.visit_params(f);
    }
}
