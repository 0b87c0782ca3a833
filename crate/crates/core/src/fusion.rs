//! Mixed-curvature projection, gated tangent-space fusion, and the ablation
//! variants that remove parts of it.
//!
//! Three independent `dense + tanh` maps turn the joint embedding into
//! tangent vectors `u_H`, `u_E`, `u_S`. The hyperbolic and spherical ones are
//! pushed onto their manifolds with the exponential maps, pulled back with the
//! logarithmic maps, and the gate mixes the three results.
//!
//! The tanh outputs are rescaled before the maps so they stay in the region
//! where the maps are invertible in floating point:
//! * `u_H` is scaled by `R_H / (sqrt(c) sqrt(d_m))`, so `sqrt(c)|u_H| <= R_H`
//!   and the ball clamp never engages;
//! * `u_S` is scaled by `(π - margin) / sqrt(d_m - 1)` after its first
//!   coordinate (the north-pole direction) is removed, so `|u_S| < π`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{
    hyp_exp0, hyp_exp0_vjp, hyp_log0, hyp_log0_vjp, orthogonalize, sigmoid, softplus,
    softplus_inv, sph_exp_n, sph_exp_n_vjp, sph_log_n, sph_log_n_vjp,
};
use crate::nn::{softmax_backward_row, softmax_in_place, Dense, Module, Param, Relu, Tanh};
use crate::tensor::{Scalar, Tensor};

/// Bound on `sqrt(c) |u_H|`.
pub const HYP_RADIUS: f64 = 5.0;
/// Gap kept between `|u_S|` and π.
pub const SPH_MARGIN: f64 = 0.01;
pub const GATE_HIDDEN: usize = 64;

/// One of the three geometric branches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Hyperbolic,
    Euclidean,
    Spherical,
}

/// Model variants used by the ablation study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Variant {
    #[default]
    #[serde(rename = "full")]
    Full,
    #[serde(rename = "minus_S")]
    MinusS,
    #[serde(rename = "minus_H")]
    MinusH,
    #[serde(rename = "euclid_only")]
    EuclidOnly,
    #[serde(rename = "no_gating")]
    NoGating,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::MinusS,
        Variant::MinusH,
        Variant::EuclidOnly,
        Variant::NoGating,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::MinusS => "minus_S",
            Variant::MinusH => "minus_H",
            Variant::EuclidOnly => "euclid_only",
            Variant::NoGating => "no_gating",
        }
    }

    pub fn branches(&self) -> &'static [Branch] {
        use Branch::*;
        match self {
            Variant::Full | Variant::NoGating => &[Hyperbolic, Euclidean, Spherical],
            Variant::MinusS => &[Hyperbolic, Euclidean],
            Variant::MinusH => &[Euclidean, Spherical],
            Variant::EuclidOnly => &[Euclidean],
        }
    }

    pub fn has_gate(&self) -> bool {
        matches!(self, Variant::Full | Variant::MinusS | Variant::MinusH)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::UnknownVariant {
                given: s.to_string(),
                valid: Variant::ALL.map(|v| v.as_str()).join(", "),
            })
    }
}

/// Scale applied to `tanh` outputs of the hyperbolic projection.
pub fn hyp_scale(c: f64, d_m: usize) -> f64 {
    HYP_RADIUS / (c.sqrt() * (d_m as f64).sqrt())
}

/// Scale applied to `tanh` outputs of the spherical projection.
pub fn sph_scale(d_m: usize) -> f64 {
    (PI - SPH_MARGIN) / ((d_m.max(2) - 1) as f64).sqrt()
}

/// Maps a manifold point of `branch` back to the shared tangent space.
pub fn log_map(branch: Branch, point: &[f64], c: f64) -> Vec<f64> {
    match branch {
        Branch::Hyperbolic => hyp_log0(point, c),
        Branch::Euclidean => point.to_vec(),
        Branch::Spherical => sph_log_n(point),
    }
}

/// Gate-weighted sum of the log-mapped points, `Σ w_b log_b(z_b)`.
pub fn fuse(branches: &[Branch], weights: &[f64], points: &[&[f64]], c: f64) -> Result<Vec<f64>> {
    if branches.len() != weights.len() || branches.len() != points.len() || points.is_empty() {
        return Err(Error::shape("fuse", &[branches.len()], &[weights.len(), points.len()]));
    }
    let d = points[0].len();
    let mut out = vec![0.0; d];
    for ((&b, &w), p) in branches.iter().zip(weights).zip(points) {
        if p.len() != d {
            return Err(Error::shape("fuse", &[d], &[p.len()]));
        }
        for (o, l) in out.iter_mut().zip(log_map(b, p, c)) {
            *o += w * l;
        }
    }
    Ok(out)
}

/// Per-sample gate: `dense(256→64) + ReLU → dense(64→k) → softmax`, with the
/// last layer zero-initialised so an untrained gate is uniform.
#[derive(Clone, Debug)]
pub struct Gate<T> {
    pub hidden: Dense<T>,
    pub out: Dense<T>,
    relu: Relu,
    weights: Option<Vec<T>>,
}

impl<T: Scalar> Gate<T> {
    pub fn new<R: Rng + ?Sized>(name: &str, d_in: usize, k: usize, rng: &mut R) -> Self {
        Gate {
            hidden: Dense::new(&format!("{name}.hidden"), d_in, GATE_HIDDEN, rng),
            out: Dense::zeroed(&format!("{name}.out"), GATE_HIDDEN, k),
            relu: Relu::new(),
            weights: None,
        }
    }

    pub fn logits(&self, z0: &Tensor<T>) -> Result<Tensor<T>> {
        let h = self.hidden.apply(z0)?.map(|v| v.max(T::zero()));
        self.out.apply(&h)
    }

    /// Softmax weights `[N, k]`.
    pub fn forward(&mut self, z0: &Tensor<T>) -> Result<Tensor<T>> {
        let h = self.relu.forward(&self.hidden.forward(z0)?);
        let mut w = self.out.forward(&h)?;
        let k = w.dim(1);
        w.data_mut().chunks_mut(k).for_each(softmax_in_place);
        self.weights = Some(w.data().to_vec());
        Ok(w)
    }

    pub fn backward(&mut self, dw: &Tensor<T>) -> Result<Tensor<T>> {
        let w = self
            .weights
            .take()
            .ok_or_else(|| Error::NoForwardCache("gate".into()))?;
        let k = dw.dim(1);
        let mut dl = vec![T::zero(); w.len()];
        for ((p, g), o) in w.chunks(k).zip(dw.data().chunks(k)).zip(dl.chunks_mut(k)) {
            softmax_backward_row(p, g, o);
        }
        let g = self.out.backward(&Tensor::from_vec(dw.shape(), dl)?)?;
        self.hidden.backward(&self.relu.backward(&g)?)
    }
}

impl<T: Scalar> Module<T> for Gate<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.hidden.visit_params(f);
        self.out.visit_params(f);
    }
}

/// Everything the fusion layer computed for a batch, in `f64`.
/// Rows are samples; absent branches are `None`.
#[derive(Clone, Debug)]
pub struct FusionState {
    pub z0: Tensor<f64>,
    pub u_h: Option<Tensor<f64>>,
    pub u_e: Tensor<f64>,
    pub u_s: Option<Tensor<f64>>,
    pub z_h: Option<Tensor<f64>>,
    pub z_s: Option<Tensor<f64>>,
    pub log_h: Option<Tensor<f64>>,
    pub log_s: Option<Tensor<f64>>,
    /// `[N, branches]` in the order of [`Variant::branches`]
    pub weights: Tensor<f64>,
    pub branches: Vec<Branch>,
    pub z_fused: Tensor<f64>,
    pub c: Option<f64>,
}

#[derive(Clone, Debug)]
struct Projection<T> {
    dense: Dense<T>,
    tanh: Tanh<T>,
}

impl<T: Scalar> Projection<T> {
    fn new<R: Rng + ?Sized>(name: &str, d_in: usize, d_m: usize, rng: &mut R) -> Self {
        Projection { dense: Dense::new(name, d_in, d_m, rng), tanh: Tanh::new() }
    }

    fn forward(&mut self, z0: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.tanh.forward(&self.dense.forward(z0)?))
    }

    fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        self.dense.backward(&self.tanh.backward(g)?)
    }
}

/// Projection, gating and fusion of the joint embedding.
#[derive(Clone, Debug)]
pub struct Fusion<T> {
    variant: Variant,
    d_in: usize,
    d_m: usize,
    proj_h: Option<Projection<T>>,
    proj_e: Projection<T>,
    proj_s: Option<Projection<T>>,
    /// unconstrained curvature parameter, `c = softplus(rho)`
    pub rho: Option<Param<T>>,
    pub gate: Option<Gate<T>>,
    state: Option<FusionState>,
    a_h: Option<Tensor<f64>>,
}

impl<T: Scalar> Fusion<T> {
    pub fn new<R: Rng + ?Sized>(variant: Variant, d_in: usize, d_m: usize, rng: &mut R) -> Self {
        let has = |b| variant.branches().contains(&b);
        let proj_h = has(Branch::Hyperbolic).then(|| Projection::new("fusion.proj_h", d_in, d_m, rng));
        let proj_e = Projection::new("fusion.proj_e", d_in, d_m, rng);
        let proj_s = has(Branch::Spherical).then(|| Projection::new("fusion.proj_s", d_in, d_m, rng));
        let rho = has(Branch::Hyperbolic)
            .then(|| Param::new("fusion.rho", Tensor::from_vec(&[1], vec![T::of(softplus_inv(1.0))]).expect("1 elem")));
        let gate = variant
            .has_gate()
            .then(|| Gate::new("fusion.gate", d_in, variant.branches().len(), rng));
        Fusion { variant, d_in, d_m, proj_h, proj_e, proj_s, rho, gate, state: None, a_h: None }
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn d_m(&self) -> usize {
        self.d_m
    }

    /// Current curvature, if the variant has a hyperbolic branch.
    pub fn curvature(&self) -> Option<f64> {
        self.rho.as_ref().map(|p| softplus(p.value.data()[0].f64()).max(f64::MIN_POSITIVE))
    }

    /// Parameters of the gate network (zero when the variant has no gate).
    pub fn gate_param_count(&mut self) -> usize {
        self.gate.as_mut().map_or(0, |g| g.param_count())
    }

    /// State of the last forward pass.
    pub fn last_state(&self) -> Option<&FusionState> {
        self.state.as_ref()
    }

    /// `z0 [N, d_in]` to `z_fused [N, d_m]`.
    pub fn forward(&mut self, z0: &Tensor<T>) -> Result<Tensor<T>> {
        z0.expect_shape("fusion", &[None, Some(self.d_in)])?;
        let n = z0.dim(0);
        let d = self.d_m;
        let c = self.curvature();
        let branches = self.variant.branches().to_vec();

        let u_e = self.proj_e.forward(z0)?.cast::<f64>();
        let (mut a_h, mut u_h, mut z_h, mut log_h) = (None, None, None, None);
        if let (Some(p), Some(c)) = (self.proj_h.as_mut(), c) {
            let a = p.forward(z0)?.cast::<f64>();
            let k = hyp_scale(c, d);
            let u = a.map(|v| v * k);
            let mut zs = Vec::with_capacity(n * d);
            let mut ls = Vec::with_capacity(n * d);
            for i in 0..n {
                let z = hyp_exp0(u.row(i), c);
                ls.extend(hyp_log0(&z, c));
                zs.extend(z);
            }
            a_h = Some(a);
            u_h = Some(u);
            z_h = Some(Tensor::from_vec(&[n, d], zs)?);
            log_h = Some(Tensor::from_vec(&[n, d], ls)?);
        }
        let (mut u_s, mut z_s, mut log_s) = (None, None, None);
        if let Some(p) = self.proj_s.as_mut() {
            let k = sph_scale(d);
            let mut u = p.forward(z0)?.cast::<f64>().map(|v| v * k);
            let mut zs = Vec::with_capacity(n * d);
            let mut ls = Vec::with_capacity(n * d);
            for row in u.data_mut().chunks_mut(d) {
                orthogonalize(row);
                let z = sph_exp_n(row);
                ls.extend(sph_log_n(&z));
                zs.extend(z);
            }
            u_s = Some(u);
            z_s = Some(Tensor::from_vec(&[n, d], zs)?);
            log_s = Some(Tensor::from_vec(&[n, d], ls)?);
        }

        let nb = branches.len();
        let weights = match self.gate.as_mut() {
            Some(g) => g.forward(z0)?.cast::<f64>(),
            None => Tensor::full(&[n, nb], 1.0 / nb as f64),
        };

        let mut fused = vec![0.0; n * d];
        if self.variant == Variant::EuclidOnly {
            fused.copy_from_slice(u_e.data());
        } else {
            for (bi, b) in branches.iter().enumerate() {
                let src = match b {
                    Branch::Hyperbolic => log_h.as_ref(),
                    Branch::Euclidean => Some(&u_e),
                    Branch::Spherical => log_s.as_ref(),
                }
                .expect("branch present");
                for i in 0..n {
                    let w = weights.row(i)[bi];
                    for (o, &l) in fused[i * d..(i + 1) * d].iter_mut().zip(src.row(i)) {
                        *o += w * l;
                    }
                }
            }
        }
        let z_fused = Tensor::from_vec(&[n, d], fused)?;
        let out = z_fused.cast::<T>();
        self.a_h = a_h;
        self.state = Some(FusionState {
            z0: z0.cast(),
            u_h,
            u_e,
            u_s,
            z_h,
            z_s,
            log_h,
            log_s,
            weights,
            branches,
            z_fused,
            c,
        });
        Ok(out)
    }

    /// Backpropagates `d z_fused` and returns `d z0`. Also accumulates the
    /// curvature gradient into `rho`.
    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let st = self
            .state
            .take()
            .ok_or_else(|| Error::NoForwardCache("fusion".into()))?;
        let a_h = self.a_h.take();
        let n = st.z0.dim(0);
        let d = self.d_m;
        grad.expect_shape("fusion backward", &[Some(n), Some(d)])?;
        let g = grad.cast::<f64>();
        let mut dz0 = Tensor::<T>::zeros(&[n, self.d_in]);

        if self.variant == Variant::EuclidOnly {
            dz0.add_assign(&self.proj_e.backward(grad)?)?;
            return Ok(dz0);
        }

        let nb = st.branches.len();
        let mut dw = vec![0.0; n * nb];
        for (bi, b) in st.branches.iter().enumerate() {
            let src = match b {
                Branch::Hyperbolic => st.log_h.as_ref(),
                Branch::Euclidean => Some(&st.u_e),
                Branch::Spherical => st.log_s.as_ref(),
            }
            .expect("branch present");
            for i in 0..n {
                dw[i * nb + bi] = g.row(i).iter().zip(src.row(i)).map(|(a, b)| a * b).sum();
            }
        }
        let branch_grad = |bi: usize| -> Vec<f64> {
            let mut out = Vec::with_capacity(n * d);
            for i in 0..n {
                let w = st.weights.row(i)[bi];
                out.extend(g.row(i).iter().map(|v| v * w));
            }
            out
        };

        for (bi, b) in st.branches.iter().enumerate() {
            let dl = branch_grad(bi);
            match b {
                Branch::Euclidean => {
                    let dl = Tensor::from_vec(&[n, d], dl)?.cast::<T>();
                    dz0.add_assign(&self.proj_e.backward(&dl)?)?;
                }
                Branch::Hyperbolic => {
                    let c = st.c.expect("hyperbolic branch has curvature");
                    let (u, z, a) = (
                        st.u_h.as_ref().expect("u_h"),
                        st.z_h.as_ref().expect("z_h"),
                        a_h.as_ref().expect("a_h"),
                    );
                    let k = hyp_scale(c, d);
                    let mut da = Vec::with_capacity(n * d);
                    let mut dc = 0.0;
                    for i in 0..n {
                        let gl = &dl[i * d..(i + 1) * d];
                        let (dz, dc1) = hyp_log0_vjp(z.row(i), c, gl);
                        let (du, dc2) = hyp_exp0_vjp(u.row(i), c, &dz);
                        // u = k(c) a with dk/dc = -k / 2c
                        let du_a: f64 = du.iter().zip(a.row(i)).map(|(x, y)| x * y).sum();
                        dc += dc1 + dc2 - du_a * k / (2.0 * c);
                        da.extend(du.iter().map(|v| v * k));
                    }
                    let rho = self.rho.as_mut().expect("rho");
                    let drho = dc * sigmoid(rho.value.data()[0].f64());
                    rho.grad.data_mut()[0] += T::of(drho);
                    let da = Tensor::from_vec(&[n, d], da)?.cast::<T>();
                    let p = self.proj_h.as_mut().expect("proj_h");
                    dz0.add_assign(&p.backward(&da)?)?;
                }
                Branch::Spherical => {
                    let (u, z) = (st.u_s.as_ref().expect("u_s"), st.z_s.as_ref().expect("z_s"));
                    let k = sph_scale(d);
                    let mut da = Vec::with_capacity(n * d);
                    for i in 0..n {
                        let dz = sph_log_n_vjp(z.row(i), &dl[i * d..(i + 1) * d]);
                        let du = sph_exp_n_vjp(u.row(i), &dz);
                        da.extend(du.iter().map(|v| v * k));
                    }
                    let da = Tensor::from_vec(&[n, d], da)?.cast::<T>();
                    let p = self.proj_s.as_mut().expect("proj_s");
                    dz0.add_assign(&p.backward(&da)?)?;
                }
            }
        }
        if let Some(gate) = self.gate.as_mut() {
            let dw = Tensor::from_vec(&[n, nb], dw)?.cast::<T>();
            dz0.add_assign(&gate.backward(&dw)?)?;
        }
        Ok(dz0)
    }
}

impl<T: Scalar> Module<T> for Fusion<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        if let Some(p) = self.proj_h.as_mut() {
            p.dense.visit_params(f);
        }
        self.proj_e.dense.visit_params(f);
        if let Some(p) = self.proj_s.as_mut() {
            p.dense.visit_params(f);
        }
        if let Some(r) = self.rho.as_mut() {
            f(r);
        }
        if let Some(g) = self.gate.as_mut() {
            g.visit_params(f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::norm as norm_of;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    fn random_z0(r: &mut ChaCha8Rng, n: usize) -> Tensor<f64> {
        Tensor::from_vec(&[n, 32], (0..n * 32).map(|_| r.random_range(-3.0..3.0)).collect()).unwrap()
    }

    #[test]
    fn variant_parsing() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        let err = "minus_E".parse::<Variant>().unwrap_err().to_string();
        assert!(err.contains("full") && err.contains("no_gating") && err.contains("minus_E"));
    }

    #[test]
    fn zero_input_maps_to_base_points() {
        let mut f = Fusion::<f64>::new(Variant::Full, 32, 8, &mut rng());
        for p in [&mut f.proj_h, &mut f.proj_s].into_iter().flatten() {
            p.dense.bias.value.fill(0.0);
        }
        f.proj_e.dense.bias.value.fill(0.0);
        f.forward(&Tensor::zeros(&[1, 32])).unwrap();
        let st = f.last_state().unwrap();
        assert!(st.z_h.as_ref().unwrap().data().iter().all(|&v| v == 0.0));
        assert!(st.u_e.data().iter().all(|&v| v == 0.0));
        let zs = st.z_s.as_ref().unwrap();
        assert_eq!(zs.data()[0], 1.0);
        assert!(zs.data()[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn manifold_points_stay_valid() {
        let mut r = rng();
        let mut f = Fusion::<f64>::new(Variant::Full, 32, 16, &mut r);
        let z0 = random_z0(&mut r, 1000);
        f.forward(&z0).unwrap();
        let st = f.last_state().unwrap();
        let c = st.c.unwrap();
        for i in 0..1000 {
            assert!(norm_of(st.z_h.as_ref().unwrap().row(i)) < 1.0 / c.sqrt());
            assert!((norm_of(st.z_s.as_ref().unwrap().row(i)) - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn untrained_gate_is_uniform() {
        let mut r = rng();
        let mut f = Fusion::<f64>::new(Variant::Full, 32, 8, &mut r);
        f.forward(&random_z0(&mut r, 20)).unwrap();
        assert!(f.last_state().unwrap().weights.data().iter().all(|&w| w == 1.0 / 3.0));
    }

    #[test]
    fn hand_set_gate_logits() {
        let mut g = Gate::<f64>::new("g", 4, 3, &mut rng());
        g.out.bias.value = Tensor::from_f64(&[3], &[0.0, 2f64.ln(), 2f64.ln()]).unwrap();
        let w = g.forward(&Tensor::full(&[1, 4], 0.5)).unwrap();
        for (a, b) in w.data().iter().zip([0.2, 0.4, 0.4]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn vertex_weights_recover_tangents() {
        let mut r = rng();
        let u: Vec<f64> = (0..8).map(|_| r.random_range(-0.4..0.4)).collect();
        let z_h = hyp_exp0(&u, 1.3);
        let mut us = u.clone();
        orthogonalize(&mut us);
        let z_s = sph_exp_n(&us);
        let branches = Variant::Full.branches();
        let pts: [&[f64]; 3] = [&z_h, &u, &z_s];
        let h = fuse(branches, &[1.0, 0.0, 0.0], &pts, 1.3).unwrap();
        let e = fuse(branches, &[0.0, 1.0, 0.0], &pts, 1.3).unwrap();
        let s = fuse(branches, &[0.0, 0.0, 1.0], &pts, 1.3).unwrap();
        assert_eq!(e, u);
        for i in 0..8 {
            assert!((h[i] - u[i]).abs() < 1e-12);
            assert!((s[i] - us[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_tangents_fuse_to_themselves() {
        let mut u = vec![0.0, 0.3, -0.2, 0.5];
        orthogonalize(&mut u);
        let pts: [&[f64]; 3] = [&hyp_exp0(&u, 0.7), &u.clone(), &sph_exp_n(&u)];
        let z = fuse(Variant::Full.branches(), &[0.5, 0.2, 0.3], &pts, 0.7).unwrap();
        for i in 0..4 {
            assert!((z[i] - u[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn euclid_only_is_a_bypass() {
        let mut r = rng();
        let mut f = Fusion::<f64>::new(Variant::EuclidOnly, 32, 8, &mut r);
        let out = f.forward(&random_z0(&mut r, 3)).unwrap();
        assert_eq!(out.data(), f.last_state().unwrap().u_e.data());
        assert!(f.rho.is_none() && f.gate.is_none());
    }

    #[test]
    fn ablation_structure() {
        let mut r = rng();
        let mut ng = Fusion::<f64>::new(Variant::NoGating, 32, 8, &mut r);
        assert_eq!(ng.gate_param_count(), 0);
        let mut ms = Fusion::<f64>::new(Variant::MinusS, 32, 8, &mut r);
        ms.forward(&random_z0(&mut r, 4)).unwrap();
        let w = &ms.last_state().unwrap().weights;
        assert_eq!(w.shape(), &[4, 2]);
        for i in 0..4 {
            assert!((w.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let mut full = Fusion::<f64>::new(Variant::Full, 32, 8, &mut r);
        let mut eo = Fusion::<f64>::new(Variant::EuclidOnly, 32, 8, &mut r);
        assert!(eo.param_count() < full.param_count());
    }

    #[test]
    fn inverse_consistency_in_single_precision() {
        let mut r = rng();
        let mut f = Fusion::<f32>::new(Variant::Full, 32, 16, &mut r);
        let z0 = random_z0(&mut r, 200).cast::<f32>();
        f.forward(&z0).unwrap();
        let st = f.last_state().unwrap();
        for (a, b) in st.u_h.as_ref().unwrap().data().iter().zip(st.log_h.as_ref().unwrap().data()) {
            assert!((a - b).abs() <= 1e-6);
        }
        for (a, b) in st.u_s.as_ref().unwrap().data().iter().zip(st.log_s.as_ref().unwrap().data()) {
            assert!((a - b).abs() <= 1e-6);
        }
    }
}
