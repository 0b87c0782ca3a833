use std::f64::consts::PI;

use super::{dot, norm};
use crate::error::{Error, Result};

const SERIES_R: f64 = 1e-2;

/// Removes the component along the north pole `e1` (Gram-Schmidt against a
/// unit basis vector is just zeroing the first coordinate).
pub fn orthogonalize(v: &mut [f64]) {
    if let Some(first) = v.first_mut() {
        *first = 0.0;
    }
}

fn normalize(x: &mut [f64]) {
    let n = norm(x);
    if n > 0.0 {
        x.iter_mut().for_each(|a| *a /= n);
    }
}

// sin(r)/r and (d/dr [sin(r)/r]) / r
fn sinc_coeffs(r: f64) -> (f64, f64) {
    if r < SERIES_R {
        let r2 = r * r;
        (1.0 - r2 / 6.0 + r2 * r2 / 120.0, -1.0 / 3.0 + r2 / 30.0 - r2 * r2 / 840.0)
    } else {
        (r.sin() / r, (r * r.cos() - r.sin()) / (r * r * r))
    }
}

/// Exponential map at the north pole `n = e1`:
/// `cos|v| n + sin|v| v/|v|`, after projecting `v` onto the tangent space.
/// The result is renormalised to unit length.
pub fn sph_exp_n(v: &[f64]) -> Vec<f64> {
    let mut w = v.to_vec();
    orthogonalize(&mut w);
    let r = norm(&w);
    let (sinc, _) = sinc_coeffs(r);
    let mut x: Vec<f64> = w.iter().map(|a| a * sinc).collect();
    x[0] = r.cos();
    normalize(&mut x);
    x
}

/// Gradient of `sph_exp_n` with respect to `v` given upstream `g`.
pub fn sph_exp_n_vjp(v: &[f64], g: &[f64]) -> Vec<f64> {
    let mut w = v.to_vec();
    orthogonalize(&mut w);
    let r = norm(&w);
    let (sinc, kappa) = sinc_coeffs(r);
    let g_rest = &g[1..];
    let gw = dot(g_rest, &w[1..]);
    // d cos(r) / dw = -sinc(r) w
    let k = kappa * gw - g[0] * sinc;
    let mut dv: Vec<f64> = g.iter().zip(&w).map(|(gi, wi)| sinc * gi + k * wi).collect();
    dv[0] = 0.0;
    dv
}

/// Logarithmic map at the north pole: `θ (x - cos θ n) / sin θ` with
/// `θ = atan2(|x_rest|, x_0)`, which equals the clamped arccos of `<x, n>` for
/// unit `x` but keeps full precision near both poles. `n` maps to 0; the
/// antipode maps to `π e2`.
pub fn sph_log_n(x: &[f64]) -> Vec<f64> {
    let q = norm(&x[1..]);
    let mut out = vec![0.0; x.len()];
    if q == 0.0 {
        if x[0] < 0.0 && x.len() > 1 {
            out[1] = PI;
        }
        return out;
    }
    let theta = q.atan2(x[0]);
    for (o, xi) in out[1..].iter_mut().zip(&x[1..]) {
        *o = theta / q * xi;
    }
    out
}

/// Gradient of `sph_log_n` with respect to `x` given upstream `g`.
/// Zero at the antipode, where the map is not differentiable.
pub fn sph_log_n_vjp(x: &[f64], g: &[f64]) -> Vec<f64> {
    let x0 = x[0];
    let w = &x[1..];
    let q = norm(w);
    let mut dx = vec![0.0; x.len()];
    if q == 0.0 {
        if x0 > 0.0 {
            for (d, gi) in dx[1..].iter_mut().zip(&g[1..]) {
                *d = gi / x0;
            }
        }
        return dx;
    }
    let gw = dot(&g[1..], w);
    let rho2 = x0 * x0 + q * q;
    let theta = q.atan2(x0);
    let bracket = if x0 > 0.0 && q < SERIES_R * x0 {
        let a = q / x0;
        (-2.0 / 3.0 + 4.0 * a * a / 5.0) / (x0 * x0 * x0)
    } else {
        x0 / (rho2 * q * q) - theta / (q * q * q)
    };
    dx[0] = -gw / rho2;
    for ((d, gi), wi) in dx[1..].iter_mut().zip(&g[1..]).zip(w) {
        *d = theta / q * gi + gw * bracket * wi;
    }
    dx
}

/// Geodesic distance on the unit sphere, `atan2(|x - y|, |x + y|) * 2`.
///
/// This is the same angle as `arccos(<x, y>)` for unit vectors, without the
/// precision loss of arccos near 0 and π, and it is exactly 0 when `x == y`.
pub fn sph_dist(x: &[f64], y: &[f64]) -> f64 {
    let d: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let s: f64 = x.iter().zip(y).map(|(a, b)| (a + b) * (a + b)).sum::<f64>().sqrt();
    2.0 * d.atan2(s)
}

/// A unit vector on the hypersphere.
#[derive(Clone, Debug, PartialEq)]
pub struct SpherePoint {
    x: Vec<f64>,
}

impl SpherePoint {
    /// Normalises `x`; rejects zero or non-finite vectors.
    pub fn new(mut x: Vec<f64>) -> Result<Self> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sphere point".into()));
        }
        if norm(&x) == 0.0 {
            return Err(Error::InvalidArgument("sphere point cannot be the zero vector".into()));
        }
        normalize(&mut x);
        Ok(SpherePoint { x })
    }

    pub fn north_pole(dim: usize) -> Self {
        let mut x = vec![0.0; dim];
        x[0] = 1.0;
        SpherePoint { x }
    }

    pub fn coords(&self) -> &[f64] {
        &self.x
    }

    pub fn dist(&self, other: &SpherePoint) -> f64 {
        sph_dist(&self.x, &other.x)
    }
}
