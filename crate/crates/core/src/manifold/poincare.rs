use super::{dot, norm};
use crate::error::{Error, Result};

/// Points are kept at `sqrt(c) * |x| <= 1 - BALL_EPS`.
pub const BALL_EPS: f64 = 1e-5;

const SERIES_T: f64 = 1e-2;

/// Pulls `x` back inside the ball of radius `(1 - BALL_EPS) / sqrt(c)`.
/// Returns whether clamping happened.
pub fn ball_clamp(x: &mut [f64], c: f64) -> bool {
    let max = (1.0 - BALL_EPS) / c.sqrt();
    let n = norm(x);
    if n > max {
        let s = max / n;
        x.iter_mut().for_each(|v| *v *= s);
        true
    } else {
        false
    }
}

// tanh(t)/t and (d/dt [tanh(t)/t]) / t
fn exp_coeffs(t: f64) -> (f64, f64) {
    if t < SERIES_T {
        let t2 = t * t;
        (
            1.0 - t2 / 3.0 + 2.0 * t2 * t2 / 15.0,
            -2.0 / 3.0 + 8.0 * t2 / 15.0 - 34.0 * t2 * t2 / 105.0,
        )
    } else {
        let th = t.tanh();
        let sech2 = 1.0 - th * th;
        (th / t, (t * sech2 - th) / (t * t * t))
    }
}

// atanh(t)/t and (d/dt [atanh(t)/t]) / t
fn log_coeffs(t: f64) -> (f64, f64) {
    if t < SERIES_T {
        let t2 = t * t;
        (
            1.0 + t2 / 3.0 + t2 * t2 / 5.0,
            2.0 / 3.0 + 4.0 * t2 / 5.0 + 6.0 * t2 * t2 / 7.0,
        )
    } else {
        let at = t.atanh();
        (at / t, (t / (1.0 - t * t) - at) / (t * t * t))
    }
}

/// Exponential map at the origin: `tanh(sqrt(c)|v|) v / (sqrt(c)|v|)`.
pub fn hyp_exp0(v: &[f64], c: f64) -> Vec<f64> {
    let s = c.sqrt();
    let (phi, _) = exp_coeffs(s * norm(v));
    let mut x: Vec<f64> = v.iter().map(|a| a * phi).collect();
    ball_clamp(&mut x, c);
    x
}

/// Gradient of `hyp_exp0` with respect to `v` and `c`, given upstream `g`.
pub fn hyp_exp0_vjp(v: &[f64], c: f64, g: &[f64]) -> (Vec<f64>, f64) {
    let s = c.sqrt();
    let r = norm(v);
    let t = s * r;
    let gv = dot(g, v);
    if t.tanh() > 1.0 - BALL_EPS {
        // clamped: x = R v / |v| with R = (1 - eps) / sqrt(c)
        let radius = (1.0 - BALL_EPS) / s;
        let gu = gv / r;
        let dv = g.iter().zip(v).map(|(gi, vi)| radius / r * (gi - gu * vi / r)).collect();
        return (dv, -gu * radius / (2.0 * c));
    }
    let (phi, psi) = exp_coeffs(t);
    let k = c * psi * gv;
    let dv = g.iter().zip(v).map(|(gi, vi)| phi * gi + k * vi).collect();
    (dv, gv * r * r * psi / 2.0)
}

/// Logarithmic map at the origin: `atanh(sqrt(c)|x|) x / (sqrt(c)|x|)`.
/// Points on or past the boundary are clamped first.
pub fn hyp_log0(x: &[f64], c: f64) -> Vec<f64> {
    let s = c.sqrt();
    let rho = norm(x);
    let m = 1.0 - BALL_EPS;
    // clamped points sit where atanh is steep, so use the closed form rather
    // than re-measuring the rescaled norm
    let chi = if s * rho > m {
        m.atanh() / (s * rho)
    } else {
        log_coeffs(s * rho).0
    };
    x.iter().map(|a| a * chi).collect()
}

/// Gradient of `hyp_log0` with respect to `x` and `c`, given upstream `g`.
pub fn hyp_log0_vjp(x: &[f64], c: f64, g: &[f64]) -> (Vec<f64>, f64) {
    let s = c.sqrt();
    let rho = norm(x);
    let t = s * rho;
    let gx = dot(g, x);
    let m = 1.0 - BALL_EPS;
    if t > m {
        // clamped: u = atanh(m) / sqrt(c) * x / |x|
        let a = m.atanh() / s;
        let gu = gx / rho;
        let dx = g.iter().zip(x).map(|(gi, xi)| a / rho * (gi - gu * xi / rho)).collect();
        return (dx, -gu * a / (2.0 * c));
    }
    let (chi, omega) = log_coeffs(t);
    let k = c * omega * gx;
    let dx = g.iter().zip(x).map(|(gi, xi)| chi * gi + k * xi).collect();
    (dx, gx * rho * rho * omega / 2.0)
}

/// Möbius addition `x ⊕ y` on the ball of curvature `c`, clamped to the ball.
pub fn mobius_add(x: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let xy = dot(x, y);
    let x2 = dot(x, x);
    let y2 = dot(y, y);
    let a = 1.0 + 2.0 * c * xy + c * y2;
    let b = 1.0 - c * x2;
    let den = 1.0 + 2.0 * c * xy + c * c * x2 * y2;
    let mut out: Vec<f64> = x.iter().zip(y).map(|(xi, yi)| (a * xi + b * yi) / den).collect();
    ball_clamp(&mut out, c);
    out
}

/// Möbius negation `⊖x = -x`.
pub fn mobius_neg(x: &[f64]) -> Vec<f64> {
    x.iter().map(|a| -a).collect()
}

/// Geodesic distance `(2/sqrt(c)) atanh(sqrt(c) |(⊖x) ⊕ y|)`.
///
/// Evaluated through the identity `|(⊖x) ⊕ y| = |x - y| / sqrt(D)` with
/// `D = 1 - 2c<x,y> + c²|x|²|y|²`, which is exactly zero when `x == y`.
pub fn hyp_dist(x: &[f64], y: &[f64], c: f64) -> f64 {
    let mut x = x.to_vec();
    let mut y = y.to_vec();
    ball_clamp(&mut x, c);
    ball_clamp(&mut y, c);
    let diff2: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
    let den = 1.0 - 2.0 * c * dot(&x, &y) + c * c * dot(&x, &x) * dot(&y, &y);
    let s = c.sqrt();
    let arg = (s * (diff2 / den).sqrt()).min(1.0 - f64::EPSILON);
    2.0 / s * arg.atanh()
}

/// A point of the Poincaré ball together with its curvature.
#[derive(Clone, Debug, PartialEq)]
pub struct PoincarePoint {
    x: Vec<f64>,
    c: f64,
}

impl PoincarePoint {
    /// Clamps `x` into the ball. Rejects non-finite input or curvature.
    pub fn new(mut x: Vec<f64>, c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidArgument(format!("curvature must be positive, got {c}")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("poincare point".into()));
        }
        ball_clamp(&mut x, c);
        Ok(PoincarePoint { x, c })
    }

    pub fn coords(&self) -> &[f64] {
        &self.x
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn dist(&self, other: &PoincarePoint) -> f64 {
        hyp_dist(&self.x, &other.x, self.c)
    }
}
