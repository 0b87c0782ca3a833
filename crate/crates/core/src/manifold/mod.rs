//! The three geometric spaces used by the fusion layer: the Poincaré ball,
//! flat Euclidean space and the unit hypersphere.
//!
//! Everything here works on `f64` slices. Training code promotes to `f64`
//! before calling in, which keeps the map/inverse round trips exact to well
//! below single-precision noise.
//!
//! Each map also has a vector-Jacobian product (`*_vjp`) used by backprop.

mod euclid;
mod poincare;
mod sphere;

pub use euclid::euc_dist;
pub use poincare::{
    ball_clamp, hyp_dist, hyp_exp0, hyp_exp0_vjp, hyp_log0, hyp_log0_vjp, mobius_add, mobius_neg,
    PoincarePoint, BALL_EPS,
};
pub use sphere::{
    orthogonalize, sph_dist, sph_exp_n, sph_exp_n_vjp, sph_log_n, sph_log_n_vjp, SpherePoint,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Learnable positive curvature `c = softplus(rho)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curvature {
    pub rho: f64,
}

impl Curvature {
    pub fn from_c(c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidArgument(format!("curvature must be positive and finite, got {c}")));
        }
        Ok(Curvature { rho: softplus_inv(c) })
    }

    /// Curvature 1, the default initialisation.
    pub fn unit() -> Self {
        Curvature { rho: softplus_inv(1.0) }
    }

    /// Never returns zero, even when `rho` is so negative that softplus underflows.
    pub fn c(&self) -> f64 {
        softplus(self.rho).max(f64::MIN_POSITIVE)
    }

    /// `dc / drho`.
    pub fn dc_drho(&self) -> f64 {
        sigmoid(self.rho)
    }
}

/// Which space a tangent vector belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Space {
    Hyperbolic,
    Euclidean,
    Spherical,
}

/// A tangent vector at the base point of its space (origin for the ball and
/// flat space, north pole `e1` for the sphere).
#[derive(Clone, Debug, PartialEq)]
pub struct TangentAtBase {
    pub space: Space,
    pub v: Vec<f64>,
}

impl TangentAtBase {
    /// Builds a tangent vector, rejecting non-finite entries. Spherical
    /// tangents are orthogonalised against the north pole.
    pub fn new(space: Space, mut v: Vec<f64>) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::Empty("tangent vector".into()));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("tangent vector".into()));
        }
        if space == Space::Spherical {
            orthogonalize(&mut v);
        }
        Ok(TangentAtBase { space, v })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curvature_init_is_one() {
        assert!((Curvature::unit().c() - 1.0).abs() < 1e-15);
        assert!((Curvature::unit().rho - (std::f64::consts::E - 1.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn curvature_stays_positive() {
        for rho in [-800.0, -40.0, -1.0, 0.0, 3.0, 50.0, 1e6] {
            let c = Curvature { rho };
            assert!(c.c() > 0.0, "rho {rho}");
            assert!(c.dc_drho() >= 0.0 && c.dc_drho() <= 1.0);
        }
        assert!(Curvature::from_c(0.0).is_err());
        assert!(Curvature::from_c(-1.0).is_err());
        assert!((Curvature::from_c(2.0).unwrap().c() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn dc_drho_matches_difference() {
        let c = Curvature { rho: 0.3 };
        let h = 1e-6;
        let fd = (Curvature { rho: 0.3 + h }.c() - Curvature { rho: 0.3 - h }.c()) / (2.0 * h);
        assert!((fd - c.dc_drho()).abs() < 1e-9);
    }

    #[test]
    fn spherical_tangent_is_orthogonalised() {
        let t = TangentAtBase::new(Space::Spherical, vec![0.7, 0.1, 0.2]).unwrap();
        assert_eq!(t.v[0], 0.0);
        assert!(TangentAtBase::new(Space::Euclidean, vec![f64::NAN]).is_err());
    }
}
