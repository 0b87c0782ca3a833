//! Central finite-difference gradient checking.

use crate::error::{Error, Result};
use crate::nn::Module;

/// Max over coordinates of `|analytic - fd| / max(1, |analytic|)`, where `fd` is
/// the central difference `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn grad_check(
    mut f: impl FnMut(&[f64]) -> f64,
    point: &[f64],
    analytic: &[f64],
    h: f64,
) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step h must be > 0, got {h}")));
    }
    if point.len() != analytic.len() {
        return Err(Error::shape("grad_check", &[point.len()], &[analytic.len()]));
    }
    let mut x = point.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let x0 = x[i];
        x[i] = x0 + h;
        let fp = f(&x);
        x[i] = x0 - h;
        let fm = f(&x);
        x[i] = x0;
        let fd = (fp - fm) / (2.0 * h);
        let err = (analytic[i] - fd).abs() / analytic[i].abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Coordinate of a single scalar inside a module's parameter list.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamCoord {
    pub param: usize,
    pub index: usize,
}

/// Lists every parameter coordinate of `module`, in visiting order.
pub fn all_coords<M: Module<f64> + ?Sized>(module: &mut M) -> Vec<ParamCoord> {
    let mut out = Vec::new();
    let mut p = 0;
    module.visit_params(&mut |param| {
        for index in 0..param.numel() {
            out.push(ParamCoord { param: p, index });
        }
        p += 1;
    });
    out
}

fn get(module: &mut (impl Module<f64> + ?Sized), c: ParamCoord) -> (f64, f64) {
    let mut p = 0;
    let mut out = (0.0, 0.0);
    module.visit_params(&mut |param| {
        if p == c.param {
            out = (param.value.data()[c.index], param.grad.data()[c.index]);
        }
        p += 1;
    });
    out
}

fn set(module: &mut (impl Module<f64> + ?Sized), c: ParamCoord, v: f64) {
    let mut p = 0;
    module.visit_params(&mut |param| {
        if p == c.param {
            param.value.data_mut()[c.index] = v;
        }
        p += 1;
    });
}

/// Checks parameter gradients of a module.
///
/// `run` must zero gradients, evaluate the scalar loss, and (when its flag is
/// `true`) backpropagate so gradients are populated. The analytic values are
/// read once after a backward pass at the unperturbed point.
pub fn grad_check_params<M: Module<f64> + ?Sized>(
    module: &mut M,
    coords: &[ParamCoord],
    h: f64,
    mut run: impl FnMut(&mut M, bool) -> f64,
) -> Result<f64> {
    run(module, true);
    let point: Vec<f64> = coords.iter().map(|&c| get(module, c).0).collect();
    let analytic: Vec<f64> = coords.iter().map(|&c| get(module, c).1).collect();
    let cell = std::cell::RefCell::new(module);
    let result = grad_check(
        |x| {
            let mut m = cell.borrow_mut();
            for (&c, &v) in coords.iter().zip(x) {
                set(&mut **m, c, v);
            }
            run(&mut m, false)
        },
        &point,
        &analytic,
        h,
    );
    let m = cell.into_inner();
    for (&c, &v) in coords.iter().zip(&point) {
        set(m, c, v);
    }
    result
}
