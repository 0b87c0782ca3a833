//! Browser bindings for three small operations of the core crate: geodesics
//! and distances on the Poincaré disk, gated fusion of three tangents, and the
//! equal error rate of a pasted score list.
//!
//! Each exported function is a thin wrapper over a plain Rust function so the
//! logic can be tested natively.

use micunet::fusion::{fuse, Branch};
use micunet::manifold::{euc_dist, hyp_dist, hyp_exp0, mobius_add, mobius_neg, sph_exp_n};
use micunet::metrics::binary_eer;
use micunet::nn::softmax_in_place;
use wasm_bindgen::prelude::*;

/// `[d_H, 2 d_E]` between two disk points.
pub fn distances(a: [f64; 2], b: [f64; 2], c: f64) -> [f64; 2] {
    [hyp_dist(&a, &b, c), 2.0 * euc_dist(&a, &b).expect("same length")]
}

/// `n + 1` points along the geodesic from `a` to `b`, flattened as `x, y` pairs.
pub fn geodesic(a: [f64; 2], b: [f64; 2], c: f64, n: usize) -> Vec<f64> {
    let w = mobius_add(&mobius_neg(&a), &b, c);
    let s = c.sqrt();
    let r = (w[0] * w[0] + w[1] * w[1]).sqrt();
    let mut out = Vec::with_capacity(2 * (n + 1));
    for i in 0..=n {
        let t = i as f64 / n.max(1) as f64;
        let step = if r == 0.0 {
            vec![0.0, 0.0]
        } else {
            let k = (t * (s * r).atanh()).tanh() / (s * r);
            vec![w[0] * k, w[1] * k]
        };
        out.extend(mobius_add(&a, &step, c));
    }
    out
}

/// Softmax of the gate logits, then the fused tangent of three 2-d tangents
/// given as `[h_x, h_y, e_x, e_y, s_x, s_y]`. Returns the three weights
/// followed by the fused 2-d vector.
pub fn gate_fuse(logits: [f64; 3], tangents: [f64; 6], c: f64) -> Result<Vec<f64>, String> {
    let mut w = logits;
    softmax_in_place(&mut w);
    // all three live in one 3-d tangent space whose first axis is the sphere's pole
    let lift = |i: usize| [0.0, tangents[2 * i], tangents[2 * i + 1]];
    let h = hyp_exp0(&lift(0), c);
    let e = lift(1);
    let s = sph_exp_n(&lift(2));
    let branches = [Branch::Hyperbolic, Branch::Euclidean, Branch::Spherical];
    let fused = fuse(&branches, &w, &[&h, &e, &s], c).map_err(|e| e.to_string())?;
    Ok(vec![w[0], w[1], w[2], fused[1], fused[2]])
}

fn numbers(text: &str) -> Result<Vec<f64>, String> {
    text.split(|ch: char| ch == ',' || ch.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| format!("not a number: {t:?}")))
        .collect()
}

/// EER in percent from whitespace or comma separated scores and 0/1 labels.
pub fn eer_percent(scores: &str, labels: &str) -> Result<f64, String> {
    let s = numbers(scores)?;
    let y = numbers(labels)?;
    if s.len() != y.len() {
        return Err(format!("{} scores but {} labels", s.len(), y.len()));
    }
    let mut positive = Vec::with_capacity(y.len());
    for v in y {
        match v {
            0.0 => positive.push(false),
            1.0 => positive.push(true),
            _ => return Err(format!("labels must be 0 or 1, got {v}")),
        }
    }
    binary_eer(&s, &positive)
        .map(|e| 100.0 * e)
        .ok_or_else(|| "need at least one positive and one negative".to_string())
}

#[wasm_bindgen(js_name = diskDistances)]
pub fn disk_distances(ax: f64, ay: f64, bx: f64, by: f64, c: f64) -> Vec<f64> {
    distances([ax, ay], [bx, by], c).to_vec()
}

#[wasm_bindgen(js_name = diskGeodesic)]
pub fn disk_geodesic(ax: f64, ay: f64, bx: f64, by: f64, c: f64, n: usize) -> Vec<f64> {
    geodesic([ax, ay], [bx, by], c, n)
}

#[wasm_bindgen(js_name = gateFuse)]
pub fn gate_fuse_js(logits: &[f64], tangents: &[f64], c: f64) -> Result<Vec<f64>, JsValue> {
    let l: [f64; 3] = logits.try_into().map_err(|_| JsValue::from_str("expected 3 logits"))?;
    let t: [f64; 6] = tangents.try_into().map_err(|_| JsValue::from_str("expected 6 tangent coordinates"))?;
    gate_fuse(l, t, c).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = eerPercent)]
pub fn eer_percent_js(scores: &str, labels: &str) -> Result<f64, JsValue> {
    eer_percent(scores, labels).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_from_origin_follows_the_radius_law() {
        let v = [0.3, -0.4];
        let x = hyp_exp0(&v, 1.0);
        let [d, _] = distances([0.0, 0.0], [x[0], x[1]], 1.0);
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn geodesic_ends_at_both_points_with_equal_steps() {
        let (a, b, c) = ([0.1, 0.5], [-0.6, -0.2], 1.0);
        let g = geodesic(a, b, c, 10);
        assert_eq!(g.len(), 22);
        assert!((g[0] - a[0]).abs() < 1e-12 && (g[1] - a[1]).abs() < 1e-12);
        assert!((g[20] - b[0]).abs() < 1e-12 && (g[21] - b[1]).abs() < 1e-12);
        let total = hyp_dist(&a, &b, c);
        for i in 0..10 {
            let step = hyp_dist(&g[2 * i..2 * i + 2], &g[2 * i + 2..2 * i + 4], c);
            assert!((step - total / 10.0).abs() < 1e-9);
        }
    }

    #[test]
    fn equal_logits_average_the_tangents() {
        let t = [0.3, 0.1, -0.2, 0.4, 0.5, -0.5];
        let out = gate_fuse([2.0, 2.0, 2.0], t, 1.0).unwrap();
        for w in &out[..3] {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!((out[3] - 0.6 / 3.0).abs() < 1e-12);
        assert!((out[4] - 0.0).abs() < 1e-12);
    }

    #[test]
    fn a_dominant_logit_returns_that_tangent() {
        let t = [0.3, 0.1, -0.2, 0.4, 0.5, -0.5];
        let out = gate_fuse([0.0, 0.0, 800.0], t, 1.0).unwrap();
        assert!((out[3] - 0.5).abs() < 1e-12 && (out[4] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn worked_eer_example() {
        let e = eer_percent("0.9, 0.8, 0.7, 0.75, 0.3, 0.2", "1 1 1 0 0 0").unwrap();
        assert!((e - 100.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn eer_input_errors() {
        assert!(eer_percent("0.1 x", "0 1").unwrap_err().contains("not a number"));
        assert!(eer_percent("0.1 0.2", "0").unwrap_err().contains("2 scores but 1 labels"));
        assert!(eer_percent("0.1 0.2", "0 2").unwrap_err().contains("0 or 1"));
        assert!(eer_percent("0.1 0.2", "1 1").is_err());
    }
}
