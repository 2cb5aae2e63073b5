#![allow(dead_code)]

use std::f64::consts::PI;

use kolmo_core::structure::{BlockStructure, DriftMatrix};
use kolmo_core::Group;

/// Closed-form prototype density with `Σ = λ`, written from the covariance
/// `C(t) = [[t, −t²/2], [−t²/2, t³/3]]` and the mean `(ξ₁, ξ₂ − s ξ₁)`.
pub fn prototype_oracle(lambda: f64, x: [f64; 2], t: f64, xi: [f64; 2], tau: f64) -> f64 {
    let s = t - tau;
    if s <= 0.0 {
        return 0.0;
    }
    let (c11, c12, c22) = (lambda * s, -lambda * s * s / 2.0, lambda * s * s * s / 3.0);
    let det = c11 * c22 - c12 * c12;
    let w = [x[0] - xi[0], x[1] - (xi[1] - s * xi[0])];
    let q = (c22 * w[0] * w[0] - 2.0 * c12 * w[0] * w[1] + c11 * w[1] * w[1]) / det;
    (-0.5 * q).exp() / (2.0 * PI * det.sqrt())
}

/// Three-block chain `[2, 1, 1]` with a non-trivial canonical drift.
pub fn chain() -> Group {
    Group::new(
        BlockStructure::new(vec![2, 1, 1]).unwrap(),
        DriftMatrix::from_rows(&[
            vec![0.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 0.0],
            vec![1.0, -0.5, 0.0, 0.0],
            vec![0.0, 0.0, 2.0, 0.0],
        ]),
    )
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
