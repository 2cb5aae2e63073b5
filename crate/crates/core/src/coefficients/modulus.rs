//! Sampled moduli of continuity and Hölder seminorms with respect to the
//! group quasi-distance, and Dini integrals of modulus tables.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CoefficientError, Field};
use crate::group::{Group, GroupPoint};
use crate::numerics::integrate_gl;

/// A space-time box `Π[lo_i, hi_i] × [t0, t1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub t0: f64,
    pub t1: f64,
}

impl SampleBox {
    pub fn contains(&self, z: &GroupPoint) -> bool {
        z.t >= self.t0
            && z.t <= self.t1
            && z.x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| v >= a && v <= b)
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> GroupPoint {
        let x = self.lo.iter().zip(&self.hi).map(|(&a, &b)| a + (b - a) * rng.random::<f64>()).collect();
        GroupPoint::new(x, self.t0 + (self.t1 - self.t0) * rng.random::<f64>())
    }
}

/// Pair count per radius and master seed. A sup over samples is a lower
/// bound for the true sup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSampling {
    pub pairs: usize,
    pub seed: u64,
}

impl Default for PairSampling {
    fn default() -> Self {
        Self { pairs: 100_000, seed: 0 }
    }
}

const CHUNK: usize = 1024;

/// Uniform point of the homogeneous unit ball, by rejection from `[-1,1]^{N+1}`.
fn unit_ball_point(group: &Group, rng: &mut ChaCha8Rng) -> GroupPoint {
    let n = group.dim();
    loop {
        let x = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z = GroupPoint::new(x, rng.random_range(-1.0..1.0));
        if group.hom_norm(&z) < 1.0 {
            return z;
        }
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

/// Sup over sampled pairs with `d(z,w) < r` of `score(|f(z)−f(w)|, d)`.
fn sampled_sup(
    f: &Field,
    group: &Group,
    h: &SampleBox,
    r: f64,
    sampling: PairSampling,
    stream: u64,
    score: impl Fn(f64, f64) -> f64 + Sync,
) -> Result<f64, CoefficientError> {
    let chunks = sampling.pairs.div_ceil(CHUNK);
    let results: Vec<Result<f64, CoefficientError>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
            rng.set_stream(stream.wrapping_mul(1 << 32).wrapping_add(c as u64));
            let count = CHUNK.min(sampling.pairs - c * CHUNK);
            let mut best = 0.0f64;
            for _ in 0..count {
                let z = h.sample(&mut rng);
                let zeta = unit_ball_point(group, &mut rng);
                let rho = r * rng.random::<f64>();
                let step = group.dilate(rho, &zeta);
                let w = group.compose(&z, &step);
                if !h.contains(&w) {
                    continue;
                }
                let d = group.hom_norm(&step);
                if d == 0.0 {
                    continue;
                }
                let diff = max_abs_diff(&f.eval(&z.x, z.t)?, &f.eval(&w.x, w.t)?);
                best = best.max(score(diff, d));
            }
            Ok(best)
        })
        .collect();
    let mut best = 0.0f64;
    for r in results {
        best = best.max(r?);
    }
    Ok(best)
}

/// `ω_f(r)` on each radius (sorted ascending), made non-decreasing by a
/// running max.
pub fn modulus_of_continuity(
    f: &Field,
    group: &Group,
    h: &SampleBox,
    radii: &[f64],
    sampling: PairSampling,
) -> Result<Vec<(f64, f64)>, CoefficientError> {
    let mut radii = radii.to_vec();
    radii.sort_by(f64::total_cmp);
    let mut table = Vec::with_capacity(radii.len());
    let mut running = 0.0f64;
    for (k, &r) in radii.iter().enumerate() {
        running = running.max(sampled_sup(f, group, h, r, sampling, k as u64, |diff, _| diff)?);
        table.push((r, running));
    }
    Ok(table)
}

/// Sampled `sup |f(z)−f(w)| / d(z,w)^α` over pairs with `d < r_max`.
pub fn holder_seminorm(
    f: &Field,
    group: &Group,
    h: &SampleBox,
    alpha: f64,
    r_max: f64,
    sampling: PairSampling,
) -> Result<f64, CoefficientError> {
    sampled_sup(f, group, h, r_max, sampling, u64::MAX >> 1, |diff, d| diff / d.powf(alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiniEstimate {
    pub value: f64,
    pub r_min: f64,
}

/// Trapezoid estimate of `∫_{r_min}^{1} ω(r)/r dr` in the variable `log r`
/// from a table of `(r, ω(r))`; table radii above 1 are ignored and, if the
/// table stops short of 1, its last value is carried to 1.
pub fn dini_integral(table: &[(f64, f64)]) -> DiniEstimate {
    let mut pts: Vec<(f64, f64)> = table.iter().cloned().filter(|&(r, _)| r > 0.0 && r <= 1.0).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.is_empty() {
        return DiniEstimate { value: 0.0, r_min: 1.0 };
    }
    let mut value = 0.0;
    for w in pts.windows(2) {
        value += 0.5 * (w[0].1 + w[1].1) * (w[1].0.ln() - w[0].0.ln());
    }
    let (r_last, w_last) = pts[pts.len() - 1];
    value += w_last * -r_last.ln();
    DiniEstimate { value, r_min: pts[0].0 }
}

/// Dini integrals for `r_min = r_start·2^{-k}`, `k = 0..=halvings`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiniConvergence {
    pub r_mins: Vec<f64>,
    pub integrals: Vec<f64>,
    /// False when the increments do not decay geometrically, the numerical
    /// signature of a divergent integral.
    pub converged: bool,
}

/// Tracks `∫_{r_min}^1 ω(r)/r dr` as `r_min` is halved.
pub fn dini_sequence(omega: impl Fn(f64) -> f64, r_start: f64, halvings: usize) -> DiniConvergence {
    let seg = |a: f64, b: f64| integrate_gl(16, a.ln(), b.ln(), |s| omega(s.exp()));
    let mut value = if r_start < 1.0 { seg(r_start, 1.0) } else { 0.0 };
    let mut r = r_start;
    let mut r_mins = vec![r];
    let mut integrals = vec![value];
    let mut increments = Vec::new();
    for _ in 0..halvings {
        let inc = seg(r / 2.0, r);
        value += inc;
        r /= 2.0;
        increments.push(inc);
        r_mins.push(r);
        integrals.push(value);
    }
    let converged = match increments.as_slice() {
        [.., a, b] => *b <= 1e-14 * value.abs().max(1.0) || *b <= 0.75 * *a,
        _ => true,
    };
    DiniConvergence { r_mins, integrals, converged }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{mollify, Checkerboard, Codomain, Preset, Window};

    fn unit_box() -> SampleBox {
        SampleBox { lo: vec![-1.0, -1.0], hi: vec![1.0, 1.0], t0: 0.0, t1: 1.0 }
    }

    #[test]
    fn constant_field_has_zero_modulus() {
        let f = Field::constant_scalar(Codomain::Scalar, Window::new(0.0, 1.0), 3.0);
        let t = modulus_of_continuity(&f, &Group::prototype(), &unit_box(), &[0.1, 0.2], PairSampling { pairs: 2000, seed: 1 })
            .unwrap();
        assert!(t.iter().all(|&(_, w)| w == 0.0));
        assert_eq!(dini_integral(&t).value, 0.0);
    }

    #[test]
    fn first_coordinate_modulus_is_r() {
        let f = Field::preset(Codomain::Scalar, Window::new(0.0, 1.0), Preset::Coordinate { index: 0 });
        let radii = [0.05, 0.1, 0.2, 0.4];
        let t = modulus_of_continuity(&f, &Group::prototype(), &unit_box(), &radii, PairSampling { pairs: 100_000, seed: 2 })
            .unwrap();
        for (r, w) in t {
            assert!(w <= r && w > 0.9 * r, "r={r} ω={w}");
        }
        let hs = holder_seminorm(&f, &Group::prototype(), &unit_box(), 1.0, 0.5, PairSampling { pairs: 100_000, seed: 3 }).unwrap();
        assert!(hs <= 1.0 + 1e-12 && hs > 0.9, "{hs}");
    }

    #[test]
    fn mollified_checkerboard_modulus_vanishes() {
        let raw = Field::checkerboard(
            Codomain::Scalar,
            Window::new(0.0, 1.0),
            Checkerboard { cell: 0.25, time_cell: None, seed: 4, low: 1.0, high: 2.0 },
        );
        let smooth = mollify(&raw, 0.2).unwrap();
        let g = Group::prototype();
        let h = SampleBox { lo: vec![-0.5, -0.5], hi: vec![0.5, 0.5], t0: 0.2, t1: 0.8 };
        let s = PairSampling { pairs: 3000, seed: 5 };
        let raw_t = modulus_of_continuity(&raw, &g, &h, &[1e-3], s).unwrap();
        let smooth_t = modulus_of_continuity(&smooth, &g, &h, &[1e-3], s).unwrap();
        assert_eq!(raw_t[0].1, 1.0);
        assert!(smooth_t[0].1 < 0.05, "{smooth_t:?}");
    }

    #[test]
    fn dini_of_lipschitz_modulus() {
        let r_min: f64 = 1e-3;
        let table: Vec<(f64, f64)> = (0..=300).map(|k| {
            let r = r_min.powf(1.0 - k as f64 / 300.0);
            (r, r)
        }).collect();
        let d = dini_integral(&table);
        assert!((d.value - (1.0 - r_min)).abs() < 1e-4, "{d:?}");
        assert_eq!(d.r_min, r_min);
    }

    #[test]
    fn dini_divergence_is_flagged() {
        let lip = dini_sequence(|r| r, 0.5, 30);
        assert!(lip.converged);
        assert!((lip.integrals.last().unwrap() - (1.0 - lip.r_mins.last().unwrap())).abs() < 1e-12);
        let log = dini_sequence(|r| 1.0 / (1.0 - r.ln()), 0.5, 30);
        assert!(!log.converged);
        // Analytic antiderivative: log(1 − log r).
        let exact = (1.0 - log.r_mins.last().unwrap().ln()).ln();
        assert!((log.integrals.last().unwrap() - exact).abs() < 1e-10);
        let zero = dini_sequence(|_| 0.0, 0.5, 5);
        assert!(zero.converged && zero.integrals.iter().all(|&v| v == 0.0));
    }
}
