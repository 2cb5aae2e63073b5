//! Euler–Maruyama simulation of the diffusion behind `𝓛`, histogram
//! densities and the `D_R` mass/measure estimates.

use std::path::Path;

use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::coefficients::CoefficientError;
use crate::group::{powi_u, Group, GroupPoint};
use crate::kernel::{GaussianKernel, KernelError};
use crate::numerics::{gauss_legendre, ols_slope};
use crate::spec::Operator;

/// Sign of the linear drift: `dX = DRIFT_SIGN · B X dt + …`.
///
/// The kernel's mean at time `t` is `E(t − t₀)x₀ = exp(−(t − t₀)B)x₀`, so the
/// process runs along `−Bx`. Guarded by the calibration test below.
pub const DRIFT_SIGN: f64 = -1.0;

/// Paths handled per parallel work item.
const CHUNK: usize = 4096;

/// Minimum ensemble size for density estimates.
pub const MIN_DENSITY_PATHS: usize = 10_000;

#[derive(Debug, Error)]
pub enum McError {
    #[error("time step {dt} exceeds the sanity bound {bound}")]
    StepRejected { dt: f64, bound: f64 },
    #[error("non-finite state on path {path}")]
    NonFinite { path: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{got} paths, at least {need} required")]
    TooFewPaths { got: usize, need: usize },
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Coefficient(#[from] CoefficientError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
}

/// Enough to regenerate an ensemble bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub paths: usize,
    pub dt: f64,
    pub scheme: String,
    /// Description of the random stream layout.
    pub streams: String,
    pub t0: f64,
    pub x0: Vec<f64>,
}

/// Terminal states (row-major, `paths × N`) at each query time, with
/// Feynman–Kac weights when the operator has a reaction term.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub dim: usize,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub weights: Option<Vec<Vec<f64>>>,
    pub provenance: Provenance,
}

/// Sanity bound on the step: `min(t₁ − t₀, 0.1/‖B‖)`.
pub fn step_bound(group: &Group, horizon: f64) -> f64 {
    let norm = group.drift().matrix().norm();
    if norm > 0.0 {
        horizon.min(0.1 / norm)
    } else {
        horizon
    }
}

enum Pathwise {
    Constant(Vec<f64>),
    Varying,
}

/// Simulates `paths` trajectories from `(x0, t0)` and records them at the
/// increasing `times` (all `> t0`).
///
/// `dX = (−BX − b + a) dt + σ dW` with noise in the first `m₀` coordinates
/// and `σσᵀ = 2A₀`; coefficients are evaluated at the current state (Itô).
/// Path `p` draws from ChaCha8 stream `p` of `seed`, so the ensemble does
/// not depend on the thread count or chunking.
pub fn simulate(op: &Operator, x0: &[f64], t0: f64, times: &[f64], cfg: &McConfig) -> Result<PathEnsemble, McError> {
    let group = &op.group;
    let n = group.dim();
    let m0 = group.structure().m0();
    if x0.len() != n {
        return Err(McError::InvalidConfig(format!("start point has {} coordinates, expected {n}", x0.len())));
    }
    if cfg.paths == 0 || !(cfg.dt > 0.0) {
        return Err(McError::InvalidConfig("paths ≥ 1 and dt > 0 required".into()));
    }
    if times.is_empty() || times[0] <= t0 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(McError::InvalidConfig("query times must be increasing and after t0".into()));
    }
    let bound = step_bound(group, times[times.len() - 1] - t0);
    if cfg.dt > bound * (1.0 + 1e-12) {
        return Err(McError::StepRejected { dt: cfg.dt, bound });
    }
    // Equal steps within each gap, none longer than cfg.dt.
    let mut schedule = Vec::with_capacity(times.len());
    let mut prev = t0;
    for &t in times {
        let steps = ((t - prev) / cfg.dt * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        schedule.push((steps, (t - prev) / steps as f64));
        prev = t;
    }
    let c = &op.coefficients;
    let sigma = if c.a0.is_constant() {
        Pathwise::Constant(noise_factor(&c.a0.eval_matrix(x0, t0)?)?.as_slice().to_vec())
    } else {
        Pathwise::Varying
    };
    let drift_const = |f: &Option<crate::coefficients::Field>| -> Result<Option<Pathwise>, McError> {
        Ok(match f {
            None => None,
            Some(f) if f.is_constant() => Some(Pathwise::Constant(f.eval(x0, t0)?)),
            Some(_) => Some(Pathwise::Varying),
        })
    };
    let b_mode = drift_const(&c.b)?;
    let a_mode = drift_const(&c.a)?;
    let c_mode = drift_const(&c.c)?;
    let bmat = group.drift().matrix();
    let nonzero: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| bmat[(i, j)] != 0.0)
        .map(|(i, j)| (i, j, DRIFT_SIGN * bmat[(i, j)]))
        .collect();

    let chunks: Vec<Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), McError>> = (0..cfg.paths.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let lo = chunk * CHUNK;
            let hi = (lo + CHUNK).min(cfg.paths);
            let mut states = vec![Vec::with_capacity((hi - lo) * n); times.len()];
            let mut weights = vec![Vec::with_capacity(hi - lo); times.len()];
            let mut x = vec![0.0; n];
            let mut dx = vec![0.0; n];
            let mut xi = vec![0.0; m0];
            let mut buf = vec![0.0; m0.max(1)];
            let mut sig = vec![0.0; m0 * m0];
            for path in lo..hi {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(path as u64);
                x.copy_from_slice(x0);
                let mut t = t0;
                let mut log_w = 0.0;
                for (slot, &(steps, h)) in schedule.iter().enumerate() {
                    let sq = h.sqrt();
                    for _ in 0..steps {
                        dx.iter_mut().for_each(|v| *v = 0.0);
                        for &(i, j, v) in &nonzero {
                            dx[i] += v * x[j] * h;
                        }
                        for (mode, field, sign) in [(&b_mode, &c.b, -1.0), (&a_mode, &c.a, 1.0)] {
                            match mode {
                                None => {}
                                Some(Pathwise::Constant(v)) => {
                                    for i in 0..m0 {
                                        dx[i] += sign * v[i] * h;
                                    }
                                }
                                Some(Pathwise::Varying) => {
                                    field.as_ref().expect("mode implies field").eval_into(&x, t, &mut buf)?;
                                    for i in 0..m0 {
                                        dx[i] += sign * buf[i] * h;
                                    }
                                }
                            }
                        }
                        match &c_mode {
                            None => {}
                            Some(Pathwise::Constant(v)) => log_w += v[0] * h,
                            Some(Pathwise::Varying) => {
                                log_w += c.c.as_ref().expect("mode implies field").eval_scalar(&x, t)? * h
                            }
                        }
                        let s: &[f64] = match &sigma {
                            Pathwise::Constant(s) => s,
                            Pathwise::Varying => {
                                let f = noise_factor(&c.a0.eval_matrix(&x, t)?)?;
                                sig.copy_from_slice(f.as_slice());
                                &sig
                            }
                        };
                        for v in xi.iter_mut() {
                            *v = rng.sample::<f64, _>(StandardNormal) * sq;
                        }
                        // Column-major lower-triangular factor.
                        for i in 0..m0 {
                            let mut acc = 0.0;
                            for j in 0..=i {
                                acc += s[j * m0 + i] * xi[j];
                            }
                            dx[i] += acc;
                        }
                        for i in 0..n {
                            x[i] += dx[i];
                        }
                        t += h;
                    }
                    if x.iter().any(|v| !v.is_finite()) || !log_w.is_finite() {
                        return Err(McError::NonFinite { path });
                    }
                    states[slot].extend_from_slice(&x);
                    weights[slot].push(log_w.exp());
                }
            }
            Ok((states, weights))
        })
        .collect();

    let mut states = vec![Vec::with_capacity(cfg.paths * n); times.len()];
    let mut weights = vec![Vec::with_capacity(cfg.paths); times.len()];
    for chunk in chunks {
        let (s, w) = chunk?;
        for (k, (s, w)) in s.into_iter().zip(w).enumerate() {
            states[k].extend(s);
            weights[k].extend(w);
        }
    }
    Ok(PathEnsemble {
        dim: n,
        times: times.to_vec(),
        states,
        weights: c.c.as_ref().map(|_| weights),
        provenance: Provenance {
            seed: cfg.seed,
            paths: cfg.paths,
            dt: cfg.dt,
            scheme: "euler-maruyama".into(),
            streams: "ChaCha8, seed_from_u64(seed), stream = path index".into(),
            t0,
            x0: x0.to_vec(),
        },
    })
}

/// Lower Cholesky factor of `2A₀`.
fn noise_factor(a0: &DMatrix<f64>) -> Result<DMatrix<f64>, McError> {
    (a0 * 2.0)
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| McError::InvalidConfig("A0 is not positive definite".into()))
}

/// Weighted sample mean and covariance with standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub mean_se: Vec<f64>,
    /// Row-major `N × N`.
    pub cov: Vec<f64>,
    pub cov_se: Vec<f64>,
}

impl PathEnsemble {
    pub fn paths(&self) -> usize {
        self.provenance.paths
    }

    pub fn state(&self, k: usize, path: usize) -> &[f64] {
        &self.states[k][path * self.dim..(path + 1) * self.dim]
    }

    /// Sample moments at query slot `k` (unweighted).
    pub fn moments(&self, k: usize) -> Moments {
        let n = self.dim;
        let p = self.paths() as f64;
        let mut mean = vec![0.0; n];
        for path in 0..self.paths() {
            for (m, v) in mean.iter_mut().zip(self.state(k, path)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= p);
        let mut cov = vec![0.0; n * n];
        let mut sq = vec![0.0; n * n];
        for path in 0..self.paths() {
            let s = self.state(k, path);
            for i in 0..n {
                for j in 0..n {
                    let prod = (s[i] - mean[i]) * (s[j] - mean[j]);
                    cov[i * n + j] += prod;
                    sq[i * n + j] += prod * prod;
                }
            }
        }
        let cov: Vec<f64> = cov.iter().map(|c| c / (p - 1.0)).collect();
        let cov_se = cov.iter().zip(&sq).map(|(c, s)| ((s / p - c * c) / p).max(0.0).sqrt()).collect();
        let mean_se = (0..n).map(|i| (cov[i * n + i] / p).sqrt()).collect();
        Moments { mean, mean_se, cov, cov_se }
    }

    /// Writes `<stem>.json` (provenance and times) and `<stem>.bin`
    /// (little-endian f64: states per time, then weights if any).
    pub fn save(&self, stem: &Path) -> Result<(), McError> {
        let header = serde_json::json!({
            "dim": self.dim,
            "times": self.times,
            "weighted": self.weights.is_some(),
            "provenance": self.provenance,
            "layout": "per time: paths × dim row-major states; then per time: weights",
        });
        let io = |e: std::io::Error| McError::Io(e.to_string());
        std::fs::write(stem.with_extension("json"), serde_json::to_string_pretty(&header).expect("json") + "\n")
            .map_err(io)?;
        let mut bytes = Vec::new();
        for s in &self.states {
            s.iter().for_each(|v| bytes.extend_from_slice(&v.to_le_bytes()));
        }
        if let Some(w) = &self.weights {
            for s in w {
                s.iter().for_each(|v| bytes.extend_from_slice(&v.to_le_bytes()));
            }
        }
        std::fs::write(stem.with_extension("bin"), bytes).map_err(io)
    }
}

/// Histogram layout: per-axis range and bin count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bins {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Bins {
    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self, d: usize) -> f64 {
        (self.hi[d] - self.lo[d]) / self.counts[d] as f64
    }

    pub fn volume(&self) -> f64 {
        (0..self.counts.len()).map(|d| self.width(d)).product()
    }

    /// Row-major bin index of `x`, or `None` outside the range.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let mut flat = 0;
        for d in 0..self.counts.len() {
            let s = (x[d] - self.lo[d]) / self.width(d);
            if !(s >= 0.0 && s < self.counts[d] as f64) {
                return None;
            }
            flat = flat * self.counts[d] + s as usize;
        }
        Some(flat)
    }

    /// Lower corner of bin `flat`.
    pub fn corner(&self, mut flat: usize) -> Vec<f64> {
        let mut idx = vec![0; self.counts.len()];
        for d in (0..self.counts.len()).rev() {
            idx[d] = flat % self.counts[d];
            flat /= self.counts[d];
        }
        idx.iter().enumerate().map(|(d, &i)| self.lo[d] + i as f64 * self.width(d)).collect()
    }

    pub fn center(&self, flat: usize) -> Vec<f64> {
        self.corner(flat).iter().enumerate().map(|(d, c)| c + 0.5 * self.width(d)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bins: Bins,
    pub time: f64,
    /// Density per bin, normalized over in-range paths (mass exactly 1).
    pub density: Vec<f64>,
    /// Poisson standard error of each density value.
    pub se: Vec<f64>,
    /// Raw (weighted) counts.
    pub counts: Vec<f64>,
    pub in_range: f64,
    /// Fraction of the total (weighted) mass that fell outside the bins.
    pub outside_fraction: f64,
    /// Bins with no samples.
    pub empty_bins: Vec<usize>,
}

/// Normalized histogram of the ensemble at slot `k`. With `smooth`, one
/// `[1, 2, 1]/4` pass per axis is applied to counts before normalizing.
pub fn density_estimate(ens: &PathEnsemble, k: usize, bins: &Bins, smooth: bool) -> Result<Histogram, McError> {
    if ens.paths() < MIN_DENSITY_PATHS {
        return Err(McError::TooFewPaths { got: ens.paths(), need: MIN_DENSITY_PATHS });
    }
    if bins.counts.len() != ens.dim || bins.counts.contains(&0) {
        return Err(McError::InvalidConfig(format!("need {} positive bin counts", ens.dim)));
    }
    let mut counts = vec![0.0; bins.len()];
    let mut sq = vec![0.0; bins.len()];
    let mut total = 0.0;
    for path in 0..ens.paths() {
        let w = ens.weights.as_ref().map_or(1.0, |w| w[k][path]);
        total += w;
        if let Some(b) = bins.locate(ens.state(k, path)) {
            counts[b] += w;
            sq[b] += w * w;
        }
    }
    if smooth {
        counts = smooth_counts(&counts, &bins.counts);
        sq = smooth_counts(&sq, &bins.counts);
    }
    let in_range: f64 = counts.iter().sum();
    let vol = bins.volume();
    let density = counts.iter().map(|c| c / (in_range * vol)).collect();
    let se = sq.iter().map(|s| s.sqrt() / (in_range * vol)).collect();
    let empty_bins = counts.iter().enumerate().filter(|(_, &c)| c == 0.0).map(|(i, _)| i).collect();
    Ok(Histogram {
        bins: bins.clone(),
        time: ens.times[k],
        density,
        se,
        counts,
        in_range,
        outside_fraction: 1.0 - in_range / total,
        empty_bins,
    })
}

fn smooth_counts(v: &[f64], shape: &[usize]) -> Vec<f64> {
    let mut cur = v.to_vec();
    let mut stride = 1;
    for d in (0..shape.len()).rev() {
        let n = shape[d];
        let mut next = cur.clone();
        for (flat, out) in next.iter_mut().enumerate() {
            let i = (flat / stride) % n;
            let left = if i > 0 { cur[flat - stride] } else { cur[flat] };
            let right = if i + 1 < n { cur[flat + stride] } else { cur[flat] };
            *out = 0.25 * left + 0.5 * cur[flat] + 0.25 * right;
        }
        cur = next;
        stride *= n;
    }
    cur
}

/// Histogram against an exact kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelComparison {
    pub occupied: usize,
    /// Occupied bins whose density is within 3 standard errors of the bin-averaged kernel.
    pub within_3se: usize,
    pub fraction_within: f64,
    pub chi2: f64,
    pub dof: usize,
    /// `P(χ²_dof ≤ chi2)`.
    pub cdf: f64,
}

/// Compares `hist` with the bin averages of `kernel(·, hist.time; pole)`,
/// renormalized by the kernel mass inside the bins. The χ² statistic uses
/// bins with expected count ≥ 5.
pub fn compare_with_kernel(hist: &Histogram, kernel: &GaussianKernel, pole: &GroupPoint) -> Result<KernelComparison, McError> {
    let rule = gauss_legendre(4);
    let dim = hist.bins.counts.len();
    let nodes = rule.len().pow(dim as u32);
    let mut expected = vec![0.0; hist.bins.len()];
    for (b, e) in expected.iter_mut().enumerate() {
        let corner = hist.bins.corner(b);
        let mut acc = 0.0;
        for q in 0..nodes {
            let mut rem = q;
            let mut x = vec![0.0; dim];
            let mut w = 1.0;
            for d in 0..dim {
                let (node, weight) = rule[rem % rule.len()];
                rem /= rule.len();
                let width = hist.bins.width(d);
                x[d] = corner[d] + 0.5 * width * (node + 1.0);
                w *= 0.5 * weight;
            }
            acc += w * kernel.eval(&GroupPoint::new(x, hist.time), pole)?;
        }
        *e = acc;
    }
    let mass: f64 = expected.iter().sum::<f64>() * hist.bins.volume();
    let mut occupied = 0;
    let mut within = 0;
    let mut chi2 = 0.0;
    let mut used = 0usize;
    for b in 0..expected.len() {
        let exp_density = expected[b] / mass;
        if hist.counts[b] > 0.0 {
            occupied += 1;
            if (hist.density[b] - exp_density).abs() <= 3.0 * hist.se[b] {
                within += 1;
            }
        }
        let exp_count = exp_density * hist.bins.volume() * hist.in_range;
        if exp_count >= 5.0 {
            chi2 += (hist.counts[b] - exp_count).powi(2) / exp_count;
            used += 1;
        }
    }
    let dof = used.saturating_sub(1).max(1);
    let cdf = ChiSquared::new(dof as f64).map(|d| d.cdf(chi2)).unwrap_or(f64::NAN);
    Ok(KernelComparison {
        occupied,
        within_3se: within,
        fraction_within: within as f64 / occupied.max(1) as f64,
        chi2,
        dof,
        cdf,
    })
}

/// `|δ⁰_{τ^{-1/2}}(y − e^{τB}x)|`, the scaled distance defining `D_R`.
pub fn scaled_offset(group: &Group, y: &[f64], tau: f64, x: &[f64]) -> f64 {
    let ex = group.exp_drift_apply(-tau, x);
    let w: Vec<f64> = y.iter().zip(&ex).map(|(a, b)| a - b).collect();
    group.dilate_space(1.0 / tau.sqrt(), &w).iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassEstimate {
    /// Fraction of (weighted) mass in `D_R`.
    pub fraction: f64,
    pub se: f64,
    /// Mean Feynman–Kac weight (1 without reaction).
    pub total_mass: f64,
    /// `−ln(total_mass)/(t − t₀)`, the fitted exponential decay rate.
    pub decay_rate: f64,
}

/// Fraction of paths started at `y` whose state at slot `k` lies in `D_R`.
pub fn mass_in_dr_ensemble(group: &Group, ens: &PathEnsemble, k: usize, r: f64) -> MassEstimate {
    let y = &ens.provenance.x0;
    let tau = ens.times[k] - ens.provenance.t0;
    let p = ens.paths();
    let mut inside = 0.0;
    let mut inside_sq = 0.0;
    let mut total = 0.0;
    for path in 0..p {
        let w = ens.weights.as_ref().map_or(1.0, |w| w[k][path]);
        total += w;
        if scaled_offset(group, y, tau, ens.state(k, path)) <= r {
            inside += w;
            inside_sq += w * w;
        }
    }
    let fraction = inside / total;
    let total_mass = total / p as f64;
    let se = if ens.weights.is_some() {
        (inside_sq / (total * total) - fraction * fraction / p as f64).max(0.0).sqrt()
    } else {
        (fraction * (1.0 - fraction) / p as f64).sqrt()
    };
    MassEstimate { fraction, se, total_mass, decay_rate: -total_mass.ln() / tau }
}

/// `∫_{D_R} Γ(x, t; y, t₀) dx` for a constant-coefficient kernel.
///
/// With `x = E(τ)(y − δ⁰_{√τ} w)` the integrand becomes a centred Gaussian
/// in `w` whose covariance does not depend on `τ`, integrated over `|w| ≤ R`
/// by nested Gauss–Legendre chords.
pub fn mass_in_dr_kernel(kernel: &GaussianKernel, tau: f64, r: f64) -> Result<f64, McError> {
    let group = kernel.group();
    let n = group.dim();
    let cov = kernel.covariance(tau)?;
    // w = −δ⁰_{τ^{-1/2}} E(−τ) (x − E(τ)y), x − E(τ)y ~ N(0, C(τ)).
    let e = group.exp_drift(-tau);
    let alpha = group.structure().alpha();
    let d = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 / powi_u(tau.sqrt(), alpha[i]) } else { 0.0 });
    let m = &d * &e;
    let s = &m * &cov.c * m.transpose();
    let chol = s.clone().cholesky().ok_or(KernelError::NotSpd { t: tau })?;
    let s_inv = chol.inverse();
    let norm = 1.0 / ((2.0 * std::f64::consts::PI).powf(n as f64 / 2.0) * s.determinant().sqrt());
    let spread = s.symmetric_eigen().eigenvalues.max().sqrt();
    let radius = r.min(12.0 * spread);
    let density = |w: &[f64]| -> f64 {
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                q += w[i] * s_inv[(i, j)] * w[j];
            }
        }
        norm * (-0.5 * q).exp()
    };
    let mut w = vec![0.0; n];
    Ok(ball_integral(&density, n, 0, radius * radius, &mut w))
}

fn ball_integral(f: &dyn Fn(&[f64]) -> f64, n: usize, d: usize, rem: f64, w: &mut Vec<f64>) -> f64 {
    if d == n {
        return f(w);
    }
    let half = rem.max(0.0).sqrt();
    if half == 0.0 {
        return 0.0;
    }
    let rule = gauss_legendre(16);
    let panels = 8;
    let mut acc = 0.0;
    for p in 0..panels {
        let a = -half + 2.0 * half * p as f64 / panels as f64;
        let b = a + 2.0 * half / panels as f64;
        for &(x, wt) in rule.iter() {
            let v = 0.5 * (a + b) + 0.5 * (b - a) * x;
            w[d] = v;
            acc += 0.5 * (b - a) * wt * ball_integral(f, n, d + 1, rem - v * v, w);
        }
    }
    w[d] = 0.0;
    acc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrMeasure {
    pub tau: f64,
    pub estimate: f64,
    pub se: f64,
    /// `τ^{Q/2} · |B_R|`, the value implied by the change of variables.
    pub exact: f64,
}

/// Monte-Carlo volume of `D_R = {ξ : |δ⁰_{τ^{-1/2}}(y − e^{τB}ξ)| ≤ R}`,
/// sampling the bounding box of `E(τ)(y − [−Rτ^{α/2}, Rτ^{α/2}])`.
pub fn measure_dr(group: &Group, y: &[f64], tau: f64, r: f64, trials: usize, seed: u64) -> DrMeasure {
    let n = group.dim();
    let alpha = group.structure().alpha();
    let e = group.exp_drift(tau);
    let centre = group.exp_drift_apply(tau, y);
    let half: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| e[(i, j)].abs() * r * powi_u(tau.sqrt(), alpha[j])).sum())
        .collect();
    let box_volume: f64 = half.iter().map(|h| 2.0 * h).product();
    let hits: usize = (0..trials.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk as u64);
            let count = CHUNK.min(trials - chunk * CHUNK);
            let mut xi = vec![0.0; n];
            (0..count)
                .filter(|_| {
                    for i in 0..n {
                        xi[i] = centre[i] + half[i] * rng.random_range(-1.0..1.0);
                    }
                    scaled_offset(group, y, tau, &xi) <= r
                })
                .count()
        })
        .sum();
    let p = hits as f64 / trials as f64;
    let exact = powi_u(tau.sqrt(), group.q() as u32) * crate::group::unit_ball_volume(n) * r.powi(n as i32);
    DrMeasure { tau, estimate: p * box_volume, se: (p * (1.0 - p) / trials as f64).sqrt() * box_volume, exact }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrScaling {
    pub measures: Vec<DrMeasure>,
    /// OLS slope of `log meas(D_R)` against `log τ`.
    pub slope: f64,
}

pub fn measure_dr_scaling(group: &Group, y: &[f64], taus: &[f64], r: f64, trials: usize, seed: u64) -> DrScaling {
    let measures: Vec<DrMeasure> =
        taus.iter().enumerate().map(|(k, &tau)| measure_dr(group, y, tau, r, trials, seed.wrapping_add(k as u64))).collect();
    let lx: Vec<f64> = taus.iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = measures.iter().map(|m| m.estimate.ln()).collect();
    DrScaling { slope: ols_slope(&lx, &ly), measures }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::Window;
    use crate::spec::OperatorSpec;

    fn prototype(a0: f64) -> Operator {
        OperatorSpec::prototype(a0, Window::new(0.0, 2.0)).resolve(Path::new(".")).unwrap()
    }

    #[test]
    fn vanishing_noise_follows_the_drift_flow() {
        let op = prototype(1e-30);
        let ens = simulate(&op, &[0.7, -0.3], 0.0, &[1.0], &McConfig { paths: 4, dt: 0.01, seed: 1 }).unwrap();
        let flow = op.group.exp_drift_apply(1.0, &[0.7, -0.3]);
        for p in 0..4 {
            for (a, b) in ens.state(0, p).iter().zip(&flow) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn drift_sign_calibration() {
        // Only DRIFT_SIGN = −1 reproduces the kernel mean E(t)x₀: with the
        // opposite sign the y-mean would be y₀ + t v₀ instead of y₀ − t v₀.
        let op = prototype(1.0);
        let x0 = [1.0, 0.5];
        let ens = simulate(&op, &x0, 0.0, &[1.0], &McConfig { paths: 20_000, dt: 0.01, seed: 3 }).unwrap();
        let m = ens.moments(0);
        let kernel_mean = op.group.exp_drift_apply(1.0, &x0);
        let flipped = [x0[0], x0[1] + x0[0]];
        assert!((m.mean[1] - kernel_mean[1]).abs() < 4.0 * m.mean_se[1]);
        assert!((m.mean[1] - flipped[1]).abs() > 10.0 * m.mean_se[1]);
    }

    #[test]
    fn ensembles_are_reproducible_and_prefix_stable() {
        let op = prototype(1.0);
        let cfg = McConfig { paths: 5000, dt: 0.05, seed: 9 };
        let a = simulate(&op, &[0.0, 0.0], 0.0, &[0.5, 1.0], &cfg).unwrap();
        let b = simulate(&op, &[0.0, 0.0], 0.0, &[0.5, 1.0], &cfg).unwrap();
        assert_eq!(a, b);
        let small = simulate(&op, &[0.0, 0.0], 0.0, &[0.5, 1.0], &McConfig { paths: 100, ..cfg }).unwrap();
        assert_eq!(&a.states[1][..200], &small.states[1][..]);
    }

    #[test]
    fn step_bound_is_enforced() {
        let op = prototype(1.0);
        let r = simulate(&op, &[0.0, 0.0], 0.0, &[1.0], &McConfig { paths: 1, dt: 0.5, seed: 0 });
        assert!(matches!(r, Err(McError::StepRejected { .. })));
    }

    #[test]
    fn histogram_mass_is_one() {
        let op = prototype(1.0);
        let ens = simulate(&op, &[0.0, 0.0], 0.0, &[1.0], &McConfig { paths: 20_000, dt: 0.05, seed: 4 }).unwrap();
        let bins = Bins { lo: vec![-4.0, -3.0], hi: vec![4.0, 3.0], counts: vec![20, 20] };
        let h = density_estimate(&ens, 0, &bins, false).unwrap();
        let mass: f64 = h.density.iter().sum::<f64>() * bins.volume();
        assert!((mass - 1.0).abs() < 1e-12);
        let s = density_estimate(&ens, 0, &bins, true).unwrap();
        assert!((s.density.iter().sum::<f64>() * bins.volume() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_mass_in_dr() {
        let k = GaussianKernel::divergence_form(Group::prototype(), &DMatrix::identity(1, 1)).unwrap();
        let big = mass_in_dr_kernel(&k, 0.5, 1e6).unwrap();
        assert!((big - 1.0).abs() < 1e-10, "{big}");
        let mut prev = 0.0;
        for r in [0.5, 1.0, 2.0, 3.0] {
            let m = mass_in_dr_kernel(&k, 0.5, r).unwrap();
            assert!(m > prev);
            for tau in [0.25, 1.0] {
                assert!((mass_in_dr_kernel(&k, tau, r).unwrap() - m).abs() < 1e-12);
            }
            prev = m;
        }
    }

    #[test]
    fn measure_dr_heat_and_translation() {
        let g = Group::heat(1);
        let s = measure_dr_scaling(&g, &[0.0], &[0.25, 0.5, 1.0], 1.0, 20_000, 1);
        assert!((s.slope - 0.5).abs() < 1e-9, "{}", s.slope);
        let p = Group::prototype();
        let a = measure_dr(&p, &[0.0, 0.0], 0.5, 1.0, 50_000, 7);
        let b = measure_dr(&p, &[3.0, -2.0], 0.5, 1.0, 50_000, 7);
        assert!((a.estimate - b.estimate).abs() < 1e-9 * a.estimate);
        assert!((a.estimate - a.exact).abs() < 4.0 * a.se);
    }
}
