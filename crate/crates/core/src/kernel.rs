//! Exact Gaussian fundamental solutions of the constant-coefficient model
//! operators, the covariance matrix `C(t)`, and quadrature checks built on them.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::group::{Group, GroupPoint};
use crate::numerics::{gauss_hermite, integrate_matrix_adaptive, integrate_matrix_gl, nilpotency_index};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("covariance matrix is not positive definite at t = {t}")]
    NotSpd { t: f64 },
    #[error("diffusion matrix must be {expected}x{expected} and symmetric positive definite")]
    BadDiffusion { expected: usize },
    #[error("quadrature did not converge (last relative change {rel_change:e})")]
    QuadratureUnconverged { rel_change: f64 },
    #[error("intermediate time must satisfy t0 < s < t")]
    BadIntermediateTime,
}

/// `C(t) = ∫₀ᵗ E(s) Σ̄ E(s)ᵀ ds` with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct CovMatrix {
    pub t: f64,
    pub c: DMatrix<f64>,
    pub chol: DMatrix<f64>,
    pub logdet: f64,
}

impl CovMatrix {
    /// `⟨C⁻¹x, x⟩` through a triangular solve.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let v = DVector::from_column_slice(x);
        let w = self.chol.solve_lower_triangular(&v).expect("Cholesky factor has a positive diagonal");
        w.norm_squared()
    }

    /// `C⁻¹x`.
    pub fn solve(&self, x: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(x);
        let w = self.chol.solve_lower_triangular(&v).expect("Cholesky factor has a positive diagonal");
        let u = self.chol.transpose().solve_upper_triangular(&w).expect("Cholesky factor has a positive diagonal");
        u.as_slice().to_vec()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.c.clone().symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Computes `C(t)` for drift `B` (from `group`) and the `m₀×m₀` diffusion
/// matrix `sigma`, zero-padded to `N×N`.
pub fn covariance(group: &Group, t: f64, sigma: &DMatrix<f64>) -> Result<CovMatrix, KernelError> {
    let n = group.dim();
    let m0 = group.structure().m0();
    if sigma.nrows() != m0 || sigma.ncols() != m0 {
        return Err(KernelError::BadDiffusion { expected: m0 });
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(KernelError::NotSpd { t });
    }
    let mut padded = DMatrix::<f64>::zeros(n, n);
    padded.view_mut((0, 0), (m0, m0)).copy_from(sigma);
    let integrand = |s: f64| {
        let e = group.exp_drift(s);
        &e * &padded * e.transpose()
    };
    let c = match nilpotency_index(group.drift().matrix(), 0.0) {
        // E(s) is a polynomial of degree k-1, so the integrand has degree 2k-2.
        Some(k) => integrate_matrix_gl(k + 1, 0.0, t, integrand),
        None => integrate_matrix_adaptive(0.0, t, 1e-12, &integrand),
    };
    let c = (&c + c.transpose()) * 0.5;
    let chol = c.clone().cholesky().ok_or(KernelError::NotSpd { t })?.l();
    let logdet = 2.0 * chol.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    if !logdet.is_finite() {
        return Err(KernelError::NotSpd { t });
    }
    Ok(CovMatrix { t, c, chol, logdet })
}

const MEMO_CAPACITY: usize = 1024;

/// Gaussian fundamental solution of `Σ_{ij<m₀} ½Σ_ij ∂_ij + ⟨Bx,D⟩ − ∂_t`.
///
/// As a function of `z = (x,t)` for a fixed pole `ζ = (ξ,τ)` this is the
/// normal density with mean `E(t−τ)ξ` and covariance `C(t−τ)`, times
/// `e^{−(t−τ) tr B}`.
#[derive(Debug)]
pub struct GaussianKernel {
    group: Group,
    diffusion: DMatrix<f64>,
    memo: Mutex<HashMap<u64, Arc<CovMatrix>>>,
}

impl Clone for GaussianKernel {
    fn clone(&self) -> Self {
        Self { group: self.group.clone(), diffusion: self.diffusion.clone(), memo: Mutex::new(HashMap::new()) }
    }
}

impl GaussianKernel {
    pub fn new(group: Group, diffusion: DMatrix<f64>) -> Result<Self, KernelError> {
        let m0 = group.structure().m0();
        let symmetric = diffusion.nrows() == m0
            && diffusion.ncols() == m0
            && (&diffusion - diffusion.transpose()).amax() <= 1e-12 * diffusion.amax().max(1.0);
        if !symmetric || diffusion.clone().cholesky().is_none() {
            return Err(KernelError::BadDiffusion { expected: m0 });
        }
        Ok(Self { group, diffusion, memo: Mutex::new(HashMap::new()) })
    }

    /// `Γ_K^λ`: covariance `λ C(t)` with `C` built from `A₀ = I`.
    pub fn lambda(group: Group, lambda: f64) -> Result<Self, KernelError> {
        let m0 = group.structure().m0();
        Self::new(group, DMatrix::identity(m0, m0) * lambda)
    }

    /// `Γ_K`, the kernel of `Σ ∂²_{x_i} + ⟨Bx,D⟩ − ∂_t` (the `λ = 2` member).
    pub fn principal(group: Group) -> Result<Self, KernelError> {
        Self::lambda(group, 2.0)
    }

    /// Kernel of `div(A₀ D) + ⟨Bx,D⟩ − ∂_t` with constant `A₀`.
    pub fn divergence_form(group: Group, a0: &DMatrix<f64>) -> Result<Self, KernelError> {
        Self::new(group, a0 * 2.0)
    }

    pub fn group(&self) -> &Group {
        &self.group
    }

    pub fn diffusion(&self) -> &DMatrix<f64> {
        &self.diffusion
    }

    /// `C(t)` for this kernel's diffusion, memoised by the bit pattern of `t`.
    pub fn covariance(&self, t: f64) -> Result<Arc<CovMatrix>, KernelError> {
        let key = t.to_bits();
        if let Some(c) = self.memo.lock().expect("memo poisoned").get(&key) {
            return Ok(c.clone());
        }
        let c = Arc::new(covariance(&self.group, t, &self.diffusion)?);
        let mut memo = self.memo.lock().expect("memo poisoned");
        if memo.len() >= MEMO_CAPACITY {
            memo.clear();
        }
        memo.insert(key, c.clone());
        Ok(c)
    }

    /// `log Γ(z; ζ)`, `-∞` when `t ≤ τ`.
    pub fn log_eval(&self, z: &GroupPoint, zeta: &GroupPoint) -> Result<f64, KernelError> {
        self.log_eval_relative(&self.group.relative(zeta, z))
    }

    /// `log Γ((x,t); 0)`.
    pub fn log_eval_relative(&self, rel: &GroupPoint) -> Result<f64, KernelError> {
        if rel.t <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        let cov = self.covariance(rel.t)?;
        let n = rel.dim() as f64;
        Ok(-0.5 * n * (2.0 * PI).ln() - 0.5 * cov.logdet - 0.5 * cov.quad_form(&rel.x) - rel.t * self.group.drift().trace())
    }

    /// `Γ(z; ζ)`; exactly zero for `t ≤ τ`.
    pub fn eval(&self, z: &GroupPoint, zeta: &GroupPoint) -> Result<f64, KernelError> {
        Ok(self.log_eval(z, zeta)?.exp())
    }

    pub fn eval_relative(&self, rel: &GroupPoint) -> Result<f64, KernelError> {
        Ok(self.log_eval_relative(rel)?.exp())
    }
}

/// Density of `(V_t, Y_t)` for `V = v₀ + σW`, `Y = y₀ + ∫V ds`.
pub fn prototype_density(v: f64, y: f64, t: f64, v0: f64, y0: f64, sigma: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let s2 = sigma * sigma;
    let (c11, c12, c22) = (s2 * t, s2 * t * t / 2.0, s2 * t * t * t / 3.0);
    let det = c11 * c22 - c12 * c12;
    let a = v - v0;
    let b = y - y0 - t * v0;
    let q = (c22 * a * a - 2.0 * c12 * a * b + c11 * b * b) / det;
    (-0.5 * q).exp() / (2.0 * PI * det.sqrt())
}

/// The 1934 closed form exactly as printed, kept only to measure its
/// distance from [`prototype_density`].
pub fn kolmogorov_1934_verbatim(v: f64, y: f64, t: f64, v0: f64, y0: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let a = v - v0;
    let c = y - y0 - t * v0;
    let b = y - y0 - t * y0;
    let expo = -(a * a / t) - 3.0 * a * c / (t * t) - 3.0 * b * b / (t * t * t);
    3f64.sqrt() / (2.0 * PI * t * t) * expo.exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reproduction {
    pub lhs: f64,
    pub rhs: f64,
    pub rel_err: f64,
    pub nodes_per_axis: usize,
}

/// Checks `Γ(x,t;y,t₀) = ∫ Γ(x,t;ξ,s) Γ(ξ,s;y,t₀) dξ` by Gauss–Hermite
/// quadrature centred and scaled by the Gaussian product in `ξ`.
pub fn reproduction_check(
    kernel: &GaussianKernel,
    x: &[f64],
    t: f64,
    y: &[f64],
    t0: f64,
    s: f64,
) -> Result<Reproduction, KernelError> {
    if !(t0 < s && s < t) {
        return Err(KernelError::BadIntermediateTime);
    }
    let g = kernel.group();
    let n = g.dim();
    let c1 = kernel.covariance(t - s)?;
    let c2 = kernel.covariance(s - t0)?;
    // ξ-precision of the first factor is EᵀC₁⁻¹E with mean E(s−t)x.
    let e = g.exp_drift(t - s);
    let c1_inv_e = DMatrix::from_fn(n, n, |i, j| c1.solve(e.column(j).as_slice())[i]);
    let p1 = e.transpose() * c1_inv_e;
    let m1 = DVector::from_vec(g.exp_drift_apply(s - t, x));
    let c2_inv = DMatrix::from_fn(n, n, |i, j| {
        let mut ej = vec![0.0; n];
        ej[j] = 1.0;
        c2.solve(&ej)[i]
    });
    let m2 = DVector::from_vec(g.exp_drift_apply(s - t0, y));
    let p = &p1 + &c2_inv;
    let p = (&p + p.transpose()) * 0.5;
    let chol = p.clone().cholesky().ok_or(KernelError::NotSpd { t: s })?;
    let m = chol.solve(&(&p1 * &m1 + &c2_inv * &m2));
    let l = chol.l();
    let lt = l.transpose();
    let log_jac = 0.5 * n as f64 * 2f64.ln() - l.diagonal().iter().map(|d| d.ln()).sum::<f64>();

    let pole = GroupPoint::new(y.to_vec(), t0);
    let target = GroupPoint::new(x.to_vec(), t);
    let integral = |nodes: usize| -> Result<f64, KernelError> {
        let rule = gauss_hermite(nodes);
        let total = nodes.pow(n as u32);
        let mut acc = 0.0;
        let mut idx = vec![0usize; n];
        for _ in 0..total {
            let u = DVector::from_iterator(n, idx.iter().map(|&k| rule[k].0));
            let w: f64 = idx.iter().map(|&k| rule[k].1).product();
            let shift = lt.solve_upper_triangular(&(&u * 2f64.sqrt())).expect("positive diagonal");
            let xi = GroupPoint::new((&m + shift).as_slice().to_vec(), s);
            let log_f = kernel.log_eval(&target, &xi)? + kernel.log_eval(&xi, &pole)?;
            acc += w * (log_f + u.norm_squared() + log_jac).exp();
            for slot in idx.iter_mut() {
                *slot += 1;
                if *slot < nodes {
                    break;
                }
                *slot = 0;
            }
        }
        Ok(acc)
    };
    let lhs = kernel.eval(&target, &pole)?;
    let mut nodes = 8;
    let mut prev = integral(nodes)?;
    loop {
        let next = integral(2 * nodes)?;
        let change = (next - prev).abs() / next.abs().max(f64::MIN_POSITIVE);
        nodes *= 2;
        if change <= 1e-6 {
            let rel_err = (lhs - next).abs() / lhs.abs().max(f64::MIN_POSITIVE);
            return Ok(Reproduction { lhs, rhs: next, rel_err, nodes_per_axis: nodes });
        }
        if nodes >= 64 {
            return Err(KernelError::QuadratureUnconverged { rel_change: change });
        }
        prev = next;
    }
}

/// Which of the two envelope shapes [`gaussian_envelope`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeForm {
    /// `exp(−|δ⁰_{τ^{-1/2}} w|² / c)`.
    Upper,
    /// `exp(−c ⟨C⁻¹(τ) w, w⟩)`.
    Lower,
}

/// `c τ^{−Q/2} exp(…)` with `τ = t − t₀` and `w = y − e^{τB}x`; zero for `τ ≤ 0`.
pub fn gaussian_envelope(
    group: &Group,
    x: &[f64],
    t: f64,
    y: &[f64],
    t0: f64,
    c: f64,
    form: EnvelopeForm,
) -> Result<f64, KernelError> {
    let tau = t - t0;
    if tau <= 0.0 {
        return Ok(0.0);
    }
    let ex = group.exp_drift_apply(-tau, x);
    let w: Vec<f64> = y.iter().zip(&ex).map(|(a, b)| a - b).collect();
    let expo = match form {
        EnvelopeForm::Upper => {
            let d = group.dilate_space(tau.sqrt().recip(), &w);
            -d.iter().map(|v| v * v).sum::<f64>() / c
        }
        EnvelopeForm::Lower => {
            let m0 = group.structure().m0();
            let cov = covariance(group, tau, &DMatrix::identity(m0, m0))?;
            -c * cov.quad_form(&w)
        }
    };
    Ok(c * (-(group.q() as f64) / 2.0 * tau.ln() + expo).exp())
}
