//! Empirical checks of the Gaussian sandwich and the Harnack inequalities:
//! fitted constants, discrete sup/inf over cylinders and cones, and
//! violation sets.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::group::{powi_u, Cone, Group, GroupPoint};
use crate::kernel::{covariance, GaussianKernel, KernelError};
use crate::numerics::fmt_f64;
use crate::pde::{GridSolution, PdeError};

/// Fewest grid nodes accepted inside a discrete sup/inf set.
pub const MIN_NODES: usize = 27;
/// Ratio spread factor beyond which a sample is treated as an outlier.
pub const OUTLIER_FACTOR: f64 = 10.0;
/// Relative tolerance of the self-sandwich (exact data) comparison.
pub const GRID_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("no λ in the grid gives a positive lower constant")]
    NoAdmissibleFit,
    #[error("u takes the negative value {min} in the covering cylinder")]
    NotNonnegative { min: f64 },
    #[error("too few grid nodes in the Harnack sets ({minus} in Q-, {plus} in Q+)")]
    CylinderUnresolved { minus: usize, plus: usize },
    #[error("too few grid nodes in the cone ({nodes})")]
    ConeUnresolved { nodes: usize },
    #[error("u is not positive at the cone vertex")]
    VertexNotPositive,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// One estimate `Γ̂_𝓛(z)` with its absolute error budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub z: GroupPoint,
    pub value: f64,
    pub budget: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub index: usize,
    pub z: GroupPoint,
    pub value: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaRow {
    pub lambda: f64,
    pub c_plus: f64,
    pub c_minus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub lambda_plus: f64,
    pub c_plus: f64,
    pub lambda_minus: f64,
    pub c_minus: f64,
    pub table: Vec<LambdaRow>,
    pub violations: Vec<Violation>,
    /// Samples too small to carry information (|value| within budget, or kernel underflow).
    pub skipped: usize,
    pub samples: usize,
    pub grid_tol: f64,
}

/// Fits `C⁻ Γ_K^{λ⁻} ≤ Γ̂ ≤ C⁺ Γ_K^{λ⁺}` over `lambda_grid`.
///
/// Per λ, `C⁺(λ)` and `C⁻(λ)` are the max and min of `Γ̂/Γ_K^λ` over the
/// inlier samples; `λ⁺` minimizes `C⁺`, `λ⁻` maximizes `C⁻`. A sample is an
/// outlier at λ when its ratio exceeds `10·q₉₉` or falls below `q₀₁/10`. It
/// is reported as a violation when it is an outlier at both fitted λ and
/// escapes the fitted envelope by more than its budget, or when its value is
/// negative beyond its budget.
pub fn fit_sandwich(group: &Group, pole: &GroupPoint, samples: &[Sample], lambda_grid: &[f64]) -> Result<BoundReport, VerifyError> {
    if samples.is_empty() || lambda_grid.is_empty() || lambda_grid.iter().any(|&l| !(l > 0.0)) {
        return Err(VerifyError::InvalidInput("need samples and positive λ values".into()));
    }
    let mut violations = Vec::new();
    let mut informative = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        if !s.value.is_finite() {
            violations.push(Violation { index: i, z: s.z.clone(), value: s.value, reason: "non-finite estimate".into() });
        } else if s.value < -s.budget {
            violations.push(Violation { index: i, z: s.z.clone(), value: s.value, reason: "negative beyond budget".into() });
        } else if s.value > s.budget.max(0.0) || (s.budget == 0.0 && s.value > 0.0) {
            informative.push(i);
        }
    }
    let kernels: Vec<GaussianKernel> =
        lambda_grid.iter().map(|&l| GaussianKernel::lambda(group.clone(), l)).collect::<Result<_, _>>()?;
    // log Γ_K^λ per informative sample, per λ.
    let logs: Vec<Vec<f64>> = kernels
        .par_iter()
        .map(|k| informative.iter().map(|&i| k.log_eval(&samples[i].z, pole)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<_, _>>()?;
    struct Fit {
        c_plus: f64,
        c_minus: f64,
        outliers: Vec<bool>,
        ratios: Vec<f64>,
    }
    let fits: Vec<Fit> = logs
        .iter()
        .map(|lk| {
            let ratios: Vec<f64> =
                informative.iter().zip(lk).map(|(&i, l)| (samples[i].value.ln() - l).exp()).collect();
            let mut finite: Vec<f64> = ratios.iter().cloned().filter(|r| r.is_finite() && *r > 0.0).collect();
            finite.sort_by(f64::total_cmp);
            let q = |p: f64| finite.get(((finite.len() as f64 - 1.0) * p).round() as usize).copied().unwrap_or(f64::NAN);
            let (q01, q99) = (q(0.01), q(0.99));
            let outliers: Vec<bool> = ratios
                .iter()
                .map(|&r| !(r.is_finite() && r > 0.0) || r > OUTLIER_FACTOR * q99 || r < q01 / OUTLIER_FACTOR)
                .collect();
            let inl = ratios.iter().zip(&outliers).filter(|(_, &o)| !o).map(|(r, _)| *r);
            let (mut c_plus, mut c_minus) = (0.0f64, f64::INFINITY);
            for r in inl {
                c_plus = c_plus.max(r);
                c_minus = c_minus.min(r);
            }
            Fit { c_plus, c_minus, outliers, ratios }
        })
        .collect();
    let best_plus = (0..fits.len()).min_by(|&a, &b| fits[a].c_plus.total_cmp(&fits[b].c_plus)).expect("nonempty");
    let best_minus = (0..fits.len()).max_by(|&a, &b| fits[a].c_minus.total_cmp(&fits[b].c_minus)).expect("nonempty");
    if !(fits[best_minus].c_minus > 0.0 && fits[best_minus].c_minus.is_finite()) {
        return Err(VerifyError::NoAdmissibleFit);
    }
    let (fp, fm) = (&fits[best_plus], &fits[best_minus]);
    for (pos, &i) in informative.iter().enumerate() {
        if !(fp.outliers[pos] && fm.outliers[pos]) {
            continue;
        }
        let s = &samples[i];
        let upper = fp.c_plus * s.value / fp.ratios[pos];
        let lower = fm.c_minus * s.value / fm.ratios[pos];
        let reason = if s.value > upper + s.budget {
            "above the fitted upper envelope"
        } else if s.value < lower - s.budget {
            "below the fitted lower envelope"
        } else {
            continue;
        };
        violations.push(Violation { index: i, z: s.z.clone(), value: s.value, reason: reason.into() });
    }
    violations.sort_by_key(|v| v.index);
    Ok(BoundReport {
        lambda_plus: lambda_grid[best_plus],
        c_plus: fp.c_plus,
        lambda_minus: lambda_grid[best_minus],
        c_minus: fm.c_minus,
        table: lambda_grid
            .iter()
            .zip(&fits)
            .map(|(&lambda, f)| LambdaRow { lambda, c_plus: f.c_plus, c_minus: f.c_minus })
            .collect(),
        violations,
        skipped: samples.len() - informative.len(),
        samples: samples.len(),
        grid_tol: GRID_TOL,
    })
}

/// Samples of slice `k` of `u` whose spatial point lies in `bulk`, each
/// with the same absolute `budget`.
pub fn samples_from_grid(u: &GridSolution, k: usize, bulk: &[(f64, f64)], budget: &[f64]) -> Vec<Sample> {
    (0..u.space.len())
        .filter_map(|j| {
            let z = u.point(k, j);
            z.x.iter().zip(bulk).all(|(v, (lo, hi))| v >= lo && v <= hi).then(|| Sample {
                value: u.at(k, j),
                budget: budget[j],
                z,
            })
        })
        .collect()
}

/// Grid nodes `(k, flat)` with `t ∈ center.t + r²·[ta, tb]` and spatial
/// coordinates within `r^{α_i}·extent` of the transported centre.
fn candidate_nodes(u: &GridSolution, group: &Group, center: &GroupPoint, r: f64, ta: f64, tb: f64, extent: f64) -> Vec<(usize, usize)> {
    let alpha = group.structure().alpha();
    let dim = u.space.dim();
    let mut out = Vec::new();
    for k in 0..u.time.n {
        let t = u.time.node(k);
        let local = (t - center.t) / (r * r);
        if local < ta - 1e-12 || local > tb + 1e-12 {
            continue;
        }
        let c = group.exp_drift_apply(t - center.t, &center.x);
        let mut ranges = Vec::with_capacity(dim);
        for d in 0..dim {
            let a = &u.space.axes[d];
            let w = extent * powi_u(r, alpha[d]);
            let lo = ((c[d] - w - a.lo) / a.h).ceil().max(0.0);
            let hi = ((c[d] + w - a.lo) / a.h).floor().min((a.n - 1) as f64);
            if hi < lo {
                ranges.clear();
                break;
            }
            ranges.push((lo as usize, hi as usize));
        }
        if ranges.len() != dim {
            continue;
        }
        let mut idx: Vec<usize> = ranges.iter().map(|r| r.0).collect();
        loop {
            out.push((k, u.space.flat_index(&idx)));
            let mut d = dim;
            loop {
                if d == 0 {
                    break;
                }
                d -= 1;
                if idx[d] < ranges[d].1 {
                    idx[d] += 1;
                    for e in d + 1..dim {
                        idx[e] = ranges[e].0;
                    }
                    break;
                } else if d == 0 {
                    d = usize::MAX;
                    break;
                }
            }
            if d == usize::MAX {
                break;
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnackReport {
    pub center: GroupPoint,
    pub r: f64,
    pub omega: f64,
    pub r0: f64,
    pub sup_minus: f64,
    pub inf_plus: f64,
    /// `sup_{Q₋} u / inf_{Q₊} u`; `+∞` when the infimum vanishes.
    pub quotient: f64,
    pub nodes_minus: usize,
    pub nodes_plus: usize,
}

/// Discrete `sup_{Q₋} u` and `inf_{Q₊} u` over the grid nodes of `u` in
/// `z₀ ∘ δ_r(Q±)`, with `Q± = B_ω × B_{ω³} × … × I±`,
/// `I₋ = (−1, −1+ω²]`, `I₊ = (−ω², 0]`.
///
/// Non-negativity is checked on the nodes of the covering cylinder
/// `z₀ ∘ δ_r(B_{R₀} × … × B_{R₀} × (−1, 0])`.
pub fn harnack_local(group: &Group, u: &GridSolution, z0: &GroupPoint, r: f64, omega: f64, r0: f64) -> Result<HarnackReport, VerifyError> {
    if !(r > 0.0 && omega > 0.0 && omega < 1.0 && r0 > 0.0) {
        return Err(VerifyError::InvalidInput("need r > 0, 0 < ω < 1, R₀ > 0".into()));
    }
    let ranges = group.structure().ranges();
    let in_blocks = |zeta: &GroupPoint, radius: &dyn Fn(usize) -> f64| {
        ranges.iter().enumerate().all(|(j, rg)| zeta.x[rg.clone()].iter().map(|v| v * v).sum::<f64>().sqrt() < radius(j))
    };
    let mut min_cover = f64::INFINITY;
    for (k, j) in candidate_nodes(u, group, z0, r, -1.0, 0.0, r0.max(1.0)) {
        let zeta = group.dilate(1.0 / r, &group.relative(z0, &u.point(k, j)));
        if zeta.t > -1.0 && zeta.t <= 0.0 && in_blocks(&zeta, &|_| r0) {
            min_cover = min_cover.min(u.at(k, j));
        }
    }
    if min_cover < 0.0 {
        return Err(VerifyError::NotNonnegative { min: min_cover });
    }
    let (mut sup, mut inf) = (f64::NEG_INFINITY, f64::INFINITY);
    let (mut nm, mut np) = (0, 0);
    let block_radius = |j: usize| omega.powi(2 * j as i32 + 1);
    for (k, j) in candidate_nodes(u, group, z0, r, -1.0, 0.0, omega) {
        let zeta = group.dilate(1.0 / r, &group.relative(z0, &u.point(k, j)));
        if !in_blocks(&zeta, &block_radius) {
            continue;
        }
        let v = u.at(k, j);
        if zeta.t > -1.0 && zeta.t <= -1.0 + omega * omega {
            sup = sup.max(v);
            nm += 1;
        }
        if zeta.t > -omega * omega && zeta.t <= 0.0 {
            inf = inf.min(v);
            np += 1;
        }
    }
    if nm < MIN_NODES || np < MIN_NODES {
        return Err(VerifyError::CylinderUnresolved { minus: nm, plus: np });
    }
    let quotient = if inf > 0.0 { sup / inf } else { f64::INFINITY };
    Ok(HarnackReport {
        center: z0.clone(),
        r,
        omega,
        r0,
        sup_minus: sup,
        inf_plus: inf,
        quotient,
        nodes_minus: nm,
        nodes_plus: np,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnackSweep {
    pub rows: Vec<HarnackReport>,
    /// Entries that could not be evaluated, with the reason.
    pub skipped: Vec<(GroupPoint, f64, String)>,
    /// Largest finite quotient, the empirical Harnack constant.
    pub fitted_c: f64,
}

/// [`harnack_local`] over every `(center, r)` pair.
pub fn harnack_sweep(
    group: &Group,
    u: &GridSolution,
    centers: &[GroupPoint],
    radii: &[f64],
    omega: f64,
    r0: f64,
) -> HarnackSweep {
    let jobs: Vec<(GroupPoint, f64)> =
        centers.iter().flat_map(|c| radii.iter().map(move |&r| (c.clone(), r))).collect();
    let results: Vec<Result<HarnackReport, VerifyError>> =
        jobs.par_iter().map(|(c, r)| harnack_local(group, u, c, *r, omega, r0)).collect();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for ((c, r), res) in jobs.into_iter().zip(results) {
        match res {
            Ok(rep) => rows.push(rep),
            Err(e) => skipped.push((c, r, e.to_string())),
        }
    }
    let fitted_c = rows.iter().map(|r| r.quotient).filter(|q| q.is_finite()).fold(0.0, f64::max);
    HarnackSweep { rows, skipped, fitted_c }
}

impl HarnackSweep {
    /// CSV: centre coordinates, `t`, `r`, `sup`, `inf`, `quotient`.
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        let dim = match (self.rows.first(), self.skipped.first()) {
            (Some(r), _) => r.center.dim(),
            (None, Some(s)) => s.0.dim(),
            (None, None) => 0,
        };
        let names: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
        writeln!(out, "{},t,r,sup,inf,quotient", names.join(","))?;
        for row in &self.rows {
            let xs: Vec<String> = row.center.x.iter().map(|&v| fmt_f64(v)).collect();
            writeln!(
                out,
                "{},{},{},{},{},{}",
                xs.join(","),
                fmt_f64(row.center.t),
                fmt_f64(row.r),
                fmt_f64(row.sup_minus),
                fmt_f64(row.inf_plus),
                fmt_f64(row.quotient)
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeReport {
    pub vertex: GroupPoint,
    pub big_r: f64,
    pub omega: f64,
    pub r0: f64,
    pub sup: f64,
    pub value: f64,
    pub ratio: f64,
    pub nodes: usize,
    /// Whether `ratio ≤ c_probe`.
    pub within_probe: bool,
}

/// `sup_{P(z)} u / u(z)` over the grid nodes of the past cone
/// `P(z) = z ∘ {δ_ρ(ξ, −1) : |ξ| < ω, 0 < ρ ≤ R/R₀}`.
pub fn harnack_cone(
    group: &Group,
    u: &GridSolution,
    z: &GroupPoint,
    big_r: f64,
    omega: f64,
    r0: f64,
    c_probe: f64,
) -> Result<ConeReport, VerifyError> {
    let value = u.interpolate(z)?;
    if !(value > 0.0) {
        return Err(VerifyError::VertexNotPositive);
    }
    let rho_max = big_r / r0;
    let cone = Cone::new(z.clone(), -1.0, omega, rho_max);
    let mut sup = f64::NEG_INFINITY;
    let mut nodes = 0;
    for (k, j) in candidate_nodes(u, group, z, rho_max, -1.0, 0.0, omega) {
        if cone.contains(group, &u.point(k, j)) {
            sup = sup.max(u.at(k, j));
            nodes += 1;
        }
    }
    if nodes < MIN_NODES {
        return Err(VerifyError::ConeUnresolved { nodes });
    }
    let ratio = sup / value;
    Ok(ConeReport { vertex: z.clone(), big_r, omega, r0, sup, value, ratio, nodes, within_probe: ratio <= c_probe })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalEntry {
    pub z: GroupPoint,
    pub c0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalHarnackReport {
    pub x: Vec<f64>,
    pub t0: f64,
    pub value: f64,
    pub entries: Vec<GlobalEntry>,
    pub max_c0: f64,
}

/// Smallest `c₀ ≥ 1` with `u(ξ,t) ≤ c₀ e^{c₀ q} u(x,t₀)` at each point, where
/// `q = ⟨C⁻¹(t−t₀) w, w⟩`, `w = ξ − e^{(t−t₀)B} x` and `C` uses `A₀ = I`.
pub fn harnack_global(
    group: &Group,
    u: &(dyn Fn(&GroupPoint) -> Option<f64> + Sync),
    x: &[f64],
    t0: f64,
    points: &[GroupPoint],
) -> Result<GlobalHarnackReport, VerifyError> {
    let base = u(&GroupPoint::new(x.to_vec(), t0)).ok_or_else(|| VerifyError::InvalidInput("u(x, t0) unavailable".into()))?;
    let sigma = DMatrix::identity(group.structure().m0(), group.structure().m0());
    let entries: Vec<GlobalEntry> = points
        .par_iter()
        .map(|z| -> Result<Option<GlobalEntry>, VerifyError> {
            let tau = z.t - t0;
            if !(tau > 0.0) {
                return Ok(None);
            }
            let Some(v) = u(z) else { return Ok(None) };
            let cov = covariance(group, tau, &sigma)?;
            let flow = group.exp_drift_apply(tau, x);
            let w: Vec<f64> = z.x.iter().zip(&flow).map(|(a, b)| a - b).collect();
            let q = cov.quad_form(&w);
            Ok(Some(GlobalEntry { z: z.clone(), c0: smallest_c0(v, base, q) }))
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    let max_c0 = entries.iter().map(|e| e.c0).fold(1.0, f64::max);
    Ok(GlobalHarnackReport { x: x.to_vec(), t0, value: base, entries, max_c0 })
}

/// Solves `ln c + c q = ln(v/base)` for the smallest `c ≥ 1` by bisection.
fn smallest_c0(v: f64, base: f64, q: f64) -> f64 {
    if v <= base {
        return 1.0;
    }
    if !(base > 0.0) {
        return f64::INFINITY;
    }
    let target = (v / base).ln();
    let g = |c: f64| c.ln() + c * q - target;
    let (mut lo, mut hi) = (1.0, 2.0);
    while g(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::INFINITY;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::{Axis, SpaceGrid};

    /// Γ_K samples on a grid with spacing `h` in x₁ and `h/4` in x₂ and t.
    fn kernel_grid(h: f64) -> (Group, GaussianKernel, GridSolution, GroupPoint) {
        let g = Group::prototype();
        let k = GaussianKernel::lambda(g.clone(), 1.0).unwrap();
        let pole = GroupPoint::new(vec![0.0, 0.0], 0.0);
        let u = GridSolution::from_fn(
            SpaceGrid::new(vec![Axis::spanning(-1.5, 1.5, h), Axis::spanning(-1.0, 1.0, h / 4.0)]),
            Axis::spanning(0.0, 2.0, h / 4.0),
            |x, t| k.eval(&GroupPoint::new(x.to_vec(), t), &pole).unwrap(),
        );
        (g, k, u, pole)
    }

    #[test]
    fn self_sandwich_is_exact() {
        let g = Group::prototype();
        let k = GaussianKernel::lambda(g.clone(), 1.5).unwrap();
        let pole = GroupPoint::new(vec![0.1, -0.2], 0.0);
        let samples: Vec<Sample> = (0..400)
            .map(|i| {
                let z = GroupPoint::new(vec![-2.0 + 0.01 * i as f64, 1.0 - 0.005 * i as f64], 0.5 + 0.001 * i as f64);
                Sample { value: k.eval(&z, &pole).unwrap(), budget: 0.0, z }
            })
            .collect();
        let rep = fit_sandwich(&g, &pole, &samples, &[0.5, 1.0, 1.5, 2.0, 3.0]).unwrap();
        assert_eq!(rep.lambda_plus, 1.5);
        assert_eq!(rep.lambda_minus, 1.5);
        assert!((rep.c_plus - 1.0).abs() < GRID_TOL && (rep.c_minus - 1.0).abs() < GRID_TOL);
        assert!(rep.violations.is_empty());

        let mut spiked = samples.clone();
        spiked[123].value *= 1e3;
        let rep = fit_sandwich(&g, &pole, &spiked, &[0.5, 1.0, 1.5, 2.0, 3.0]).unwrap();
        assert_eq!(rep.violations.iter().map(|v| v.index).collect::<Vec<_>>(), vec![123]);
    }

    #[test]
    fn harnack_quotients() {
        let (g, _, u, _) = kernel_grid(0.1);
        let z0 = GroupPoint::new(vec![0.2, 0.0], 2.0);
        let rep = harnack_local(&g, &u, &z0, 1.0, 0.5, 2.0).unwrap();
        assert!(rep.quotient.is_finite() && rep.quotient > 0.0);
        for (factor, tol) in [(8.0, 0.0), (0.125, 0.0), (7.0, 4.0 * f64::EPSILON)] {
            let mut scaled = u.clone();
            scaled.values.iter_mut().for_each(|v| *v *= factor);
            let q = harnack_local(&g, &scaled, &z0, 1.0, 0.5, 2.0).unwrap().quotient;
            assert!((q - rep.quotient).abs() <= tol * rep.quotient, "{factor}: {q} {}", rep.quotient);
        }
        let ones = GridSolution::from_fn(u.space.clone(), u.time, |_, _| 2.5);
        assert_eq!(harnack_local(&g, &ones, &z0, 1.0, 0.5, 2.0).unwrap().quotient, 1.0);
        let (_, _, fine, _) = kernel_grid(0.05);
        let b = harnack_local(&g, &fine, &z0, 1.0, 0.5, 2.0).unwrap();
        assert!((rep.quotient / b.quotient - 1.0).abs() < 0.1, "{} {}", rep.quotient, b.quotient);
        let mut neg = u.clone();
        let j = neg.space.flat_index(&[17, 40]);
        let k = 70;
        neg.values[k * neg.space.len() + j] = -1.0;
        assert!(matches!(harnack_local(&g, &neg, &z0, 1.0, 0.5, 2.0), Err(VerifyError::NotNonnegative { .. })));
    }

    #[test]
    fn cone_ratio_shrinks_with_radius() {
        let (g, _, u, pole) = kernel_grid(0.1);
        let z = GroupPoint::new(vec![0.0, 0.0], 1.5);
        let big = harnack_cone(&g, &u, &z, 2.0, 0.5, 2.0, 100.0).unwrap();
        let small = harnack_cone(&g, &u, &z, 1.0, 0.5, 2.0, 100.0).unwrap();
        assert!(big.ratio >= small.ratio && small.ratio >= 1.0);
        assert!(matches!(harnack_cone(&g, &u, &pole, 1.0, 0.5, 2.0, 100.0), Err(VerifyError::VertexNotPositive)));
    }

    #[test]
    fn global_harnack_c0() {
        assert_eq!(smallest_c0(1.0, 2.0, 0.3), 1.0);
        let c = smallest_c0(10.0, 1.0, 0.5);
        assert!((c.ln() + 0.5 * c - 10f64.ln()).abs() < 1e-10);
        let g = Group::prototype();
        let k = GaussianKernel::lambda(g.clone(), 1.0).unwrap();
        let pole = GroupPoint::new(vec![0.0, 0.0], 0.0);
        let u = |z: &GroupPoint| k.eval(z, &pole).ok();
        let pts: Vec<GroupPoint> =
            (0..50).map(|i| GroupPoint::new(vec![-1.0 + 0.04 * i as f64, 0.3], 0.6 + 0.005 * i as f64)).collect();
        let rep = harnack_global(&g, &u, &[0.0, 0.0], 0.5, &pts).unwrap();
        assert!(rep.max_c0.is_finite() && rep.max_c0 >= 1.0);
    }
}
