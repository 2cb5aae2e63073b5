//! Explicit Lie-splitting solver for the Cauchy problem `𝓛u = 0`, `u(·, t₀) = φ`.
//!
//! Each step applies, in order: semi-Lagrangian transport along `Y`,
//! explicit flux-form diffusion in the first block, and the reaction /
//! first-order terms (`e^{Δt c}`, upwind `⟨b, D⟩`, upwind `−div(a ·)`).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Axis, GridSolution, PdeError, SpaceGrid};
use crate::coefficients::Field;
use crate::group::Group;
use crate::spec::Operator;

/// Boundary values above this fraction of the interior maximum are reported.
pub const BOUNDARY_TOL: f64 = 1e-12;
/// Courant number bound for the explicit first-order terms.
pub const COURANT: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Tensor cubic Lagrange, clamped to the pre-step value range.
    Cubic,
    /// Tensor multilinear (monotone, first order in `h` at diffusive steps).
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extension {
    /// `u = 0` outside the box.
    Zero,
    /// Nearest boundary value outside the box (zero-flux walls).
    Clamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryPolicy {
    Warn,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    /// Spatial box, one `[lo, hi]` per coordinate.
    pub bounds: Vec<(f64, f64)>,
    /// Target spacing per coordinate.
    pub h: Vec<f64>,
    pub t_start: f64,
    pub t_end: f64,
    /// Maximal time step; defaults to the stability bound.
    pub dt: Option<f64>,
    /// Number of stored time slices, end points included.
    pub snapshots: usize,
    pub interpolation: Interpolation,
    pub extension: Extension,
    pub boundary_policy: BoundaryPolicy,
}

impl SolveConfig {
    pub fn new(bounds: Vec<(f64, f64)>, h: Vec<f64>, t_start: f64, t_end: f64) -> Self {
        Self {
            bounds,
            h,
            t_start,
            t_end,
            dt: None,
            snapshots: 2,
            interpolation: Interpolation::Cubic,
            extension: Extension::Zero,
            boundary_policy: BoundaryPolicy::Warn,
        }
    }

    pub fn grid(&self) -> SpaceGrid {
        SpaceGrid::new(self.bounds.iter().zip(&self.h).map(|(&(lo, hi), &h)| Axis::spanning(lo, hi, h)).collect())
    }

    pub fn time_axis(&self) -> Axis {
        let s = self.snapshots.max(2);
        Axis::new(self.t_start, (self.t_end - self.t_start) / (s - 1) as f64, s)
    }
}

/// Stability data and diagnostics recorded with every solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub steps: usize,
    pub dt_max_used: f64,
    pub dt_diffusion_bound: f64,
    pub dt_advection_bound: f64,
    pub courant: f64,
    pub interpolation: Interpolation,
    pub extension: Extension,
    /// Largest `max|u on boundary| / max|u|` seen after any step.
    pub boundary_ratio: f64,
    pub warnings: Vec<String>,
}

/// Precomputed transport stencil: for each node, `width` `(index, weight)` pairs.
struct Transport {
    width: usize,
    index: Vec<u32>,
    weight: Vec<f64>,
}

fn lagrange_cubic(s: f64) -> [f64; 4] {
    // Nodes at -1, 0, 1, 2.
    [
        -s * (s - 1.0) * (s - 2.0) / 6.0,
        (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0,
        -(s + 1.0) * s * (s - 2.0) / 2.0,
        (s + 1.0) * s * (s - 1.0) / 6.0,
    ]
}

/// 1-D interpolation weights at position `p` on `axis`: `(first node, weights)`.
fn weights_1d(axis: &Axis, p: f64, interp: Interpolation) -> (usize, Vec<f64>) {
    let s = ((p - axis.lo) / axis.h).clamp(0.0, (axis.n - 1) as f64);
    match interp {
        Interpolation::Linear => {
            if axis.n == 1 {
                return (0, vec![1.0, 0.0]);
            }
            let k = (s.floor() as usize).min(axis.n - 2);
            let f = s - k as f64;
            (k, vec![1.0 - f, f])
        }
        Interpolation::Cubic => {
            if axis.n < 4 {
                return weights_1d(axis, p, Interpolation::Linear);
            }
            let k = (s.floor() as usize).min(axis.n - 2);
            let base = k.saturating_sub(1).min(axis.n - 4);
            (base, lagrange_cubic(s - base as f64 - 1.0).to_vec())
        }
    }
}

impl Transport {
    /// Stencils for `u*(x) = u(E(−Δt)x)`.
    fn build(group: &Group, grid: &SpaceGrid, dt: f64, interp: Interpolation, ext: Extension) -> Self {
        let dim = grid.dim();
        let per_axis: usize = match interp {
            Interpolation::Linear => 2,
            Interpolation::Cubic if grid.axes.iter().all(|a| a.n >= 4) => 4,
            Interpolation::Cubic => 2,
        };
        let width = per_axis.pow(dim as u32);
        let strides = grid.strides();
        let rows: Vec<(Vec<u32>, Vec<f64>)> = (0..grid.len())
            .into_par_iter()
            .map(|j| {
                let x = grid.coords(j);
                let p = group.exp_drift_apply(-dt, &x);
                let outside = p.iter().zip(&grid.axes).any(|(&v, a)| v < a.lo - 1e-12 * a.h || v > a.hi() + 1e-12 * a.h);
                if outside && ext == Extension::Zero {
                    return (vec![0; width], vec![0.0; width]);
                }
                let per: Vec<(usize, Vec<f64>)> = p
                    .iter()
                    .zip(&grid.axes)
                    .map(|(&v, a)| weights_1d(a, v, if per_axis == 4 { Interpolation::Cubic } else { Interpolation::Linear }))
                    .collect();
                let mut idx = Vec::with_capacity(width);
                let mut wts = Vec::with_capacity(width);
                for c in 0..width {
                    let mut rem = c;
                    let mut flat = 0;
                    let mut w = 1.0;
                    for (d, (base, ws)) in per.iter().enumerate() {
                        let o = rem % per_axis;
                        rem /= per_axis;
                        let node = (base + o).min(grid.axes[d].n - 1);
                        flat += node * strides[d];
                        w *= ws[o];
                    }
                    idx.push(flat as u32);
                    wts.push(w);
                }
                (idx, wts)
            })
            .collect();
        let mut index = Vec::with_capacity(width * grid.len());
        let mut weight = Vec::with_capacity(width * grid.len());
        for (i, w) in rows {
            index.extend(i);
            weight.extend(w);
        }
        Self { width, index, weight }
    }

    fn apply(&self, u: &[f64], out: &mut [f64], clamp: Option<(f64, f64)>) {
        out.par_iter_mut().enumerate().for_each(|(j, o)| {
            let base = j * self.width;
            let mut acc = 0.0;
            for k in base..base + self.width {
                acc += self.weight[k] * u[self.index[k] as usize];
            }
            *o = match clamp {
                Some((lo, hi)) => acc.clamp(lo, hi),
                None => acc,
            };
        });
    }
}

/// Nodal samples of the coefficient fields at one time.
struct NodalCoefficients {
    m0: usize,
    a0: Vec<f64>,
    b: Option<Vec<f64>>,
    c: Option<Vec<f64>>,
    a: Option<Vec<f64>>,
}

fn sample_field(f: &Field, grid: &SpaceGrid, t: f64) -> Result<Vec<f64>, PdeError> {
    let comps = f.codomain().len();
    let rows: Result<Vec<Vec<f64>>, PdeError> =
        (0..grid.len()).into_par_iter().map(|j| f.eval(&grid.coords(j), t).map_err(PdeError::from)).collect();
    let mut out = Vec::with_capacity(grid.len() * comps);
    for r in rows? {
        out.extend(r);
    }
    Ok(out)
}

impl NodalCoefficients {
    fn sample(op: &Operator, grid: &SpaceGrid, t: f64) -> Result<Self, PdeError> {
        let c = &op.coefficients;
        Ok(Self {
            m0: op.group.structure().m0(),
            a0: sample_field(&c.a0, grid, t)?,
            b: c.b.as_ref().map(|f| sample_field(f, grid, t)).transpose()?,
            c: c.c.as_ref().map(|f| sample_field(f, grid, t)).transpose()?,
            a: c.a.as_ref().map(|f| sample_field(f, grid, t)).transpose()?,
        })
    }

    fn max_abs_first_order(&self, i: usize) -> f64 {
        let m0 = self.m0;
        let col = |v: &Option<Vec<f64>>| v.as_ref().map_or(0.0, |v| v.iter().skip(i).step_by(m0).fold(0.0f64, |m, x| m.max(x.abs())));
        col(&self.b) + col(&self.a)
    }
}

struct Stepper<'a> {
    grid: &'a SpaceGrid,
    strides: Vec<usize>,
    ext: Extension,
}

impl Stepper<'_> {
    /// Neighbour value along `d` with offset `±1`, honouring the extension rule.
    #[inline]
    fn neighbour(&self, u: &[f64], j: usize, idx_d: usize, d: usize, up: bool) -> Option<f64> {
        let n = self.grid.axes[d].n;
        if up && idx_d + 1 < n {
            Some(u[j + self.strides[d]])
        } else if !up && idx_d >= 1 {
            Some(u[j - self.strides[d]])
        } else {
            match self.ext {
                Extension::Zero => Some(0.0),
                Extension::Clamp => None,
            }
        }
    }

    fn diffusion(&self, coef: &NodalCoefficients, u: &[f64], out: &mut [f64], dt: f64) {
        let m0 = coef.m0;
        let mm = m0 * m0;
        out.par_iter_mut().enumerate().for_each(|(j, o)| {
            let idx = |d: usize| (j / self.strides[d]) % self.grid.axes[d].n;
            let u0 = u[j];
            let mut acc = 0.0;
            for i in 0..m0 {
                let h = self.grid.axes[i].h;
                let a_here = coef.a0[j * mm + i * m0 + i];
                let (up_ok, dn_ok) = (idx(i) + 1 < self.grid.axes[i].n, idx(i) >= 1);
                let a_up = if up_ok { coef.a0[(j + self.strides[i]) * mm + i * m0 + i] } else { a_here };
                let a_dn = if dn_ok { coef.a0[(j - self.strides[i]) * mm + i * m0 + i] } else { a_here };
                let u_up = self.neighbour(u, j, idx(i), i, true).unwrap_or(u0);
                let u_dn = self.neighbour(u, j, idx(i), i, false).unwrap_or(u0);
                acc += (0.5 * (a_here + a_up) * (u_up - u0) - 0.5 * (a_here + a_dn) * (u0 - u_dn)) / (h * h);
                for jj in (0..m0).filter(|&jj| jj != i) {
                    // Central cross derivative; skipped at the box edge.
                    if !(up_ok && dn_ok && idx(jj) >= 1 && idx(jj) + 1 < self.grid.axes[jj].n) {
                        continue;
                    }
                    let hj = self.grid.axes[jj].h;
                    let (si, sj) = (self.strides[i], self.strides[jj]);
                    let dp = (u[j + si + sj] - u[j + si - sj]) / (2.0 * hj);
                    let dm = (u[j - si + sj] - u[j - si - sj]) / (2.0 * hj);
                    let ap = coef.a0[(j + si) * mm + i * m0 + jj];
                    let am = coef.a0[(j - si) * mm + i * m0 + jj];
                    acc += (ap * dp - am * dm) / (2.0 * h);
                }
            }
            *o = u0 + dt * acc;
        });
    }

    fn first_order(&self, coef: &NodalCoefficients, u: &[f64], out: &mut [f64], dt: f64, source: Option<&[f64]>) {
        let m0 = coef.m0;
        out.par_iter_mut().enumerate().for_each(|(j, o)| {
            let idx = |d: usize| (j / self.strides[d]) % self.grid.axes[d].n;
            let u0 = u[j];
            let mut acc = 0.0;
            for i in 0..m0 {
                let h = self.grid.axes[i].h;
                let u_up = self.neighbour(u, j, idx(i), i, true).unwrap_or(u0);
                let u_dn = self.neighbour(u, j, idx(i), i, false).unwrap_or(u0);
                if let Some(b) = &coef.b {
                    let bi = b[j * m0 + i];
                    acc += if bi > 0.0 { bi * (u_up - u0) / h } else { bi * (u0 - u_dn) / h };
                }
                if let Some(a) = &coef.a {
                    let ai = a[j * m0 + i];
                    let up_ok = idx(i) + 1 < self.grid.axes[i].n;
                    let dn_ok = idx(i) >= 1;
                    let a_up = if up_ok { a[(j + self.strides[i]) * m0 + i] } else { ai };
                    let a_dn = if dn_ok { a[(j - self.strides[i]) * m0 + i] } else { ai };
                    // Upwind fluxes of a·u through the two faces.
                    let flux = |af: f64, left: f64, right: f64| af.max(0.0) * left + af.min(0.0) * right;
                    let f_up = flux(0.5 * (ai + a_up), u0, u_up);
                    let f_dn = flux(0.5 * (ai + a_dn), u_dn, u0);
                    acc -= (f_up - f_dn) / h;
                }
            }
            let growth = coef.c.as_ref().map_or(1.0, |c| (dt * c[j]).exp());
            *o = growth * u0 + dt * acc + source.map_or(0.0, |s| dt * s[j]);
        });
    }
}

fn stability(op: &Operator, grid: &SpaceGrid, coef: &NodalCoefficients) -> (f64, f64) {
    let m0 = op.group.structure().m0();
    let inv: f64 = grid.axes.iter().take(m0).map(|a| 1.0 / (a.h * a.h)).sum();
    let dt_diff = 1.0 / (2.0 * op.spec.ellipticity.big_lambda * inv);
    let adv: f64 = (0..m0).map(|i| coef.max_abs_first_order(i) / grid.axes[i].h).sum();
    let dt_adv = if adv > 0.0 { COURANT / adv } else { f64::INFINITY };
    (dt_diff, dt_adv)
}

/// Evolves nodal values `u0` given at `t_from` and returns them at each of
/// the increasing `outputs` (all `≥ t_from`).
pub(crate) fn evolve(
    op: &Operator,
    cfg: &SolveConfig,
    u0: Vec<f64>,
    t_from: f64,
    outputs: &[f64],
    source: Option<&Field>,
) -> Result<(Vec<Vec<f64>>, SolveRecord), PdeError> {
    let grid = cfg.grid();
    if grid.dim() != op.group.dim() {
        return Err(PdeError::InvalidConfig(format!("box has {} axes, operator dimension is {}", grid.dim(), op.group.dim())));
    }
    let time_independent = op.coefficients.is_time_independent() && source.is_none_or(|s| s.is_time_independent());
    let mut coef = NodalCoefficients::sample(op, &grid, t_from)?;
    let (dt_diff, mut dt_adv) = stability(op, &grid, &coef);
    if !time_independent {
        if let Some(&t_last) = outputs.last() {
            for t in [0.5 * (t_from + t_last), t_last] {
                dt_adv = dt_adv.min(stability(op, &grid, &NodalCoefficients::sample(op, &grid, t)?).1);
            }
        }
    }
    let bound = dt_diff.min(dt_adv);
    let dt_target = match cfg.dt {
        Some(dt) if dt > bound * (1.0 + 1e-12) => return Err(PdeError::StepTooLarge { dt, bound }),
        Some(dt) if dt > 0.0 => dt,
        Some(dt) => return Err(PdeError::InvalidConfig(format!("time step must be positive, got {dt}"))),
        None => bound,
    };
    let stepper = Stepper { grid: &grid, strides: grid.strides(), ext: cfg.extension };
    let mut record = SolveRecord {
        steps: 0,
        dt_max_used: 0.0,
        dt_diffusion_bound: dt_diff,
        dt_advection_bound: dt_adv,
        courant: 0.0,
        interpolation: cfg.interpolation,
        extension: cfg.extension,
        boundary_ratio: 0.0,
        warnings: Vec::new(),
    };
    let boundary: Vec<usize> = (0..grid.len()).filter(|&j| grid.on_boundary(j)).collect();
    let has_first_order = op.coefficients.b.is_some()
        || op.coefficients.c.is_some()
        || op.coefficients.a.is_some()
        || source.is_some();
    let mut u = u0;
    let mut tmp = vec![0.0; u.len()];
    let mut transport: Option<(u64, Transport)> = None;
    let mut src: Option<Vec<f64>> = None;
    let mut t = t_from;
    let mut results = Vec::with_capacity(outputs.len());
    for &target in outputs {
        let gap = target - t;
        if gap < -1e-12 * target.abs().max(1.0) {
            return Err(PdeError::InvalidConfig("output times must be increasing and not before the start".into()));
        }
        let steps = if gap <= 0.0 { 0 } else { (gap / dt_target * (1.0 - 1e-12)).ceil().max(1.0) as usize };
        let dt = if steps > 0 { gap / steps as f64 } else { 0.0 };
        if steps > 0 && transport.as_ref().is_none_or(|(key, _)| *key != dt.to_bits()) {
            transport = Some((dt.to_bits(), Transport::build(&op.group, &grid, dt, cfg.interpolation, cfg.extension)));
        }
        for _ in 0..steps {
            if !time_independent {
                coef = NodalCoefficients::sample(op, &grid, t)?;
            }
            if let Some(f) = source {
                if src.is_none() || !f.is_time_independent() {
                    src = Some(sample_field(f, &grid, t)?);
                }
            }
            let (_, tr) = transport.as_ref().expect("built above");
            let clamp = match cfg.interpolation {
                Interpolation::Cubic => {
                    let (lo, hi) = u.iter().fold((0.0f64, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
                    Some((lo, hi))
                }
                Interpolation::Linear => None,
            };
            tr.apply(&u, &mut tmp, clamp);
            stepper.diffusion(&coef, &tmp, &mut u, dt);
            if has_first_order {
                std::mem::swap(&mut u, &mut tmp);
                stepper.first_order(&coef, &tmp, &mut u, dt, src.as_deref());
            }
            t += dt;
            record.steps += 1;
            if u.iter().any(|v| !v.is_finite()) {
                return Err(PdeError::Unstable { step: record.steps });
            }
            if cfg.extension == Extension::Zero {
                let max = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let bmax = boundary.iter().fold(0.0f64, |m, &j| m.max(u[j].abs()));
                let ratio = if max > 0.0 { bmax / max } else { 0.0 };
                if ratio > BOUNDARY_TOL && ratio > record.boundary_ratio {
                    if cfg.boundary_policy == BoundaryPolicy::Error {
                        return Err(PdeError::BoxTooSmall { ratio });
                    }
                    if record.warnings.is_empty() {
                        record.warnings.push(format!("boundary values reached {ratio:.3e} of the maximum at t = {t}"));
                    }
                }
                record.boundary_ratio = record.boundary_ratio.max(ratio);
            }
        }
        t = target;
        record.dt_max_used = record.dt_max_used.max(dt);
        results.push(u.clone());
    }
    let adv: f64 = (0..op.group.structure().m0()).map(|i| coef.max_abs_first_order(i) / grid.axes[i].h).sum();
    record.courant = record.dt_max_used * adv;
    Ok((results, record))
}

/// Solves `𝓛u = 0` forward from `u(·, t_start) = φ`, storing
/// `cfg.snapshots` uniformly spaced slices.
pub fn solve_cauchy(op: &Operator, phi: &Field, cfg: &SolveConfig) -> Result<(GridSolution, SolveRecord), PdeError> {
    let grid = cfg.grid();
    let u0 = sample_field(phi, &grid, cfg.t_start)?;
    solve_cauchy_from(op, cfg, u0, None)
}

/// As [`solve_cauchy`] with nodal initial values and an optional source `f`
/// (solving `𝓛u = −f`).
pub fn solve_cauchy_from(
    op: &Operator,
    cfg: &SolveConfig,
    u0: Vec<f64>,
    source: Option<&Field>,
) -> Result<(GridSolution, SolveRecord), PdeError> {
    let grid = cfg.grid();
    if u0.len() != grid.len() {
        return Err(PdeError::Shape { expected: grid.len(), got: u0.len() });
    }
    let time = cfg.time_axis();
    let outputs: Vec<f64> = (1..time.n).map(|k| time.node(k)).collect();
    let (slices, record) = evolve(op, cfg, u0.clone(), cfg.t_start, &outputs, source)?;
    let mut values = u0;
    for s in slices {
        values.extend(s);
    }
    Ok((GridSolution::new(grid, time, values)?, record))
}

/// Nodal samples of a closure on the configured grid.
pub fn sample_datum(cfg: &SolveConfig, f: impl Fn(&[f64]) -> f64 + Sync) -> Vec<f64> {
    let grid = cfg.grid();
    (0..grid.len()).into_par_iter().map(|j| f(&grid.coords(j))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{Codomain, Window};
    use crate::group::GroupPoint;
    use crate::kernel::GaussianKernel;
    use crate::spec::OperatorSpec;
    use std::path::Path;

    fn prototype() -> Operator {
        OperatorSpec::prototype(1.0, Window::new(0.0, 2.0)).resolve(Path::new(".")).unwrap()
    }

    #[test]
    fn cubic_weights_reproduce_cubics() {
        let axis = Axis::new(0.0, 0.5, 8);
        for p in [0.1, 1.3, 3.4, 3.5] {
            let (base, w) = weights_1d(&axis, p, Interpolation::Cubic);
            let v: f64 = w.iter().enumerate().map(|(k, w)| w * axis.node(base + k).powi(3)).sum();
            assert!((v - p.powi(3)).abs() < 1e-12, "{p}");
        }
    }

    #[test]
    fn constants_preserved_with_clamped_walls() {
        let op = prototype();
        let mut cfg = SolveConfig::new(vec![(-2.0, 2.0), (-2.0, 2.0)], vec![0.1, 0.1], 0.0, 1.0);
        cfg.extension = Extension::Clamp;
        let (u, rec) = solve_cauchy(&op, &Field::constant_scalar(Codomain::Scalar, op.spec.window, 1.0), &cfg).unwrap();
        let last = u.slice(u.time.n - 1);
        assert!(last.iter().all(|v| (v - 1.0).abs() < 1e-10));
        assert!(rec.steps > 0);
    }

    #[test]
    fn step_too_large_is_rejected() {
        let op = prototype();
        let mut cfg = SolveConfig::new(vec![(-2.0, 2.0), (-2.0, 2.0)], vec![0.1, 0.1], 0.0, 0.1);
        cfg.dt = Some(0.01);
        assert!(matches!(
            solve_cauchy(&op, &Field::constant_scalar(Codomain::Scalar, op.spec.window, 1.0), &cfg),
            Err(PdeError::StepTooLarge { .. })
        ));
    }

    #[test]
    fn kernel_datum_evolves_to_kernel_and_stays_nonnegative() {
        let op = prototype();
        let k = GaussianKernel::divergence_form(op.group.clone(), &nalgebra::DMatrix::identity(1, 1)).unwrap();
        let mut cfg = SolveConfig::new(vec![(-11.0, 11.0), (-6.5, 6.5)], vec![0.1, 0.1], 0.5, 1.0);
        cfg.snapshots = 3;
        let pole = GroupPoint::origin(2);
        let u0 = sample_datum(&cfg, |x| k.eval(&GroupPoint::new(x.to_vec(), 0.5), &pole).unwrap());
        let (u, rec) = solve_cauchy_from(&op, &cfg, u0, None).unwrap();
        assert!(u.values.iter().all(|&v| v >= -1e-12));
        let last = u.slice(2);
        let mut err = 0.0f64;
        let mut peak = 0.0f64;
        for j in 0..u.space.len() {
            let exact = k.eval(&GroupPoint::new(u.space.coords(j), 1.0), &pole).unwrap();
            err = err.max((last[j] - exact).abs());
            peak = peak.max(exact);
        }
        assert!(err / peak < 0.015, "relative error {}", err / peak);
        assert!(rec.boundary_ratio < 1e-10, "{rec:?}");
    }
}
