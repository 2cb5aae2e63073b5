//! Approximate fundamental solutions from narrow exact-kernel data.

use serde::{Deserialize, Serialize};

use super::solver::evolve;
use super::{GridSolution, PdeError, SolveConfig, SolveRecord};
use crate::group::GroupPoint;
use crate::kernel::GaussianKernel;
use crate::spec::Operator;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FundamentalReport {
    pub pole: GroupPoint,
    /// Elapsed times at which the frozen kernel is handed to the solver.
    pub widths: Vec<f64>,
    /// `max |u_{δ_k} − u_{δ_{k+1}}|` over all stored slices, per consecutive pair.
    pub spreads: Vec<f64>,
    /// `Σ u · |cell|` of the extrapolated solution per stored slice.
    pub mass: Vec<f64>,
    pub records: Vec<SolveRecord>,
}

/// Approximates `Γ_𝓛(·, t; x₀, t₀)` on the grid and time axis of `cfg`.
///
/// For each width `δ` the kernel of the operator with coefficients frozen at
/// `(x₀, t₀)` is used up to `t₀ + δ` and the solver takes over from there.
/// With two or more widths the result is the linear extrapolation to
/// `δ = 0` of the last two runs. Slices with `t ≤ t₀` are exactly zero.
pub fn approx_fundamental(
    op: &Operator,
    x0: &[f64],
    t0: f64,
    widths: &[f64],
    cfg: &SolveConfig,
) -> Result<(GridSolution, FundamentalReport), PdeError> {
    if widths.is_empty() || widths.iter().any(|&d| !(d > 0.0)) || widths.windows(2).any(|w| w[1] >= w[0]) {
        return Err(PdeError::InvalidConfig("widths must be positive and strictly decreasing".into()));
    }
    if !op.spec.window.contains(t0) {
        return Err(PdeError::InvalidConfig(format!("pole time {t0} outside the coefficient window")));
    }
    let pole = GroupPoint::new(x0.to_vec(), t0);
    let frozen = op.coefficients.a0.eval_matrix(x0, t0)?;
    let kernel = GaussianKernel::divergence_form(op.group.clone(), &frozen)?;
    let grid = cfg.grid();
    let time = cfg.time_axis();
    let m = grid.len();
    let reaction = match &op.coefficients.c {
        Some(c) => c.eval_scalar(x0, t0)?,
        None => 0.0,
    };

    let mut runs = Vec::with_capacity(widths.len());
    let mut records = Vec::with_capacity(widths.len());
    for &delta in widths {
        let t_hand = t0 + delta;
        let mut values = vec![0.0; m * time.n];
        let later: Vec<usize> = (0..time.n).filter(|&k| time.node(k) > t_hand).collect();
        for k in (0..time.n).filter(|&k| time.node(k) > t0 && time.node(k) <= t_hand) {
            let t = time.node(k);
            for j in 0..m {
                let z = GroupPoint::new(grid.coords(j), t);
                values[k * m + j] = (reaction * (t - t0)).exp() * kernel.eval(&z, &pole)?;
            }
        }
        if !later.is_empty() {
            let mut u0 = Vec::with_capacity(m);
            for j in 0..m {
                let z = GroupPoint::new(grid.coords(j), t_hand);
                u0.push((reaction * delta).exp() * kernel.eval(&z, &pole)?);
            }
            let outputs: Vec<f64> = later.iter().map(|&k| time.node(k)).collect();
            let (slices, record) = evolve(op, cfg, u0, t_hand, &outputs, None)?;
            for (&k, s) in later.iter().zip(slices) {
                values[k * m..(k + 1) * m].copy_from_slice(&s);
            }
            records.push(record);
        }
        runs.push(values);
    }

    let spreads = runs
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs())))
        .collect();
    let values = if runs.len() >= 2 {
        let (d1, d2) = (widths[widths.len() - 2], widths[widths.len() - 1]);
        let (u1, u2) = (&runs[runs.len() - 2], &runs[runs.len() - 1]);
        u1.iter().zip(u2).map(|(a, b)| (d1 * b - d2 * a) / (d1 - d2)).collect()
    } else {
        runs.pop().expect("one run")
    };
    let solution = GridSolution::new(grid, time, values)?;
    let mass = (0..time.n).map(|k| solution.slice(k).iter().sum::<f64>() * solution.space.cell_volume()).collect();
    Ok((solution, FundamentalReport { pole, widths: widths.to_vec(), spreads, mass, records }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::Window;
    use crate::spec::OperatorSpec;
    use std::path::Path;

    #[test]
    fn vanishes_before_pole_and_tracks_kernel() {
        let op = OperatorSpec::prototype(1.0, Window::new(0.0, 2.0)).resolve(Path::new(".")).unwrap();
        let mut cfg = SolveConfig::new(vec![(-11.0, 11.0), (-8.0, 8.0)], vec![0.1, 0.1], 0.0, 1.6);
        cfg.snapshots = 9;
        let (u, rep) = approx_fundamental(&op, &[0.0, 0.0], 0.2, &[0.8, 0.5], &cfg).unwrap();
        for k in 0..u.time.n {
            if u.time.node(k) <= 0.2 {
                assert!(u.slice(k).iter().all(|&v| v == 0.0));
            }
        }
        let k = GaussianKernel::divergence_form(op.group.clone(), &nalgebra::DMatrix::identity(1, 1)).unwrap();
        let last = u.time.n - 1;
        let mut err = 0.0f64;
        let mut peak = 0.0f64;
        for j in 0..u.space.len() {
            let exact = k.eval(&u.point(last, j), &GroupPoint::new(vec![0.0, 0.0], 0.2)).unwrap();
            err = err.max((u.at(last, j) - exact).abs());
            peak = peak.max(exact);
        }
        assert!(err / peak < 0.02, "{} {:?}", err / peak, rep.spreads);
        assert!((rep.mass[last] - 1.0).abs() < 1e-3, "{:?}", rep.mass);
        assert_eq!(rep.spreads.len(), 1);
    }
}
