//! `check bounds|harnack|cone|global`.

use std::path::PathBuf;

use clap::Args;
use kolmo_core::pde::{Axis, GridSolution, SpaceGrid};
use kolmo_core::spec::Operator;
use kolmo_core::verify::{fit_sandwich, harnack_cone, harnack_global, harnack_local, harnack_sweep, samples_from_grid};
use kolmo_core::{GaussianKernel, GroupPoint};
use serde_json::json;

use crate::error::CliError;
use crate::parse::{self, check_dim, write_json};

#[derive(Args)]
pub struct BoundsArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Solution stem written by `solve fundamental`.
    #[arg(long, required_unless_present = "self_test")]
    solution: Option<PathBuf>,
    /// Fit against exact Γ_K^λ₀ samples instead of a stored solution.
    #[arg(long)]
    self_test: bool,
    #[arg(long, default_value_t = 1.0)]
    lambda0: f64,
    /// Pole y,t0 (default: taken from the solution metadata).
    #[arg(long, allow_hyphen_values = true, value_parser = parse::point)]
    pole: Option<GroupPoint>,
    /// Time of the slice to fit.
    #[arg(long)]
    time: f64,
    /// Sampling box for --self-test, lo:hi per coordinate.
    #[arg(long = "box", allow_hyphen_values = true, value_parser = parse::range)]
    bounds: Vec<(f64, f64)>,
    #[arg(long, default_value_t = 0.1)]
    grid: f64,
    /// Bulk region, lo:hi per coordinate (default: the whole grid).
    #[arg(long, allow_hyphen_values = true, value_parser = parse::range)]
    bulk: Vec<(f64, f64)>,
    /// Absolute error budget per sample (default: the width spread stored with the solution).
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.75,1,1.5,2,3,4")]
    lambda_grid: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(spec: &PathBuf, solution: &PathBuf) -> Result<(Operator, GridSolution, serde_json::Value), CliError> {
    let s = parse::load_spec(spec)?;
    let op = parse::resolve(&s, spec)?;
    let (u, meta) = GridSolution::load(solution)?;
    check_dim("solution", u.space.dim(), op.group.dim())?;
    Ok((op, u, meta))
}

fn nearest_slice(u: &GridSolution, t: f64) -> Result<usize, CliError> {
    let k = ((t - u.time.lo) / u.time.h).round();
    if !(k >= 0.0 && (k as usize) < u.time.n) || (u.time.node(k as usize) - t).abs() > 1e-9 * t.abs().max(1.0) {
        return Err(CliError::Input(format!("time {t} is not a stored slice")));
    }
    Ok(k as usize)
}

pub fn bounds(a: &BoundsArgs) -> Result<(), CliError> {
    let (op, u, meta, pole, budget) = if a.self_test {
        let s = parse::load_spec(&a.spec)?;
        let op = parse::resolve(&s, &a.spec)?;
        let n = op.group.dim();
        let pole = a.pole.clone().unwrap_or_else(|| GroupPoint::origin(n));
        check_dim("box", a.bounds.len(), n)?;
        let kernel = GaussianKernel::lambda(op.group.clone(), a.lambda0)?;
        let space = SpaceGrid::new(a.bounds.iter().map(|&(lo, hi)| Axis::spanning(lo, hi, a.grid)).collect());
        let u = GridSolution::from_fn(space, Axis::new(a.time, 1.0, 1), |x, t| {
            kernel.eval(&GroupPoint::new(x.to_vec(), t), &pole).expect("covariance validated")
        });
        (op, u, json!({ "source": "exact", "lambda0": a.lambda0 }), pole, a.budget.unwrap_or(0.0))
    } else {
        let path = a.solution.as_ref().expect("required by clap");
        let (op, u, meta) = load(&a.spec, path)?;
        let pole = match &a.pole {
            Some(p) => p.clone(),
            None => serde_json::from_value(meta["pole"].clone())
                .map_err(|_| CliError::Input("no --pole and none stored with the solution".into()))?,
        };
        let stored = meta["report"]["spreads"].as_array().and_then(|s| s.last()).and_then(|v| v.as_f64());
        let budget = a.budget.or(stored).ok_or_else(|| CliError::Input("no --budget and no stored spread".into()))?;
        (op, u, meta, pole, budget)
    };
    let k = nearest_slice(&u, a.time)?;
    let bulk = if a.bulk.is_empty() {
        u.space.axes.iter().map(|ax| (ax.lo, ax.hi())).collect()
    } else {
        a.bulk.clone()
    };
    check_dim("bulk", bulk.len(), op.group.dim())?;
    let samples = samples_from_grid(&u, k, &bulk, &vec![budget; u.space.len()]);
    let rep = fit_sandwich(&op.group, &pole, &samples, &a.lambda_grid)?;
    write_json(
        &json!({
            "spec_hash": op.spec.hash(),
            "pole": pole,
            "time": a.time,
            "bulk": bulk,
            "budget": budget,
            "samples": samples.len(),
            "source": meta,
            "report": rep,
        }),
        a.out.as_ref(),
    )
}

#[derive(Args)]
pub struct HarnackArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Solution stem. The check rejects negative values, so solve with
    /// `--interp linear` when cubic overshoot near the tails is an issue.
    #[arg(long)]
    solution: PathBuf,
    /// Cylinder centre x,t (single mode).
    #[arg(long, allow_hyphen_values = true, value_parser = parse::point)]
    center: Option<GroupPoint>,
    #[arg(long, default_value_t = 1.0)]
    r: f64,
    #[arg(long, default_value_t = 0.5)]
    omega: f64,
    #[arg(long = "R0", default_value_t = 2.0)]
    r0: f64,
    /// Sweep over --centers × --radii and emit CSV.
    #[arg(long)]
    sweep: bool,
    /// Lattice of centres separated by ';'.
    #[arg(long, allow_hyphen_values = true, value_parser = parse::point, value_delimiter = ';')]
    centers: Vec<GroupPoint>,
    #[arg(long, value_delimiter = ',')]
    radii: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn harnack(a: &HarnackArgs) -> Result<(), CliError> {
    let (op, u, _) = load(&a.spec, &a.solution)?;
    if a.sweep {
        if a.centers.is_empty() {
            return Err(CliError::Input("--sweep needs --centers".into()));
        }
        let centers = a.centers.clone();
        let radii = if a.radii.is_empty() { vec![a.r] } else { a.radii.clone() };
        let sweep = harnack_sweep(&op.group, &u, &centers, &radii, a.omega, a.r0);
        for (z, r, why) in &sweep.skipped {
            eprintln!("skipped centre {:?} r={r}: {why}", z.to_vec());
        }
        eprintln!("fitted C = {}", sweep.fitted_c);
        let mut buf = Vec::new();
        sweep.write_csv(&mut buf)?;
        match &a.out {
            Some(p) => std::fs::write(p, buf)?,
            None => std::io::Write::write_all(&mut std::io::stdout(), &buf)?,
        }
        return Ok(());
    }
    let z0 = a.center.as_ref().ok_or_else(|| CliError::Input("--center is required without --sweep".into()))?;
    let rep = harnack_local(&op.group, &u, z0, a.r, a.omega, a.r0)?;
    write_json(&rep, a.out.as_ref())
}

#[derive(Args)]
pub struct ConeArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    solution: PathBuf,
    #[arg(long, allow_hyphen_values = true, value_parser = parse::point)]
    vertex: GroupPoint,
    #[arg(long = "R", default_value_t = 1.0)]
    big_r: f64,
    #[arg(long, default_value_t = 0.5)]
    omega: f64,
    #[arg(long = "R0", default_value_t = 2.0)]
    r0: f64,
    /// Candidate constant; the report states whether the ratio stays below it.
    #[arg(long, default_value_t = 10.0)]
    c_probe: f64,
}

pub fn cone(a: &ConeArgs) -> Result<(), CliError> {
    let (op, u, _) = load(&a.spec, &a.solution)?;
    let rep = harnack_cone(&op.group, &u, &a.vertex, a.big_r, a.omega, a.r0, a.c_probe)?;
    write_json(&rep, None)
}

#[derive(Args)]
pub struct GlobalArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    solution: PathBuf,
    /// Base point x.
    #[arg(long, allow_hyphen_values = true, value_delimiter = ',')]
    x: Vec<f64>,
    #[arg(long, allow_hyphen_values = true)]
    t0: f64,
    /// Stored slices to probe (default: all after t0).
    #[arg(long, value_delimiter = ',')]
    times: Vec<f64>,
    /// Use every n-th node per axis.
    #[arg(long, default_value_t = 4)]
    stride: usize,
    /// Also list every probed point.
    #[arg(long)]
    full: bool,
}

pub fn global(a: &GlobalArgs) -> Result<(), CliError> {
    let (op, u, _) = load(&a.spec, &a.solution)?;
    check_dim("x", a.x.len(), op.group.dim())?;
    let slices: Vec<usize> = if a.times.is_empty() {
        (0..u.time.n).filter(|&k| u.time.node(k) > a.t0).collect()
    } else {
        a.times.iter().map(|&t| nearest_slice(&u, t)).collect::<Result<_, _>>()?
    };
    let stride = a.stride.max(1);
    let mut points = Vec::new();
    for &k in &slices {
        for j in 0..u.space.len() {
            if u.space.multi_index(j).iter().all(|i| i % stride == 0) && !u.space.on_boundary(j) {
                points.push(u.point(k, j));
            }
        }
    }
    let eval = |z: &GroupPoint| u.interpolate(z).ok();
    let rep = harnack_global(&op.group, &eval, &a.x, a.t0, &points)?;
    if a.full {
        write_json(&rep, None)
    } else {
        write_json(
            &json!({ "x": rep.x, "t0": rep.t0, "value": rep.value, "points": rep.entries.len(), "max_c0": rep.max_c0 }),
            None,
        )
    }
}
