//! `solve cauchy|fundamental`.

use std::path::{Path, PathBuf};

use clap::Args;
use kolmo_core::coefficients::{Codomain, Field, FieldDescriptor};
use kolmo_core::pde::{
    approx_fundamental, sample_datum, solve_cauchy, solve_cauchy_from, BoundaryPolicy, Interpolation, SolveConfig,
};
use kolmo_core::spec::{Operator, OperatorSpec};
use kolmo_core::{GaussianKernel, GroupPoint};
use serde_json::json;

use crate::error::CliError;
use crate::parse::{self, check_dim};
use crate::{GridArgs, Interp};

#[derive(Args)]
pub struct CauchyArgs {
    #[arg(long)]
    spec: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, allow_hyphen_values = true)]
    t_start: f64,
    #[arg(long, allow_hyphen_values = true)]
    t_end: f64,
    /// `kernel` (frozen kernel at --pole, evaluated at --t-start) or a scalar field descriptor in JSON.
    #[arg(long)]
    datum: String,
    #[arg(long, allow_hyphen_values = true, value_parser = parse::point)]
    pole: Option<GroupPoint>,
    /// Output stem: writes <stem>.json and <stem>.bin.
    #[arg(long)]
    out: PathBuf,
    /// Also export the solution as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
pub struct FundamentalArgs {
    #[arg(long)]
    spec: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
    /// Pole y,t0.
    #[arg(long, allow_hyphen_values = true, value_parser = parse::point)]
    pole: GroupPoint,
    /// Decreasing hand-over widths.
    #[arg(long, value_delimiter = ',', default_value = "0.8,0.5")]
    widths: Vec<f64>,
    /// First stored time (default: the pole time).
    #[arg(long, allow_hyphen_values = true)]
    t_start: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    t_end: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
}

/// Loads the spec, mollifying `A₀` when `--eps` is given.
fn operator(path: &Path, eps: Option<f64>) -> Result<(OperatorSpec, Operator), CliError> {
    let mut spec = parse::load_spec(path)?;
    if let Some(eps) = eps {
        let inner = Box::new(spec.coefficients.a0.clone());
        spec.coefficients.a0 = FieldDescriptor::Mollified { inner, eps };
    }
    let op = parse::resolve(&spec, path)?;
    Ok((spec, op))
}

fn config(g: &GridArgs, dim: usize, t_start: f64, t_end: f64) -> Result<SolveConfig, CliError> {
    check_dim("box", g.bounds.len(), dim)?;
    let mut cfg = SolveConfig::new(g.bounds.clone(), parse::spacing(&g.grid, dim)?, t_start, t_end);
    cfg.dt = g.dt;
    cfg.snapshots = g.snapshots;
    cfg.interpolation = match g.interp {
        Interp::Cubic => Interpolation::Cubic,
        Interp::Linear => Interpolation::Linear,
    };
    if g.strict_boundary {
        cfg.boundary_policy = BoundaryPolicy::Error;
    }
    if !(t_end > t_start) {
        return Err(CliError::Input(format!("t_end {t_end} must exceed t_start {t_start}")));
    }
    Ok(cfg)
}

fn export(u: &kolmo_core::pde::GridSolution, out: &Path, csv: Option<&PathBuf>, meta: serde_json::Value) -> Result<(), CliError> {
    u.save(out, &meta)?;
    if let Some(p) = csv {
        let mut f = std::io::BufWriter::new(std::fs::File::create(p)?);
        u.write_csv(&mut f)?;
    }
    Ok(())
}

pub fn cauchy(a: &CauchyArgs) -> Result<(), CliError> {
    let (spec, op) = operator(&a.spec, a.grid.eps)?;
    let n = op.group.dim();
    let cfg = config(&a.grid, n, a.t_start, a.t_end)?;
    let (u, record) = if a.datum == "kernel" {
        let pole = a.pole.as_ref().ok_or_else(|| CliError::Input("--datum kernel needs --pole".into()))?;
        check_dim("pole", pole.dim(), n)?;
        if !(a.t_start > pole.t) {
            return Err(CliError::Input("--t-start must be after the pole time".into()));
        }
        let frozen = op.coefficients.a0.eval_matrix(&pole.x, pole.t)?;
        let kernel = GaussianKernel::divergence_form(op.group.clone(), &frozen)?;
        let values = sample_datum(&cfg, |x| {
            kernel.eval(&GroupPoint::new(x.to_vec(), a.t_start), pole).expect("covariance validated at construction")
        });
        solve_cauchy_from(&op, &cfg, values, None)?
    } else {
        let desc: FieldDescriptor =
            serde_json::from_str(&a.datum).map_err(|e| CliError::Input(format!("datum: {e}")))?;
        let base = a.spec.parent().unwrap_or(Path::new("."));
        let phi = Field::from_descriptor(&desc, Codomain::Scalar, spec.window, base)?;
        solve_cauchy(&op, &phi, &cfg)?
    };
    for w in &record.warnings {
        eprintln!("warning: {w}");
    }
    let meta = json!({
        "command": "solve cauchy",
        "spec": spec,
        "spec_hash": spec.hash(),
        "config": cfg,
        "datum": a.datum,
        "pole": a.pole,
        "record": record,
    });
    export(&u, &a.out, a.csv.as_ref(), meta.clone())?;
    parse::write_json(&json!({ "out": a.out, "record": meta["record"] }), None)
}

pub fn fundamental(a: &FundamentalArgs) -> Result<(), CliError> {
    let (spec, op) = operator(&a.spec, a.grid.eps)?;
    let n = op.group.dim();
    check_dim("pole", a.pole.dim(), n)?;
    let cfg = config(&a.grid, n, a.t_start.unwrap_or(a.pole.t), a.t_end)?;
    let (u, report) = approx_fundamental(&op, &a.pole.x, a.pole.t, &a.widths, &cfg)?;
    for w in report.records.iter().flat_map(|r| &r.warnings) {
        eprintln!("warning: {w}");
    }
    let meta = json!({
        "command": "solve fundamental",
        "spec": spec,
        "spec_hash": spec.hash(),
        "config": cfg,
        "pole": a.pole,
        "report": report,
    });
    export(&u, &a.out, a.csv.as_ref(), meta)?;
    parse::write_json(
        &json!({ "out": a.out, "spreads": report.spreads, "mass": report.mass, "widths": report.widths }),
        None,
    )
}
