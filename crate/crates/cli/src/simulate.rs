//! `mc simulate|density|mass` and `example asian`.

use std::path::PathBuf;

use clap::Args;
use kolmo_core::asian::{price_report, AsianContract, Payoff};
use kolmo_core::mc::{
    compare_with_kernel, density_estimate, mass_in_dr_ensemble, mass_in_dr_kernel, measure_dr_scaling, simulate as run,
    Bins, McConfig, PathEnsemble,
};
use kolmo_core::spec::Operator;
use kolmo_core::GaussianKernel;
use serde_json::json;

use crate::error::CliError;
use crate::parse::{self, check_dim, coord_names, meta_path, write_csv, write_json};

#[derive(Args, Clone)]
pub struct McArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Start point.
    #[arg(long, allow_hyphen_values = true, value_delimiter = ',')]
    x0: Vec<f64>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    t0: f64,
    #[arg(long, default_value_t = 100_000)]
    paths: usize,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

impl McArgs {
    fn config(&self) -> McConfig {
        McConfig { paths: self.paths, dt: self.dt, seed: self.seed }
    }

    fn run(&self, times: &[f64]) -> Result<(Operator, PathEnsemble), CliError> {
        let spec = parse::load_spec(&self.spec)?;
        let op = parse::resolve(&spec, &self.spec)?;
        check_dim("x0", self.x0.len(), op.group.dim())?;
        let ens = run(&op, &self.x0, self.t0, times, &self.config())?;
        Ok((op, ens))
    }

    fn metadata(&self, op: &Operator, command: &str) -> serde_json::Value {
        json!({
            "command": command,
            "spec": op.spec,
            "spec_hash": op.spec.hash(),
            "x0": self.x0,
            "t0": self.t0,
            "mc": self.config(),
        })
    }
}

#[derive(Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    mc: McArgs,
    /// Query times.
    #[arg(long, value_delimiter = ',')]
    times: Vec<f64>,
    /// Output stem: writes <stem>.json and <stem>.bin.
    #[arg(long)]
    out: PathBuf,
}

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let times: Vec<f64> = a.times.clone();
    let (op, ens) = a.mc.run(&times)?;
    ens.save(&a.out)?;
    let moments: Vec<_> = (0..times.len()).map(|k| json!({ "t": times[k], "moments": ens.moments(k) })).collect();
    write_json(&json!({ "out": a.out, "metadata": a.mc.metadata(&op, "mc simulate"), "moments": moments }), None)
}

#[derive(Args)]
pub struct DensityArgs {
    #[command(flatten)]
    mc: McArgs,
    /// Query time.
    #[arg(long)]
    t: f64,
    /// Bins lo:hi:n per coordinate.
    #[arg(long, required = true, allow_hyphen_values = true, value_parser = parse::binned)]
    bins: Vec<(f64, f64, usize)>,
    /// One [1,2,1]/4 smoothing pass per axis.
    #[arg(long)]
    smooth: bool,
    /// Compare with the frozen-coefficient kernel and print the summary to stderr.
    #[arg(long)]
    compare: bool,
    /// CSV output (default stdout); metadata goes to <out>.meta.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn density(a: &DensityArgs) -> Result<(), CliError> {
    let (op, ens) = a.mc.run(&[a.t])?;
    let n = op.group.dim();
    check_dim("bins", a.bins.len(), n)?;
    let bins = Bins {
        lo: a.bins.iter().map(|b| b.0).collect(),
        hi: a.bins.iter().map(|b| b.1).collect(),
        counts: a.bins.iter().map(|b| b.2).collect(),
    };
    let hist = density_estimate(&ens, 0, &bins, a.smooth)?;
    let comparison = if a.compare {
        let frozen = op.coefficients.a0.eval_matrix(&a.mc.x0, a.mc.t0)?;
        let kernel = GaussianKernel::divergence_form(op.group.clone(), &frozen)?;
        let pole = kolmo_core::GroupPoint::new(a.mc.x0.clone(), a.mc.t0);
        let c = compare_with_kernel(&hist, &kernel, &pole)?;
        eprintln!("{}", serde_json::to_string(&c).expect("json"));
        Some(c)
    } else {
        None
    };
    if !hist.empty_bins.is_empty() {
        eprintln!("warning: {} empty bins", hist.empty_bins.len());
    }
    let mut header = coord_names(n);
    header.push("density".into());
    header.push("se".into());
    let rows = (0..bins.len()).map(|b| [bins.center(b), vec![hist.density[b], hist.se[b]]].concat());
    write_csv(&header, rows, a.out.as_ref())?;
    if let Some(out) = &a.out {
        let mut meta = a.mc.metadata(&op, "mc density");
        meta["t"] = json!(a.t);
        meta["bins"] = json!(bins);
        meta["smooth"] = json!(a.smooth);
        meta["outside_fraction"] = json!(hist.outside_fraction);
        meta["comparison"] = json!(comparison);
        write_json(&meta, Some(&meta_path(out)))?;
    }
    Ok(())
}

#[derive(Args)]
pub struct MassArgs {
    #[command(flatten)]
    mc: McArgs,
    #[arg(long)]
    t: f64,
    /// Radii R.
    #[arg(long = "radius", value_delimiter = ',', default_value = "0.5,1,2,4")]
    radii: Vec<f64>,
    /// Also integrate the frozen-coefficient kernel over D_R.
    #[arg(long)]
    kernel: bool,
    /// Elapsed times for the meas(D_R) scaling fit.
    #[arg(long, value_delimiter = ',', default_value = "1,0.5,0.25,0.125,0.0625")]
    taus: Vec<f64>,
    /// Monte-Carlo trials per meas(D_R) estimate.
    #[arg(long, default_value_t = 200_000)]
    trials: usize,
}

pub fn mass(a: &MassArgs) -> Result<(), CliError> {
    let (op, ens) = a.mc.run(&[a.t])?;
    let tau = a.t - a.mc.t0;
    let kernel = if a.kernel {
        let frozen = op.coefficients.a0.eval_matrix(&a.mc.x0, a.mc.t0)?;
        Some(GaussianKernel::divergence_form(op.group.clone(), &frozen)?)
    } else {
        None
    };
    let mut rows = Vec::new();
    for &r in a.radii.iter() {
        let est = mass_in_dr_ensemble(&op.group, &ens, 0, r);
        let exact = kernel.as_ref().map(|k| mass_in_dr_kernel(k, tau, r)).transpose()?;
        rows.push(json!({ "R": r, "ensemble": est, "kernel": exact }));
    }
    let taus: Vec<f64> = a.taus.clone();
    let r_measure = a.radii.iter().copied().next().unwrap_or(1.0);
    let scaling = measure_dr_scaling(&op.group, &a.mc.x0, &taus, r_measure, a.trials, a.mc.seed);
    write_json(
        &json!({
            "metadata": a.mc.metadata(&op, "mc mass"),
            "t": a.t,
            "mass": rows,
            "measure": { "R": r_measure, "trials": a.trials, "scaling": scaling, "Q_half": op.group.q() as f64 / 2.0 },
        }),
        None,
    )
}

#[derive(Args)]
pub struct AsianArgs {
    #[arg(long, default_value_t = 100.0)]
    spot: f64,
    /// Accumulated integral of log S over the elapsed part of the averaging period.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    accumulated: f64,
    #[arg(long, default_value_t = 0.05, allow_hyphen_values = true)]
    rate: f64,
    #[arg(long, default_value_t = 0.2)]
    sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    maturity: f64,
    #[arg(long, default_value_t = 100.0)]
    strike: f64,
    /// Averaging period length (default: maturity).
    #[arg(long)]
    period: Option<f64>,
    #[arg(long, value_enum, default_value = "call")]
    payoff: PayoffArg,
    #[arg(long, default_value_t = 100_000)]
    paths: usize,
    #[arg(long, default_value_t = 1e-2)]
    dt: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(clap::ValueEnum, Clone, Copy)]
pub enum PayoffArg {
    Call,
    Put,
    Unit,
}

pub fn asian(a: &AsianArgs) -> Result<(), CliError> {
    let contract = AsianContract {
        spot: a.spot,
        accumulated: a.accumulated,
        rate: a.rate,
        sigma: a.sigma,
        maturity: a.maturity,
        strike: a.strike,
        period: a.period.unwrap_or(a.maturity),
        payoff: match a.payoff {
            PayoffArg::Call => Payoff::Call,
            PayoffArg::Put => Payoff::Put,
            PayoffArg::Unit => Payoff::Unit,
        },
    };
    let rep = price_report(&contract, &McConfig { paths: a.paths, dt: a.dt, seed: a.seed })?;
    write_json(&rep, None)
}
