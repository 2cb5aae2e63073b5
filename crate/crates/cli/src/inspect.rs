//! `structure`, `kernel eval|reproduce` and `mollify`.

use std::path::PathBuf;

use clap::Args;
use kolmo_core::coefficients::{check_ellipticity, l1_distance, mollify as mollify_field, Codomain, Field};
use kolmo_core::group::powi_u;
use kolmo_core::kernel::reproduction_check;
use kolmo_core::structure::{check_hypoellipticity, detect_canonical_form};
use kolmo_core::{BlockStructure, GaussianKernel, Group, GroupPoint};
use serde_json::json;

use crate::error::CliError;
use crate::parse::{self, check_dim, coord_names, meta_path, write_csv, write_json};

pub fn structure(spec_path: &PathBuf) -> Result<(), CliError> {
    let spec = parse::load_spec(spec_path)?;
    let drift = spec.drift();
    let blocks = &spec.structure.blocks;
    let m0 = *blocks.first().ok_or_else(|| CliError::Input("empty block list".into()))?;
    let hypo = check_hypoellipticity(&drift, m0)?;
    match detect_canonical_form(&drift, blocks) {
        Ok(s) => write_json(
            &json!({
                "canonical": true,
                "blocks": s.blocks(),
                "N": s.dim(),
                "kappa": s.kappa(),
                "Q": s.q(),
                "alpha": s.alpha(),
                "kalman_rank": hypo.kalman_rank,
                "c_min_eig": hypo.c_min_eig,
                "hypoelliptic": hypo.hypoelliptic,
            }),
            None,
        ),
        Err(e) => {
            write_json(
                &json!({
                    "canonical": false,
                    "reason": e.to_string(),
                    "blocks": blocks,
                    "kalman_rank": hypo.kalman_rank,
                    "c_min_eig": hypo.c_min_eig,
                    "hypoelliptic": hypo.hypoelliptic,
                }),
                None,
            )?;
            // A hypoelliptic drift in the wrong layout is a usage error; a
            // degenerate one is a legitimate finding.
            if hypo.hypoelliptic {
                Err(e.into())
            } else {
                Ok(())
            }
        }
    }
}

#[derive(Args)]
pub struct KernelEvalArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Pole y,t0.
    #[arg(long, allow_hyphen_values = true, value_parser = parse::point)]
    pole: GroupPoint,
    /// Evaluation points x1,…,xN,t separated by ';'.
    #[arg(long, allow_hyphen_values = true, value_parser = parse::point, value_delimiter = ';', conflicts_with = "points_file")]
    points: Vec<GroupPoint>,
    /// CSV of evaluation points with a header row.
    #[arg(long)]
    points_file: Option<PathBuf>,
    /// Tensor grid lo:hi:n per space coordinate, combined with --times.
    #[arg(long, allow_hyphen_values = true, value_parser = parse::binned)]
    grid: Vec<(f64, f64, usize)>,
    #[arg(long, allow_hyphen_values = true, value_delimiter = ',')]
    times: Option<Vec<f64>>,
    /// Diffusion scale; λ = 2 is the kernel of Σ∂² + ⟨Bx,D⟩ − ∂_t.
    #[arg(long, default_value_t = 2.0)]
    lambda: f64,
    /// Print the largest relative homogeneity defect over the points to stderr.
    #[arg(long)]
    check_homogeneity: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// The spec's group, accepting drifts that are not in canonical form.
fn spec_group(spec: &kolmo_core::spec::OperatorSpec) -> Result<Group, CliError> {
    let drift = spec.drift();
    let structure = match detect_canonical_form(&drift, &spec.structure.blocks) {
        Ok(s) => s,
        Err(_) => BlockStructure::new(spec.structure.blocks.clone())?,
    };
    if drift.dim() != structure.dim() {
        return Err(CliError::Input(format!("B is {}x{} but the blocks sum to {}", drift.dim(), drift.dim(), structure.dim())));
    }
    Ok(Group::new(structure, drift))
}

pub fn kernel_eval(a: &KernelEvalArgs) -> Result<(), CliError> {
    let spec = parse::load_spec(&a.spec)?;
    let group = spec_group(&spec)?;
    let n = group.dim();
    check_dim("pole", a.pole.dim(), n)?;
    let mut pts = match &a.points_file {
        Some(f) => parse::points_file(f)?,
        None => a.points.clone(),
    };
    if !a.grid.is_empty() {
        check_dim("grid", a.grid.len(), n)?;
        let times = a.times.as_ref().ok_or_else(|| CliError::Input("--grid needs --times".into()))?;
        let total: usize = a.grid.iter().map(|g| g.2).product();
        for &t in times {
            for flat in 0..total {
                let mut rem = flat;
                let mut x = vec![0.0; n];
                for d in (0..n).rev() {
                    let (lo, hi, k) = a.grid[d];
                    let i = rem % k;
                    rem /= k;
                    x[d] = if k == 1 { lo } else { lo + (hi - lo) * i as f64 / (k - 1) as f64 };
                }
                pts.push(GroupPoint::new(x, t));
            }
        }
    }
    if pts.is_empty() {
        return Err(CliError::Input("no evaluation points (use --points, --points-file or --grid)".into()));
    }
    for p in &pts {
        check_dim("point", p.dim(), n)?;
    }
    let kernel = GaussianKernel::lambda(group.clone(), a.lambda)?;
    let values = pts.iter().map(|p| kernel.eval(p, &a.pole)).collect::<Result<Vec<f64>, _>>()?;
    if a.check_homogeneity {
        let q = group.q() as u32;
        let mut worst = 0.0f64;
        for p in pts.iter().filter(|p| p.t > a.pole.t) {
            let rel = group.relative(&a.pole, p);
            let base = kernel.eval_relative(&rel)?;
            if base <= 0.0 {
                continue;
            }
            for r in [0.5, 2.0] {
                let scaled = kernel.eval_relative(&group.dilate(r, &rel))?;
                worst = worst.max((scaled - base / powi_u(r, q)).abs() / (base / powi_u(r, q)));
            }
        }
        eprintln!("homogeneity defect: {worst:e}");
    }
    let mut header = coord_names(n);
    header.push("t".into());
    header.push("value".into());
    write_csv(&header, pts.iter().zip(&values).map(|(p, v)| [p.to_vec(), vec![*v]].concat()), a.out.as_ref())?;
    if let Some(out) = &a.out {
        let meta = json!({
            "command": "kernel eval",
            "spec": spec,
            "spec_hash": spec.hash(),
            "pole": a.pole,
            "lambda": a.lambda,
            "points": pts.len(),
        });
        write_json(&meta, Some(&meta_path(out)))?;
    }
    Ok(())
}

#[derive(Args)]
pub struct ReproduceArgs {
    #[arg(long)]
    spec: PathBuf,
    /// End point x,t.
    #[arg(long, allow_hyphen_values = true, value_parser = parse::point)]
    at: GroupPoint,
    /// Pole y,t0.
    #[arg(long, allow_hyphen_values = true, value_parser = parse::point)]
    pole: GroupPoint,
    /// Intermediate time.
    #[arg(long)]
    s: f64,
    #[arg(long, default_value_t = 2.0)]
    lambda: f64,
}

pub fn reproduce(a: &ReproduceArgs) -> Result<(), CliError> {
    let spec = parse::load_spec(&a.spec)?;
    let group = spec_group(&spec)?;
    check_dim("end point", a.at.dim(), group.dim())?;
    check_dim("pole", a.pole.dim(), group.dim())?;
    let kernel = GaussianKernel::lambda(group, a.lambda)?;
    let rep = reproduction_check(&kernel, &a.at.x, a.at.t, &a.pole.x, a.pole.t, a.s)?;
    write_json(&json!({ "at": a.at, "pole": a.pole, "s": a.s, "lambda": a.lambda, "result": rep }), None)
}

#[derive(Args)]
pub struct MollifyArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Mollification parameters.
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.1,0.05")]
    eps: Vec<f64>,
    /// Box for the L1 distance, lo:hi per coordinate (default [-1,1] each).
    #[arg(long = "box", allow_hyphen_values = true, value_parser = parse::range)]
    bounds: Vec<(f64, f64)>,
    /// Midpoint cells per axis for the L1 distance and ellipticity sampling.
    #[arg(long, default_value_t = 40)]
    cells: usize,
    /// Evaluation time (default: middle of the window).
    #[arg(long)]
    time: Option<f64>,
}

pub fn mollify(a: &MollifyArgs) -> Result<(), CliError> {
    let spec = parse::load_spec(&a.spec)?;
    let op = parse::resolve(&spec, &a.spec)?;
    let n = op.group.dim();
    let bounds = if a.bounds.is_empty() { vec![(-1.0, 1.0); n] } else { a.bounds.clone() };
    check_dim("box", bounds.len(), n)?;
    let w = spec.window;
    let t = a.time.unwrap_or(0.5 * (w.t0 + w.t1));
    let raw = &op.coefficients.a0;
    let cells = a.cells.max(1);
    let samples: Vec<GroupPoint> = (0..cells.pow(n as u32))
        .map(|k| {
            let mut rem = k;
            let x = bounds
                .iter()
                .map(|(lo, hi)| {
                    let i = rem % cells;
                    rem /= cells;
                    lo + (hi - lo) * (i as f64 + 0.5) / cells as f64
                })
                .collect();
            GroupPoint::new(x, t)
        })
        .collect();
    let sup = |f: &Field| -> Result<f64, CliError> {
        let mut m = 0.0f64;
        for z in &samples {
            m = m.max(f.eval(&z.x, z.t)?.iter().fold(0.0f64, |a, v| a.max(v.abs())));
        }
        Ok(m)
    };
    let raw_sup = sup(raw)?;
    let mut rows = Vec::new();
    for &eps in &a.eps {
        let f = mollify_field(raw, eps)?;
        let ell = check_ellipticity(&f, &samples)?;
        let reaction = match &op.coefficients.c {
            Some(c) if c.codomain() == Codomain::Scalar => {
                let m = mollify_field(c, eps)?;
                let mut hi = f64::NEG_INFINITY;
                for z in &samples {
                    hi = hi.max(m.eval_scalar(&z.x, z.t)?);
                }
                Some(hi)
            }
            _ => None,
        };
        rows.push(json!({
            "eps": eps,
            "lambda_hat": ell.lambda_hat,
            "Lambda_hat": ell.big_lambda_hat,
            "violations": ell.violations.len(),
            "l1_to_raw": l1_distance(&f, raw, &bounds, t, cells)?,
            "sup": sup(&f)?,
            "c_max": reaction,
        }));
    }
    write_json(
        &json!({
            "spec_hash": spec.hash(),
            "time": t,
            "box": bounds,
            "cells": cells,
            "raw_sup": raw_sup,
            "rows": rows,
        }),
        None,
    )
}
