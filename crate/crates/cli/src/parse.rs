//! Value parsers for command-line arguments and small input files.

use std::io::Write;
use std::path::{Path, PathBuf};

use kolmo_core::numerics::fmt_f64;
use kolmo_core::spec::{Operator, OperatorSpec};
use kolmo_core::GroupPoint;
use serde::Serialize;

use crate::error::CliError;

pub fn floats(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|v| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"))).collect()
}

/// `x1,…,xN,t`.
pub fn point(s: &str) -> Result<GroupPoint, String> {
    let v = floats(s)?;
    if v.len() < 2 {
        return Err("a point needs at least one space coordinate and a time".into());
    }
    Ok(GroupPoint::from_slice(&v).expect("non-empty"))
}

/// `lo:hi`.
pub fn range(s: &str) -> Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 2 {
        return Err(format!("expected lo:hi, got {s:?}"));
    }
    let lo: f64 = parts[0].parse().map_err(|e| format!("{s:?}: {e}"))?;
    let hi: f64 = parts[1].parse().map_err(|e| format!("{s:?}: {e}"))?;
    if !(lo < hi) {
        return Err(format!("empty range {s:?}"));
    }
    Ok((lo, hi))
}

/// `lo:hi:n`.
pub fn binned(s: &str) -> Result<(f64, f64, usize), String> {
    let (head, n) = s.rsplit_once(':').ok_or_else(|| format!("expected lo:hi:n, got {s:?}"))?;
    let (lo, hi) = range(head)?;
    let n: usize = n.parse().map_err(|e| format!("{s:?}: {e}"))?;
    if n == 0 {
        return Err(format!("zero count in {s:?}"));
    }
    Ok((lo, hi, n))
}

/// CSV with a header row and columns `x1,…,xN,t`.
pub fn points_file(path: &Path) -> Result<Vec<GroupPoint>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        out.push(point(line).map_err(|e| CliError::Input(format!("{}:{}: {e}", path.display(), i + 1)))?);
    }
    Ok(out)
}

pub fn load_spec(path: &Path) -> Result<OperatorSpec, CliError> {
    Ok(OperatorSpec::from_path(path)?)
}

pub fn resolve(spec: &OperatorSpec, path: &Path) -> Result<Operator, CliError> {
    Ok(spec.resolve(path.parent().unwrap_or(Path::new(".")))?)
}

/// One spacing per coordinate, broadcasting a single value.
pub fn spacing(h: &[f64], dim: usize) -> Result<Vec<f64>, CliError> {
    match h.len() {
        1 => Ok(vec![h[0]; dim]),
        n if n == dim => Ok(h.to_vec()),
        n => Err(CliError::Input(format!("{n} grid spacings for {dim} coordinates"))),
    }
}

pub fn check_dim(what: &str, got: usize, dim: usize) -> Result<(), CliError> {
    if got != dim {
        return Err(CliError::Input(format!("{what}: {got} coordinates, expected {dim}")));
    }
    Ok(())
}

pub fn write_json(value: &impl Serialize, out: Option<&PathBuf>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("report serializes") + "\n";
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Writes rows of floats as CSV to `out` or stdout.
pub fn write_csv(header: &[String], rows: impl Iterator<Item = Vec<f64>>, out: Option<&PathBuf>) -> Result<(), CliError> {
    let mut buf = String::new();
    buf.push_str(&header.join(","));
    buf.push('\n');
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(fmt_f64).collect();
        buf.push_str(&cells.join(","));
        buf.push('\n');
    }
    match out {
        Some(p) => std::fs::write(p, buf)?,
        None => std::io::stdout().write_all(buf.as_bytes())?,
    }
    Ok(())
}

/// `<path>.meta.json` next to a CSV artifact.
pub fn meta_path(p: &Path) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn coord_names(dim: usize) -> Vec<String> {
    (1..=dim).map(|i| format!("x{i}")).collect()
}
