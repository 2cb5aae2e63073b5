//! Uniform space-time grids and sampled solutions.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PdeError;
use crate::group::GroupPoint;
use crate::numerics::fmt_f64;

/// Uniform axis `lo, lo+h, …, lo+(n−1)h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub h: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(lo: f64, h: f64, n: usize) -> Self {
        Self { lo, h, n }
    }

    /// Nodes spanning `[lo, hi]` with spacing close to `h` (rounded so the
    /// end points are nodes).
    pub fn spanning(lo: f64, hi: f64, h: f64) -> Self {
        let cells = ((hi - lo) / h).round().max(1.0) as usize;
        Self { lo, h: (hi - lo) / cells as f64, n: cells + 1 }
    }

    pub fn hi(&self) -> f64 {
        self.node(self.n - 1)
    }

    pub fn node(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.h
    }

    /// Cell index and fractional offset of `v`, or `None` outside `[lo, hi]`.
    pub fn locate(&self, v: f64) -> Option<(usize, f64)> {
        let s = (v - self.lo) / self.h;
        if !(s >= -1e-12 && s <= (self.n - 1) as f64 + 1e-12) {
            return None;
        }
        if self.n == 1 {
            return Some((0, 0.0));
        }
        let k = (s.floor().max(0.0) as usize).min(self.n - 2);
        Some((k, (s - k as f64).clamp(0.0, 1.0)))
    }
}

/// Row-major layout over spatial axes; the last axis varies fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceGrid {
    pub axes: Vec<Axis>,
}

impl SpaceGrid {
    pub fn new(axes: Vec<Axis>) -> Self {
        Self { axes }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dim()];
        for d in (0..self.dim().saturating_sub(1)).rev() {
            s[d] = s[d + 1] * self.axes[d + 1].n;
        }
        s
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for d in (0..self.dim()).rev() {
            idx[d] = flat % self.axes[d].n;
            flat /= self.axes[d].n;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.axes).fold(0, |acc, (&i, a)| acc * a.n + i)
    }

    pub fn coords(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat).iter().zip(&self.axes).map(|(&i, a)| a.node(i)).collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.h).product()
    }

    /// True when the node touches the box boundary along some axis.
    pub fn on_boundary(&self, flat: usize) -> bool {
        self.multi_index(flat).iter().zip(&self.axes).any(|(&i, a)| i == 0 || i + 1 == a.n)
    }

    /// Multilinear interpolation of nodal `values`; `None` outside the box.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> Option<f64> {
        let mut cells = Vec::with_capacity(self.dim());
        for (a, &v) in self.axes.iter().zip(x) {
            cells.push(a.locate(v)?);
        }
        let strides = self.strides();
        let mut acc = 0.0;
        for corner in 0..(1usize << self.dim()) {
            let mut w = 1.0;
            let mut flat = 0;
            for d in 0..self.dim() {
                let (k, f) = cells[d];
                let up = (corner >> d) & 1 == 1;
                if up && self.axes[d].n == 1 {
                    w = 0.0;
                    break;
                }
                w *= if up { f } else { 1.0 - f };
                flat += (k + usize::from(up)) * strides[d];
            }
            if w != 0.0 {
                acc += w * values[flat];
            }
        }
        Some(acc)
    }
}

/// Samples of `u` on a uniform space-time grid, stored time-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSolution {
    pub space: SpaceGrid,
    pub time: Axis,
    pub values: Vec<f64>,
}

impl GridSolution {
    pub fn new(space: SpaceGrid, time: Axis, values: Vec<f64>) -> Result<Self, PdeError> {
        if values.len() != space.len() * time.n {
            return Err(PdeError::Shape { expected: space.len() * time.n, got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(PdeError::NonFinite);
        }
        Ok(Self { space, time, values })
    }

    /// Samples a function on the grid.
    pub fn from_fn(space: SpaceGrid, time: Axis, mut f: impl FnMut(&[f64], f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(space.len() * time.n);
        for k in 0..time.n {
            let t = time.node(k);
            for j in 0..space.len() {
                values.push(f(&space.coords(j), t));
            }
        }
        Self { space, time, values }
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        let m = self.space.len();
        &self.values[k * m..(k + 1) * m]
    }

    pub fn at(&self, k: usize, flat: usize) -> f64 {
        self.values[k * self.space.len() + flat]
    }

    pub fn point(&self, k: usize, flat: usize) -> GroupPoint {
        GroupPoint::new(self.space.coords(flat), self.time.node(k))
    }

    /// Space-time multilinear interpolation.
    pub fn interpolate(&self, z: &GroupPoint) -> Result<f64, PdeError> {
        let (k, f) = self.time.locate(z.t).ok_or(PdeError::OutOfDomain)?;
        let lo = self.space.interpolate(self.slice(k), &z.x).ok_or(PdeError::OutOfDomain)?;
        if self.time.n == 1 || f == 0.0 {
            return Ok(lo);
        }
        let hi = self.space.interpolate(self.slice(k + 1), &z.x).ok_or(PdeError::OutOfDomain)?;
        Ok((1.0 - f) * lo + f * hi)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Writes `<stem>.json` (axes and `metadata`) and `<stem>.bin`
    /// (little-endian f64, time-major, row-major in space).
    pub fn save(&self, stem: &Path, metadata: &serde_json::Value) -> Result<(), PdeError> {
        let header = serde_json::json!({
            "space": self.space,
            "time": self.time,
            "layout": "time-major, row-major space, little-endian f64",
            "metadata": metadata,
        });
        let json = serde_json::to_string_pretty(&header).expect("header serializes");
        std::fs::write(stem.with_extension("json"), json + "\n").map_err(io_err)?;
        let mut bytes = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(stem.with_extension("bin"), bytes).map_err(io_err)
    }

    pub fn load(stem: &Path) -> Result<(Self, serde_json::Value), PdeError> {
        let text = std::fs::read_to_string(stem.with_extension("json")).map_err(io_err)?;
        let header: serde_json::Value = serde_json::from_str(&text).map_err(|e| PdeError::Io(e.to_string()))?;
        let space: SpaceGrid = serde_json::from_value(header["space"].clone()).map_err(|e| PdeError::Io(e.to_string()))?;
        let time: Axis = serde_json::from_value(header["time"].clone()).map_err(|e| PdeError::Io(e.to_string()))?;
        let bytes = std::fs::read(stem.with_extension("bin")).map_err(io_err)?;
        let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Ok((Self::new(space, time, values)?, header["metadata"].clone()))
    }

    /// CSV with columns `x1..xN, t, u`.
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        let names: Vec<String> = (1..=self.space.dim()).map(|i| format!("x{i}")).collect();
        writeln!(out, "{},t,u", names.join(","))?;
        for k in 0..self.time.n {
            let t = fmt_f64(self.time.node(k));
            for j in 0..self.space.len() {
                let xs: Vec<String> = self.space.coords(j).into_iter().map(fmt_f64).collect();
                writeln!(out, "{},{},{}", xs.join(","), t, fmt_f64(self.at(k, j)))?;
            }
        }
        Ok(())
    }
}

fn io_err(e: std::io::Error) -> PdeError {
    PdeError::Io(e.to_string())
}
