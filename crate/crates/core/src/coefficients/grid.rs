//! Tensor-grid samples with multilinear interpolation.

use std::path::Path;

use super::CoefficientError;

/// Samples on a tensor grid over a subset of the coordinates.
///
/// Axis names are `x1, …, xN` for space and `t` for time; every other CSV
/// column is a value component, in order.
#[derive(Debug, Clone, PartialEq)]
pub struct GridData {
    /// `(coordinate, nodes)`; the coordinate is `Some(i)` for `x_{i+1}`, `None` for `t`.
    axes: Vec<(Option<usize>, Vec<f64>)>,
    components: usize,
    /// Row-major in axis order, components innermost.
    values: Vec<f64>,
}

fn grid_err(msg: impl Into<String>) -> CoefficientError {
    CoefficientError::Grid(msg.into())
}

impl GridData {
    pub fn new(axes: Vec<(Option<usize>, Vec<f64>)>, components: usize, values: Vec<f64>) -> Result<Self, CoefficientError> {
        for (_, nodes) in &axes {
            if nodes.is_empty() || nodes.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(grid_err("axis nodes must be strictly increasing"));
            }
        }
        let expected = axes.iter().map(|(_, n)| n.len()).product::<usize>() * components;
        if values.len() != expected {
            return Err(grid_err(format!("expected {expected} values, found {}", values.len())));
        }
        Ok(Self { axes, components, values })
    }

    pub fn from_csv_path(path: &Path) -> Result<Self, CoefficientError> {
        let text = std::fs::read_to_string(path).map_err(|e| grid_err(format!("{}: {e}", path.display())))?;
        Self::from_csv(&text)
    }

    pub fn from_csv(text: &str) -> Result<Self, CoefficientError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<String> =
            lines.next().ok_or_else(|| grid_err("empty file"))?.split(',').map(|s| s.trim().to_string()).collect();
        let mut axis_cols = Vec::new();
        let mut value_cols = Vec::new();
        for (k, name) in header.iter().enumerate() {
            if name == "t" {
                axis_cols.push((k, None));
            } else if let Some(i) = name.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()).filter(|&i| i >= 1) {
                axis_cols.push((k, Some(i - 1)));
            } else {
                value_cols.push(k);
            }
        }
        if value_cols.is_empty() {
            return Err(grid_err("no value columns"));
        }
        let mut rows = Vec::new();
        for (ln, line) in lines.enumerate() {
            let cells: Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
            let cells = cells.map_err(|e| grid_err(format!("row {}: {e}", ln + 2)))?;
            if cells.len() != header.len() {
                return Err(grid_err(format!("row {} has {} cells, header has {}", ln + 2, cells.len(), header.len())));
            }
            rows.push(cells);
        }
        let mut axes: Vec<(Option<usize>, Vec<f64>)> = axis_cols
            .iter()
            .map(|&(k, coord)| {
                let mut nodes: Vec<f64> = rows.iter().map(|r| r[k]).collect();
                nodes.sort_by(f64::total_cmp);
                nodes.dedup();
                (coord, nodes)
            })
            .collect();
        let shape: Vec<usize> = axes.iter().map(|(_, n)| n.len()).collect();
        let cells: usize = shape.iter().product();
        if cells != rows.len() {
            return Err(grid_err(format!("{} rows do not form a full tensor grid of {cells} nodes", rows.len())));
        }
        let comps = value_cols.len();
        let mut values = vec![f64::NAN; cells * comps];
        let mut seen = vec![false; cells];
        for r in &rows {
            let mut flat = 0;
            for (a, &(k, _)) in axis_cols.iter().enumerate() {
                let idx = axes[a].1.binary_search_by(|v| v.total_cmp(&r[k])).expect("node present");
                flat = flat * shape[a] + idx;
            }
            if seen[flat] {
                return Err(grid_err("duplicate grid node"));
            }
            seen[flat] = true;
            for (c, &k) in value_cols.iter().enumerate() {
                values[flat * comps + c] = r[k];
            }
        }
        axes.shrink_to_fit();
        Self::new(axes, comps, values)
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn depends_on_time(&self) -> bool {
        self.axes.iter().any(|(c, _)| c.is_none())
    }

    pub fn breakpoints(&self, axis: usize, dim: usize, lo: f64, hi: f64) -> Vec<f64> {
        let coord = if axis < dim { Some(axis) } else { None };
        self.axes
            .iter()
            .filter(|(c, _)| *c == coord)
            .flat_map(|(_, n)| n.iter().cloned().filter(|&b| b > lo && b < hi))
            .collect()
    }

    /// Multilinear interpolation; coordinates outside the grid are clamped.
    pub fn interpolate(&self, x: &[f64], t: f64, out: &mut [f64]) {
        let k = self.axes.len();
        let mut base = Vec::with_capacity(k);
        let mut frac = Vec::with_capacity(k);
        for (coord, nodes) in &self.axes {
            let v = match coord {
                Some(i) => x[*i],
                None => t,
            };
            if nodes.len() == 1 || v <= nodes[0] {
                base.push(0);
                frac.push(0.0);
            } else if v >= nodes[nodes.len() - 1] {
                base.push(nodes.len() - 2);
                frac.push(1.0);
            } else {
                let i = nodes.partition_point(|&n| n <= v) - 1;
                base.push(i);
                frac.push((v - nodes[i]) / (nodes[i + 1] - nodes[i]));
            }
        }
        out.iter_mut().for_each(|o| *o = 0.0);
        for corner in 0..(1usize << k) {
            let mut w = 1.0;
            let mut flat = 0;
            for a in 0..k {
                let len = self.axes[a].1.len();
                let up = (corner >> a) & 1 == 1;
                if up && len == 1 {
                    w = 0.0;
                    break;
                }
                w *= if up { frac[a] } else { 1.0 - frac[a] };
                flat = flat * len + base[a] + usize::from(up);
            }
            if w == 0.0 {
                continue;
            }
            for (c, o) in out.iter_mut().enumerate() {
                *o += w * self.values[flat * self.components + c];
            }
        }
    }
}
