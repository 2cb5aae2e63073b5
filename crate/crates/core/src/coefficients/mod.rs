//! Coefficient fields `A₀, b, c, a` of the operator: representation,
//! ellipticity checks, mollification, moduli of continuity and rescaling.

mod grid;
mod modulus;
mod mollify;

use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::group::GroupPoint;
use crate::numerics::mix64;

pub use grid::GridData;
pub use modulus::{dini_integral, dini_sequence, holder_seminorm, modulus_of_continuity, DiniConvergence, DiniEstimate, PairSampling, SampleBox};
pub use mollify::{mollify, Mollified, MOLLIFIER_NODES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoefficientError {
    #[error("shifted time {shifted} for t = {t} leaves the field window [{t0}, {t1}]")]
    WindowUnderflow { t: f64, shifted: f64, t0: f64, t1: f64 },
    #[error("field value has {got} components, expected {expected}")]
    CodomainMismatch { expected: usize, got: usize },
    #[error("matrix-valued field is not symmetric")]
    NotSymmetric,
    #[error("mollification parameter must lie in (0, 1], got {0}")]
    InvalidEps(f64),
    #[error("grid field: {0}")]
    Grid(String),
    #[error("coordinate index {index} out of range for dimension {dim}")]
    BadIndex { index: usize, dim: usize },
}

/// Value space of a field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Codomain {
    Scalar,
    Vector(usize),
    /// Symmetric `m×m` matrices, stored row-major.
    Matrix(usize),
}

impl Codomain {
    pub fn len(self) -> usize {
        match self {
            Codomain::Scalar => 1,
            Codomain::Vector(m) => m,
            Codomain::Matrix(m) => m * m,
        }
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }

    /// Embeds a scalar: broadcast for vectors, multiple of the identity for matrices.
    fn from_scalar(self, v: f64) -> Vec<f64> {
        match self {
            Codomain::Scalar => vec![v],
            Codomain::Vector(m) => vec![v; m],
            Codomain::Matrix(m) => {
                let mut out = vec![0.0; m * m];
                for i in 0..m {
                    out[i * m + i] = v;
                }
                out
            }
        }
    }
}

/// Time window `[T0, T1]` on which a field is defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    #[serde(rename = "T0")]
    pub t0: f64,
    #[serde(rename = "T1")]
    pub t1: f64,
}

impl Window {
    pub fn new(t0: f64, t1: f64) -> Self {
        Self { t0, t1 }
    }

    pub fn length(&self) -> f64 {
        self.t1 - self.t0
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t0 && t <= self.t1
    }
}

/// A constant value as written in a spec file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConstValue {
    Scalar(f64),
    Vector(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

/// Built-in analytic fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum Preset {
    /// `f(x,t) = x_index`.
    Coordinate { index: usize },
    /// `λ + (Λ−λ)(1 + sin(Σx_i + t))/2`, embedded as for constants.
    SmoothDiffusion {
        lambda: f64,
        #[serde(rename = "Lambda")]
        big_lambda: f64,
    },
}

/// Seeded piecewise-constant field on cubes of side `cell`, taking the
/// values `low` or `high` (times the identity for matrices).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkerboard {
    pub cell: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_cell: Option<f64>,
    pub seed: u64,
    pub low: f64,
    pub high: f64,
}

impl Checkerboard {
    fn value(&self, x: &[f64], t: f64) -> f64 {
        let mut h = mix64(self.seed);
        for v in x {
            h = mix64(h ^ ((v / self.cell).floor() as i64 as u64));
        }
        if let Some(tc) = self.time_cell {
            h = mix64(h ^ ((t / tc).floor() as i64 as u64) ^ 0x5555_5555_5555_5555);
        }
        if h & 1 == 0 {
            self.low
        } else {
            self.high
        }
    }

    fn breakpoints(cell: f64, lo: f64, hi: f64) -> Vec<f64> {
        let first = (lo / cell).floor() as i64 + 1;
        let last = (hi / cell).ceil() as i64 - 1;
        (first..=last).map(|k| k as f64 * cell).filter(|&b| b > lo && b < hi).collect()
    }
}

/// Serializable description of a field, as it appears in an operator spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldDescriptor {
    Constant { value: ConstValue },
    Preset(Preset),
    /// Samples in a CSV sidecar, path relative to the spec file.
    Grid { path: String },
    Checkerboard(Checkerboard),
    Mollified { inner: Box<FieldDescriptor>, eps: f64 },
}

#[derive(Debug)]
enum Source {
    Constant(Vec<f64>),
    Preset(Preset),
    Grid(GridData),
    Checkerboard(Checkerboard),
    Mollified(Mollified),
    /// `factor · inner(δ_r(x,t))`.
    Rescaled { inner: Field, r: f64, factor: f64, alpha: Vec<u32> },
}

/// A coefficient field evaluable at any `(x, t)`.
#[derive(Debug, Clone)]
pub struct Field {
    codomain: Codomain,
    window: Window,
    source: Arc<Source>,
}

impl Field {
    fn from_source(codomain: Codomain, window: Window, source: Source) -> Self {
        Self { codomain, window, source: Arc::new(source) }
    }

    pub fn constant(codomain: Codomain, window: Window, value: Vec<f64>) -> Result<Self, CoefficientError> {
        if value.len() != codomain.len() {
            return Err(CoefficientError::CodomainMismatch { expected: codomain.len(), got: value.len() });
        }
        if let Codomain::Matrix(m) = codomain {
            check_symmetric(m, &value)?;
        }
        Ok(Self::from_source(codomain, window, Source::Constant(value)))
    }

    /// A scalar embedded per [`Codomain`] (identity multiple for matrices).
    pub fn constant_scalar(codomain: Codomain, window: Window, v: f64) -> Self {
        Self::from_source(codomain, window, Source::Constant(codomain.from_scalar(v)))
    }

    pub fn preset(codomain: Codomain, window: Window, preset: Preset) -> Self {
        Self::from_source(codomain, window, Source::Preset(preset))
    }

    pub fn checkerboard(codomain: Codomain, window: Window, board: Checkerboard) -> Self {
        Self::from_source(codomain, window, Source::Checkerboard(board))
    }

    pub fn grid(codomain: Codomain, window: Window, data: GridData) -> Result<Self, CoefficientError> {
        if data.components() != codomain.len() {
            return Err(CoefficientError::CodomainMismatch { expected: codomain.len(), got: data.components() });
        }
        Ok(Self::from_source(codomain, window, Source::Grid(data)))
    }

    pub(crate) fn mollified(codomain: Codomain, window: Window, m: Mollified) -> Self {
        Self::from_source(codomain, window, Source::Mollified(m))
    }

    /// Builds a field from its spec description; grid paths resolve against `base`.
    pub fn from_descriptor(
        desc: &FieldDescriptor,
        codomain: Codomain,
        window: Window,
        base: &Path,
    ) -> Result<Self, CoefficientError> {
        match desc {
            FieldDescriptor::Constant { value } => {
                let flat = match value {
                    ConstValue::Scalar(v) => codomain.from_scalar(*v),
                    ConstValue::Vector(v) => v.clone(),
                    ConstValue::Matrix(rows) => rows.iter().flatten().cloned().collect(),
                };
                Self::constant(codomain, window, flat)
            }
            FieldDescriptor::Preset(p) => Ok(Self::preset(codomain, window, p.clone())),
            FieldDescriptor::Grid { path } => {
                let data = GridData::from_csv_path(&base.join(path))?;
                Self::grid(codomain, window, data)
            }
            FieldDescriptor::Checkerboard(c) => Ok(Self::checkerboard(codomain, window, c.clone())),
            FieldDescriptor::Mollified { inner, eps } => {
                let inner = Self::from_descriptor(inner, codomain, window, base)?;
                mollify(&inner, *eps)
            }
        }
    }

    pub fn codomain(&self) -> Codomain {
        self.codomain
    }

    pub fn window(&self) -> Window {
        self.window
    }

    /// True when the value never depends on `t`.
    pub fn is_time_independent(&self) -> bool {
        match &*self.source {
            Source::Constant(_) => true,
            Source::Preset(Preset::Coordinate { .. }) => true,
            Source::Preset(Preset::SmoothDiffusion { .. }) => false,
            Source::Grid(g) => !g.depends_on_time(),
            Source::Checkerboard(c) => c.time_cell.is_none(),
            Source::Mollified(m) => m.inner().is_time_independent(),
            Source::Rescaled { inner, .. } => inner.is_time_independent(),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(&*self.source, Source::Constant(_))
    }

    /// Points in `(lo, hi)` along `axis` (spatial index, or `N` for time)
    /// where the field may be discontinuous or have a kink.
    pub fn breakpoints(&self, axis: usize, dim: usize, lo: f64, hi: f64) -> Vec<f64> {
        match &*self.source {
            Source::Constant(_) | Source::Preset(_) | Source::Mollified(_) => Vec::new(),
            Source::Grid(g) => g.breakpoints(axis, dim, lo, hi),
            Source::Checkerboard(c) => {
                if axis < dim {
                    Checkerboard::breakpoints(c.cell, lo, hi)
                } else {
                    c.time_cell.map(|tc| Checkerboard::breakpoints(tc, lo, hi)).unwrap_or_default()
                }
            }
            Source::Rescaled { inner, r, alpha, .. } => {
                let s = if axis < dim { crate::group::powi_u(*r, alpha[axis]) } else { r * r };
                inner.breakpoints(axis, dim, lo * s, hi * s).into_iter().map(|b| b / s).collect()
            }
        }
    }

    /// Writes `f(x,t)` into `out` (length `codomain.len()`).
    pub fn eval_into(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<(), CoefficientError> {
        match &*self.source {
            Source::Constant(v) => out.copy_from_slice(v),
            Source::Preset(p) => {
                let v = match p {
                    Preset::Coordinate { index } => {
                        *x.get(*index).ok_or(CoefficientError::BadIndex { index: *index, dim: x.len() })?
                    }
                    Preset::SmoothDiffusion { lambda, big_lambda } => {
                        let phase: f64 = x.iter().sum::<f64>() + t;
                        lambda + (big_lambda - lambda) * 0.5 * (1.0 + phase.sin())
                    }
                };
                write_scalar(self.codomain, v, out);
            }
            Source::Grid(g) => g.interpolate(x, t, out),
            Source::Checkerboard(c) => write_scalar(self.codomain, c.value(x, t), out),
            Source::Mollified(m) => m.eval_into(x, t, out)?,
            Source::Rescaled { inner, r, factor, alpha } => {
                let xs: Vec<f64> = x.iter().zip(alpha).map(|(v, &a)| v * crate::group::powi_u(*r, a)).collect();
                inner.eval_into(&xs, t * r * r, out)?;
                for o in out.iter_mut() {
                    *o *= factor;
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64], t: f64) -> Result<Vec<f64>, CoefficientError> {
        let mut out = vec![0.0; self.codomain.len()];
        self.eval_into(x, t, &mut out)?;
        Ok(out)
    }

    pub fn eval_scalar(&self, x: &[f64], t: f64) -> Result<f64, CoefficientError> {
        Ok(self.eval(x, t)?[0])
    }

    pub fn eval_matrix(&self, x: &[f64], t: f64) -> Result<DMatrix<f64>, CoefficientError> {
        let m = match self.codomain {
            Codomain::Matrix(m) => m,
            other => return Err(CoefficientError::CodomainMismatch { expected: other.len(), got: other.len() * other.len() }),
        };
        Ok(DMatrix::from_row_slice(m, m, &self.eval(x, t)?))
    }

    /// `factor · self(δ_r(x,t))`.
    pub fn rescaled(&self, r: f64, factor: f64, alpha: &[u32]) -> Field {
        let window = Window::new(self.window.t0 / (r * r), self.window.t1 / (r * r));
        Self::from_source(self.codomain, window, Source::Rescaled { inner: self.clone(), r, factor, alpha: alpha.to_vec() })
    }
}

fn write_scalar(codomain: Codomain, v: f64, out: &mut [f64]) {
    match codomain {
        Codomain::Scalar | Codomain::Vector(_) => out.iter_mut().for_each(|o| *o = v),
        Codomain::Matrix(m) => {
            out.iter_mut().for_each(|o| *o = 0.0);
            for i in 0..m {
                out[i * m + i] = v;
            }
        }
    }
}

fn check_symmetric(m: usize, v: &[f64]) -> Result<(), CoefficientError> {
    let scale = v.iter().fold(1.0f64, |a, b| a.max(b.abs()));
    for i in 0..m {
        for j in 0..i {
            if (v[i * m + j] - v[j * m + i]).abs() > 1e-12 * scale {
                return Err(CoefficientError::NotSymmetric);
            }
        }
    }
    Ok(())
}

/// The full coefficient set of an operator.
#[derive(Debug, Clone)]
pub struct Coefficients {
    pub a0: Field,
    pub b: Option<Field>,
    pub c: Option<Field>,
    pub a: Option<Field>,
}

impl Coefficients {
    /// Coefficients of the rescaled operator `𝓛^{(r)}`:
    /// `A∘δ_r`, `r (a∘δ_r)`, `r (b∘δ_r)`, `r² (c∘δ_r)`.
    pub fn rescale(&self, r: f64, alpha: &[u32]) -> Coefficients {
        Coefficients {
            a0: self.a0.rescaled(r, 1.0, alpha),
            b: self.b.as_ref().map(|f| f.rescaled(r, r, alpha)),
            c: self.c.as_ref().map(|f| f.rescaled(r, r * r, alpha)),
            a: self.a.as_ref().map(|f| f.rescaled(r, r, alpha)),
        }
    }

    pub fn is_time_independent(&self) -> bool {
        self.a0.is_time_independent()
            && [&self.b, &self.c, &self.a].iter().all(|f| f.as_ref().is_none_or(|f| f.is_time_independent()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport {
    pub lambda_hat: f64,
    #[serde(rename = "Lambda_hat")]
    pub big_lambda_hat: f64,
    /// Sample points where the smallest eigenvalue is not positive.
    pub violations: Vec<GroupPoint>,
}

/// Extreme Rayleigh quotients of a matrix field over a point set.
pub fn check_ellipticity(a0: &Field, samples: &[GroupPoint]) -> Result<EllipticityReport, CoefficientError> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut violations = Vec::new();
    for z in samples {
        let eig = a0.eval_matrix(&z.x, z.t)?.symmetric_eigenvalues();
        let emin = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        let emax = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        lo = lo.min(emin);
        hi = hi.max(emax);
        if emin <= 0.0 {
            violations.push(z.clone());
        }
    }
    Ok(EllipticityReport { lambda_hat: lo, big_lambda_hat: hi, violations })
}

/// Midpoint-rule `L¹` distance `∫_box Σ_k |f_k − g_k|` at time `t`, with `n`
/// cells per axis.
pub fn l1_distance(f: &Field, g: &Field, bounds: &[(f64, f64)], t: f64, n: usize) -> Result<f64, CoefficientError> {
    let dim = bounds.len();
    let h: Vec<f64> = bounds.iter().map(|(a, b)| (b - a) / n as f64).collect();
    let cell: f64 = h.iter().product();
    let total = n.pow(dim as u32);
    let mut fx = vec![0.0; f.codomain().len()];
    let mut gx = vec![0.0; g.codomain().len()];
    let mut acc = 0.0;
    let mut x = vec![0.0; dim];
    for k in 0..total {
        let mut rem = k;
        for d in 0..dim {
            x[d] = bounds[d].0 + (rem % n) as f64 * h[d] + 0.5 * h[d];
            rem /= n;
        }
        f.eval_into(&x, t, &mut fx)?;
        g.eval_into(&x, t, &mut gx)?;
        acc += fx.iter().zip(&gx).map(|(a, b)| (a - b).abs()).sum::<f64>();
    }
    Ok(acc * cell)
}
