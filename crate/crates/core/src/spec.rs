//! The operator description file: block layout, drift, coefficient fields,
//! time window and declared ellipticity constants.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::coefficients::{
    check_ellipticity, CoefficientError, Coefficients, Codomain, ConstValue, Field, FieldDescriptor, Window,
};
use crate::group::{Group, GroupPoint};
use crate::structure::{check_hypoellipticity, detect_canonical_form, DriftMatrix, HypoReport, StructureError};

pub const SCHEMA: &str = "kolmo.operator/1";

/// Relative slack when comparing sampled eigenvalues with declared bounds.
const ELLIPTICITY_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("cannot parse operator spec: {0}")]
    Parse(String),
    #[error("unsupported schema {0:?}, expected {SCHEMA:?}")]
    Schema(String),
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error(transparent)]
    Coefficient(#[from] CoefficientError),
    #[error("the drift does not satisfy the rank condition (Kalman rank {0})")]
    NotHypoelliptic(usize),
    #[error("sampled A0 eigenvalues [{lambda_hat}, {big_lambda_hat}] escape the declared interval [{lambda}, {big_lambda}]")]
    Ellipticity { lambda_hat: f64, big_lambda_hat: f64, lambda: f64, big_lambda: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureSpec {
    pub blocks: Vec<usize>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSpec {
    #[serde(rename = "A0")]
    pub a0: FieldDescriptor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<FieldDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<FieldDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<FieldDescriptor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipticity {
    pub lambda: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
}

/// On-disk operator description (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub schema: String,
    pub structure: StructureSpec,
    pub coefficients: CoefficientSpec,
    pub window: Window,
    pub ellipticity: Ellipticity,
}

/// A validated operator ready for numerical work.
#[derive(Debug, Clone)]
pub struct Operator {
    pub spec: OperatorSpec,
    pub group: Group,
    pub coefficients: Coefficients,
    pub hypo: HypoReport,
}

impl OperatorSpec {
    /// `div(A₀ D) + ⟨Bx, D⟩ − ∂_t` on `R²` with `B = [[0,0],[1,0]]` and constant `A₀ = a0`.
    pub fn prototype(a0: f64, window: Window) -> Self {
        Self {
            schema: SCHEMA.to_string(),
            structure: StructureSpec { blocks: vec![1, 1], b: vec![vec![0.0, 0.0], vec![1.0, 0.0]] },
            coefficients: CoefficientSpec {
                a0: FieldDescriptor::Constant { value: ConstValue::Scalar(a0) },
                b: None,
                c: None,
                a: None,
            },
            window,
            ellipticity: Ellipticity { lambda: a0, big_lambda: a0 },
        }
    }

    pub fn from_json(text: &str) -> Result<Self, SpecError> {
        let spec: Self = serde_json::from_str(text).map_err(|e| SpecError::Parse(e.to_string()))?;
        if spec.schema != SCHEMA {
            return Err(SpecError::Schema(spec.schema));
        }
        Ok(spec)
    }

    pub fn from_path(path: &Path) -> Result<Self, SpecError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SpecError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    /// SHA-256 of the compact JSON form, used to tie artifacts to their spec.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(serde_json::to_vec(self).expect("spec serializes"));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn drift(&self) -> DriftMatrix {
        DriftMatrix::from_rows(&self.structure.b)
    }

    /// Validates structure, hypoellipticity and declared ellipticity, and
    /// builds the coefficient fields. Grid sidecars resolve against `base`.
    pub fn resolve(&self, base: &Path) -> Result<Operator, SpecError> {
        let drift = self.drift();
        let structure = detect_canonical_form(&drift, &self.structure.blocks)?;
        let hypo = check_hypoellipticity(&drift, structure.m0())?;
        if !hypo.hypoelliptic {
            return Err(SpecError::NotHypoelliptic(hypo.kalman_rank));
        }
        let m0 = structure.m0();
        let n = structure.dim();
        let w = self.window;
        let build = |d: &Option<FieldDescriptor>, cod: Codomain| -> Result<Option<Field>, SpecError> {
            d.as_ref().map(|d| Field::from_descriptor(d, cod, w, base)).transpose().map_err(SpecError::from)
        };
        let coefficients = Coefficients {
            a0: Field::from_descriptor(&self.coefficients.a0, Codomain::Matrix(m0), w, base)?,
            b: build(&self.coefficients.b, Codomain::Vector(m0))?,
            c: build(&self.coefficients.c, Codomain::Scalar)?,
            a: build(&self.coefficients.a, Codomain::Vector(m0))?,
        };
        let samples = ellipticity_samples(n, w);
        let rep = check_ellipticity(&coefficients.a0, &samples)?;
        let Ellipticity { lambda, big_lambda } = self.ellipticity;
        let slack = ELLIPTICITY_SLACK * big_lambda.abs().max(1.0);
        if !(lambda > 0.0) || rep.lambda_hat < lambda - slack || rep.big_lambda_hat > big_lambda + slack {
            return Err(SpecError::Ellipticity {
                lambda_hat: rep.lambda_hat,
                big_lambda_hat: rep.big_lambda_hat,
                lambda,
                big_lambda,
            });
        }
        let group = Group::new(structure, drift);
        Ok(Operator { spec: self.clone(), group, coefficients, hypo })
    }
}

/// Deterministic probe points in `[-2, 2]^N × window`.
fn ellipticity_samples(n: usize, w: Window) -> Vec<GroupPoint> {
    let count = 257;
    (0..count)
        .map(|k| {
            // Additive recurrence with irrational steps: a cheap low-discrepancy set.
            let frac = |j: usize| ((k as f64 + 0.5) * (0.5 + (j as f64 + 2.0).sqrt())).fract();
            let x = (0..n).map(|j| 4.0 * frac(j) - 2.0).collect();
            GroupPoint::new(x, w.t0 + w.length() * frac(n))
        })
        .collect()
}
