//! Finite-difference machinery: grids, discrete operators, the Cauchy
//! solver, approximate fundamental solutions and weak residuals.

mod fundamental;
mod grid;
mod operator;
mod poly;
mod solver;
mod weak;

use thiserror::Error;

use crate::coefficients::CoefficientError;
use crate::kernel::KernelError;

pub use fundamental::{approx_fundamental, FundamentalReport};
pub use grid::{Axis, GridSolution, SpaceGrid};
pub use operator::{lie_derivative, DiscreteOperator};
pub use poly::{dilation_invariance_check, Polynomial};
pub use solver::{
    sample_datum, solve_cauchy, solve_cauchy_from, BoundaryPolicy, Extension, Interpolation, SolveConfig, SolveRecord,
    BOUNDARY_TOL, COURANT,
};
pub use weak::{test_function_mass, weak_residual, TestFunction};

#[derive(Debug, Error)]
pub enum PdeError {
    #[error("stencil at a boundary node")]
    BoundaryNode,
    #[error("point outside the grid")]
    OutOfDomain,
    #[error("test function support leaves the grid")]
    SupportExceedsGrid,
    #[error("time step {dt} exceeds the stability bound {bound}")]
    StepTooLarge { dt: f64, bound: f64 },
    #[error("non-finite values after step {step}")]
    Unstable { step: usize },
    #[error("boundary values reach {ratio:.3e} of the maximum; enlarge the box")]
    BoxTooSmall { ratio: f64 },
    #[error("non-finite grid values")]
    NonFinite,
    #[error("expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("i/o: {0}")]
    Io(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Coefficient(#[from] CoefficientError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}
