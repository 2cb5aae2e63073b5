//! Geometry, exact kernels, solvers and verification tools for degenerate
//! Kolmogorov operators `div(A D u) + ⟨Bx, Du⟩ − ∂_t u + ⟨b, Du⟩ + c u`.

pub mod asian;
pub mod coefficients;
pub mod group;
pub mod kernel;
pub mod mc;
pub mod numerics;
pub mod pde;
pub mod spec;
pub mod structure;
pub mod verify;

pub use group::{Cone, Cylinder, Group, GroupPoint};
pub use kernel::{GaussianKernel, KernelError};
pub use structure::{BlockStructure, DriftMatrix, HypoReport, StructureError};

/// Any error raised by the library, for callers that do not care which stage failed.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Coefficient(#[from] coefficients::CoefficientError),
    #[error(transparent)]
    Spec(#[from] spec::SpecError),
    #[error(transparent)]
    Pde(#[from] pde::PdeError),
    #[error(transparent)]
    Mc(#[from] mc::McError),
    #[error(transparent)]
    Verify(#[from] verify::VerifyError),
    #[error(transparent)]
    Asian(#[from] asian::AsianError),
}
