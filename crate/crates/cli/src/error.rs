use kolmo_core::asian::AsianError;
use kolmo_core::coefficients::CoefficientError;
use kolmo_core::mc::McError;
use kolmo_core::pde::PdeError;
use kolmo_core::spec::SpecError;
use kolmo_core::verify::VerifyError;
use kolmo_core::{KernelError, StructureError};
use thiserror::Error;

/// Failure of a command, carrying its process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Structure(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Solver(PdeError),
    #[error(transparent)]
    Mc(McError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error("{0}")]
    Inconsistent(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Unreadable(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) | CliError::Unreadable(_) => 1,
            CliError::Input(_) => 2,
            CliError::Structure(_) => 3,
            CliError::Kernel(_) => 4,
            CliError::Solver(_) => 5,
            CliError::Mc(_) => 6,
            CliError::Verify(_) | CliError::Inconsistent(_) => 7,
        }
    }
}

impl From<SpecError> for CliError {
    fn from(e: SpecError) -> Self {
        match e {
            SpecError::Io { .. } => CliError::Unreadable(e.to_string()),
            SpecError::Structure(_) | SpecError::NotHypoelliptic(_) => CliError::Structure(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<PdeError> for CliError {
    fn from(e: PdeError) -> Self {
        match e {
            PdeError::Io(m) => CliError::Unreadable(m),
            e => CliError::Solver(e),
        }
    }
}

impl From<McError> for CliError {
    fn from(e: McError) -> Self {
        match e {
            McError::Io(m) => CliError::Unreadable(m),
            e => CliError::Mc(e),
        }
    }
}

impl From<StructureError> for CliError {
    fn from(e: StructureError) -> Self {
        CliError::Structure(e.to_string())
    }
}

impl From<CoefficientError> for CliError {
    fn from(e: CoefficientError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<AsianError> for CliError {
    fn from(e: AsianError) -> Self {
        match e {
            AsianError::InvalidInput(_) => CliError::Input(e.to_string()),
            AsianError::Inconsistent { .. } => CliError::Inconsistent(e.to_string()),
            AsianError::Kernel(k) => k.into(),
            AsianError::Mc(m) => m.into(),
            AsianError::Spec(s) => s.into(),
        }
    }
}
