use thiserror::Error;

use crate::model::Constraint;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameters violate the {0} constraint")]
    InvalidParams(Constraint),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid beam configuration: {0}")]
    InvalidConfig(String),

    #[error("expected count {mean:e} exceeds the representable range")]
    CountOverflow { mean: f64 },

    #[error("Hankel matrix is singular or ill-conditioned (det = {det:e}, cond = {cond:e})")]
    SingularHankel { det: f64, cond: f64 },

    #[error("denominator has complex roots (largest |imag| = {max_imag:e})")]
    ComplexRoots { max_imag: f64 },

    #[error("denominator degree collapses (leading coefficient {leading:e})")]
    DegenerateDegree { leading: f64 },

    #[error("companion eigenvalue iteration did not converge")]
    RootFinding,

    #[error("nodes are not separated (minimum gap {min_gap:e})")]
    IllSeparatedNodes { min_gap: f64 },

    #[error("system Jacobian is singular: {0}")]
    SingularJacobian(String),

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e}, trace {trace:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64, trace: f64 },

    #[error("solution lies outside the parameter space")]
    Infeasible,

    #[error("confidence level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),

    #[error("vector increases at position {index} (by {excess:e})")]
    NotDecreasing { index: usize, excess: f64 },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

/// Coarse error class, used to pick process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Numerical,
    Io,
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParams(_) => "InvalidParams",
            Error::Dimension(_) => "DimensionError",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::CountOverflow { .. } => "CountOverflow",
            Error::SingularHankel { .. } => "SingularHankel",
            Error::ComplexRoots { .. } => "ComplexRoots",
            Error::DegenerateDegree { .. } => "DegenerateDegree",
            Error::RootFinding => "RootFinding",
            Error::IllSeparatedNodes { .. } => "IllSeparatedNodes",
            Error::SingularJacobian(_) => "SingularJacobian",
            Error::NotPositiveSemidefinite { .. } => "NotPositiveSemidefinite",
            Error::Infeasible => "Infeasible",
            Error::InvalidLevel(_) => "InvalidLevel",
            Error::NotDecreasing { .. } => "NotDecreasing",
            Error::InvalidPartition(_) => "InvalidPartition",
            Error::Parse(_) => "ParseError",
            Error::Io(_) => "IoError",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidParams(_)
            | Error::Dimension(_)
            | Error::InvalidConfig(_)
            | Error::InvalidLevel(_)
            | Error::NotDecreasing { .. }
            | Error::InvalidPartition(_)
            | Error::Parse(_) => ErrorClass::Usage,
            Error::Io(_) => ErrorClass::Io,
            _ => ErrorClass::Numerical,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            Error::Io(e.to_string())
        } else {
            Error::Parse(e.to_string())
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            Error::Io(e.to_string())
        } else {
            Error::Parse(e.to_string())
        }
    }
}
