use thiserror::Error;

/// Everything that can go wrong in the library.
///
/// Variant names double as the stable error identifiers printed by the CLI
/// and mapped to status codes by the C ABI.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum WmsError {
    #[error("dimension mismatch in {context}: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        context: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix contains a non-finite entry")]
    NonFinite,
    #[error("matrix is not symmetric (relative asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is not positive semidefinite (pivot {pivot:e} at index {index})")]
    NotPositiveSemidefinite { index: usize, pivot: f64 },
    #[error("matrix is singular")]
    Singular,
    #[error("Lyapunov doubling did not converge after {steps} steps")]
    NotConverged { steps: usize },
    #[error("QR iteration did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("(A, B) is not stabilizable: {reason}")]
    NotStabilizable { reason: String },
    #[error("(A, C) is not detectable: {reason}")]
    NotDetectable { reason: String },
    #[error("closed loop is not Schur stable: {which} has spectral radius {radius}")]
    UnstableClosedLoop { which: &'static str, radius: f64 },
    #[error("no k' in 0..p-1 with C(A+BK)^k B != 0; the watermark never reaches the output")]
    NoWatermarkPath,
    #[error("watermark covariance is not strictly positive definite")]
    SingularExcitation,
    #[error("state norm {norm:e} exceeded the blow-up guard at step {step}")]
    NumericalBlowup { step: usize, norm: f64 },
    #[error("window length {ell} is shorter than m+q = {required}")]
    WindowTooShort { ell: usize, required: usize },
    #[error("window {index} does not fit in a sequence of {available} psi vectors")]
    OutOfRange { index: usize, available: usize },
    #[error("window scatter matrix is singular")]
    SingularWindow,
    #[error("model is not the full-state L = -A special case: {reason}")]
    NotSpecialCase { reason: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl WmsError {
    /// Stable identifier for diagnostics.
    pub fn name(&self) -> &'static str {
        match self {
            WmsError::DimensionMismatch { .. } => "DimensionMismatch",
            WmsError::NotSquare { .. } => "NotSquare",
            WmsError::NonFinite => "NonFinite",
            WmsError::NotSymmetric { .. } => "NotSymmetric",
            WmsError::NotPositiveSemidefinite { .. } => "NotPositiveSemidefinite",
            WmsError::Singular => "Singular",
            WmsError::NotConverged { .. } => "NotConverged",
            WmsError::NoConvergence { .. } => "NoConvergence",
            WmsError::NotStabilizable { .. } => "NotStabilizable",
            WmsError::NotDetectable { .. } => "NotDetectable",
            WmsError::UnstableClosedLoop { .. } => "UnstableClosedLoop",
            WmsError::NoWatermarkPath => "NoWatermarkPath",
            WmsError::SingularExcitation => "SingularExcitation",
            WmsError::NumericalBlowup { .. } => "NumericalBlowup",
            WmsError::WindowTooShort { .. } => "WindowTooShort",
            WmsError::OutOfRange { .. } => "OutOfRange",
            WmsError::SingularWindow => "SingularWindow",
            WmsError::NotSpecialCase { .. } => "NotSpecialCase",
            WmsError::InvalidArgument(_) => "InvalidArgument",
            WmsError::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for WmsError {
    fn from(e: std::io::Error) -> Self {
        WmsError::Io(e.to_string())
    }
}

pub type Result<T, E = WmsError> = std::result::Result<T, E>;
