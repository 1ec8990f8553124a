use thiserror::Error;

/// Errors produced by the identification toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("stage count {0} outside supported range 1..={max}", max = crate::tableau::MAX_STAGES)]
    StageCountOutOfRange(usize),
    #[error("order {order} exceeds the maximum order {max} of the method")]
    OrderExceedsMethod { order: usize, max: usize },

    #[error("invalid library specification: {0}")]
    InvalidLibrary(String),
    #[error("library specification yields no terms")]
    EmptyLibrary,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("integration failed at t = {time}: {reason}")]
    IntegrationFailure { time: f64, reason: String },
    #[error("window of {window} samples does not fit a record of {len}")]
    WindowTooLarge { window: usize, len: usize },
    #[error("invalid filter settings: {0}")]
    InvalidFilter(String),
    #[error("sample times are not uniformly spaced")]
    NonUniformGrid,
    #[error("coordinate {0} has zero variance")]
    DegenerateCoordinate(usize),
    #[error("rescaling is only defined for scale-only conditioning")]
    UnsupportedScalingMode,
    #[error("coefficient rescaling requires a purely polynomial library")]
    NonPolynomialLibrary,
    #[error("I/O error: {0}")]
    Io(String),
    #[error("malformed file: {0}")]
    MalformedFile(String),

    #[error("stage iteration did not converge after {iterations} iterations (defect {defect:e})")]
    NonConvergence { iterations: usize, defect: f64 },
    #[error("singular stage Jacobian")]
    SingularJacobian,
    #[error("stage solve failed at interval {row}: {source}")]
    AtInterval { row: usize, source: Box<Error> },

    #[error("non-finite value encountered while recording the loss")]
    NonFiniteValue,
    #[error("invalid network architecture: {0}")]
    InvalidArchitecture(String),
    #[error("shape mismatch: expected {expected} entries, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("dataset has no intervals")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Attaches the index of the data interval a stage solve failed on.
    pub fn at_interval(self, row: usize) -> Self {
        match self {
            Error::AtInterval { .. } => self,
            other => Error::AtInterval { row, source: Box::new(other) },
        }
    }

    /// True for failures of the stage-equation solver (possibly annotated).
    pub fn is_solver_failure(&self) -> bool {
        match self {
            Error::NonConvergence { .. } | Error::SingularJacobian => true,
            Error::AtInterval { source, .. } => source.is_solver_failure(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
