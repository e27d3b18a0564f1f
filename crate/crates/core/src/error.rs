use thiserror::Error;

/// Errors raised by the dynamics, leaf, potential, pressure and certificate layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("unstable frame not available at point: {0}")]
    FrameNotReady(String),

    #[error("leaf radius {radius} outside (0, {cap})")]
    Radius { radius: f64, cap: f64 },

    #[error("graph transform did not converge: {0}")]
    NoConvergence(String),

    #[error("parameter {value} outside chart range [-{radius}, {radius}]")]
    ParameterOutOfRange { value: f64, radius: f64 },

    #[error("pushed-forward leaf length {length:.3e} exceeds lift budget {budget:.3e}")]
    Depth { length: f64, budget: f64 },

    #[error("under-resolved: need at least {required} samples, have {available}")]
    UnderResolved { required: u64, available: u64 },

    #[error("conflict structure is not interval-shaped: {0}")]
    UnsupportedStructure(String),

    #[error("sample point {0} is not covered by any Bowen ball")]
    Uncoverable(usize),

    #[error("brute-force oracle refuses m = {m} (limit {limit})")]
    OracleTooLarge { m: usize, limit: usize },

    #[error("cover join has more than {limit} elements")]
    JoinTooLarge { limit: usize },

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("not a probability vector: {0}")]
    NotProbability(String),

    #[error("points do not form a periodic orbit: {0}")]
    NotPeriodic(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Stable machine-readable reason code.
    pub fn reason_code(&self) -> &'static str {
        match self {
            Error::InvalidSystem(_) => "invalid-system",
            Error::FrameNotReady(_) => "frame-not-ready",
            Error::Radius { .. } => "radius",
            Error::NoConvergence(_) => "no-convergence",
            Error::ParameterOutOfRange { .. } => "parameter-out-of-range",
            Error::Depth { .. } => "depth",
            Error::UnderResolved { .. } => "under-resolved",
            Error::UnsupportedStructure(_) => "unsupported-structure",
            Error::Uncoverable(_) => "uncoverable",
            Error::OracleTooLarge { .. } => "oracle-too-large",
            Error::JoinTooLarge { .. } => "join-too-large",
            Error::DimensionMismatch(..) => "dimension-mismatch",
            Error::NotProbability(_) => "not-probability",
            Error::NotPeriodic(_) => "not-periodic",
            Error::Unsupported(_) => "unsupported",
            Error::InvalidArgument(_) => "invalid-argument",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
