use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("event-driven stepping requires omega = 0 (got {0})")]
    EventDrivenWithDrive(f64),

    #[error("trajectory {index} exceeded the event budget of {budget} emissions before t = {time}")]
    EventBudgetExceeded { index: u64, budget: usize, time: f64 },

    #[error("uniform draw {0} outside the open interval (0, 1)")]
    UniformOutOfRange(f64),

    #[error("truncation dimension {dim} too small for |alpha|^2 = {mean_photons} (need at least {required})")]
    InadequateTruncation {
        dim: usize,
        mean_photons: f64,
        required: usize,
    },

    #[error("top Fock level population {population:e} exceeded the leakage threshold {threshold:e} at t = {time}")]
    TruncationLeakage {
        population: f64,
        threshold: f64,
        time: f64,
    },

    #[error("ensembles are incompatible: {0}")]
    IncompatibleEnsembles(String),

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("power-law fit needs at least 3 points in range, got {0}")]
    TooFewPoints(usize),

    #[error("power-law fit requires positive values, got ({resource}, {value})")]
    NonPositive { resource: f64, value: f64 },

    #[error("line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("{0}")]
    Usage(String),

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },

    #[error("validation failed: {0}")]
    Validation(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Process exit code for this error: 1 for usage or configuration problems,
    /// 2 for runtime and validation failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Usage(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
