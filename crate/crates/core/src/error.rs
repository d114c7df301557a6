use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A trajectory left the region where the dynamics are meaningful.
    /// `point` is the offending iterate.
    #[error("diverged at step {step}: {reason}")]
    Diverged {
        step: u64,
        reason: String,
        point: Vec<f64>,
    },

    #[error(
        "temperature too low for rejection: acceptance rate {rate:e} after {proposals} proposals"
    )]
    TemperatureTooLow { rate: f64, proposals: u64 },

    #[error("full-grid quadrature refused in {0} dimensions (max 3); use rejection sampling")]
    QuadratureDimension(usize),

    #[error("empty sample set")]
    EmptySamples,

    #[error("histogram binnings differ")]
    BinningMismatch,

    #[error("index {index} out of range for dataset of {len} examples")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    /// Process exit code for the CLI: 2 for configuration problems,
    /// 3 for numerical failures, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_)
            | Error::DimensionMismatch { .. }
            | Error::QuadratureDimension(_)
            | Error::BinningMismatch
            | Error::IndexOutOfRange { .. }
            | Error::Parse(_) => 2,
            Error::NonFinite(_)
            | Error::Diverged { .. }
            | Error::TemperatureTooLow { .. }
            | Error::EmptySamples => 3,
            Error::Io(_) => 1,
        }
    }
}
