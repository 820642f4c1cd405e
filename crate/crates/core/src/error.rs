use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Lattice sizes must be even and at least 2.
    #[error("invalid lattice size L={0}: must be even and >= 2")]
    InvalidLatticeSize(usize),

    #[error("unknown measurement kind '{0}'")]
    UnknownMeasurement(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("index {index} out of range for {what} (len {len})")]
    OutOfRange { what: &'static str, index: usize, len: usize },

    /// The dense state vector would exceed the configured spin cap.
    #[error("state vector with {spins} spins exceeds the cap of {cap} spins")]
    CapExceeded { spins: usize, cap: usize },

    #[error("Krylov propagation did not reach tolerance {tol:e} (estimate {estimate:e})")]
    KrylovNonConvergence { tol: f64, estimate: f64 },

    /// A gate or normalization met a zero-norm block: the state collapsed.
    #[error("state collapsed (zero norm){}", .step.map(|s| format!(" at step {s}")).unwrap_or_default())]
    StateCollapse { step: Option<usize> },

    #[error("imaginary-time evolution did not converge within {0} steps")]
    NotConverged(usize),

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}

impl Error {
    /// Attach a step index to a collapse error raised deep in the gate code.
    pub fn at_step(self, step: usize) -> Self {
        match self {
            Error::StateCollapse { .. } => Error::StateCollapse { step: Some(step) },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
