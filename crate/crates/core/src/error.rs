use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the simulator and optimizers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("distance {distance} m is below the reference distance {reference} m")]
    NearField { distance: f64, reference: f64 },

    /// The amplifier feedback loop gain `alpha^2 * sigma_si^2` is at or above unity.
    #[error("unstable self-interference loop (loop gain {loop_gain})")]
    UnstableLoop { loop_gain: f64 },

    #[error("noise covariance is singular or not positive definite")]
    SingularNoise,

    #[error("channel is identically zero")]
    ZeroChannel,

    #[error("exhaustive search space of {size} points exceeds the limit of {limit}")]
    SearchSpaceTooLarge { size: f64, limit: f64 },

    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Short machine-readable tag used in the `flags` column of result files.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::NearField { .. } => "near-field",
            Error::UnstableLoop { .. } => "unstable-loop",
            Error::SingularNoise => "singular-noise",
            Error::ZeroChannel => "zero-channel",
            Error::SearchSpaceTooLarge { .. } => "search-space-too-large",
            Error::Io { .. } => "io",
            Error::Csv { .. } => "csv",
            Error::Config(_) => "config",
        }
    }
}
