//! Error type shared across the crate.
//!
//! The CLI maps variants to exit codes: configuration problems exit with 2,
//! everything else that fails at runtime exits with 3.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SmpError {
    /// Bad shapes, unknown config keys, invalid hyperparameters.
    #[error("configuration error: {0}")]
    Config(String),

    /// A well-formed call received data outside its contract.
    #[error("input error: {0}")]
    Input(String),

    /// Optimization produced non-finite values or diverged.
    #[error("training error at step {step}: {message}")]
    Training { step: u64, message: String },

    /// The physics simulation reached a non-finite state.
    #[error("simulation error at step {step}: {message}")]
    Simulation { step: u64, message: String },

    /// A checkpoint or dataset file is corrupt or has the wrong version.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SmpError>;

impl SmpError {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            SmpError::Config(_) => 2,
            _ => 3,
        }
    }
}
