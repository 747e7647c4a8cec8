//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// A state, action index, or parameter failed validation.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Configuration values are inconsistent (e.g. inertia + explore > 1).
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The weighting measure could not produce a sample inside a bin.
    #[error("cannot draw a state inside bin {bin}: {reason}")]
    EmptyBin { bin: usize, reason: String },

    /// Requested truncation tolerance needs a longer evaluation horizon.
    #[error("horizon {got} too small for requested truncation tolerance; need at least {required}")]
    HorizonTooSmall { required: usize, got: usize },

    /// Joint policy space exceeds the exact-enumeration cap.
    #[error("joint policy space has {required} states, above the enumeration cap of {allowed}")]
    CapExceeded { required: u128, allowed: u64 },

    /// An iterative solver ran out of iterations.
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// Chain analysis was requested on a chain that is not absorbing.
    #[error("chain is not absorbing; {} state(s) cannot reach absorption", unreachable.len())]
    NotAbsorbing { unreachable: Vec<usize> },

    /// A linear system turned out singular.
    #[error("singular linear system in {0}")]
    Singular(&'static str),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

pub type Result<V> = std::result::Result<V, CoreError>;

impl CoreError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        CoreError::InvalidInput(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CoreError::InvalidConfig(msg.into())
    }
}
