use thiserror::Error;

/// Errors raised by the model, oracle, detector and analysis layers.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A Fock-space representation lost too much probability to its cutoff.
    #[error("truncation error: {what} tail mass {tail_mass:.3e} at cutoff {dim} (try cutoff >= {suggested})")]
    Truncation {
        what: &'static str,
        tail_mass: f64,
        dim: usize,
        suggested: usize,
    },

    /// The Lindblad integrator drifted off the unit-trace manifold.
    #[error("step-size error: trace drift {drift:.3e} exceeds {limit:.1e}")]
    StepSize { drift: f64, limit: f64 },

    /// A state failed the Gaussian physicality (uncertainty) bound.
    #[error("unphysical state: {0}")]
    Unphysical(String),

    /// Least-squares fit failed.
    #[error("fit error: {message}")]
    Fit {
        message: String,
        /// Cost after each accepted iteration.
        residual_trace: Vec<f64>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
