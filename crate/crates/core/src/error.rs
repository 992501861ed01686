use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {}", .0.join("; "))]
    InvalidGeometry(Vec<String>),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid of {cells} cells exceeds the budget of {budget} cells")]
    CellBudget { cells: usize, budget: usize },

    #[error("field update became unstable (non-finite values) at step {step}")]
    Unstable { step: usize },

    #[error("field energy did not decay below {threshold:e} of peak within {steps} steps (last ratio {ratio:e})")]
    NotConverged {
        steps: usize,
        threshold: f64,
        ratio: f64,
    },

    #[error("monitor misconfiguration: {0}")]
    Monitor(String),

    #[error("fit did not converge after {iterations} iterations (best b = {b}, tau = {tau:e} s)")]
    FitNonConvergence { iterations: usize, b: f64, tau: f64 },

    #[error("target {target} is unreachable with per-iteration probability {p}")]
    Unreachable { p: f64, target: f64 },

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
