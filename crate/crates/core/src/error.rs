use thiserror::Error;

/// Bisection bookkeeping attached to solver failures and successes alike.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SolverDiagnostics {
    pub bisection_iters: usize,
    /// Final bracket on the shooting parameter.
    pub bracket: (f64, f64),
    pub terminal_residual: f64,
    /// Bound on the neglected tail of any truncated infinite sum.
    pub truncation_error: f64,
}

impl Default for SolverDiagnostics {
    fn default() -> Self {
        Self {
            bisection_iters: 0,
            bracket: (0.0, 0.0),
            terminal_residual: f64::NAN,
            truncation_error: 0.0,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("marginal rate {y} outside (0, {max}]")]
    OutOfRange { y: f64, max: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("solver failed: {reason} ({diagnostics:?})")]
    Solver {
        reason: String,
        diagnostics: SolverDiagnostics,
    },

    #[error("no convergence after {iters} iterations: {detail}")]
    NonConvergence { iters: usize, detail: String },

    #[error("energy causality violated at slot {slot} of run {run}: action {action} exceeds battery {battery}")]
    Causality {
        run: usize,
        slot: usize,
        action: f64,
        battery: f64,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
