use thiserror::Error;

/// Errors produced by the controller, simulator, analysis and tuning layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("non-finite {what} at t = {t}")]
    NonFinite { what: &'static str, t: f64 },

    #[error("controller is still initializing; the threshold laws need a detected extreme value")]
    Initializing,

    #[error("controller already left the initialization phase")]
    NotInitializing,

    #[error("trace has no convergence instant")]
    NotConverged,

    #[error("parameters violate the convergence conditions: {0}")]
    Infeasible(String),

    #[error("no oscillation: {0}")]
    NoOscillation(String),

    #[error("no admissible threshold pair: {0}")]
    NoSolution(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
