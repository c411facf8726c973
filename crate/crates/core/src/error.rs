use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("integration failed at t = {t_last}: {reason}")]
    Integration { t_last: f64, reason: String },

    #[error("newton iteration did not converge after {iterations} iterations (last residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("vector field vanishes at the initial point (|X_H| = {norm:e})")]
    FixedPoint { norm: f64 },

    #[error("rejected orbit: {0}")]
    Period(String),

    #[error("section reduction failed: {0}")]
    Section(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("arity error: {0}")]
    Arity(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("no sample accepted by the region predicate after {draws} draws")]
    EmptyRegion { draws: usize },

    #[error("angle tracking degenerate: {0}")]
    Degeneracy(String),

    #[error("invalid cutoff: {0}")]
    Cutoff(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("singular effective Hamiltonian at z = {0}")]
    Pole(Complex64),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
