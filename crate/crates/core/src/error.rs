use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// `f(z)` requested for `|beta * z|` beyond the overflow guard.
    #[error("rate argument z={z} outside admissible band (|beta*z| = {product} > {limit})")]
    RateOverflow { z: i64, product: f64, limit: f64 },

    #[error("increment {value} at site {site} left the admissible band +-{omega_max} at t={time}")]
    BandViolation {
        site: i64,
        value: i64,
        omega_max: i64,
        time: f64,
    },

    #[error("site {site} outside the valid range [{lo}, {hi}]")]
    SiteOutOfRange { site: i64, lo: i64, hi: i64 },

    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("internal inconsistency: {0}")]
    Inconsistency(String),

    #[error("label order violated at t={time}: y={y} < z={z}")]
    LabelOrder { y: i64, z: i64, time: f64 },

    #[error("experiment {name} invalid: {contaminated} of {total} replicas boundary-contaminated")]
    Contaminated {
        name: String,
        contaminated: u64,
        total: u64,
    },

    #[error("oracle check failed: {0}")]
    CheckFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
