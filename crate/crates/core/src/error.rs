use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular measurement geometry")]
    SingularGeometry,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("infeasible power budget: {n} targets x p_min {min_power} W exceeds total {total_power} W")]
    Infeasible { n: usize, min_power: f64, total_power: f64 },

    #[error("degenerate scenario: {0}")]
    Degenerate(String),

    #[error("invalid score vector: {0}")]
    InvalidScores(String),

    #[error("non-finite feature X{feature} for target {target}")]
    NonFiniteFeature { target: usize, feature: usize },

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn ensure_finite(value: f64, what: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain(format!("{what} is not finite ({value})")))
    }
}
