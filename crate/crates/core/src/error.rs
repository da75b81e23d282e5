use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes shared by every module of the laboratory.
#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
pub enum Error {
    #[error("strain {p} is outside the domain of model `{model}`")]
    Domain { model: String, p: f64 },

    #[error("lambda estimation failed: {0}")]
    EstimationFailure(String),

    #[error("stress interval [{lo}, {hi}] touches critical value {critical}")]
    InvalidInterval { lo: f64, hi: f64, critical: f64 },

    #[error("model inconsistency: {0}")]
    ModelInconsistency(String),

    #[error("hypothesis {hypothesis} not satisfied: {detail}")]
    Hypothesis { hypothesis: String, detail: String },

    #[error("quadrature did not converge: {0}")]
    QuadratureDivergence(String),

    #[error("certification failed: {0}")]
    Certification(String),

    #[error("integration stalled at t = {t} (dt = {dt:e}); {hint}")]
    Stiffness { t: f64, dt: f64, hint: String },

    #[error("tau = {tau} violates tau < 1/lambda (lambda = {lambda})")]
    Monotonicity { tau: f64, lambda: f64 },

    #[error("no bracket found: {0}")]
    Bracket(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),
}

impl Error {
    pub(crate) fn hypothesis(name: &str, detail: impl Into<String>) -> Self {
        Error::Hypothesis {
            hypothesis: name.to_string(),
            detail: detail.into(),
        }
    }
}
