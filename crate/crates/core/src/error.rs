use thiserror::Error;

use crate::solver::{DiscreteField, SolveReport};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("density `{0}` has no radial profile")]
    NonRadialDensity(String),

    #[error("degenerate radial profile at t = {t}: {reason}")]
    DegenerateProfile { t: f64, reason: &'static str },

    #[error("density `{0}` is not of nearly linear growth; the bound check does not apply")]
    NonNearlyLinear(String),

    #[error("degenerate domain: {0}")]
    DegenerateDomain(String),

    #[error("Newton iteration did not converge within {max_iters} iterations (residual {residual:e})")]
    NoConvergence { max_iters: usize, residual: f64, best: Box<DiscreteField>, report: Box<SolveReport> },

    #[error("assembled Hessian is singular beyond regularization (shift {shift:e})")]
    SingularSystem { shift: f64 },

    #[error("value {c} is outside the range of y -> df/dp2({a}, y)")]
    OutOfRange { a: f64, c: f64 },

    #[error("argument {value} outside the domain of {what}")]
    DomainError { what: &'static str, value: f64 },

    #[error("inadmissible weight: {0}")]
    WeightInadmissible(String),

    #[error("field provides no second derivatives")]
    MissingSecondDerivatives,

    #[error("direction frame is singular (det = {det:e})")]
    SingularFrame { det: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One invalid entry of a run configuration.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct FieldIssue {
    pub field: String,
    pub message: String,
}

/// Every invalid entry of a run configuration.
#[derive(Debug, Clone, PartialEq, Eq, Error, serde::Serialize)]
#[error("invalid configuration: {}", .issues.iter().map(|i| format!("{}: {}", i.field, i.message)).collect::<Vec<_>>().join("; "))]
pub struct ConfigError {
    pub issues: Vec<FieldIssue>,
}

impl ConfigError {
    pub fn single(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { issues: vec![FieldIssue { field: field.into(), message: message.into() }] }
    }

    /// Whether some issue concerns `field`.
    pub fn names(&self, field: &str) -> bool {
        self.issues.iter().any(|i| i.field == field)
    }
}
