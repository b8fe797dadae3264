use thiserror::Error;

use crate::problem::ActiveSet;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error(
        "Jacobian is singular (pivot {pivot:.3e} at column {column}, threshold {threshold:.3e})"
    )]
    SingularJacobian {
        column: usize,
        pivot: f64,
        threshold: f64,
    },

    #[error("active-set Jacobian for {active_set} is singular; active rows are dependent or constraint qualification fails")]
    SingularActiveJacobian { active_set: ActiveSet },

    #[error("invalid search pattern: {0}")]
    InvalidPattern(String),

    #[error("no active set yields a KKT point at this parameter (infeasible)")]
    Infeasible,

    #[error("oracle enumeration limited to m2 <= {limit}, problem has m2 = {m2}")]
    OracleTooLarge { m2: usize, limit: usize },

    #[error("starting parameter is infeasible")]
    InfeasibleStart,

    #[error("active set {0} is already registered in the model")]
    DuplicateRegion(ActiveSet),

    #[error(
        "could not resolve a region transition at direction {direction}, point {point}: {reason}"
    )]
    UnresolvableTransition {
        direction: usize,
        point: usize,
        reason: String,
    },

    #[error("model digest {model} does not match problem digest {problem}")]
    DigestMismatch { model: String, problem: String },

    #[error("malformed model: {0}")]
    MalformedModel(String),

    #[error("unknown region id {0}")]
    UnknownRegion(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
