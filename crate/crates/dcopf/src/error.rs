use thiserror::Error;

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("slack bus {0} is not in the bus list")]
    MissingSlack(u32),
    #[error("network is disconnected: bus {bus} cannot be reached from the slack bus")]
    DisconnectedNetwork { bus: u32 },
    #[error("unknown bus {0}")]
    UnknownBus(u32),
    #[error("bus {0} is listed twice")]
    DuplicateBus(u32),
    #[error("generator {index}: {reason}")]
    InvalidGenerator { index: usize, reason: String },
    #[error("line {index}: {reason}")]
    InvalidLine { index: usize, reason: String },
    #[error("flow limits: {0}")]
    InvalidLimits(String),
    #[error("case has no generators")]
    NoGenerators,
    #[error("expected {expected} values, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Core(#[from] cfqp_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CaseError>;
