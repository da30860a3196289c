use thiserror::Error;

/// Errors raised by the core crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("diet out of range: {0}")]
    RangeViolation(String),

    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("invalid feedback constraints: {0}")]
    Constraint(String),

    #[error("diet costs {cost} time units, budget is {budget}")]
    BudgetExceeded { cost: u32, budget: u32 },

    #[error("command `{command}` not allowed in phase {phase}")]
    WrongPhase { command: &'static str, phase: String },

    #[error("event log corrupted: {0}")]
    Corruption(String),

    #[error("no suitable diet after {0} draws; the world or model is degenerate")]
    WorldDegenerate(usize),

    #[error("model never predicts IMPROVE reachable from this diet")]
    ModelDegenerate,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("search space of {0} points exceeds the enumeration limit")]
    SubspaceTooLarge(u64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
