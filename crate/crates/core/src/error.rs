use thiserror::Error;

/// Errors raised by the enumeration, functional and sampling layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{what}: requested {requested} exceeds the limit of {limit}")]
    LimitExceeded {
        what: &'static str,
        requested: usize,
        limit: usize,
    },

    #[error("memory guard: {requested_bytes} bytes requested, budget is {budget_bytes}")]
    MemoryBudget {
        requested_bytes: u128,
        budget_bytes: u128,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no kernel row for context {context:#x} (zero marginal mass or foreign key)")]
    UnknownContext { context: u64 },

    #[error("negative input at index {index}: {value}")]
    NegativeInput { index: usize, value: f64 },

    #[error("degenerate quadratic form: {0}")]
    DegenerateForm(String),

    #[error("power iteration did not converge after {iterations} iterations (last estimate {estimate})")]
    PowerIteration {
        iterations: usize,
        estimate: f64,
        last_iterate: Vec<f64>,
    },

    #[error("{what} did not converge after {iterations} iterations (last gap {gap:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        gap: f64,
    },

    #[error("Dobrushin condition violated: ||A||_2->2 = {norm} >= 1")]
    DobrushinViolated { norm: f64 },

    #[error("condition violated at order k = {k}: {value} > {limit}")]
    ConditionViolated { k: usize, value: f64, limit: f64 },

    #[error("measure does not have full support on the product space")]
    NotFullSupport,

    #[error("absolute continuity violated at index {index}")]
    AbsoluteContinuity { index: usize },

    #[error("unsupported polynomial order d = {d}")]
    UnsupportedOrder { d: usize },

    #[error("measures live on different state spaces")]
    CodecMismatch,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
