use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index out of range: {0}")]
    Range(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("capacity exceeded: {what} needs {needed} entries, cap is {cap}")]
    Capacity {
        what: &'static str,
        needed: usize,
        cap: usize,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid configuration:{}", field_list(.errors))]
    InvalidConfig { errors: Vec<crate::cli::config::FieldError> },

    #[error("syntax error on line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("numerical failure at step {step}: {reason}")]
    NumericalFailure { step: usize, reason: String },

    #[error("step size underflow at t = {time:e} (h = {step:e})")]
    Stiffness { time: f64, step: f64 },

    #[error("degenerate metric: {0}")]
    DegenerateMetric(String),

    #[error("time alignment error: {0}")]
    Alignment(String),

    #[error("power iteration did not converge after {iterations} iterations (last relative change {change:e})")]
    NoConvergence { iterations: usize, change: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn field_list(errors: &[crate::cli::config::FieldError]) -> String {
    errors.iter().map(|e| format!("\n  {e}")).collect()
}
