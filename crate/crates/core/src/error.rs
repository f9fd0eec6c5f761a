use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid user-supplied configuration; `field` names the offending key.
    #[error("invalid configuration for `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An input violated a documented precondition (e.g. asymmetric ψ⁺).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("schedule error: {0}")]
    Schedule(String),

    /// The group means coincide, so λ(t) is +∞.
    #[error("degenerate mean gap |x̄ - ȳ| = {gap:e} (state scale {scale:e})")]
    DegenerateGap { gap: f64, scale: f64 },

    #[error("no separation gap: discriminant {delta} <= 0")]
    NoSeparationGap { delta: f64 },

    #[error("initial ratio {ratio} above the stable basin (lambda_plus = {lambda_plus})")]
    AboveStableBasin { ratio: f64, lambda_plus: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("sweep error: {0}")]
    Sweep(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Process exit code for the command-line surface.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            _ => 1,
        }
    }
}
