use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("Poincaré constant unavailable: {0}")]
    ConstantUnavailable(String),

    #[error("{measure} is not defined for input x{input}: {reason}")]
    UnsupportedMeasure {
        measure: &'static str,
        input: usize,
        reason: String,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate output variance (V = {0:e}); the model looks constant on this sample")]
    DegenerateVariance(f64),

    #[error("unknown model '{0}'")]
    UnknownModel(String),

    #[error("analytic gradient requested but model '{0}' does not provide one")]
    MissingGradient(String),

    #[error("dimension {requested} exceeds the direction-number table (max supported dimension {max})")]
    TooManyDimensions { requested: usize, max: usize },

    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown identifier '{name}' at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },

    #[error("variable index out of range: x{index} with dimension {dimension}")]
    VariableOutOfRange { index: usize, dimension: usize },

    #[error("sample too small: {0}")]
    EmptySample(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
