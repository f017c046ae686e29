use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("mark at index {index} is not an element of the mark space: {detail}")]
    InvalidMark { index: usize, detail: String },

    #[error("mark function undefined at positive-weight index {index}")]
    MissingMark { index: usize },

    #[error("{points} points exceed the exact search bound of {bound}; use stats::two_sample_test instead")]
    TooLargeForExactSearch { points: usize, bound: usize },

    #[error("enumeration budget exceeded: {required} > {budget}")]
    BudgetExceeded { required: u128, budget: u128 },

    #[error("index {index} out of range for order {order}")]
    IndexOutOfRange { index: usize, order: usize },

    #[error("invalid probability vector: {0}")]
    InvalidMeasure(String),

    #[error("invalid metric: {0}")]
    InvalidMetric(String),

    #[error("gluing inequality violated: {0}")]
    InvalidGluing(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("polynomial '{description}' returned {value}, outside its declared bound {bound}")]
    BoundViolated {
        description: String,
        value: f64,
        bound: f64,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Stable snake_case name of the variant, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::Empty(_) => "empty",
            Error::InvalidMark { .. } => "invalid_mark",
            Error::MissingMark { .. } => "missing_mark",
            Error::TooLargeForExactSearch { .. } => "too_large_for_exact_search",
            Error::BudgetExceeded { .. } => "budget_exceeded",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::InvalidMeasure(_) => "invalid_measure",
            Error::InvalidMetric(_) => "invalid_metric",
            Error::InvalidGluing(_) => "invalid_gluing",
            Error::Unsupported(_) => "unsupported",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::BoundViolated { .. } => "bound_violated",
            Error::Parse(_) => "parse",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
