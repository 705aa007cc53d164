use std::fmt;

use serde::Serialize;
use thiserror::Error;

/// A single violated constraint found while validating a probability tensor.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// Entry below `-tol`. Indices are (setting, setting, outcome) for PM data
    /// and (x, y, a*B + b) for Bell data.
    NegativeProbability { x: usize, y: usize, b: usize, value: f64 },
    /// A conditional distribution does not sum to one.
    Normalization { x: usize, y: usize, sum: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NegativeProbability { x, y, b, value } => {
                write!(f, "negative probability {value} at (x={x}, y={y}, b={b})")
            }
            Violation::Normalization { x, y, sum } => {
                write!(f, "slice (x={x}, y={y}) sums to {sum}")
            }
        }
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid correlation: {}", join_violations(.0))]
    Invalid(Vec<Violation>),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("degenerate denominator {0:e} (bound is unbounded)")]
    DegenerateDenominator(f64),

    #[error("witness requires binary outcomes, got K={0}")]
    NotBinary(usize),

    #[error("wrong scenario: expected {expected}, got {got}")]
    WrongScenario { expected: String, got: String },

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("N={n} exceeds exact-solver limit {max_n}")]
    TooLarge { n: usize, max_n: usize },

    #[error("invalid realization: {0}")]
    InvalidRealization(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    /// Short machine-readable name used in structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Invalid(_) => "invalid_correlation",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::Parse { .. } => "parse_error",
            Error::DegenerateDenominator(_) => "degenerate_denominator",
            Error::NotBinary(_) => "not_binary",
            Error::WrongScenario { .. } => "wrong_scenario",
            Error::OutOfRange(_) => "out_of_range",
            Error::TooLarge { .. } => "too_large",
            Error::InvalidRealization(_) => "invalid_realization",
            Error::Io(_) => "io_error",
        }
    }

    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Io(_) => 3,
            Error::DegenerateDenominator(_) => 4,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
