use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("smoothers {first} and {second} are not comparable componentwise")]
    OrderViolation { first: usize, second: usize },

    #[error("smoothers {first} and {second} share trace {trace} but differ")]
    DuplicateTrace {
        first: usize,
        second: usize,
        trace: f64,
    },

    #[error("design eigenvalue {index} is {value}, expected a positive value")]
    NonpositiveDesignEigenvalue { index: usize, value: f64 },

    #[error("theta {theta} outside [0, {n}]")]
    ThetaOutOfRange { theta: f64, n: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("basis is not orthogonal (max deviation {deviation:e})")]
    NotOrthogonal { deviation: f64 },

    #[error("radius must be positive, got {0}")]
    NonpositiveRadius(f64),

    #[error("direction vector has zero length")]
    ZeroDirection,

    #[error("quadratic form has an all-zero spectrum")]
    ZeroMatrix,

    #[error("increment between theta {0} and {1} has zero d-distance")]
    DegenerateIncrement(f64, f64),

    #[error("interval [{0}, {1}] is empty")]
    EmptyInterval(f64, f64),

    #[error("points are not sorted within the interval at position {0}")]
    UnsortedPoints(usize),

    #[error("interval [{0}, {1}] has zero d-diameter")]
    ZeroDiameter(f64, f64),

    #[error("scale parameters must be positive")]
    NonpositiveScale,

    #[error("unknown process `{0}`")]
    UnknownProcess(String),

    #[error("no replication records")]
    EmptyRecords,

    #[error("need at least 3 usable tail points for a decay fit, found {0}")]
    InsufficientTailPoints(usize),

    #[error("no manifest found in {0}")]
    MissingManifest(String),

    #[error("invalid field `{field}`: {reason}")]
    InvalidField { field: String, reason: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn field(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidField {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::OrderViolation { .. } => "OrderViolation",
            Error::DuplicateTrace { .. } => "DuplicateTrace",
            Error::NonpositiveDesignEigenvalue { .. } => "NonpositiveDesignEigenvalue",
            Error::ThetaOutOfRange { .. } => "ThetaOutOfRange",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NotOrthogonal { .. } => "NotOrthogonal",
            Error::NonpositiveRadius(_) => "NonpositiveRadius",
            Error::ZeroDirection => "ZeroDirection",
            Error::ZeroMatrix => "ZeroMatrix",
            Error::DegenerateIncrement(..) => "DegenerateIncrement",
            Error::EmptyInterval(..) => "EmptyInterval",
            Error::UnsortedPoints(_) => "UnsortedPoints",
            Error::ZeroDiameter(..) => "ZeroDiameter",
            Error::NonpositiveScale => "NonpositiveScale",
            Error::UnknownProcess(_) => "UnknownProcess",
            Error::EmptyRecords => "EmptyRecords",
            Error::InsufficientTailPoints(_) => "InsufficientTailPoints",
            Error::MissingManifest(_) => "MissingManifest",
            Error::InvalidField { .. } => "InvalidField",
            Error::Invalid(_) => "Invalid",
            Error::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
