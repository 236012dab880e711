use thiserror::Error;

/// Errors raised by the projection, scenario, metric and IO routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input data is empty")]
    EmptyData,
    #[error("non-finite value in {context}")]
    NonFiniteInput { context: String },
    #[error("data has zero total variance")]
    DegenerateVariance,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("similarity scale must be positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("kernel width must be positive, got {0}")]
    NonPositiveGamma(f64),
    #[error("at least two points are required")]
    SinglePoint,
    #[error("{what} out of range: {value}")]
    OutOfRange { what: &'static str, value: f64 },
    #[error("mask has zero l1 norm")]
    ZeroMask,
    #[error("loss became non-finite at iteration {iteration}")]
    NonFiniteLoss { iteration: usize, trace: Vec<f64> },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("count {count} outside [{min}, {max}]")]
    CountOutOfRange { count: usize, min: usize, max: usize },
    #[error("manipulation is empty")]
    EmptyManipulation,
    #[error("index {index} out of range for {len} points")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("index {0} appears more than once")]
    DuplicateIndex(usize),
    #[error("index {0} is not a control point")]
    NotControlPoint(usize),
    #[error("need at least two classes")]
    SingleClass,
    #[error("class {0} not present")]
    UnknownClass(i64),
    #[error("need more than {k} points, got {n}")]
    TooFewPoints { n: usize, k: usize },
    #[error("labels are required for this operation")]
    MissingLabels,
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("non-numeric feature at line {line}, column {column}")]
    NonNumericFeature { line: usize, column: usize },
    #[error("label column `{0}` not found")]
    MissingLabelColumn(String),
    #[error("row count mismatch: expected {expected}, found {found}")]
    RowCountMismatch { expected: usize, found: usize },
    #[error("header declares {declared} values but file holds {found}")]
    ShapeHeaderMismatch { declared: usize, found: usize },
    #[error("requested {requested} samples but only {available} available")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable identifier for the variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::EmptyData => "EmptyData",
            Error::NonFiniteInput { .. } => "NonFiniteInput",
            Error::DegenerateVariance => "DegenerateVariance",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::NonPositiveSigma(_) => "NonPositiveSigma",
            Error::NonPositiveGamma(_) => "NonPositiveGamma",
            Error::SinglePoint => "SinglePoint",
            Error::OutOfRange { .. } => "OutOfRange",
            Error::ZeroMask => "ZeroMask",
            Error::NonFiniteLoss { .. } => "NonFiniteLoss",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::CountOutOfRange { .. } => "CountOutOfRange",
            Error::EmptyManipulation => "EmptyManipulation",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::DuplicateIndex(_) => "DuplicateIndex",
            Error::NotControlPoint(_) => "NotControlPoint",
            Error::SingleClass => "SingleClass",
            Error::UnknownClass(_) => "UnknownClass",
            Error::TooFewPoints { .. } => "TooFewPoints",
            Error::MissingLabels => "MissingLabels",
            Error::Parse { .. } => "ParseError",
            Error::NonNumericFeature { .. } => "NonNumericFeature",
            Error::MissingLabelColumn(_) => "MissingLabelColumn",
            Error::RowCountMismatch { .. } => "RowCountMismatch",
            Error::ShapeHeaderMismatch { .. } => "ShapeHeaderMismatch",
            Error::SampleTooLarge { .. } => "SampleTooLarge",
            Error::UnknownDataset(_) => "UnknownDataset",
            Error::Io(_) => "IoError",
            Error::Json(_) => "SerializationError",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
