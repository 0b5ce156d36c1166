use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    // data model / ingestion
    #[error("no input series supplied")]
    NoSeries,
    #[error("series '{label}' has {len} observations, at least {min} required")]
    TooShort { label: String, len: usize, min: usize },
    #[error("date intersection has {len} observations, at least {min} required")]
    EmptyIntersection { len: usize, min: usize },
    #[error("negative value {value} at position {index}")]
    NegativeValue { index: usize, value: f64 },
    #[error("non-finite value at position {index}")]
    NonFinite { index: usize },
    #[error("series lengths disagree: {0}")]
    MismatchedReturns(String),
    #[error("dates are not strictly increasing at position {index}")]
    UnorderedDates { index: usize },
    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse { row: usize, column: String, message: String },
    #[error("duplicate date {0}")]
    DuplicateDate(String),
    #[error("column '{0}' not found in header")]
    MissingColumn(String),
    #[error("i/o error: {0}")]
    Io(String),

    // parameters
    #[error("inadmissible parameters: {0}")]
    NonStationary(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    // smoother
    #[error("kernel weights degenerate at row {row}")]
    DegenerateWeights { row: usize },
    #[error("series {index} has zero residual variance")]
    ZeroVariance { index: usize },

    // filters and estimation
    #[error("non-positive xi at t = {row}, series {series}")]
    NonPositiveXi { row: usize, series: usize },
    #[error("no convergence after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NoConvergence { iterations: usize, gradient_norm: f64 },
    #[error("outer alternation did not converge after {iterations} iterations")]
    NoOuterConvergence { iterations: usize },
    #[error("moment matrix A is singular")]
    SingularA,
    #[error("error covariance matrix is singular")]
    SingularSigma,
    #[error("covariance submatrix is singular")]
    SingularSubmatrix,

    // distributions
    #[error("variance {0} is not attainable for this distribution")]
    UnattainableVariance(f64),
    #[error("{got} usable observations, at least {min} required")]
    TooFewObservations { got: usize, min: usize },

    // diagnostics
    #[error("lag-0 autocovariance matrix is singular")]
    SingularC0,
    #[error("degrees of freedom {0} must be positive")]
    NonPositiveDf(i64),
    #[error("series is constant")]
    ConstantSeries,

    // simulation
    #[error("invalid simulation spec: {0}")]
    InvalidSpec(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
