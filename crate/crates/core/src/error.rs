use std::io;

use thiserror::Error;

/// Errors raised across the crate.
///
/// Messages are single-line so the CLI can print them verbatim.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no knots")]
    NoKnots,
    #[error("unsorted curve")]
    UnsortedCurve,
    #[error("invalid error at line {line}: curve error must be positive")]
    InvalidCurveError { line: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("out of curve range: {date} not in [{min}, {max}]")]
    OutOfCurveRange { date: f64, min: f64, max: f64 },
    #[error("age outside calibratable range: {age}")]
    AgeOutsideCalibratableRange { age: i64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no dates")]
    NoDates,
    #[error("empty spec")]
    EmptySpec,
    #[error("incompatible specs: {0}")]
    IncompatibleSpecs(String),
    #[error("corrupt table: {0}")]
    CorruptTable(String),
    #[error("no matches in reference table (check table span and buffer)")]
    NoMatches,
    #[error("nothing to aggregate")]
    NothingToAggregate,
    #[error("empty reference pool")]
    EmptyPool,
    #[error("no reference values within tolerance of {value}")]
    NoneWithinTolerance { value: f64 },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("sample too small for {test}: n = {n}, need at least {needed}")]
    SampleTooSmall {
        test: &'static str,
        n: usize,
        needed: usize,
    },
    #[error("zero variance sample")]
    ZeroVariance,
    #[error("outside lookup range: {0}")]
    OutsideLookupRange(f64),
    #[error("unknown indicator: {0}")]
    UnknownIndicator(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// True for failures that originate from the filesystem rather than from the data.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io(_) => true,
            Error::Csv(e) => matches!(e.kind(), csv::ErrorKind::Io(_)),
            _ => false,
        }
    }
}
