use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid odds: {0}")]
    InvalidOdds(String),
    #[error("data gap: no price recorded at minute {minute}")]
    DataGap { minute: i64 },
    #[error("missing team: {0}")]
    MissingTeam(String),
    #[error("invalid date: {0}")]
    InvalidDate(String),
    #[error("numeric overflow: {0}")]
    NumericOverflow(String),
    #[error("fit failed after {iterations} iterations: {reason}")]
    FitFailure { iterations: usize, reason: String },
    #[error("incomparable fits: {0}")]
    IncomparableFits(String),
    #[error("degenerate baseline: {0}")]
    DegenerateBaseline(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("calibration failed: {reason}")]
    CalibrationFailure { reason: String, last: Vec<f64> },
    #[error("alignment error: {} missing points (first: {})", .missing.len(), .missing.first().map(String::as_str).unwrap_or("-"))]
    Alignment { missing: Vec<String> },
    #[error("parse error at {file}:{row}: {message}")]
    Parse { file: String, row: usize, message: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Short machine-readable tag, used in error manifests and HTTP bodies.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidOdds(_) => "invalid-odds",
            Error::DataGap { .. } => "data-gap",
            Error::MissingTeam(_) => "missing-team",
            Error::InvalidDate(_) => "invalid-date",
            Error::NumericOverflow(_) => "numeric-overflow",
            Error::FitFailure { .. } => "fit-failure",
            Error::IncomparableFits(_) => "incomparable-fits",
            Error::DegenerateBaseline(_) => "degenerate-baseline",
            Error::State(_) => "state-error",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::CalibrationFailure { .. } => "calibration-failure",
            Error::Alignment { .. } => "alignment-error",
            Error::Parse { .. } => "parse-error",
            Error::Config(_) => "config-error",
            Error::Io(_) => "io-error",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
