use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

/// Broad failure classes, used by the command line to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Io,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot parse {what}: {detail}")]
    Parse { what: String, detail: String },

    #[error("non-positive price {price} for {ticker} on {date}")]
    NonPositivePrice {
        date: NaiveDate,
        ticker: String,
        price: f64,
    },

    #[error("ticker {0} not present in the data")]
    MissingTicker(String),

    #[error("need at least {needed} dates, have {have}")]
    TooFewDates { needed: usize, have: usize },

    #[error("invalid price series: {0}")]
    InvalidSeries(String),

    #[error("split boundary {0} is outside the series date range")]
    BoundaryOutOfRange(NaiveDate),

    #[error("split produced period `{period}` with {len} dates (need at least 2)")]
    EmptyPeriod { period: &'static str, len: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("infeasible action: {0}")]
    InfeasibleAction(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(what: impl Into<String>, detail: impl ToString) -> Self {
        Error::Parse {
            what: what.into(),
            detail: detail.to_string(),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::NonPositivePrice { .. }
            | Error::MissingTicker(_)
            | Error::Checkpoint(_) => ErrorClass::Io,
            Error::NonFinite(_) | Error::InfeasibleAction(_) => ErrorClass::Numeric,
            Error::TooFewDates { .. }
            | Error::InvalidSeries(_)
            | Error::BoundaryOutOfRange(_)
            | Error::EmptyPeriod { .. }
            | Error::InvalidParameter(_)
            | Error::DimensionMismatch { .. }
            | Error::Insufficient(_)
            | Error::Config(_) => ErrorClass::Config,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
