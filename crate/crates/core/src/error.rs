use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-positive price {value} on {date}")]
    NonPositivePrice { date: NaiveDate, value: f64 },

    #[error("series too short: need at least {needed} observations, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("column `{0}` has zero sample variance")]
    ZeroVariance(String),

    #[error("price and covariate series have no overlapping dates")]
    EmptyOverlap,

    #[error("non-finite value in `{series}` on {date}")]
    NonFinite { series: String, date: NaiveDate },

    #[error("dates are not strictly increasing at {0}")]
    UnorderedDates(NaiveDate),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite likelihood at t = {t}")]
    NonFiniteLikelihood { t: usize },

    #[error("numerical failure at sweep {sweep}: {source}")]
    ChainFailure {
        sweep: usize,
        #[source]
        source: Box<Error>,
        /// Parameters of the last completed sweep.
        last_valid: Option<Box<crate::model::NhpgModel>>,
    },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }
}
