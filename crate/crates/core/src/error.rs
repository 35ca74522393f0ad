use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("matrix is not positive semi-definite (min eigenvalue {min:e}, max eigenvalue {max:e})")]
    NotPsd { min: f64, max: f64 },

    #[error("centring violation: {0}")]
    Centring(String),

    #[error("problem too large for the dense path: n = {n} exceeds {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("term {0} is not part of the model")]
    UnknownTerm(String),

    #[error("invalid term collection: {0}")]
    InvalidTerms(String),

    #[error("log marginal likelihood is not finite at the initial point {0:?}")]
    Initialization(Vec<f64>),

    #[error("log marginal likelihood is not finite at hyperparameters {0:?}")]
    NonFinite(Vec<f64>),

    #[error("ingestion error: {0}")]
    Ingest(String),

    #[error("imputation error: {0}")]
    Impute(String),

    #[error("boundary error: {0}")]
    Boundary(String),

    #[error("invalid effect request `{request}`: {reason}")]
    Request { request: String, reason: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
