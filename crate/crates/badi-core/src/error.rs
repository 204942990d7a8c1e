use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("schema error: missing mandatory column `{0}`")]
    MissingColumn(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid GEOID `{0}`: {1}")]
    InvalidGeoId(String, String),

    #[error("variable `{variable}` has zero variance")]
    ZeroVariance { variable: String },

    #[error("cell ({geoid}, variable {variable}) is unimputable: variable observed nowhere in county {county}")]
    UnimputableCell {
        geoid: String,
        variable: usize,
        county: String,
    },

    #[error("record {geoid} has no observed variables; distance undefined")]
    NoObservedVariables { geoid: String },

    #[error("correlation matrix is singular or ill-conditioned: {0}")]
    SingularMatrix(String),

    #[error("no dominant factor: leading eigenvalue {0} is not positive")]
    NonPositiveEigenvalue(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("need at least {need} observations, got {got}")]
    TooFewObservations { need: usize, got: usize },

    #[error("design matrix is rank deficient; collinear columns: {0}")]
    RankDeficient(String),

    #[error("invalid response for {family}: {message}")]
    InvalidResponse { family: String, message: String },

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
