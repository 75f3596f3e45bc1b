use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

use crate::models::SarimaxParams;
use crate::Pollutant;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("TOML error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("header is missing required column `{0}`")]
    MissingColumn(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("cannot parse `{value}` as {what}")]
    Parse { what: &'static str, value: String },
    #[error("inputs overlap on {} date(s): {}", .0.len(), format_dates(.0))]
    DuplicateDates(Vec<NaiveDate>),
    #[error("series mixes pollutants: expected {expected}, found {found}")]
    PollutantMismatch { expected: Pollutant, found: Pollutant },
    #[error("empty series")]
    EmptySeries,

    #[error("lag {lag} requires a series longer than {lag} rows (got {len})")]
    InvalidLag { lag: usize, len: usize },
    #[error("split ratio {0} must lie strictly between 0 and 1")]
    InvalidSplitRatio(f64),
    #[error("split of {n} rows at ratio {alpha} leaves an empty train or test partition")]
    DegenerateSplit { n: usize, alpha: f64 },
    #[error("column `{column}` is degenerate for {scaler} scaling")]
    DegenerateColumn { column: String, scaler: &'static str },
    #[error("scaler has no column `{0}`")]
    UnknownColumn(String),

    #[error("breakpoint table: {0}")]
    Breakpoint(String),
    #[error("negative concentration {0}")]
    NegativeConcentration(f64),
    #[error("no breakpoint table loaded for {0}")]
    MissingBreakpointTable(Pollutant),
    #[error("loss weights must be non-negative and not both zero (got {0}, {1})")]
    InvalidLossWeights(f64, f64),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least one sample")]
    NoSamples,
    #[error("truth has zero variance")]
    ZeroVariance,

    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("dropout rate {0} must lie in [0, 1)")]
    DropoutRate(f64),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("loss closure is not deterministic ({first} then {second})")]
    NonDeterministic { first: f64, second: f64 },

    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("need more than {min} rows, got {got}")]
    TooFewRows { min: usize, got: usize },
    #[error("SARIMAX optimizer did not converge after {iterations} iterations")]
    SarimaxNotConverged {
        params: Box<SarimaxParams<f64>>,
        iterations: usize,
    },
    #[error("model was fitted for {expected}, rows are {found}")]
    ModelPollutant { expected: Pollutant, found: Pollutant },
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    #[error("unknown report format `{0}`")]
    UnknownFormat(String),
    #[error("nothing to report")]
    NoResults,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn format_dates(dates: &[NaiveDate]) -> String {
    dates
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}
