//! Error type for the pipeline driver, bucketed by exit code.
//!
//! Every failure surfaces as diagnostic text on standard error plus one of
//! three process exit codes: 2 for configuration and schema problems
//! (including missing or stale pipeline artifacts), 3 for data too thin to
//! work with, and 4 for internal numeric failures such as singular systems.

use aqicast_core::dataset::DatasetError;
use aqicast_core::eda::EdaError;
use aqicast_core::explain::ExplainError;
use aqicast_core::forecast::ForecastError;
use aqicast_core::ingest::IngestError;
use aqicast_core::metrics::MetricsError;
use aqicast_core::models::ModelError;
use thiserror::Error;

/// Exit code for configuration, schema, and artifact-dependency problems.
pub const EXIT_USAGE: u8 = 2;
/// Exit code for datasets too small or empty to process.
pub const EXIT_DATA: u8 = 3;
/// Exit code for internal numeric failures.
pub const EXIT_NUMERIC: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration, malformed input schema, filesystem trouble, or a
    /// pipeline stage invoked before its dependencies exist.
    #[error("{0}")]
    Usage(String),
    /// The data survived validation but is too thin for the operation.
    #[error("{0}")]
    Insufficient(String),
    /// A numeric routine failed internally.
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Insufficient(_) => EXIT_DATA,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }

    /// A missing pipeline artifact, phrased with the command that creates it.
    pub fn missing(path: &std::path::Path, produced_by: &str) -> CliError {
        CliError::Usage(format!(
            "{} is missing; run `aqicast {produced_by}` first",
            path.display()
        ))
    }
}

pub fn io_error(path: &std::path::Path, source: std::io::Error) -> CliError {
    CliError::Usage(format!("cannot access {}: {source}", path.display()))
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> CliError {
        // Everything ingest rejects is an input-schema problem.
        CliError::Usage(e.to_string())
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> CliError {
        match e {
            DatasetError::BadBands(_)
            | DatasetError::UnknownFeature(_)
            | DatasetError::NoFeaturesLeft => CliError::Usage(e.to_string()),
            DatasetError::NoUsablePairs
            | DatasetError::IndexOutOfRange(_)
            | DatasetError::BadFoldCount { .. } => CliError::Insufficient(e.to_string()),
        }
    }
}

impl From<EdaError> for CliError {
    fn from(e: EdaError) -> CliError {
        match e {
            EdaError::Empty | EdaError::BadK { .. } => CliError::Insufficient(e.to_string()),
            EdaError::AssignmentMismatch { .. } | EdaError::NotTwoClusters(_) => {
                CliError::Numeric(e.to_string())
            }
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> CliError {
        match e {
            ModelError::TooFewRows { .. } => CliError::Insufficient(e.to_string()),
            ModelError::SingularSystem { .. } | ModelError::DimensionMismatch { .. } => {
                CliError::Numeric(e.to_string())
            }
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> CliError {
        match e {
            MetricsError::Empty => CliError::Insufficient(e.to_string()),
            MetricsError::Model(inner) => inner.into(),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<ExplainError> for CliError {
    fn from(e: ExplainError) -> CliError {
        match e {
            ExplainError::Empty => CliError::Insufficient(e.to_string()),
            ExplainError::BadConfig(_)
            | ExplainError::BadFeature { .. }
            | ExplainError::BadClass(_) => CliError::Usage(e.to_string()),
            ExplainError::DimensionMismatch { .. } | ExplainError::Linalg(_) => {
                CliError::Numeric(e.to_string())
            }
        }
    }
}

impl From<ForecastError> for CliError {
    fn from(e: ForecastError) -> CliError {
        match e {
            ForecastError::UnknownCountry(_) => CliError::Insufficient(e.to_string()),
            ForecastError::AllFailed | ForecastError::Leakage { .. } => {
                CliError::Numeric(e.to_string())
            }
            ForecastError::Dataset(inner) => inner.into(),
            ForecastError::Model(inner) => inner.into(),
            ForecastError::Metrics(inner) => inner.into(),
        }
    }
}
