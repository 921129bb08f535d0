//! Experiment drivers behind the command-line tool.
//!
//! Each driver returns plain data and has a matching `write_*` function, so
//! tests can check results without touching the filesystem.

mod calibrate;
mod config;
mod dataset;
mod output;
mod profile;
mod sweep;

pub use calibrate::{
    calibrate, predict, read_features, read_stream_costs, read_targets, CalibrationModel, Method,
    PredictionReport, PredictionRow,
};
pub use config::{
    parse_json, DataSource, ExperimentConfig, SweepSpec, ThresholdSpec, MAX_REFERENCE_THRESHOLD,
};
pub use dataset::{gen_synthetic, read_dataset, write_dataset, ConsumptionDataset};
pub use output::{read_table, write_json, write_table, Table};
pub use profile::{
    aggregate, profile, run_aggregation, write_aggregate, write_profile, ProfileResult,
    ThresholdProfile,
};
pub use sweep::{run_sweep, setting_key, write_sweep, SettingResult, SweepResult};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ExperimentError {
    /// Process exit code: 2 for configuration problems, 3 for data problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            ExperimentError::Data(_) | ExperimentError::Io { .. } => 3,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        ExperimentError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<crate::simkernel::SimError> for ExperimentError {
    fn from(e: crate::simkernel::SimError) -> Self {
        ExperimentError::Config(e.to_string())
    }
}

impl From<crate::calibration::CalibrationError> for ExperimentError {
    fn from(e: crate::calibration::CalibrationError) -> Self {
        use crate::calibration::CalibrationError as C;
        match e {
            C::Config(_) | C::EmptyGrid => ExperimentError::Config(e.to_string()),
            _ => ExperimentError::Data(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, ExperimentError>;
