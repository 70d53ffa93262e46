//! Scenario files, the two-vehicle closed-loop experiment, tracking metrics
//! and the baseline comparison report.

mod config;
mod metrics;
mod report;
mod runner;
pub mod sim;

use thiserror::Error;

pub use config::{
    CollectSettings, DroneSettings, NoiseSettings, PredictorSettings, RunSettings, ScenarioConfig, SimSettings,
    ThrottleSettings, Window, KEYS,
};
pub use metrics::{
    compute_metrics, metrics_from_records, read_references, read_telemetry, ReferenceRecord, RunMetrics, TelemetryRecord,
    METRICS_HEADER,
};
pub use report::{compare_runs, reduction_pct, Comparison};
pub use runner::{
    build_trajectories, fly_round, run_closed_loop, write_round, RoundRecord, RunInfo, RunSummary, REFERENCE_HEADER,
    TELEMETRY_HEADER,
};

use crate::data::DataError;
use crate::nmpc::NmpcError;
use crate::predictor::PredictorError;
use crate::trajectory::TrajError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("simulation diverged at t = {t:.3} s on drone {drone}")]
    Divergence { t: f64, drone: u32 },
    #[error("metric window contains no samples")]
    EmptyWindow,
    #[error("{0}")]
    Mismatch(String),
    #[error(transparent)]
    Trajectory(#[from] TrajError),
    #[error(transparent)]
    Nmpc(#[from] NmpcError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            HarnessError::Divergence { .. } => true,
            HarnessError::Trajectory(e) => matches!(e, TrajError::SingularKkt | TrajError::FreeFall(_)),
            HarnessError::Nmpc(e) => matches!(e, NmpcError::NonFinite(_) | NmpcError::NotPositiveDefinite),
            HarnessError::Predictor(e) => matches!(e, PredictorError::NonFiniteLoss { .. }),
            HarnessError::Data(e) => matches!(e, DataError::Divergence { .. }),
            _ => false,
        }
    }
}
