//! Config-driven experiments: single transfers, optimisation, time sweeps
//! and robustness grids, with CSV and JSON outputs.

mod config;
mod manifest;
mod runner;

use thiserror::Error;

pub use config::{
    symmetric_grid, ExperimentConfig, OptimizerConfig, PulseConfig, RobustnessAxes, RobustnessMode, ScanConfig,
    TimeSweepSpec, CALIBRATED_T1_NS, CALIBRATION_TARGET,
};
pub use manifest::{RunManifest, TOOL_VERSION};
pub use runner::{
    antidiagonal, calibrate_uniform_t1, emit_pulses, optimize_protocol, perturbed_control, resolve_control, robustness_scan,
    run_optimize, run_robustness, run_sweep, run_transfer, simulate, sweep_table, sweep_total_time, three_level_cd_transfer,
    GridCell, OptimizeOutcome, RobustnessGrid, RobustnessOutcome, Simulation, SweepOutcome, SweepRow, TransferOutcome,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Numerical(_) => 2,
            HarnessError::Io(_) => 3,
        }
    }
}

impl From<crate::propagation::PropagationError> for HarnessError {
    fn from(e: crate::propagation::PropagationError) -> Self {
        use crate::propagation::PropagationError as P;
        match e {
            P::InvalidConfig(_) | P::InvalidState(_) | P::DimensionMismatch { .. } => HarnessError::Config(e.to_string()),
            P::NonFinite { .. } => HarnessError::Numerical(e.to_string()),
        }
    }
}

impl From<crate::pulse_synthesis::PulseError> for HarnessError {
    fn from(e: crate::pulse_synthesis::PulseError) -> Self {
        use crate::pulse_synthesis::PulseError as P;
        match e {
            P::ZeroDrive(_) => HarnessError::Numerical(e.to_string()),
            _ => HarnessError::Config(e.to_string()),
        }
    }
}

impl From<crate::metrics::MetricError> for HarnessError {
    fn from(e: crate::metrics::MetricError) -> Self {
        HarnessError::Numerical(e.to_string())
    }
}

impl From<crate::cmaes::CmaesError> for HarnessError {
    fn from(e: crate::cmaes::CmaesError) -> Self {
        match e {
            crate::cmaes::CmaesError::InvalidConfig(_) => HarnessError::Config(e.to_string()),
            _ => HarnessError::Numerical(e.to_string()),
        }
    }
}

impl From<crate::qudit_model::ModelError> for HarnessError {
    fn from(e: crate::qudit_model::ModelError) -> Self {
        HarnessError::Config(e.to_string())
    }
}
