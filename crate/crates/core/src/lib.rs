//! Pulse synthesis, qudit dynamics and CMA-ES optimisation for
//! shortcut-to-adiabatic Raman passage on a weakly anharmonic transmon.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cmaes;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod propagation;
pub mod pulse_synthesis;
pub mod qudit_model;
pub mod table;

pub use cmaes::{CmaesConfig, CmaesState, OptimizationResult, Termination};
pub use metrics::{state_fidelity, transfer_report, FidelityReport};
pub use propagation::{
    propagate_lindblad, propagate_state, total_propagator, DensityMatrix, Frame, Method, PropagationConfig,
    QuantumState, TrajectoryRecord,
};
pub use pulse_synthesis::{
    gaussian_envelopes, make_protocol_schedule, sta_dressed_pulses, ControlParams, GaussianStirapParams,
    PulseSchedule, Protocol,
};
pub use qudit_model::TransmonSpec;
