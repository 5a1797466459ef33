//! Experiment configuration: one TOML document with nested sections.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::cmaes::{default_population, CmaesConfig, DEFAULT_STEP_FRACTION};
use crate::propagation::PropagationConfig;
use crate::pulse_synthesis::{
    ControlParams, GaussianStirapParams, Protocol, PulseOrdering, DEFAULT_SEPARATION_FRACTION, DEFAULT_WIDTH_FRACTION,
};
use crate::qudit_model::TransmonSpec;

/// Uniform relaxation time that brings STIRAP at 500 ns down to the
/// decoherence-limited fidelity 0.981 on the default device.
/// Produced by [`super::calibrate_uniform_t1`] and frozen here.
pub const CALIBRATED_T1_NS: f64 = 16_820.0;
pub const CALIBRATION_TARGET: f64 = 0.981;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseConfig {
    /// Peak amplitude, rad/ns.
    pub omega0: f64,
    pub total_time: f64,
    /// Defaults to `T/11`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_tau: Option<f64>,
    /// Defaults to `0.18 T`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub ordering: PulseOrdering,
}

impl Default for PulseConfig {
    fn default() -> Self {
        Self { omega0: TAU * 0.03, total_time: 32.0, delta_tau: None, sigma: None, ordering: PulseOrdering::SFirst }
    }
}

impl PulseConfig {
    pub fn params(&self) -> GaussianStirapParams {
        self.params_at(self.total_time)
    }

    /// Same shape (fractions of `T`) at another total time.
    pub fn params_at(&self, total_time: f64) -> GaussianStirapParams {
        let k = total_time / self.total_time;
        GaussianStirapParams {
            omega0: self.omega0,
            total_time,
            delta_tau: self.delta_tau.map_or(DEFAULT_SEPARATION_FRACTION * total_time, |d| d * k),
            sigma: self.sigma.map_or(DEFAULT_WIDTH_FRACTION * total_time, |s| s * k),
            ordering: self.ordering,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    #[serde(default = "default_budget")]
    pub max_evaluations: usize,
    #[serde(default = "default_target")]
    pub target_cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_step: Option<f64>,
    #[serde(default = "default_alpha_bounds")]
    pub alpha_bounds: [f64; 2],
    /// Detuning bounds, rad/ns.
    #[serde(default = "default_beta_bounds")]
    pub beta_bounds: [f64; 2],
    #[serde(default)]
    pub initial: ControlParams,
    /// Keep decoherence on inside the optimisation loop.
    #[serde(default)]
    pub with_decoherence: bool,
}

fn default_budget() -> usize {
    2000
}
fn default_target() -> f64 {
    1e-4
}
fn default_alpha_bounds() -> [f64; 2] {
    [0.5, 1.5]
}
fn default_beta_bounds() -> [f64; 2] {
    [-TAU * 0.05, TAU * 0.05]
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_evaluations: default_budget(),
            target_cost: default_target(),
            population: None,
            initial_step: None,
            alpha_bounds: default_alpha_bounds(),
            beta_bounds: default_beta_bounds(),
            initial: ControlParams::identity(),
            with_decoherence: false,
        }
    }
}

impl OptimizerConfig {
    pub fn cmaes(&self, seed: u64) -> CmaesConfig {
        let [alo, ahi] = self.alpha_bounds;
        let [blo, bhi] = self.beta_bounds;
        let mut c = CmaesConfig::new(self.initial.to_vec(), vec![(alo, ahi), (alo, ahi), (blo, bhi), (blo, bhi)], seed);
        c = c.with_population(self.population.unwrap_or(default_population(4)));
        c.initial_step = self.initial_step.unwrap_or(DEFAULT_STEP_FRACTION * (ahi - alo).min(bhi - blo));
        c.max_evaluations = self.max_evaluations;
        c.target_cost = self.target_cost;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    /// Total times for `sweep-time`, ns.
    #[serde(default = "default_sweep_times")]
    pub sweep_times: Vec<f64>,
    #[serde(default = "default_sweep_omega0")]
    pub sweep_omega0: f64,
    #[serde(default = "default_variants")]
    pub sweep_variants: Vec<Protocol>,
    /// Largest amplitude error on each axis.
    #[serde(default = "default_eta_max")]
    pub eta_max: f64,
    /// Largest detuning error on each axis, rad/ns.
    #[serde(default = "default_delta_max")]
    pub delta_max: f64,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
}

fn default_sweep_times() -> Vec<f64> {
    vec![25.0, 50.0, 75.0, 100.0, 150.0, 200.0, 300.0, 400.0, 500.0]
}
fn default_sweep_omega0() -> f64 {
    TAU * 0.02
}
fn default_variants() -> Vec<Protocol> {
    Protocol::ALL.to_vec()
}
fn default_eta_max() -> f64 {
    0.2
}
fn default_delta_max() -> f64 {
    TAU * 0.02
}
fn default_grid_points() -> usize {
    21
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            sweep_times: default_sweep_times(),
            sweep_omega0: default_sweep_omega0(),
            sweep_variants: default_variants(),
            eta_max: default_eta_max(),
            delta_max: default_delta_max(),
            grid_points: default_grid_points(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_protocol")]
    pub protocol: Protocol,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub decoherence_enabled: bool,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub transmon: TransmonSpec,
    #[serde(default)]
    pub pulse: PulseConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlParams>,
    #[serde(default)]
    pub propagation: PropagationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerConfig>,
    #[serde(default)]
    pub scan: ScanConfig,
}

fn default_protocol() -> Protocol {
    Protocol::Stirsap
}
fn default_seed() -> u64 {
    1
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            protocol: default_protocol(),
            seed: default_seed(),
            decoherence_enabled: false,
            output_dir: default_output_dir(),
            transmon: TransmonSpec::default(),
            pulse: PulseConfig::default(),
            control: None,
            propagation: PropagationConfig::default(),
            optimizer: Some(OptimizerConfig::default()),
            scan: ScanConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    /// The transmon actually simulated: with decoherence on and no times
    /// configured, the calibrated uniform T1 is used.
    pub fn effective_transmon(&self, decoherence: bool) -> TransmonSpec {
        let mut spec = self.transmon.clone();
        if !decoherence {
            spec.t1_times = None;
            spec.tphi_times = None;
        } else if !spec.has_decoherence() {
            spec = spec.with_uniform_t1(CALIBRATED_T1_NS);
        }
        spec
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let cfg_err = |e: String| HarnessError::Config(e);
        self.transmon.validate().map_err(|e| cfg_err(e.to_string()))?;
        if self.transmon.level_count < 3 {
            return Err(cfg_err("the transfer needs at least three levels".into()));
        }
        self.pulse.params().validate().map_err(|e| cfg_err(e.to_string()))?;
        if let Some(c) = &self.control {
            c.validate().map_err(|e| cfg_err(e.to_string()))?;
        }
        self.propagation.validate(self.pulse.total_time).map_err(|e| cfg_err(e.to_string()))?;
        if let Some(o) = &self.optimizer {
            o.cmaes(self.seed).validate().map_err(|e| cfg_err(e.to_string()))?;
        }
        if self.protocol == Protocol::StirsapOpt && self.control.is_none() && self.optimizer.is_none() {
            return Err(cfg_err("STIRSAP_OPT needs either [control] or [optimizer]".into()));
        }
        let s = &self.scan;
        if s.sweep_times.is_empty() || s.sweep_times.iter().any(|&t| !(t > 0.0)) {
            return Err(cfg_err("scan.sweep_times must be non-empty and positive".into()));
        }
        if s.sweep_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(cfg_err("scan.sweep_times must be strictly increasing".into()));
        }
        if !(s.sweep_omega0 > 0.0) {
            return Err(cfg_err("scan.sweep_omega0 must be positive".into()));
        }
        if s.grid_points == 0 || !(s.eta_max >= 0.0 && s.eta_max < 1.0) || !(s.delta_max >= 0.0) {
            return Err(cfg_err("scan grid needs grid_points >= 1, 0 <= eta_max < 1, delta_max >= 0".into()));
        }
        Ok(())
    }
}

/// Total times of a sweep at fixed amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSweepSpec {
    pub times: Vec<f64>,
    pub omega0: f64,
}

impl TimeSweepSpec {
    pub fn new(times: Vec<f64>, omega0: f64) -> Result<Self, HarnessError> {
        if times.is_empty() || times.iter().any(|&t| !(t > 0.0)) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(HarnessError::Config("sweep times must be positive and strictly increasing".into()));
        }
        if !(omega0 > 0.0) {
            return Err(HarnessError::Config("sweep omega0 must be positive".into()));
        }
        Ok(Self { times, omega0 })
    }

    /// `start, start + step, ...` up to and including `stop`.
    pub fn range(start: f64, stop: f64, step: f64, omega0: f64) -> Result<Self, HarnessError> {
        if !(step > 0.0) || stop < start {
            return Err(HarnessError::Config("sweep range needs step > 0 and stop >= start".into()));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        Self::new((0..=n).map(|k| start + k as f64 * step).collect(), omega0)
    }

    /// `T0 = 2 pi / Omega_0`.
    pub fn reference_period(&self) -> f64 {
        TAU / self.omega0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RobustnessMode {
    Amplitude,
    Detuning,
}

impl RobustnessMode {
    pub fn file_name(self) -> &'static str {
        match self {
            RobustnessMode::Amplitude => "grid_amplitude.csv",
            RobustnessMode::Detuning => "grid_detuning.csv",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RobustnessMode::Amplitude => "AMPLITUDE",
            RobustnessMode::Detuning => "DETUNING",
        }
    }
}

/// Perturbation grid around a reference control point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessAxes {
    pub eta_values: Vec<f64>,
    /// rad/ns
    pub delta_values: Vec<f64>,
    pub reference: ControlParams,
}

/// `n` points evenly spanning `[-max, max]`, with an exact zero in the middle for odd `n`.
pub fn symmetric_grid(max: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    let half = (n - 1) as f64 / 2.0;
    (0..n).map(|k| max * (k as f64 - half) / half).collect()
}

impl RobustnessAxes {
    pub fn new(eta_values: Vec<f64>, delta_values: Vec<f64>, reference: ControlParams) -> Result<Self, HarnessError> {
        if eta_values.is_empty() || delta_values.is_empty() {
            return Err(HarnessError::Config("robustness grids must be non-empty".into()));
        }
        if eta_values.iter().any(|&e| !(e < 1.0)) {
            return Err(HarnessError::Config("amplitude errors must be < 1".into()));
        }
        reference.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(Self { eta_values, delta_values, reference })
    }

    pub fn from_scan(scan: &ScanConfig, reference: ControlParams) -> Result<Self, HarnessError> {
        Self::new(symmetric_grid(scan.eta_max, scan.grid_points), symmetric_grid(scan.delta_max, scan.grid_points), reference)
    }
}
