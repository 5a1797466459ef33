//! Closed- and open-system time evolution under time-dependent Hamiltonians.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{c, expm_hermitian, identity, is_finite, max_abs, trace, zeros, CMatrix, CVector, I};
use crate::qudit_model::{
    cd_hamiltonian, ideal_three_level_hamiltonian, lab_frame_matrix, rotating_frame_matrix, CollapseChannel,
    TransmonSpec,
};
use crate::pulse_synthesis::{cd_amplitude, DressedPulses, EnvelopePair, PulseSchedule};
use crate::table::Table;

pub const NORM_TOLERANCE: f64 = 1e-9;
pub const TRACE_WARNING: f64 = 1e-6;
pub const DEFAULT_LAB_DT: f64 = 0.002;
pub const DEFAULT_ROTATING_DT: f64 = 0.02;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropagationError {
    #[error("dimension mismatch: Hamiltonian is {hamiltonian}x{hamiltonian}, state has {state}")]
    DimensionMismatch { hamiltonian: usize, state: usize },
    #[error("non-finite value at step {step}")]
    NonFinite { step: usize },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid propagation config: {0}")]
    InvalidConfig(String),
}

/// A Hamiltonian sampled at arbitrary times.
pub trait Hamiltonian: Sync {
    fn dim(&self) -> usize;
    fn at(&self, t: f64) -> CMatrix;
}

/// Wraps a closure as a [`Hamiltonian`].
pub struct FnHamiltonian<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(f64) -> CMatrix + Sync> Hamiltonian for FnHamiltonian<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn at(&self, t: f64) -> CMatrix {
        (self.f)(t)
    }
}

pub fn constant_hamiltonian(h: CMatrix) -> FnHamiltonian<impl Fn(f64) -> CMatrix + Sync> {
    FnHamiltonian { dim: h.nrows(), f: move |_| h.clone() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Frame {
    Lab,
    #[default]
    Rotating,
}

impl std::str::FromStr for Frame {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lab" => Ok(Frame::Lab),
            "rotating" => Ok(Frame::Rotating),
            other => Err(format!("unknown frame {other:?}")),
        }
    }
}

/// The driven qudit of a [`PulseSchedule`] in either frame.
#[derive(Debug, Clone)]
pub struct DrivenQudit {
    pub spec: Arc<TransmonSpec>,
    pub schedule: Arc<PulseSchedule>,
    pub frame: Frame,
}

impl DrivenQudit {
    pub fn new(spec: TransmonSpec, schedule: PulseSchedule, frame: Frame) -> Self {
        Self { spec: Arc::new(spec), schedule: Arc::new(schedule), frame }
    }
}

impl Hamiltonian for DrivenQudit {
    fn dim(&self) -> usize {
        self.spec.level_count
    }
    fn at(&self, t: f64) -> CMatrix {
        match self.frame {
            Frame::Lab => lab_frame_matrix(&self.spec, &self.schedule, t),
            Frame::Rotating => rotating_frame_matrix(&self.spec, &self.schedule, t),
        }
    }
}

/// Resonant three-level Lambda system driven by ideal envelopes.
#[derive(Debug, Clone)]
pub enum ThreeLevelDrive {
    /// `H(Omega_p, Omega_s)` only.
    Plain(EnvelopePair),
    /// `H(Omega_p, Omega_s) + H_cd(Omega_cd)`.
    CounterDiabatic(EnvelopePair),
    /// `H(p_tilde, s_tilde)`.
    Dressed(Arc<DressedPulses>),
}

impl ThreeLevelDrive {
    pub fn total_time(&self) -> f64 {
        match self {
            ThreeLevelDrive::Plain(p) | ThreeLevelDrive::CounterDiabatic(p) => p.total_time,
            ThreeLevelDrive::Dressed(d) => d.pair.total_time,
        }
    }
}

impl Hamiltonian for ThreeLevelDrive {
    fn dim(&self) -> usize {
        3
    }
    fn at(&self, t: f64) -> CMatrix {
        match self {
            ThreeLevelDrive::Plain(pair) => {
                ideal_three_level_hamiltonian(pair.p.value(t), pair.s.value(t), 0.0).into_matrix()
            }
            ThreeLevelDrive::CounterDiabatic(pair) => {
                ideal_three_level_hamiltonian(pair.p.value(t), pair.s.value(t), 0.0).into_matrix()
                    + cd_hamiltonian(cd_amplitude(pair, t)).into_matrix()
            }
            ThreeLevelDrive::Dressed(d) => ideal_three_level_hamiltonian(d.p_tilde(t), d.s_tilde(t), 0.0).into_matrix(),
        }
    }
}

/// A normalised pure state.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState(CVector);

impl QuantumState {
    pub fn new(amplitudes: CVector) -> Result<Self, PropagationError> {
        let norm = amplitudes.norm();
        if !((norm - 1.0).abs() <= NORM_TOLERANCE) {
            return Err(PropagationError::InvalidState(format!("state norm {norm} is not 1")));
        }
        Ok(Self(amplitudes))
    }

    pub fn basis(dim: usize, level: usize) -> Self {
        let mut v = CVector::zeros(dim);
        v[level] = c(1.0, 0.0);
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.0
    }

    pub fn populations(&self) -> Vec<f64> {
        self.0.iter().map(|z| z.norm_sqr()).collect()
    }
}

pub const DENSITY_HERMITIAN_TOLERANCE: f64 = 1e-10;
pub const DENSITY_TRACE_TOLERANCE: f64 = 1e-8;
pub const DENSITY_EIGEN_TOLERANCE: f64 = 1e-8;

/// A validated density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    pub fn new(entries: CMatrix) -> Result<Self, PropagationError> {
        if !entries.is_square() {
            return Err(PropagationError::InvalidState("density matrix must be square".into()));
        }
        let dev = crate::linalg::hermitian_deviation(&entries);
        if dev > DENSITY_HERMITIAN_TOLERANCE {
            return Err(PropagationError::InvalidState(format!("not Hermitian (deviation {dev:.3e})")));
        }
        let tr = trace(&entries);
        if (tr - c(1.0, 0.0)).norm() > DENSITY_TRACE_TOLERANCE {
            return Err(PropagationError::InvalidState(format!("trace {tr} is not 1")));
        }
        let (w, _) = crate::linalg::hermitian_eigen(&entries);
        if w[0] < -DENSITY_EIGEN_TOLERANCE {
            return Err(PropagationError::InvalidState(format!("negative eigenvalue {:.3e}", w[0])));
        }
        Ok(Self(entries))
    }

    pub fn pure(state: &QuantumState) -> Self {
        Self(state.amplitudes() * state.amplitudes().adjoint())
    }

    /// `(1 - p)|0><0| + p|1><1|`.
    pub fn thermal(dim: usize, p1: f64) -> Self {
        let mut m = zeros(dim);
        m[(0, 0)] = c(1.0 - p1, 0.0);
        m[(1, 1)] = c(p1, 0.0);
        Self(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.0
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.0[(k, k)].re).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Method {
    /// `exp(-i H(t + dt/2) dt)` per step.
    #[default]
    PiecewiseExponential,
    /// Classic fourth-order Runge-Kutta.
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagationConfig {
    #[serde(default)]
    pub frame: Frame,
    /// Step in ns; the frame's default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default)]
    pub method: Method,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    #[serde(default)]
    pub snapshots: bool,
}

fn default_stride() -> usize {
    1
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self::rotating()
    }
}

impl PropagationConfig {
    pub fn rotating() -> Self {
        Self { frame: Frame::Rotating, dt: None, method: Method::PiecewiseExponential, record_stride: 1, snapshots: false }
    }

    pub fn lab() -> Self {
        Self { frame: Frame::Lab, ..Self::rotating() }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = Some(dt);
        self
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    pub fn step(&self) -> f64 {
        self.dt.unwrap_or(match self.frame {
            Frame::Lab => DEFAULT_LAB_DT,
            Frame::Rotating => DEFAULT_ROTATING_DT,
        })
    }

    pub fn validate(&self, total_time: f64) -> Result<(), PropagationError> {
        let dt = self.step();
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(PropagationError::InvalidConfig(format!("dt must be positive, got {dt}")));
        }
        if dt > total_time {
            return Err(PropagationError::InvalidConfig(format!("dt {dt} exceeds total time {total_time}")));
        }
        if self.record_stride == 0 {
            return Err(PropagationError::InvalidConfig("record_stride must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of steps and the uniform step that lands exactly on `total_time`.
    fn grid(&self, total_time: f64) -> (usize, f64) {
        let n = ((total_time / self.step()) - 1e-9).ceil().max(1.0) as usize;
        (n, total_time / n as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FinalState {
    Pure(QuantumState),
    Mixed(DensityMatrix),
}

impl FinalState {
    pub fn populations(&self) -> Vec<f64> {
        match self {
            FinalState::Pure(s) => s.populations(),
            FinalState::Mixed(r) => r.populations(),
        }
    }

    pub fn density_matrix(&self) -> DensityMatrix {
        match self {
            FinalState::Pure(s) => DensityMatrix::pure(s),
            FinalState::Mixed(r) => r.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub populations: Vec<Vec<f64>>,
    pub snapshots: Option<Vec<FinalState>>,
    pub final_state: FinalState,
    /// Largest `|Tr rho - 1|` (open) or `| |psi| - 1 |` (closed) over the run.
    pub trace_drift: f64,
    pub warnings: Vec<String>,
}

impl TrajectoryRecord {
    pub fn final_populations(&self) -> Vec<f64> {
        self.final_state.populations()
    }

    /// CSV `t_ns,pop0,...`, one row per recorded time.
    pub fn to_csv(&self) -> Table {
        let dim = self.populations.first().map_or(0, Vec::len);
        let mut header = vec!["t_ns".to_string()];
        header.extend((0..dim).map(|k| format!("pop{k}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut table = Table::new(&header);
        for (t, pops) in self.times.iter().zip(&self.populations) {
            let mut row = vec![*t];
            row.extend(pops);
            table.push(&row);
        }
        table
    }
}

struct Recorder {
    stride: usize,
    keep_snapshots: bool,
    times: Vec<f64>,
    populations: Vec<Vec<f64>>,
    snapshots: Vec<FinalState>,
}

impl Recorder {
    fn new(cfg: &PropagationConfig) -> Self {
        Self {
            stride: cfg.record_stride,
            keep_snapshots: cfg.snapshots,
            times: Vec::new(),
            populations: Vec::new(),
            snapshots: Vec::new(),
        }
    }

    fn wants(&self, step: usize, last: usize) -> bool {
        step.is_multiple_of(self.stride) || step == last
    }

    fn push(&mut self, t: f64, pops: Vec<f64>, snapshot: impl FnOnce() -> FinalState) {
        self.times.push(t);
        self.populations.push(pops);
        if self.keep_snapshots {
            self.snapshots.push(snapshot());
        }
    }

    fn finish(self, final_state: FinalState, trace_drift: f64, warnings: Vec<String>) -> TrajectoryRecord {
        TrajectoryRecord {
            times: self.times,
            populations: self.populations,
            snapshots: self.keep_snapshots.then_some(self.snapshots),
            final_state,
            trace_drift,
            warnings,
        }
    }
}

fn rk4_state(h: &dyn Hamiltonian, psi: &CVector, t: f64, dt: f64) -> CVector {
    let f = |t: f64, v: &CVector| -> CVector { (h.at(t) * v) * (-I) };
    let k1 = f(t, psi);
    let k2 = f(t + 0.5 * dt, &(psi + &k1 * c(0.5 * dt, 0.0)));
    let k3 = f(t + 0.5 * dt, &(psi + &k2 * c(0.5 * dt, 0.0)));
    let k4 = f(t + dt, &(psi + &k3 * c(dt, 0.0)));
    psi + (k1 + k2 * c(2.0, 0.0) + k3 * c(2.0, 0.0) + k4) * c(dt / 6.0, 0.0)
}

/// Schrodinger evolution of `psi0` over `[0, total_time]`.
pub fn propagate_state(
    h: &dyn Hamiltonian,
    psi0: &QuantumState,
    total_time: f64,
    cfg: &PropagationConfig,
) -> Result<TrajectoryRecord, PropagationError> {
    if h.dim() != psi0.dim() {
        return Err(PropagationError::DimensionMismatch { hamiltonian: h.dim(), state: psi0.dim() });
    }
    cfg.validate(total_time)?;
    let (n, dt) = cfg.grid(total_time);
    let mut rec = Recorder::new(cfg);
    let mut psi = psi0.amplitudes().clone();
    let mut drift = 0.0f64;
    rec.push(0.0, psi0.populations(), || FinalState::Pure(psi0.clone()));
    for step in 1..=n {
        let t0 = (step - 1) as f64 * dt;
        psi = match cfg.method {
            Method::PiecewiseExponential => expm_hermitian(&h.at(t0 + 0.5 * dt), dt) * &psi,
            Method::Rk4 => rk4_state(h, &psi, t0, dt),
        };
        if psi.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(PropagationError::NonFinite { step });
        }
        drift = drift.max((psi.norm() - 1.0).abs());
        if rec.wants(step, n) {
            let pops: Vec<f64> = psi.iter().map(|z| z.norm_sqr()).collect();
            rec.push(step as f64 * dt, pops, || FinalState::Pure(QuantumState(psi.clone())));
        }
    }
    let mut warnings = Vec::new();
    if drift > NORM_TOLERANCE {
        warnings.push(format!("norm drift {drift:.3e} exceeds {NORM_TOLERANCE:.0e}"));
    }
    Ok(rec.finish(FinalState::Pure(QuantumState(psi)), drift, warnings))
}

struct Dissipator {
    jumps: Vec<CMatrix>,
    jumps_dag: Vec<CMatrix>,
    /// `sum L^dag L / 2`.
    half_rate: CMatrix,
}

impl Dissipator {
    fn new(dim: usize, channels: &[CollapseChannel]) -> Self {
        let jumps: Vec<CMatrix> = channels.iter().map(CollapseChannel::jump).collect();
        let jumps_dag: Vec<CMatrix> = jumps.iter().map(|l| l.adjoint()).collect();
        let mut half_rate = zeros(dim);
        for (l, ld) in jumps.iter().zip(&jumps_dag) {
            half_rate += ld * l * c(0.5, 0.0);
        }
        Self { jumps, jumps_dag, half_rate }
    }

    /// `-i[H, rho] + sum (L rho L^dag - {L^dag L, rho}/2)`.
    fn rhs(&self, h: &CMatrix, rho: &CMatrix) -> CMatrix {
        // -i H_eff rho + h.c. with H_eff = H - i sum L^dag L / 2
        let heff = h - &self.half_rate * I;
        let a = (&heff * rho) * (-I);
        let mut out = &a + a.adjoint();
        for (l, ld) in self.jumps.iter().zip(&self.jumps_dag) {
            out += l * rho * ld;
        }
        out
    }
}

/// Lindblad evolution of `rho0` by RK4; trace is never renormalised.
pub fn propagate_lindblad(
    h: &dyn Hamiltonian,
    channels: &[CollapseChannel],
    rho0: &DensityMatrix,
    total_time: f64,
    cfg: &PropagationConfig,
) -> Result<TrajectoryRecord, PropagationError> {
    if h.dim() != rho0.dim() {
        return Err(PropagationError::DimensionMismatch { hamiltonian: h.dim(), state: rho0.dim() });
    }
    if let Some(ch) = channels.iter().find(|ch| ch.operator.nrows() != rho0.dim()) {
        return Err(PropagationError::DimensionMismatch { hamiltonian: ch.operator.nrows(), state: rho0.dim() });
    }
    cfg.validate(total_time)?;
    let (n, dt) = cfg.grid(total_time);
    let diss = Dissipator::new(rho0.dim(), channels);
    let mut rec = Recorder::new(cfg);
    let mut rho = rho0.entries().clone();
    let mut drift = 0.0f64;
    rec.push(0.0, rho0.populations(), || FinalState::Mixed(rho0.clone()));
    let half = c(0.5 * dt, 0.0);
    for step in 1..=n {
        let t0 = (step - 1) as f64 * dt;
        let (h0, hm, h1) = (h.at(t0), h.at(t0 + 0.5 * dt), h.at(t0 + dt));
        let k1 = diss.rhs(&h0, &rho);
        let k2 = diss.rhs(&hm, &(&rho + &k1 * half));
        let k3 = diss.rhs(&hm, &(&rho + &k2 * half));
        let k4 = diss.rhs(&h1, &(&rho + &k3 * c(dt, 0.0)));
        rho += (k1 + k2 * c(2.0, 0.0) + k3 * c(2.0, 0.0) + k4) * c(dt / 6.0, 0.0);
        if !is_finite(&rho) {
            return Err(PropagationError::NonFinite { step });
        }
        drift = drift.max((trace(&rho) - c(1.0, 0.0)).norm());
        if rec.wants(step, n) {
            let pops = (0..rho.nrows()).map(|k| rho[(k, k)].re).collect();
            rec.push(step as f64 * dt, pops, || FinalState::Mixed(DensityMatrix(rho.clone())));
        }
    }
    let mut warnings = Vec::new();
    if drift > TRACE_WARNING {
        warnings.push(format!("trace drift {drift:.3e} exceeds {TRACE_WARNING:.0e}"));
    }
    Ok(rec.finish(FinalState::Mixed(DensityMatrix(rho)), drift, warnings))
}

/// Product of the per-step exponentials.
pub fn total_propagator(h: &dyn Hamiltonian, total_time: f64, cfg: &PropagationConfig) -> Result<CMatrix, PropagationError> {
    cfg.validate(total_time)?;
    let (n, dt) = cfg.grid(total_time);
    let mut u = identity(h.dim());
    for step in 1..=n {
        let t0 = (step - 1) as f64 * dt;
        u = expm_hermitian(&h.at(t0 + 0.5 * dt), dt) * u;
        if !is_finite(&u) {
            return Err(PropagationError::NonFinite { step });
        }
    }
    Ok(u)
}

/// `max |U^dag U - I|`.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    max_abs(&(u.adjoint() * u - identity(u.nrows())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::expm_general;
    use std::f64::consts::PI;

    #[test]
    fn zero_hamiltonian_is_identity() {
        let h = constant_hamiltonian(zeros(3));
        let psi0 = QuantumState::new(CVector::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8), c(0.0, 0.0)])).unwrap();
        for method in [Method::PiecewiseExponential, Method::Rk4] {
            let rec = propagate_state(&h, &psi0, 5.0, &PropagationConfig::rotating().with_method(method)).unwrap();
            assert_eq!(rec.final_state, FinalState::Pure(psi0.clone()));
        }
        let u = total_propagator(&h, 5.0, &PropagationConfig::rotating()).unwrap();
        assert_eq!(u, identity(3));
    }

    #[test]
    fn rabi_pi_pulse() {
        let omega = 0.7;
        let mut m = zeros(2);
        m[(0, 1)] = c(0.5 * omega, 0.0);
        m[(1, 0)] = c(0.5 * omega, 0.0);
        let h = constant_hamiltonian(m);
        let rec = propagate_state(&h, &QuantumState::basis(2, 0), PI / omega, &PropagationConfig::rotating()).unwrap();
        assert!((rec.final_populations()[1] - 1.0).abs() < 1e-8);
        let rho = propagate_lindblad(&h, &[], &DensityMatrix::thermal(2, 0.0), PI / omega, &PropagationConfig::rotating())
            .unwrap();
        assert!((rho.final_populations()[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn constant_hamiltonian_matches_direct_exponential() {
        let m = CMatrix::from_row_slice(
            3,
            3,
            &[c(0.1, 0.0), c(0.2, 0.1), c(0.0, 0.0), c(0.2, -0.1), c(-0.3, 0.0), c(0.4, 0.0), c(0.0, 0.0), c(0.4, 0.0), c(0.2, 0.0)],
        );
        let total = 7.3;
        let u = total_propagator(&constant_hamiltonian(m.clone()), total, &PropagationConfig::rotating()).unwrap();
        let direct = expm_general(&(m * c(0.0, -total)));
        assert!(max_abs(&(u.clone() - direct)) < 1e-9);
        assert!(unitarity_defect(&u) < 1e-9);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let h = constant_hamiltonian(zeros(3));
        let err = propagate_state(&h, &QuantumState::basis(2, 0), 1.0, &PropagationConfig::rotating()).unwrap_err();
        assert_eq!(err, PropagationError::DimensionMismatch { hamiltonian: 3, state: 2 });
    }

    #[test]
    fn non_finite_aborts_with_step() {
        let h = FnHamiltonian {
            dim: 2,
            f: |t: f64| if t > 0.5 { CMatrix::from_element(2, 2, c(f64::NAN, 0.0)) } else { zeros(2) },
        };
        let cfg = PropagationConfig::rotating().with_dt(0.1).with_method(Method::Rk4);
        match propagate_state(&h, &QuantumState::basis(2, 0), 1.0, &cfg) {
            Err(PropagationError::NonFinite { step }) => assert!(step == 5 || step == 6),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn stride_and_snapshots() {
        let h = constant_hamiltonian(zeros(2));
        let cfg = PropagationConfig { record_stride: 3, snapshots: true, ..PropagationConfig::rotating().with_dt(0.1) };
        let rec = propagate_state(&h, &QuantumState::basis(2, 0), 1.0, &cfg).unwrap();
        assert_eq!(rec.times.len(), 5); // 0, 3, 6, 9, 10
        assert!((rec.times.last().unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(rec.snapshots.unwrap().len(), 5);
        let csv = rec_csv_header(2);
        assert_eq!(csv, "t_ns,pop0,pop1");
    }

    fn rec_csv_header(dim: usize) -> String {
        let h = constant_hamiltonian(zeros(dim));
        let rec = propagate_state(&h, &QuantumState::basis(dim, 0), 1.0, &PropagationConfig::rotating()).unwrap();
        rec.to_csv().as_str().lines().next().unwrap().to_string()
    }

    #[test]
    fn density_matrix_validation() {
        assert!(DensityMatrix::new(identity(2) * c(0.5, 0.0)).is_ok());
        assert!(DensityMatrix::new(identity(2)).is_err());
        let mut m = zeros(2);
        m[(0, 0)] = c(1.1, 0.0);
        m[(1, 1)] = c(-0.1, 0.0);
        assert!(DensityMatrix::new(m).is_err());
        assert!(QuantumState::new(CVector::from_vec(vec![c(1.0, 0.0), c(0.1, 0.0)])).is_err());
    }

    #[test]
    fn config_grid_lands_on_total_time() {
        let cfg = PropagationConfig::rotating();
        let (n, dt) = cfg.grid(32.0);
        assert_eq!(n, 1600);
        assert!((n as f64 * dt - 32.0).abs() < 1e-12);
        assert!(PropagationConfig::rotating().with_dt(40.0).validate(32.0).is_err());
        assert_eq!(PropagationConfig::lab().step(), DEFAULT_LAB_DT);
    }
}
