//! Drive synthesis: Gaussian STIRAP pairs, the counter-diabatic amplitude,
//! the dressed (shortcut) pulse transform and the final two-tone schedule.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qudit_model::TransmonSpec;
use crate::table::Table;

/// Below this `Omega_p^2 + Omega_s^2` the geometric rotation is taken as zero.
pub const DEGENERATE_DRIVE: f64 = 1e-300;
/// Raised-cosine ramp applied at both ends of every scheduled envelope, ns.
pub const EDGE_RAMP_NS: f64 = 0.5;
/// Step of the centred difference used for non-analytic envelopes, ns.
pub const FD_STEP_NS: f64 = 1e-3;
/// Default separation `delta_tau / T`.
pub const DEFAULT_SEPARATION_FRACTION: f64 = 1.0 / 11.0;
/// Default Gaussian width `sigma / T` in `exp(-(t - t_c)^2 / sigma^2)`.
pub const DEFAULT_WIDTH_FRACTION: f64 = 0.18;
pub const DEFAULT_SAMPLE_STEP_NS: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PulseError {
    #[error("invalid pulse parameters: {0}")]
    InvalidParams(String),
    #[error("mixing angle undefined: both envelopes vanish at t = {0} ns")]
    ZeroDrive(f64),
    #[error("STIRSAP_OPT needs control parameters")]
    MissingControl,
    #[error("invalid control parameters: {0}")]
    InvalidControl(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
}

/// A real drive envelope on `[0, T]`, in rad/ns.
pub trait Envelope: Send + Sync + fmt::Debug {
    fn value(&self, t: f64) -> f64;

    fn derivative(&self, t: f64) -> f64 {
        (self.value(t + FD_STEP_NS) - self.value(t - FD_STEP_NS)) / (2.0 * FD_STEP_NS)
    }

    fn second_derivative(&self, t: f64) -> f64 {
        let h = FD_STEP_NS;
        (self.value(t + h) - 2.0 * self.value(t) + self.value(t - h)) / (h * h)
    }

    /// Whether `derivative` and `second_derivative` are closed-form.
    fn is_analytic(&self) -> bool {
        false
    }
}

/// `amplitude * exp(-(t - center)^2 / width^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPulse {
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
}

impl Envelope for GaussianPulse {
    fn value(&self, t: f64) -> f64 {
        let x = (t - self.center) / self.width;
        self.amplitude * (-x * x).exp()
    }

    fn derivative(&self, t: f64) -> f64 {
        let x = (t - self.center) / self.width;
        self.value(t) * (-2.0 * x / self.width)
    }

    fn second_derivative(&self, t: f64) -> f64 {
        let x = (t - self.center) / self.width;
        self.value(t) * (4.0 * x * x - 2.0) / (self.width * self.width)
    }

    fn is_analytic(&self) -> bool {
        true
    }
}

/// Any closure as an envelope (finite-difference derivatives).
pub struct FnEnvelope<F>(pub F);

impl<F> fmt::Debug for FnEnvelope<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FnEnvelope")
    }
}

impl<F: Fn(f64) -> f64 + Send + Sync> Envelope for FnEnvelope<F> {
    fn value(&self, t: f64) -> f64 {
        (self.0)(t)
    }
}

/// Which pulse comes first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PulseOrdering {
    /// Stokes before pump: the dark state starts on `|0>`.
    #[default]
    SFirst,
    /// Pump before Stokes.
    PFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianStirapParams {
    pub omega0: f64,
    pub total_time: f64,
    pub delta_tau: f64,
    pub sigma: f64,
    #[serde(default)]
    pub ordering: PulseOrdering,
}

impl GaussianStirapParams {
    pub fn new(omega0: f64, total_time: f64) -> Self {
        Self {
            omega0,
            total_time,
            delta_tau: DEFAULT_SEPARATION_FRACTION * total_time,
            sigma: DEFAULT_WIDTH_FRACTION * total_time,
            ordering: PulseOrdering::SFirst,
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_ordering(mut self, ordering: PulseOrdering) -> Self {
        self.ordering = ordering;
        self
    }

    /// Same shape fractions at a new total time.
    pub fn rescaled(&self, total_time: f64) -> Self {
        let k = total_time / self.total_time;
        Self {
            total_time,
            delta_tau: self.delta_tau * k,
            sigma: self.sigma * k,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<(), PulseError> {
        let ok = self.omega0 > 0.0
            && self.total_time > 0.0
            && self.delta_tau > 0.0
            && self.delta_tau < 0.5 * self.total_time
            && self.sigma > 0.0
            && [self.omega0, self.total_time, self.delta_tau, self.sigma]
                .iter()
                .all(|x| x.is_finite());
        if ok {
            Ok(())
        } else {
            Err(PulseError::InvalidParams(format!(
                "need omega0 > 0, T > 0, 0 < delta_tau < T/2, sigma > 0 (got {self:?})"
            )))
        }
    }
}

/// A pump/Stokes envelope pair on `[0, total_time]`.
#[derive(Debug, Clone)]
pub struct EnvelopePair {
    pub p: Arc<dyn Envelope>,
    pub s: Arc<dyn Envelope>,
    pub total_time: f64,
    /// Reference amplitude `Omega_0`.
    pub peak: f64,
}

impl EnvelopePair {
    pub fn new(p: Arc<dyn Envelope>, s: Arc<dyn Envelope>, total_time: f64, peak: f64) -> Self {
        Self { p, s, total_time, peak }
    }

    /// Both envelopes multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        let scale = |e: &Arc<dyn Envelope>| -> Arc<dyn Envelope> {
            let e = e.clone();
            Arc::new(Scaled { inner: e, factor: k })
        };
        Self {
            p: scale(&self.p),
            s: scale(&self.s),
            total_time: self.total_time,
            peak: self.peak * k,
        }
    }

    pub fn is_analytic(&self) -> bool {
        self.p.is_analytic() && self.s.is_analytic()
    }

    /// Uniform samples `t_i = i * step`, `i = 0..=floor(T/step)`.
    pub fn sample_times(&self, step: f64) -> Vec<f64> {
        sample_times(self.total_time, step)
    }

    /// CSV `t_ns,omega_p,omega_s`.
    pub fn to_csv(&self, step: f64) -> Table {
        let mut table = Table::new(&["t_ns", "omega_p", "omega_s"]);
        for t in self.sample_times(step) {
            table.push(&[t, self.p.value(t), self.s.value(t)]);
        }
        table
    }
}

#[derive(Debug)]
struct Scaled {
    inner: Arc<dyn Envelope>,
    factor: f64,
}

impl Envelope for Scaled {
    fn value(&self, t: f64) -> f64 {
        self.factor * self.inner.value(t)
    }
    fn derivative(&self, t: f64) -> f64 {
        self.factor * self.inner.derivative(t)
    }
    fn second_derivative(&self, t: f64) -> f64 {
        self.factor * self.inner.second_derivative(t)
    }
    fn is_analytic(&self) -> bool {
        self.inner.is_analytic()
    }
}

pub fn sample_times(total_time: f64, step: f64) -> Vec<f64> {
    // Guard against floor() landing one short because of rounding in T/step.
    let n = ((total_time / step) * (1.0 + 1e-12)).floor() as usize;
    (0..=n).map(|i| i as f64 * step).collect()
}

/// The Gaussian STIRAP pair. Under `SFirst` the Stokes pulse peaks at
/// `T/2 - delta_tau` and the pump at `T/2 + delta_tau`; `PFirst` swaps them.
pub fn gaussian_envelopes(params: &GaussianStirapParams) -> Result<EnvelopePair, PulseError> {
    params.validate()?;
    let half = 0.5 * params.total_time;
    let (p_center, s_center) = match params.ordering {
        PulseOrdering::SFirst => (half + params.delta_tau, half - params.delta_tau),
        PulseOrdering::PFirst => (half - params.delta_tau, half + params.delta_tau),
    };
    let pulse = |center| GaussianPulse {
        amplitude: params.omega0,
        center,
        width: params.sigma,
    };
    Ok(EnvelopePair::new(
        Arc::new(pulse(p_center)),
        Arc::new(pulse(s_center)),
        params.total_time,
        params.omega0,
    ))
}

/// `theta = atan(Omega_p / Omega_s)`, in `[0, pi/2]` for nonnegative envelopes.
pub fn mixing_angle(pair: &EnvelopePair, t: f64) -> Result<f64, PulseError> {
    let p = pair.p.value(t);
    let s = pair.s.value(t);
    if p.abs() < 1e-300 && s.abs() < 1e-300 {
        return Err(PulseError::ZeroDrive(t));
    }
    Ok(p.atan2(s))
}

/// `Omega_cd = (dOmega_p Omega_s - Omega_p dOmega_s) / (Omega_p^2 + Omega_s^2)`,
/// which is `d(theta)/dt`.
pub fn cd_amplitude(pair: &EnvelopePair, t: f64) -> f64 {
    let (p, s) = (pair.p.value(t), pair.s.value(t));
    let den = p * p + s * s;
    if den < DEGENERATE_DRIVE {
        return 0.0;
    }
    (pair.p.derivative(t) * s - p * pair.s.derivative(t)) / den
}

/// Time derivative of [`cd_amplitude`].
pub fn cd_amplitude_rate(pair: &EnvelopePair, t: f64) -> f64 {
    let (p, s) = (pair.p.value(t), pair.s.value(t));
    let den = p * p + s * s;
    if den < DEGENERATE_DRIVE {
        return 0.0;
    }
    let (dp, ds) = (pair.p.derivative(t), pair.s.derivative(t));
    let (ddp, dds) = (pair.p.second_derivative(t), pair.s.second_derivative(t));
    let num = dp * s - p * ds;
    let dnum = ddp * s - p * dds;
    let dden = 2.0 * (p * dp + s * ds);
    (dnum * den - num * dden) / (den * den)
}

/// Dressed-frame pulses that reproduce counter-diabatic driving with the two
/// physical tones only.
///
/// A rotation `exp(-i zeta lambda_1 / ...)` of the `{lambda_6, lambda_5}` pair
/// cancels the `|0> <-> |2>` coupling when `tan zeta = 2 Omega_cd / Omega_s`,
/// leaving `Omega_p + 2 dzeta/dt` on `0 <-> 1` and
/// `sqrt(Omega_s^2 + 4 Omega_cd^2)` on `1 <-> 2`.
///
/// For Gaussian tails `Omega_cd / Omega_s` grows again towards `t = 0`, so
/// the exact angle does not vanish at the start of the protocol and the
/// dressed frame would not coincide with the lab frame there. The angle is
/// therefore switched on with a raised-cosine ramp that ends where `|zeta|`
/// is smallest in the first half of the protocol.
#[derive(Debug, Clone)]
pub struct DressedPulses {
    pub pair: EnvelopePair,
    /// End of the switch-on ramp of `zeta`, ns. Zero disables the ramp.
    pub ramp_end: f64,
}

const RAMP_SEARCH_POINTS: usize = 4000;

pub fn sta_dressed_pulses(pair: &EnvelopePair) -> DressedPulses {
    let mut dressed = DressedPulses { pair: pair.clone(), ramp_end: 0.0 };
    let half = 0.5 * pair.total_time;
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..=RAMP_SEARCH_POINTS {
        let t = half * k as f64 / RAMP_SEARCH_POINTS as f64;
        let z = dressed.exact_zeta(t).abs();
        if z < best.0 {
            best = (z, t);
        }
    }
    dressed.ramp_end = best.1;
    dressed
}

impl DressedPulses {
    pub fn cd(&self, t: f64) -> f64 {
        cd_amplitude(&self.pair, t)
    }

    /// `atan(2 Omega_cd / Omega_s)` without the switch-on ramp.
    pub fn exact_zeta(&self, t: f64) -> f64 {
        let s = self.pair.s.value(t);
        let w = 2.0 * self.cd(t);
        if s == 0.0 {
            return if w == 0.0 { 0.0 } else { w.signum() * std::f64::consts::FRAC_PI_2 };
        }
        (w / s).atan()
    }

    fn exact_zeta_rate(&self, t: f64) -> f64 {
        let s = self.pair.s.value(t);
        let ds = self.pair.s.derivative(t);
        let cd = self.cd(t);
        let dcd = cd_amplitude_rate(&self.pair, t);
        let den = s * s + 4.0 * cd * cd;
        if den < DEGENERATE_DRIVE {
            return 0.0;
        }
        2.0 * (dcd * s - cd * ds) / den
    }

    fn ramp(&self, t: f64) -> (f64, f64) {
        if self.ramp_end <= 0.0 || t >= self.ramp_end {
            return (1.0, 0.0);
        }
        if t <= 0.0 {
            return (0.0, 0.0);
        }
        let a = std::f64::consts::PI / self.ramp_end;
        (0.5 * (1.0 - (a * t).cos()), 0.5 * a * (a * t).sin())
    }

    pub fn zeta(&self, t: f64) -> f64 {
        self.ramp(t).0 * self.exact_zeta(t)
    }

    pub fn zeta_rate(&self, t: f64) -> f64 {
        if self.pair.is_analytic() {
            let (w, dw) = self.ramp(t);
            w * self.exact_zeta_rate(t) + dw * self.exact_zeta(t)
        } else {
            (self.zeta(t + FD_STEP_NS) - self.zeta(t - FD_STEP_NS)) / (2.0 * FD_STEP_NS)
        }
    }

    pub fn p_tilde(&self, t: f64) -> f64 {
        self.pair.p.value(t) + 2.0 * self.zeta_rate(t)
    }

    pub fn s_tilde(&self, t: f64) -> f64 {
        let s = self.pair.s.value(t);
        let cd = self.cd(t);
        (s * s + 4.0 * cd * cd).sqrt()
    }

    /// CSV `t_ns,omega_p_tilde,omega_s_tilde,omega_cd,zeta`.
    pub fn to_csv(&self, step: f64) -> Table {
        let mut table = Table::new(&["t_ns", "omega_p_tilde", "omega_s_tilde", "omega_cd", "zeta"]);
        for t in self.pair.sample_times(step) {
            table.push(&[t, self.p_tilde(t), self.s_tilde(t), self.cd(t), self.zeta(t)]);
        }
        table
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DressedSide {
    P,
    S,
}

#[derive(Debug)]
struct DressedComponent {
    dressed: Arc<DressedPulses>,
    side: DressedSide,
}

impl Envelope for DressedComponent {
    fn value(&self, t: f64) -> f64 {
        match self.side {
            DressedSide::P => self.dressed.p_tilde(t),
            DressedSide::S => self.dressed.s_tilde(t),
        }
    }
}

/// Amplitude coefficients and detunings of the two tones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlParams {
    pub alpha_p: f64,
    pub alpha_s: f64,
    /// Pump detuning, rad/ns.
    pub beta_p: f64,
    /// Stokes detuning, rad/ns.
    pub beta_s: f64,
}

impl Default for ControlParams {
    fn default() -> Self {
        Self::identity()
    }
}

impl ControlParams {
    pub const fn identity() -> Self {
        Self { alpha_p: 1.0, alpha_s: 1.0, beta_p: 0.0, beta_s: 0.0 }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.alpha_p, self.alpha_s, self.beta_p, self.beta_s]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self { alpha_p: x[0], alpha_s: x[1], beta_p: x[2], beta_s: x[3] }
    }

    pub fn validate(&self) -> Result<(), PulseError> {
        if !(self.alpha_p > 0.0 && self.alpha_s > 0.0) {
            return Err(PulseError::InvalidControl(format!(
                "amplitude coefficients must be positive, got alpha_p = {}, alpha_s = {}",
                self.alpha_p, self.alpha_s
            )));
        }
        if !(self.alpha_p.is_finite()
            && self.alpha_s.is_finite()
            && self.beta_p.is_finite()
            && self.beta_s.is_finite())
        {
            return Err(PulseError::InvalidControl("non-finite control parameter".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ToneLabel {
    P,
    S,
}

impl ToneLabel {
    /// Upper level `j` of the transition `j-1 <-> j` this tone is meant for.
    pub fn addressed_transition(self) -> usize {
        match self {
            ToneLabel::P => 1,
            ToneLabel::S => 2,
        }
    }
}

/// Flat-top window with raised-cosine ramps at both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeWindow {
    pub total_time: f64,
    pub ramp: f64,
}

impl EdgeWindow {
    pub fn new(total_time: f64) -> Self {
        Self { total_time, ramp: EDGE_RAMP_NS.min(0.5 * total_time) }
    }

    pub fn value(&self, t: f64) -> f64 {
        let edge = t.min(self.total_time - t);
        if edge <= 0.0 {
            0.0
        } else if edge >= self.ramp {
            1.0
        } else {
            0.5 * (1.0 - (std::f64::consts::PI * edge / self.ramp).cos())
        }
    }
}

/// The envelope actually played by a tone.
#[derive(Debug, Clone)]
pub enum ToneEnvelope {
    /// `scale * window(t) * source(t)`.
    Shaped {
        source: Arc<dyn Envelope>,
        scale: f64,
        window: EdgeWindow,
    },
    /// Uniform samples at `step`, linearly interpolated.
    Sampled { step: f64, values: Vec<f64> },
    Zero,
}

impl ToneEnvelope {
    pub fn zero() -> Self {
        ToneEnvelope::Zero
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            ToneEnvelope::Shaped { source, scale, window } => {
                let w = window.value(t);
                if w == 0.0 {
                    0.0
                } else {
                    scale * w * source.value(t)
                }
            }
            ToneEnvelope::Sampled { step, values } => {
                let x = t / step;
                if x <= 0.0 {
                    return values[0];
                }
                let i = x.floor() as usize;
                if i + 1 >= values.len() {
                    return *values.last().expect("non-empty samples");
                }
                let f = x - i as f64;
                values[i] * (1.0 - f) + values[i + 1] * f
            }
            ToneEnvelope::Zero => 0.0,
        }
    }

    pub fn samples(&self, total_time: f64, step: f64) -> Vec<f64> {
        match self {
            ToneEnvelope::Sampled { step: own, values } if *own == step => values.clone(),
            _ => sample_times(total_time, step).into_iter().map(|t| self.value(t)).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DriveTone {
    pub label: ToneLabel,
    pub envelope: ToneEnvelope,
    /// Carrier frequency, rad/ns.
    pub carrier: f64,
    pub phase: f64,
    /// Carrier offset from the addressed transition, rad/ns.
    pub detuning: f64,
}

/// The pump and Stokes tones played over `[0, total_time]`.
#[derive(Debug, Clone)]
pub struct PulseSchedule {
    pub total_time: f64,
    pub tones: [DriveTone; 2],
    pub sample_step: f64,
}

/// Serialized form of a [`PulseSchedule`]: envelopes as uniform samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleFile {
    pub total_time: f64,
    pub sample_step: f64,
    pub tones: Vec<ToneFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToneFile {
    pub label: ToneLabel,
    pub carrier: f64,
    pub phase: f64,
    pub detuning: f64,
    pub samples: Vec<f64>,
}

impl PulseSchedule {
    pub fn tone(&self, label: ToneLabel) -> &DriveTone {
        self.tones.iter().find(|t| t.label == label).expect("both tones present")
    }

    pub fn validate(&self) -> Result<(), PulseError> {
        if !(self.total_time > 0.0 && self.sample_step > 0.0) {
            return Err(PulseError::InvalidSchedule("total_time and sample_step must be positive".into()));
        }
        if self.tones[0].label == self.tones[1].label {
            return Err(PulseError::InvalidSchedule("need one P and one S tone".into()));
        }
        if self.tones.iter().any(|t| !(t.carrier > 0.0)) {
            return Err(PulseError::InvalidSchedule("carriers must be positive".into()));
        }
        Ok(())
    }

    pub fn to_file(&self) -> ScheduleFile {
        ScheduleFile {
            total_time: self.total_time,
            sample_step: self.sample_step,
            tones: self
                .tones
                .iter()
                .map(|t| ToneFile {
                    label: t.label,
                    carrier: t.carrier,
                    phase: t.phase,
                    detuning: t.detuning,
                    samples: t.envelope.samples(self.total_time, self.sample_step),
                })
                .collect(),
        }
    }

    pub fn from_file(file: &ScheduleFile) -> Result<Self, PulseError> {
        if file.tones.len() != 2 {
            return Err(PulseError::InvalidSchedule(format!("expected 2 tones, got {}", file.tones.len())));
        }
        let expected = sample_times(file.total_time, file.sample_step).len();
        let tone = |f: &ToneFile| -> Result<DriveTone, PulseError> {
            if f.samples.len() != expected {
                return Err(PulseError::InvalidSchedule(format!(
                    "tone {:?} has {} samples, expected {expected}",
                    f.label,
                    f.samples.len()
                )));
            }
            Ok(DriveTone {
                label: f.label,
                envelope: ToneEnvelope::Sampled { step: file.sample_step, values: f.samples.clone() },
                carrier: f.carrier,
                phase: f.phase,
                detuning: f.detuning,
            })
        };
        let schedule = PulseSchedule {
            total_time: file.total_time,
            tones: [tone(&file.tones[0])?, tone(&file.tones[1])?],
            sample_step: file.sample_step,
        };
        schedule.validate()?;
        Ok(schedule)
    }

    /// CSV `t_ns,omega_p,omega_s` of the played envelopes.
    pub fn to_csv(&self) -> Table {
        let mut table = Table::new(&["t_ns", "omega_p", "omega_s"]);
        let p = self.tone(ToneLabel::P);
        let s = self.tone(ToneLabel::S);
        for t in sample_times(self.total_time, self.sample_step) {
            table.push(&[t, p.envelope.value(t), s.envelope.value(t)]);
        }
        table
    }
}

fn resonant_carriers(spec: &TransmonSpec) -> Result<(f64, f64), PulseError> {
    if spec.level_count < 3 {
        return Err(PulseError::InvalidSchedule("the Stokes tone needs at least three levels".into()));
    }
    Ok((spec.transition(1), spec.transition(2)))
}

fn assemble(
    p: Arc<dyn Envelope>,
    s: Arc<dyn Envelope>,
    total_time: f64,
    c: &ControlParams,
    spec: &TransmonSpec,
) -> Result<PulseSchedule, PulseError> {
    c.validate()?;
    let (wp, ws) = resonant_carriers(spec)?;
    let window = EdgeWindow::new(total_time);
    let tone = |label, source, scale, carrier, detuning| DriveTone {
        label,
        envelope: ToneEnvelope::Shaped { source, scale, window },
        carrier,
        phase: 0.0,
        detuning,
    };
    let schedule = PulseSchedule {
        total_time,
        tones: [
            tone(ToneLabel::P, p, c.alpha_p, wp + c.beta_p, c.beta_p),
            tone(ToneLabel::S, s, c.alpha_s, ws + c.beta_s, c.beta_s),
        ],
        sample_step: DEFAULT_SAMPLE_STEP_NS,
    };
    schedule.validate()?;
    Ok(schedule)
}

/// Scales the dressed envelopes by `alpha_k` and detunes the carriers by
/// `beta_k` from their transitions. Phases are zero.
pub fn apply_control_params(
    d: &Arc<DressedPulses>,
    c: &ControlParams,
    spec: &TransmonSpec,
) -> Result<PulseSchedule, PulseError> {
    assemble(
        Arc::new(DressedComponent { dressed: d.clone(), side: DressedSide::P }),
        Arc::new(DressedComponent { dressed: d.clone(), side: DressedSide::S }),
        d.pair.total_time,
        c,
        spec,
    )
}

/// Raw envelopes on the schedule, with optional control parameters.
pub fn raw_schedule(pair: &EnvelopePair, c: &ControlParams, spec: &TransmonSpec) -> Result<PulseSchedule, PulseError> {
    assemble(pair.p.clone(), pair.s.clone(), pair.total_time, c, spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Protocol {
    Stirap,
    Stirsap,
    StirsapOpt,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Stirap, Protocol::Stirsap, Protocol::StirsapOpt];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Stirap => "STIRAP",
            Protocol::Stirsap => "STIRSAP",
            Protocol::StirsapOpt => "STIRSAP_OPT",
        }
    }

    pub fn file_stem(self) -> &'static str {
        match self {
            Protocol::Stirap => "stirap",
            Protocol::Stirsap => "stirsap",
            Protocol::StirsapOpt => "stirsap_opt",
        }
    }

    pub fn is_dressed(self) -> bool {
        !matches!(self, Protocol::Stirap)
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "STIRAP" => Ok(Protocol::Stirap),
            "STIRSAP" => Ok(Protocol::Stirsap),
            "STIRSAP_OPT" => Ok(Protocol::StirsapOpt),
            other => Err(format!("unknown protocol {other:?}")),
        }
    }
}

pub fn make_protocol_schedule(
    variant: Protocol,
    params: &GaussianStirapParams,
    c: Option<&ControlParams>,
    spec: &TransmonSpec,
) -> Result<PulseSchedule, PulseError> {
    let pair = gaussian_envelopes(params)?;
    match variant {
        Protocol::Stirap => raw_schedule(&pair, &ControlParams::identity(), spec),
        Protocol::Stirsap => {
            apply_control_params(&Arc::new(sta_dressed_pulses(&pair)), &ControlParams::identity(), spec)
        }
        Protocol::StirsapOpt => {
            let c = c.ok_or(PulseError::MissingControl)?;
            apply_control_params(&Arc::new(sta_dressed_pulses(&pair)), c, spec)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, TAU};

    /// The printed parameterisation: `sigma = T/12` (`2 sigma = T/6`).
    fn printed(omega0: f64, total: f64) -> GaussianStirapParams {
        GaussianStirapParams::new(omega0, total).with_sigma(total / 12.0)
    }

    #[test]
    fn gaussian_peaks_and_mirror_symmetry() {
        let params = printed(TAU * 0.02, 50.0);
        let pair = gaussian_envelopes(&params).unwrap();
        let (t, dt) = (50.0, 50.0 / 11.0);
        assert!((pair.s.value(t / 2.0 - dt) - params.omega0).abs() < 1e-15);
        assert!((pair.p.value(t / 2.0 + dt) - params.omega0).abs() < 1e-15);
        // exp(-(12/11)^2)
        let mid = params.omega0 * (-(12.0f64 / 11.0).powi(2)).exp();
        assert!((pair.p.value(25.0) - mid).abs() < 1e-15);
        assert!((pair.s.value(25.0) - mid).abs() < 1e-15);
        assert!((mid / params.omega0 - 0.3042).abs() < 5e-5);
        for k in 0..50 {
            let x = 0.5 * k as f64;
            assert!((pair.p.value(25.0 + x) - pair.s.value(25.0 - x)).abs() < 1e-15);
        }
    }

    #[test]
    fn params_validation() {
        let mut p = GaussianStirapParams::new(0.1, 32.0);
        p.validate().unwrap();
        p.delta_tau = 16.0;
        assert!(p.validate().is_err());
        assert!(GaussianStirapParams::new(0.0, 32.0).validate().is_err());
        assert!(GaussianStirapParams::new(0.1, -1.0).validate().is_err());
    }

    #[test]
    fn mixing_angle_cases() {
        let pair = gaussian_envelopes(&printed(TAU * 0.02, 50.0)).unwrap();
        assert!((mixing_angle(&pair, 25.0).unwrap() - FRAC_PI_4).abs() < 1e-15);
        // theta(0) = atan(exp(-2 T delta_tau / sigma^2)) = atan(exp(-288/11)).
        let theta0 = mixing_angle(&pair, 0.0).unwrap();
        assert!(theta0 <= (-20.0f64).exp());
        assert!((theta0 / (-288.0f64 / 11.0).exp() - 1.0).abs() < 1e-9);

        let zero: Arc<dyn Envelope> = Arc::new(FnEnvelope(|_| 0.0));
        let one: Arc<dyn Envelope> = Arc::new(FnEnvelope(|_| 1.0));
        let p0 = EnvelopePair::new(zero.clone(), one, 1.0, 1.0);
        assert_eq!(mixing_angle(&p0, 0.3).unwrap(), 0.0);
        let both = EnvelopePair::new(zero.clone(), zero, 1.0, 1.0);
        assert!(matches!(mixing_angle(&both, 0.3), Err(PulseError::ZeroDrive(_))));
        assert_eq!(cd_amplitude(&both, 0.3), 0.0);
    }

    #[test]
    fn cd_amplitude_closed_forms() {
        for total in [32.0, 50.0, 500.0] {
            let pair = gaussian_envelopes(&printed(TAU * 0.02, total)).unwrap();
            let expect = 288.0 / (11.0 * total);
            assert!((cd_amplitude(&pair, total / 2.0).abs() - expect).abs() < 1e-12 * expect.max(1.0));
        }
        // Proportional envelopes: constant mixing angle.
        let g = GaussianPulse { amplitude: 1.0, center: 5.0, width: 2.0 };
        let h = GaussianPulse { amplitude: 0.3, center: 5.0, width: 2.0 };
        let pair = EnvelopePair::new(Arc::new(h), Arc::new(g), 10.0, 1.0);
        for k in 0..=20 {
            assert!(cd_amplitude(&pair, 0.5 * k as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn cd_matches_finite_difference_of_theta() {
        for params in [printed(TAU * 0.02, 50.0), GaussianStirapParams::new(TAU * 0.03, 32.0)] {
            let pair = gaussian_envelopes(&params).unwrap();
            let total = params.total_time;
            let h = 1e-4;
            for k in 0..=400 {
                let t = total * (0.1 + 0.8 * k as f64 / 400.0);
                let fd = (mixing_angle(&pair, t + h).unwrap() - mixing_angle(&pair, t - h).unwrap()) / (2.0 * h);
                assert!((fd - cd_amplitude(&pair, t)).abs() < 1e-6, "t = {t}");
            }
        }
    }

    #[test]
    fn cd_integrates_to_theta_change() {
        let params = GaussianStirapParams::new(TAU * 0.02, 50.0);
        let pair = gaussian_envelopes(&params).unwrap();
        let step = DEFAULT_SAMPLE_STEP_NS;
        let ts = pair.sample_times(step);
        let f: Vec<f64> = ts.iter().map(|&t| cd_amplitude(&pair, t)).collect();
        let integral: f64 = f.windows(2).map(|w| 0.5 * (w[0] + w[1]) * step).sum();
        let delta = mixing_angle(&pair, 50.0).unwrap() - mixing_angle(&pair, 0.0).unwrap();
        assert!((integral - delta).abs() < 1e-4);
    }

    #[test]
    fn cd_scale_invariant() {
        let pair = gaussian_envelopes(&GaussianStirapParams::new(TAU * 0.03, 32.0)).unwrap();
        let scaled = pair.scaled(3.7);
        for k in 1..64 {
            let t = 0.5 * k as f64;
            assert!((cd_amplitude(&pair, t) - cd_amplitude(&scaled, t)).abs() < 1e-10);
            assert!((mixing_angle(&pair, t).unwrap() - mixing_angle(&scaled, t).unwrap()).abs() < 1e-12);
        }
        let d = sta_dressed_pulses(&pair);
        let ds = sta_dressed_pulses(&scaled);
        for k in 0..64 {
            let t = 0.5 * k as f64;
            assert!((d.cd(t) - ds.cd(t)).abs() < 1e-10);
        }
    }

    #[test]
    fn analytic_rates_match_finite_differences() {
        let pair = gaussian_envelopes(&GaussianStirapParams::new(TAU * 0.03, 32.0)).unwrap();
        let d = sta_dressed_pulses(&pair);
        let h = 1e-5;
        for k in 1..320 {
            let t = 0.1 * k as f64;
            let fd = (cd_amplitude(&pair, t + h) - cd_amplitude(&pair, t - h)) / (2.0 * h);
            assert!((fd - cd_amplitude_rate(&pair, t)).abs() < 1e-6, "t = {t}");
            let fz = (d.zeta(t + h) - d.zeta(t - h)) / (2.0 * h);
            assert!((fz - d.zeta_rate(t)).abs() < 1e-5, "t = {t}");
        }
    }

    #[test]
    fn dressed_identity_for_proportional_pair() {
        let g = GaussianPulse { amplitude: 1.0, center: 5.0, width: 2.0 };
        let h = GaussianPulse { amplitude: 0.5, center: 5.0, width: 2.0 };
        let pair = EnvelopePair::new(Arc::new(h), Arc::new(g), 10.0, 1.0);
        let d = sta_dressed_pulses(&pair);
        for k in 0..=100 {
            let t = 0.1 * k as f64;
            assert!(d.zeta(t).abs() < 1e-15);
            assert!((d.p_tilde(t) - pair.p.value(t)).abs() < 1e-14);
            assert!((d.s_tilde(t) - pair.s.value(t)).abs() < 1e-14);
        }
    }

    #[test]
    fn dressed_bounds() {
        for params in [GaussianStirapParams::new(TAU * 0.03, 32.0), printed(TAU * 0.02, 50.0)] {
            let pair = gaussian_envelopes(&params).unwrap();
            let d = sta_dressed_pulses(&pair);
            assert!(d.ramp_end > 0.0 && d.ramp_end < 0.5 * params.total_time);
            for t in pair.sample_times(0.05) {
                let st = d.s_tilde(t);
                assert!(st >= pair.s.value(t).abs() && st >= 2.0 * d.cd(t).abs());
                assert!(d.zeta(t).abs() < FRAC_PI_2);
            }
            assert_eq!(d.zeta(0.0), 0.0);
        }
    }

    #[test]
    fn numeric_envelopes_use_finite_difference_rate() {
        let params = GaussianStirapParams::new(TAU * 0.03, 32.0);
        let pair = gaussian_envelopes(&params).unwrap();
        let (p, s) = (pair.p.clone(), pair.s.clone());
        let numeric = EnvelopePair::new(
            Arc::new(FnEnvelope(move |t| p.value(t))),
            Arc::new(FnEnvelope(move |t| s.value(t))),
            32.0,
            params.omega0,
        );
        let a = sta_dressed_pulses(&pair);
        let b = sta_dressed_pulses(&numeric);
        for k in 1..64 {
            let t = 0.5 * k as f64;
            assert!((a.p_tilde(t) - b.p_tilde(t)).abs() < 1e-4, "t = {t}");
        }
    }

    #[test]
    fn control_params_scale_and_detune() {
        let spec = TransmonSpec::default();
        let params = GaussianStirapParams::new(TAU * 0.03, 32.0);
        let d = Arc::new(sta_dressed_pulses(&gaussian_envelopes(&params).unwrap()));
        let base = apply_control_params(&d, &ControlParams::identity(), &spec).unwrap();
        assert_eq!(base.tones[0].carrier, spec.transition(1));
        assert_eq!(base.tones[1].carrier, spec.transition(2));
        let c = ControlParams { alpha_p: 2.0, ..ControlParams::identity() };
        let doubled = apply_control_params(&d, &c, &spec).unwrap();
        for k in 0..=64 {
            let t = 0.5 * k as f64;
            assert_eq!(doubled.tones[0].envelope.value(t), 2.0 * base.tones[0].envelope.value(t));
            assert_eq!(doubled.tones[1].envelope.value(t), base.tones[1].envelope.value(t));
            let w = EdgeWindow::new(32.0).value(t);
            assert!((base.tones[0].envelope.value(t) - w * d.p_tilde(t)).abs() < 1e-15);
        }
        assert_eq!(doubled.tones[0].carrier, base.tones[0].carrier);
        let bad = ControlParams { alpha_s: 0.0, ..ControlParams::identity() };
        assert!(apply_control_params(&d, &bad, &spec).is_err());
        let c = ControlParams { beta_p: 0.1, beta_s: -0.2, ..ControlParams::identity() };
        let det = apply_control_params(&d, &c, &spec).unwrap();
        assert!((det.tones[0].carrier - spec.transition(1) - 0.1).abs() < 1e-12);
        assert!((det.tones[1].carrier - spec.transition(2) + 0.2).abs() < 1e-12);
    }

    #[test]
    fn envelopes_vanish_at_edges() {
        let spec = TransmonSpec::default();
        for variant in [Protocol::Stirap, Protocol::Stirsap] {
            let s = make_protocol_schedule(variant, &GaussianStirapParams::new(TAU * 0.03, 32.0), None, &spec).unwrap();
            for tone in &s.tones {
                assert_eq!(tone.envelope.value(0.0), 0.0);
                assert_eq!(tone.envelope.value(32.0), 0.0);
            }
        }
    }

    #[test]
    fn protocol_variants() {
        let spec = TransmonSpec::default();
        let params = GaussianStirapParams::new(TAU * 0.02, 50.0);
        let pair = gaussian_envelopes(&params).unwrap();
        let stirap = make_protocol_schedule(Protocol::Stirap, &params, None, &spec).unwrap();
        let stirsap = make_protocol_schedule(Protocol::Stirsap, &params, None, &spec).unwrap();
        let d = Arc::new(sta_dressed_pulses(&pair));
        let direct = apply_control_params(&d, &ControlParams::identity(), &spec).unwrap();
        let w = EdgeWindow::new(50.0);
        let mut max_diff: f64 = 0.0;
        for t in pair.sample_times(0.1) {
            assert_eq!(stirap.tones[0].envelope.value(t), w.value(t) * pair.p.value(t));
            assert_eq!(stirap.tones[1].envelope.value(t), w.value(t) * pair.s.value(t));
            assert_eq!(stirsap.tones[0].envelope.value(t), direct.tones[0].envelope.value(t));
            assert_eq!(stirsap.tones[1].envelope.value(t), direct.tones[1].envelope.value(t));
            max_diff = max_diff.max((d.s_tilde(t) - pair.s.value(t)).abs());
        }
        assert!(max_diff > 0.0);
        assert_eq!(
            make_protocol_schedule(Protocol::StirsapOpt, &params, None, &spec).unwrap_err(),
            PulseError::MissingControl
        );
    }

    #[test]
    fn schedule_round_trips_through_toml() {
        let spec = TransmonSpec::default();
        let params = GaussianStirapParams::new(TAU * 0.03, 32.0);
        let c = ControlParams { alpha_p: 1.1, alpha_s: 0.93, beta_p: 0.01, beta_s: -0.02 };
        let sched = make_protocol_schedule(Protocol::StirsapOpt, &params, Some(&c), &spec).unwrap();
        let file = sched.to_file();
        assert_eq!(file.tones[0].samples.len(), sample_times(32.0, sched.sample_step).len());
        let text = toml::to_string(&file).unwrap();
        let back: ScheduleFile = toml::from_str(&text).unwrap();
        assert_eq!(back, file);
        let rebuilt = PulseSchedule::from_file(&back).unwrap();
        let again = rebuilt.to_file();
        for (a, b) in again.tones.iter().zip(&file.tones) {
            assert!(a.samples.iter().zip(&b.samples).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(again, file);
    }

    #[test]
    fn csv_exports() {
        let params = GaussianStirapParams::new(TAU * 0.02, 50.0);
        let pair = gaussian_envelopes(&params).unwrap();
        let raw = pair.to_csv(0.1);
        assert!(raw.as_str().starts_with("t_ns,omega_p,omega_s\n"));
        assert_eq!(raw.rows(), 501);
        let dressed = sta_dressed_pulses(&pair).to_csv(0.1);
        assert!(dressed.as_str().starts_with("t_ns,omega_p_tilde,omega_s_tilde,omega_cd,zeta\n"));
    }

    #[test]
    fn protocol_names_parse() {
        for p in Protocol::ALL {
            assert_eq!(p.name().parse::<Protocol>().unwrap(), p);
        }
        assert_eq!("stirsap-opt".parse::<Protocol>().unwrap(), Protocol::StirsapOpt);
    }
}
