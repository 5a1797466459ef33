//! Level structure and Hamiltonians of a weakly anharmonic qudit.
//!
//! Frequencies and amplitudes are angular, in rad/ns. The ladder is driven
//! by two tones: the pump (P) addresses `0 <-> 1` and the Stokes tone (S)
//! addresses `1 <-> 2`. Each tone's amplitude is normalised by the matrix
//! element `sqrt(j)` of the transition it addresses, so that an envelope of
//! `Omega` produces the Rabi frequency `Omega` on its own transition and
//! `Omega * sqrt(j / j_k)` on the spurious neighbours.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{c, hermitian_deviation, zeros, CMatrix, CVector, C64, I};
use crate::pulse_synthesis::{PulseSchedule, ToneLabel};

/// Tolerance for the Hermiticity check on constructed operators.
pub const HERMITIAN_TOLERANCE: f64 = 1e-12;

/// Qubit frequency of the default device, rad/ns.
pub const DEFAULT_OMEGA1: f64 = TAU * 5.0;
/// Anharmonicity `omega_2 - 2 omega_1` of the default device, rad/ns.
pub const DEFAULT_ANHARMONICITY: f64 = -TAU * 0.12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid transmon spec: {0}")]
    InvalidSpec(String),
    #[error("operator is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("mixing angle undefined for zero drive")]
    ZeroDrive,
    #[error("time {t} ns outside schedule [0, {total}] ns")]
    TimeOutOfRange { t: f64, total: f64 },
    #[error("{0}")]
    Unsupported(String),
}

/// Level structure and decoherence channels of the qudit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmonSpec {
    pub level_count: usize,
    /// Angular level frequencies, `level_freqs[0] = 0`.
    pub level_freqs: Vec<f64>,
    /// Relaxation time of each decay `j -> j-1`, `j = 1..level_count`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t1_times: Option<Vec<f64>>,
    /// Pure-dephasing time of each level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tphi_times: Option<Vec<f64>>,
    #[serde(default)]
    pub thermal_pop1: f64,
}

impl Default for TransmonSpec {
    fn default() -> Self {
        Self::with_anharmonicity(4, DEFAULT_OMEGA1, DEFAULT_ANHARMONICITY)
    }
}

impl TransmonSpec {
    /// Transmon-like ladder `omega_n = n omega_1 + n(n-1)/2 alpha`.
    pub fn with_anharmonicity(level_count: usize, omega1: f64, anharmonicity: f64) -> Self {
        let level_freqs = (0..level_count)
            .map(|n| {
                let n = n as f64;
                n * omega1 + 0.5 * n * (n - 1.0) * anharmonicity
            })
            .collect();
        Self {
            level_count,
            level_freqs,
            t1_times: None,
            tphi_times: None,
            thermal_pop1: 0.0,
        }
    }

    /// The same ladder with a uniform relaxation time on every decay.
    pub fn with_uniform_t1(mut self, t1: f64) -> Self {
        self.t1_times = Some(vec![t1; self.level_count.saturating_sub(1)]);
        self
    }

    pub fn anharmonicity(&self) -> Option<f64> {
        (self.level_count >= 3).then(|| self.level_freqs[2] - 2.0 * self.level_freqs[1])
    }

    pub fn has_decoherence(&self) -> bool {
        self.t1_times.is_some() || self.tphi_times.is_some()
    }

    /// Transition frequency `omega_j - omega_{j-1}`.
    pub fn transition(&self, j: usize) -> f64 {
        self.level_freqs[j] - self.level_freqs[j - 1]
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidSpec(msg));
        if self.level_count < 2 {
            return bad(format!("level_count must be >= 2, got {}", self.level_count));
        }
        if self.level_freqs.len() != self.level_count {
            return bad(format!(
                "level_freqs has {} entries, expected {}",
                self.level_freqs.len(),
                self.level_count
            ));
        }
        if self.level_freqs[0] != 0.0 {
            return bad("level_freqs[0] must be 0".into());
        }
        if self.level_freqs.iter().any(|w| !w.is_finite())
            || self.level_freqs.windows(2).any(|w| w[1] <= w[0])
        {
            return bad("level_freqs must be finite and strictly increasing".into());
        }
        if let Some(t1) = &self.t1_times {
            if t1.len() != self.level_count - 1 {
                return bad(format!(
                    "t1_times has {} entries, expected {}",
                    t1.len(),
                    self.level_count - 1
                ));
            }
            if t1.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
                return bad("t1_times must be strictly positive".into());
            }
        }
        if let Some(tphi) = &self.tphi_times {
            if tphi.len() != self.level_count {
                return bad(format!(
                    "tphi_times has {} entries, expected {}",
                    tphi.len(),
                    self.level_count
                ));
            }
            if tphi.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
                return bad("tphi_times must be strictly positive".into());
            }
        }
        if !(0.0..=0.1).contains(&self.thermal_pop1) {
            return bad(format!("thermal_pop1 must lie in [0, 0.1], got {}", self.thermal_pop1));
        }
        Ok(())
    }
}

/// A Hermitian matrix, checked at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator(CMatrix);

impl HermitianOperator {
    pub fn new(matrix: CMatrix) -> Result<Self, ModelError> {
        let dev = hermitian_deviation(&matrix);
        if dev > HERMITIAN_TOLERANCE || !matrix.is_square() {
            return Err(ModelError::NotHermitian(dev));
        }
        Ok(Self(matrix))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }
}

/// Dark and bright eigenstates of the ideal three-level Hamiltonian.
#[derive(Debug, Clone)]
pub struct EigenStructure {
    pub theta: f64,
    pub phi: f64,
    pub dark: CVector,
    pub bright_plus: CVector,
    pub bright_minus: CVector,
    /// Eigenvalue of `bright_plus`; `bright_minus` has the negative.
    pub bright_energy: f64,
}

// Gell-Mann generators spanning the couplings of the Lambda system.
pub fn gell_mann_1() -> CMatrix {
    let mut m = zeros(3);
    m[(0, 1)] = c(1.0, 0.0);
    m[(1, 0)] = c(1.0, 0.0);
    m
}

pub fn gell_mann_5() -> CMatrix {
    let mut m = zeros(3);
    m[(0, 2)] = -I;
    m[(2, 0)] = I;
    m
}

pub fn gell_mann_6() -> CMatrix {
    let mut m = zeros(3);
    m[(1, 2)] = c(1.0, 0.0);
    m[(2, 1)] = c(1.0, 0.0);
    m
}

/// `H = 1/2 [Omega_p |0><1| + Omega_s e^{-i phi} |1><2| + h.c.]`.
pub fn ideal_three_level_hamiltonian(omega_p: f64, omega_s: f64, phi: f64) -> HermitianOperator {
    let mut m = zeros(3);
    m[(0, 1)] = c(0.5 * omega_p, 0.0);
    m[(1, 0)] = m[(0, 1)].conj();
    m[(1, 2)] = C64::from_polar(0.5 * omega_s, -phi);
    m[(2, 1)] = m[(1, 2)].conj();
    HermitianOperator(m)
}

/// Counter-diabatic coupling `i Omega_cd |0><2| + h.c. = -Omega_cd lambda_5`.
///
/// `Omega_cd = d(theta)/dt` with `theta = atan(Omega_p / Omega_s)`; with this
/// sign the dark state is followed exactly for any speed.
pub fn cd_hamiltonian(omega_cd: f64) -> HermitianOperator {
    let mut m = zeros(3);
    m[(0, 2)] = c(0.0, omega_cd);
    m[(2, 0)] = c(0.0, -omega_cd);
    HermitianOperator(m)
}

pub fn dark_bright_states(omega_p: f64, omega_s: f64, phi: f64) -> Result<EigenStructure, ModelError> {
    if omega_p == 0.0 && omega_s == 0.0 {
        return Err(ModelError::ZeroDrive);
    }
    let theta = omega_p.atan2(omega_s);
    let (st, ct) = theta.sin_cos();
    // The phase on |2> is conjugate to the one on the |1><2| coupling.
    let e = C64::from_polar(1.0, phi);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let dark = CVector::from_vec(vec![c(ct, 0.0), c(0.0, 0.0), -e * st]);
    let bright = |sign: f64| {
        CVector::from_vec(vec![c(r * st, 0.0), c(sign * r, 0.0), e * (r * ct)])
    };
    Ok(EigenStructure {
        theta,
        phi,
        dark,
        bright_plus: bright(1.0),
        bright_minus: bright(-1.0),
        bright_energy: 0.5 * omega_p.hypot(omega_s),
    })
}

fn check_time(schedule: &PulseSchedule, t: f64) -> Result<(), ModelError> {
    let total = schedule.total_time;
    if !(t >= -1e-9 && t <= total + 1e-9) {
        return Err(ModelError::TimeOutOfRange { t, total });
    }
    Ok(())
}

/// Relative strength of a tone on ladder entry `j - 1 <-> j`.
fn ladder_factor(label: ToneLabel, j: usize) -> f64 {
    (j as f64 / label.addressed_transition() as f64).sqrt()
}

/// Lab-frame Hamiltonian: bare ladder plus both carriers on every
/// `j - 1 <-> j` transition.
pub fn lab_frame_hamiltonian(
    spec: &TransmonSpec,
    schedule: &PulseSchedule,
    t: f64,
) -> Result<HermitianOperator, ModelError> {
    check_time(schedule, t)?;
    Ok(HermitianOperator(lab_frame_matrix(spec, schedule, t)))
}

pub(crate) fn lab_frame_matrix(spec: &TransmonSpec, schedule: &PulseSchedule, t: f64) -> CMatrix {
    let n = spec.level_count;
    let mut m = zeros(n);
    for (k, &w) in spec.level_freqs.iter().enumerate() {
        m[(k, k)] = c(w, 0.0);
    }
    let drives: Vec<(ToneLabel, f64)> = schedule
        .tones
        .iter()
        .map(|tone| {
            (
                tone.label,
                tone.envelope.value(t) * (tone.carrier * t + tone.phase).cos(),
            )
        })
        .collect();
    for j in 1..n {
        let v: f64 = drives.iter().map(|&(label, d)| d * ladder_factor(label, j)).sum();
        m[(j - 1, j)] = c(v, 0.0);
        m[(j, j - 1)] = c(v, 0.0);
    }
    m
}

/// Hamiltonian in the frame rotating at the bare level frequencies, after
/// dropping terms at carrier-sum frequencies.
///
/// Entry `(j-1, j)` collects `Omega_k/2 * sqrt(j/j_k) * exp(-i delta_{k,j})`
/// for both tones, with `delta_{k,j} = (omega_j - omega_{j-1} - omega_k) t - phi_k`.
pub fn rotating_frame_hamiltonian(
    spec: &TransmonSpec,
    schedule: &PulseSchedule,
    t: f64,
) -> Result<HermitianOperator, ModelError> {
    check_time(schedule, t)?;
    Ok(HermitianOperator(rotating_frame_matrix(spec, schedule, t)))
}

/// Residual phase of `tone` on ladder entry `j - 1 <-> j`.
pub fn detuning_phase(spec: &TransmonSpec, carrier: f64, phase: f64, j: usize, t: f64) -> f64 {
    (spec.transition(j) - carrier) * t - phase
}

pub(crate) fn rotating_frame_matrix(spec: &TransmonSpec, schedule: &PulseSchedule, t: f64) -> CMatrix {
    let n = spec.level_count;
    let mut m = zeros(n);
    let amps: Vec<f64> = schedule.tones.iter().map(|tone| tone.envelope.value(t)).collect();
    for j in 1..n {
        let mut v = c(0.0, 0.0);
        for (tone, &a) in schedule.tones.iter().zip(&amps) {
            if a == 0.0 {
                continue;
            }
            let delta = detuning_phase(spec, tone.carrier, tone.phase, j, t);
            v += C64::from_polar(0.5 * a * ladder_factor(tone.label, j), -delta);
        }
        m[(j - 1, j)] = v;
        m[(j, j - 1)] = v.conj();
    }
    m
}

/// A Lindblad channel `L = rate * operator`.
#[derive(Debug, Clone)]
pub struct CollapseChannel {
    pub operator: CMatrix,
    pub rate: f64,
    pub label: String,
}

impl CollapseChannel {
    pub fn jump(&self) -> CMatrix {
        &self.operator * c(self.rate, 0.0)
    }
}

/// Relaxation `sqrt(j)|j-1><j|` at rate `1/sqrt(T1_j)` and level dephasing
/// `|j><j|` at rate `1/sqrt(2 Tphi_j)`.
pub fn collapse_operators(spec: &TransmonSpec) -> Result<Vec<CollapseChannel>, ModelError> {
    spec.validate()?;
    let n = spec.level_count;
    let mut out = Vec::new();
    if let Some(t1) = &spec.t1_times {
        for (idx, &time) in t1.iter().enumerate() {
            let j = idx + 1;
            let mut op = zeros(n);
            op[(j - 1, j)] = c((j as f64).sqrt(), 0.0);
            out.push(CollapseChannel {
                operator: op,
                rate: 1.0 / time.sqrt(),
                label: format!("t1_{j}"),
            });
        }
    }
    if let Some(tphi) = &spec.tphi_times {
        for (j, &time) in tphi.iter().enumerate() {
            let mut op = zeros(n);
            op[(j, j)] = c(1.0, 0.0);
            out.push(CollapseChannel {
                operator: op,
                rate: 1.0 / (2.0 * time).sqrt(),
                label: format!("tphi_{j}"),
            });
        }
    }
    Ok(out)
}
