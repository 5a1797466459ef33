//! Transfer scoring: Uhlmann fidelity, cost, leakage.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{c, hermitian_eigen, hermitian_function, trace, CMatrix, CVector};
use crate::propagation::{DensityMatrix, FinalState, TrajectoryRecord, DENSITY_EIGEN_TOLERANCE};

/// Levels `0..COMPUTATIONAL_LEVELS` form the transfer subspace.
pub const COMPUTATIONAL_LEVELS: usize = 3;
/// Purity above `1 - PURE_TOLERANCE` selects the pure-target reduction.
const PURE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("density matrix is not positive semidefinite (eigenvalue {0:.3e})")]
    NotPositive(f64),
    #[error("fidelity {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("target level {target} outside dimension {dim}")]
    BadTarget { target: usize, dim: usize },
}

/// Eigenvalues inside this band around zero are treated as exact zeros.
fn zero_band(m: &CMatrix) -> f64 {
    64.0 * f64::EPSILON * trace(m).re.abs().max(1.0)
}

fn clipped_sqrt(m: &CMatrix) -> Result<CMatrix, MetricError> {
    let (w, _) = hermitian_eigen(m);
    if w[0] < -DENSITY_EIGEN_TOLERANCE {
        return Err(MetricError::NotPositive(w[0]));
    }
    let band = zero_band(m);
    Ok(hermitian_function(m, |x| if x > band { x.sqrt() } else { 0.0 }))
}

/// `Tr sqrt(sqrt(rho) sigma sqrt(rho))`, evaluated as the nuclear norm of
/// `sqrt(rho) sqrt(sigma)` so that near-zero eigenvalues do not lose half
/// their digits to the square root.
pub fn state_fidelity_general(rho_ideal: &DensityMatrix, rho_exp: &DensityMatrix) -> Result<f64, MetricError> {
    if rho_ideal.dim() != rho_exp.dim() {
        return Err(MetricError::DimensionMismatch(rho_ideal.dim(), rho_exp.dim()));
    }
    let a = clipped_sqrt(rho_ideal.entries())?;
    let b = clipped_sqrt(rho_exp.entries())?;
    let svd = (a * b).svd(false, false);
    Ok(svd.singular_values.iter().sum::<f64>().min(1.0))
}

/// `sqrt(<psi|rho|psi>)`.
pub fn pure_state_fidelity(psi: &CVector, rho_exp: &DensityMatrix) -> Result<f64, MetricError> {
    if psi.len() != rho_exp.dim() {
        return Err(MetricError::DimensionMismatch(psi.len(), rho_exp.dim()));
    }
    let overlap = psi.dotc(&(rho_exp.entries() * psi)).re;
    Ok(overlap.max(0.0).sqrt().min(1.0))
}

/// Uhlmann fidelity, using the pure-target reduction when `rho_ideal` is pure.
pub fn state_fidelity(rho_ideal: &DensityMatrix, rho_exp: &DensityMatrix) -> Result<f64, MetricError> {
    if rho_ideal.dim() != rho_exp.dim() {
        return Err(MetricError::DimensionMismatch(rho_ideal.dim(), rho_exp.dim()));
    }
    let m = rho_ideal.entries();
    let purity = trace(&(m * m)).re;
    if (purity - 1.0).abs() < PURE_TOLERANCE {
        let (w, v) = hermitian_eigen(m);
        let top = w.len() - 1;
        if w[0] < -DENSITY_EIGEN_TOLERANCE {
            return Err(MetricError::NotPositive(w[0]));
        }
        let psi: CVector = v.column(top).into_owned();
        let (we, _) = hermitian_eigen(rho_exp.entries());
        if we[0] < -DENSITY_EIGEN_TOLERANCE {
            return Err(MetricError::NotPositive(we[0]));
        }
        return pure_state_fidelity(&psi, rho_exp);
    }
    state_fidelity_general(rho_ideal, rho_exp)
}

pub fn cost(fidelity: f64) -> Result<f64, MetricError> {
    if !(0.0..=1.0).contains(&fidelity) {
        return Err(MetricError::OutOfRange(fidelity));
    }
    Ok(1.0 - fidelity)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub fidelity: f64,
    pub cost: f64,
    pub final_populations: Vec<f64>,
    /// Population outside the lowest three levels at the end.
    pub leakage: f64,
    /// Largest population of level 1 on the recorded grid.
    pub intermediate_peak: f64,
}

pub fn transfer_report(traj: &TrajectoryRecord, target_level: usize) -> Result<FidelityReport, MetricError> {
    if traj.times.is_empty() {
        return Err(MetricError::EmptyTrajectory);
    }
    let pops = traj.final_populations();
    let dim = pops.len();
    if target_level >= dim {
        return Err(MetricError::BadTarget { target: target_level, dim });
    }
    let fidelity = match &traj.final_state {
        FinalState::Pure(psi) => psi.amplitudes()[target_level].norm(),
        FinalState::Mixed(rho) => {
            let mut target = CVector::zeros(dim);
            target[target_level] = c(1.0, 0.0);
            pure_state_fidelity(&target, rho)?
        }
    }
    .min(1.0);
    let leakage = pops.iter().skip(COMPUTATIONAL_LEVELS).sum::<f64>().clamp(0.0, 1.0);
    let intermediate_peak = if dim > 1 {
        traj.populations.iter().map(|p| p[1]).fold(0.0, f64::max)
    } else {
        0.0
    };
    Ok(FidelityReport { fidelity, cost: 1.0 - fidelity, final_populations: pops, leakage, intermediate_peak })
}
