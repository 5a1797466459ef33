//! A bounded (mu/mu_w, lambda) CMA-ES with an ask/tell interface.
//!
//! Strategy constants follow Hansen's tutorial defaults. Sampling for
//! generation `g` draws from its own ChaCha stream, so the candidate list
//! depends only on the seed and the state, never on how costs are evaluated.

use std::cmp::Ordering;
use std::fmt::Display;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::Table;

pub const MAX_RESAMPLES: usize = 100;
pub const STAGNATION_GENERATIONS: usize = 30;
pub const STAGNATION_TOLERANCE: f64 = 1e-12;
/// Eigenvalue floor, relative to the trace, used when repairing `C`.
pub const EIGEN_FLOOR: f64 = 1e-14;
pub const DEFAULT_STEP_FRACTION: f64 = 0.3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CmaesError {
    #[error("invalid CMA-ES config: {0}")]
    InvalidConfig(String),
    #[error("covariance decomposition failed after repair")]
    Decomposition,
    #[error("every cost in generation {0} was NaN")]
    AllNan(usize),
    #[error("expected {expected} costs, got {got}")]
    CountMismatch { expected: usize, got: usize },
    #[error("cost function failed at {candidate:?}: {message}")]
    CostFailure { candidate: Vec<f64>, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmaesConfig {
    pub dimension: usize,
    pub population: usize,
    pub parents: usize,
    pub initial_mean: Vec<f64>,
    pub initial_step: f64,
    pub bounds: Vec<(f64, f64)>,
    pub max_evaluations: usize,
    pub target_cost: f64,
    pub seed: u64,
}

impl CmaesConfig {
    /// Tutorial defaults: `lambda = 4 + floor(3 ln n)`, `mu = lambda / 2`,
    /// `sigma0` a fraction of the narrowest box side.
    pub fn new(initial_mean: Vec<f64>, bounds: Vec<(f64, f64)>, seed: u64) -> Self {
        let n = initial_mean.len();
        let population = default_population(n);
        let width = bounds.iter().map(|(lo, hi)| hi - lo).fold(f64::INFINITY, f64::min);
        Self {
            dimension: n,
            population,
            parents: population / 2,
            initial_mean,
            initial_step: DEFAULT_STEP_FRACTION * width,
            bounds,
            max_evaluations: 1000 * n * n,
            target_cost: f64::NEG_INFINITY,
            seed,
        }
    }

    pub fn with_population(mut self, lambda: usize) -> Self {
        self.population = lambda;
        self.parents = lambda / 2;
        self
    }

    pub fn validate(&self) -> Result<(), CmaesError> {
        let bad = |m: String| Err(CmaesError::InvalidConfig(m));
        let n = self.dimension;
        if n == 0 || self.initial_mean.len() != n || self.bounds.len() != n {
            return bad(format!(
                "dimension {n}, mean length {}, bounds length {}",
                self.initial_mean.len(),
                self.bounds.len()
            ));
        }
        if self.population < 4 {
            return bad(format!("population must be >= 4, got {}", self.population));
        }
        if self.parents < 1 || self.parents > self.population {
            return bad(format!("parents must lie in [1, {}], got {}", self.population, self.parents));
        }
        for (k, (&(lo, hi), &m)) in self.bounds.iter().zip(&self.initial_mean).enumerate() {
            if !(lo < hi) {
                return bad(format!("bound {k}: need lo < hi, got [{lo}, {hi}]"));
            }
            if !(lo..=hi).contains(&m) {
                return bad(format!("initial mean {m} outside bound {k} [{lo}, {hi}]"));
            }
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return bad(format!("initial_step must be positive, got {}", self.initial_step));
        }
        Ok(())
    }
}

pub fn default_population(n: usize) -> usize {
    4 + (3.0 * (n as f64).ln()).floor() as usize
}

/// Derived strategy constants.
#[derive(Debug, Clone)]
struct Strategy {
    weights: Vec<f64>,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c_1: f64,
    c_mu: f64,
    chi_n: f64,
}

impl Strategy {
    fn new(n: usize, lambda: usize, mu: usize) -> Self {
        let nf = n as f64;
        let raw: Vec<f64> = (1..=mu).map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln()).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        Self { weights, mu_eff, c_sigma, d_sigma, c_c, c_1, c_mu, chi_n }
    }
}

#[derive(Debug, Clone)]
pub struct CmaesState {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub sigma: f64,
    pub p_sigma: DVector<f64>,
    pub p_c: DVector<f64>,
    pub generation: usize,
    pub evaluations: usize,
    pub best: Option<(Vec<f64>, f64)>,
    /// `C = B diag(d^2) B^T`.
    basis: DMatrix<f64>,
    scales: DVector<f64>,
    strategy: Strategy,
    lambda: usize,
    mu: usize,
    bounds: Vec<(f64, f64)>,
    seed: u64,
}

fn decompose(c: &DMatrix<f64>) -> Option<(DMatrix<f64>, DVector<f64>)> {
    if c.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let eig = SymmetricEigen::new(c.clone());
    if eig.eigenvalues.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
        return None;
    }
    Some((eig.eigenvectors, eig.eigenvalues.map(f64::sqrt)))
}

fn repair(c: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (c + c.transpose()) * 0.5;
    let floor = EIGEN_FLOOR * sym.trace().abs().max(f64::MIN_POSITIVE);
    let eig = SymmetricEigen::new(sym);
    let w = eig.eigenvalues.map(|x| if x.is_finite() { x.max(floor) } else { floor });
    &eig.eigenvectors * DMatrix::from_diagonal(&w) * eig.eigenvectors.transpose()
}

impl CmaesState {
    pub fn new(cfg: &CmaesConfig) -> Result<Self, CmaesError> {
        cfg.validate()?;
        let n = cfg.dimension;
        Ok(Self {
            mean: DVector::from_column_slice(&cfg.initial_mean),
            covariance: DMatrix::identity(n, n),
            sigma: cfg.initial_step,
            p_sigma: DVector::zeros(n),
            p_c: DVector::zeros(n),
            generation: 0,
            evaluations: 0,
            best: None,
            basis: DMatrix::identity(n, n),
            scales: DVector::from_element(n, 1.0),
            strategy: Strategy::new(n, cfg.population, cfg.parents),
            lambda: cfg.population,
            mu: cfg.parents,
            bounds: cfg.bounds.clone(),
            seed: cfg.seed,
        })
    }

    pub fn population(&self) -> usize {
        self.lambda
    }

    pub fn best_cost(&self) -> f64 {
        self.best.as_ref().map_or(f64::INFINITY, |b| b.1)
    }

    fn in_bounds(&self, x: &DVector<f64>) -> bool {
        x.iter().zip(&self.bounds).all(|(v, &(lo, hi))| (lo..=hi).contains(v))
    }

    /// Samples the next `lambda` candidates.
    pub fn ask(&mut self) -> Result<Vec<Vec<f64>>, CmaesError> {
        if decompose(&self.covariance).is_none() {
            self.covariance = repair(&self.covariance);
        }
        let (basis, scales) = decompose(&self.covariance).ok_or(CmaesError::Decomposition)?;
        self.basis = basis;
        self.scales = scales;
        let n = self.mean.len();
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(self.generation as u64 + 1);
        let mut out = Vec::with_capacity(self.lambda);
        for _ in 0..self.lambda {
            let mut x = self.mean.clone();
            for attempt in 0..MAX_RESAMPLES {
                let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
                x = &self.mean + (&self.basis * z.component_mul(&self.scales)) * self.sigma;
                if self.in_bounds(&x) || attempt + 1 == MAX_RESAMPLES {
                    break;
                }
            }
            for (v, &(lo, hi)) in x.iter_mut().zip(&self.bounds) {
                *v = v.clamp(lo, hi);
            }
            out.push(x.iter().copied().collect());
        }
        Ok(out)
    }

    /// Updates the distribution from evaluated candidates. NaN costs rank last.
    pub fn tell(&mut self, candidates: &[Vec<f64>], costs: &[f64]) -> Result<(), CmaesError> {
        if candidates.len() != self.lambda || costs.len() != self.lambda {
            return Err(CmaesError::CountMismatch { expected: self.lambda, got: costs.len().min(candidates.len()) });
        }
        if costs.iter().all(|c| c.is_nan()) {
            return Err(CmaesError::AllNan(self.generation + 1));
        }
        let key = |c: f64| if c.is_nan() { f64::INFINITY } else { c };
        let mut order: Vec<usize> = (0..self.lambda).collect();
        order.sort_by(|&a, &b| key(costs[a]).partial_cmp(&key(costs[b])).unwrap_or(Ordering::Equal).then(a.cmp(&b)));

        self.evaluations += self.lambda;
        self.generation += 1;
        let top = order[0];
        if key(costs[top]) < self.best_cost() {
            self.best = Some((candidates[top].clone(), costs[top]));
        }

        // A flat generation carries no ranking information.
        let first = key(costs[0]);
        if costs.iter().all(|&c| key(c) == first) {
            return Ok(());
        }

        let n = self.mean.len();
        let s = &self.strategy;
        let old = self.mean.clone();
        let steps: Vec<DVector<f64>> = order[..self.mu]
            .iter()
            .map(|&i| (DVector::from_column_slice(&candidates[i]) - &old) / self.sigma)
            .collect();
        let mut y_w = DVector::zeros(n);
        for (w, y) in s.weights.iter().zip(&steps) {
            y_w += y * *w;
        }
        self.mean = &old + &y_w * self.sigma;

        // C^{-1/2} y_w
        let inv_sqrt = &self.basis * DMatrix::from_diagonal(&self.scales.map(|d| 1.0 / d)) * self.basis.transpose();
        self.p_sigma = &self.p_sigma * (1.0 - s.c_sigma) + (&inv_sqrt * &y_w) * (s.c_sigma * (2.0 - s.c_sigma) * s.mu_eff).sqrt();
        let ps_norm = self.p_sigma.norm();
        let decay = (1.0 - (1.0 - s.c_sigma).powi(2 * self.generation as i32)).sqrt();
        let h_sigma = if ps_norm / decay < (1.4 + 2.0 / (n as f64 + 1.0)) * s.chi_n { 1.0 } else { 0.0 };
        self.p_c = &self.p_c * (1.0 - s.c_c) + &y_w * (h_sigma * (s.c_c * (2.0 - s.c_c) * s.mu_eff).sqrt());

        let mut rank_mu = DMatrix::zeros(n, n);
        for (w, y) in s.weights.iter().zip(&steps) {
            rank_mu += y * y.transpose() * *w;
        }
        let delta_h = (1.0 - h_sigma) * s.c_c * (2.0 - s.c_c);
        self.covariance = &self.covariance * (1.0 - s.c_1 - s.c_mu + s.c_1 * delta_h)
            + &self.p_c * self.p_c.transpose() * s.c_1
            + rank_mu * s.c_mu;
        self.covariance = (&self.covariance + self.covariance.transpose()) * 0.5;
        self.sigma *= ((s.c_sigma / s.d_sigma) * (ps_norm / s.chi_n - 1.0)).exp();
        Ok(())
    }

    /// Records a cost evaluated outside `ask`/`tell` (e.g. the starting point).
    pub fn observe(&mut self, x: &[f64], cost: f64) {
        self.evaluations += 1;
        if !cost.is_nan() && cost < self.best_cost() {
            self.best = Some((x.to_vec(), cost));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Termination {
    TargetReached,
    BudgetExhausted,
    Stagnation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationLog {
    pub generation: usize,
    pub eval_count: usize,
    /// Best so far, not just this generation.
    pub best_cost: f64,
    pub median_cost: f64,
    pub sigma: f64,
    pub candidates: Vec<Vec<f64>>,
    pub costs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub best_params: Vec<f64>,
    pub best_cost: f64,
    pub evaluations: usize,
    pub history: Vec<GenerationLog>,
    pub termination: Termination,
    pub seed: u64,
}

impl OptimizationResult {
    /// CSV `generation,eval_count,best_cost,median_cost,sigma`.
    pub fn history_csv(&self) -> Table {
        let mut t = Table::new(&["generation", "eval_count", "best_cost", "median_cost", "sigma"]);
        for g in &self.history {
            t.push_raw(&[
                g.generation.to_string(),
                g.eval_count.to_string(),
                crate::table::sci(g.best_cost),
                crate::table::sci(g.median_cost),
                crate::table::sci(g.sigma),
            ]);
        }
        t
    }

    /// CSV `generation,index,x0..x{n-1},cost`.
    pub fn candidates_csv(&self) -> Table {
        let n = self.best_params.len();
        let mut header = vec!["generation".to_string(), "index".to_string()];
        header.extend((0..n).map(|k| format!("x{k}")));
        header.push("cost".into());
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut t = Table::new(&header);
        for g in &self.history {
            for (i, (x, c)) in g.candidates.iter().zip(&g.costs).enumerate() {
                let mut row = vec![g.generation.to_string(), i.to_string()];
                row.extend(x.iter().map(|&v| crate::table::sci(v)));
                row.push(crate::table::sci(*c));
                t.push_raw(&row);
            }
        }
        t
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().map(|&c| if c.is_nan() { f64::INFINITY } else { c }).collect();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn evaluate<F, E>(cost_fn: &F, points: &[Vec<f64>]) -> Result<Vec<f64>, CmaesError>
where
    F: Fn(&[f64]) -> Result<f64, E> + Sync,
    E: Display,
{
    points
        .par_iter()
        .map(|x| cost_fn(x).map_err(|e| CmaesError::CostFailure { candidate: x.clone(), message: e.to_string() }))
        .collect()
}

/// Minimises `cost_fn` from `cfg.initial_mean`.
///
/// The starting point is evaluated alongside the first generation. Stops
/// when the best cost reaches `target_cost`, when another generation would
/// exceed `max_evaluations`, or after `STAGNATION_GENERATIONS` generations
/// without an improvement larger than `STAGNATION_TOLERANCE`.
pub fn optimize<F, E>(cost_fn: F, cfg: &CmaesConfig) -> Result<OptimizationResult, CmaesError>
where
    F: Fn(&[f64]) -> Result<f64, E> + Sync,
    E: Display,
{
    let mut state = CmaesState::new(cfg)?;
    let mut history = Vec::new();
    // Stagnation is judged on the sampled population only, so a good
    // starting point cannot end the search before the distribution has
    // had a chance to contract around it.
    let mut sampled_best = f64::INFINITY;
    let mut last_improvement = (f64::INFINITY, 0usize);
    let termination = loop {
        let mut candidates = state.ask()?;
        let lambda = candidates.len();
        if state.generation == 0 {
            candidates.push(cfg.initial_mean.clone());
        }
        let costs = evaluate(&cost_fn, &candidates)?;
        if let (Some(x0), Some(&c0)) = (candidates.get(lambda), costs.get(lambda)) {
            state.observe(x0, c0);
        }
        state.tell(&candidates[..lambda], &costs[..lambda])?;
        let finite: Vec<f64> = costs.iter().map(|&c| if c.is_nan() { f64::INFINITY } else { c }).collect();
        sampled_best = finite[..lambda].iter().copied().fold(sampled_best, f64::min);
        history.push(GenerationLog {
            generation: state.generation,
            eval_count: state.evaluations,
            best_cost: state.best_cost(),
            median_cost: median(&costs),
            sigma: state.sigma,
            candidates,
            costs,
        });
        let best = state.best_cost();
        if best <= cfg.target_cost {
            break Termination::TargetReached;
        }
        if last_improvement.0 - sampled_best > STAGNATION_TOLERANCE {
            last_improvement = (sampled_best, state.generation);
        } else if state.generation - last_improvement.1 >= STAGNATION_GENERATIONS {
            break Termination::Stagnation;
        }
        if state.evaluations + state.lambda > cfg.max_evaluations {
            break Termination::BudgetExhausted;
        }
    };
    let (best_params, best_cost) = state.best.clone().expect("at least one finite evaluation");
    Ok(OptimizationResult {
        best_params,
        best_cost,
        evaluations: state.evaluations,
        history,
        termination,
        seed: cfg.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    fn sphere(x: &[f64]) -> Result<f64, Infallible> {
        Ok(x.iter().map(|v| v * v).sum())
    }

    fn cfg4(mean: f64, seed: u64) -> CmaesConfig {
        CmaesConfig::new(vec![mean; 4], vec![(-5.0, 5.0); 4], seed)
    }

    #[test]
    fn default_population_sizes() {
        assert_eq!(default_population(4), 8);
        assert_eq!(cfg4(1.0, 0).parents, 4);
        assert!((cfg4(1.0, 0).initial_step - 3.0).abs() < 1e-15);
        assert_eq!(default_population(10), 10);
    }

    #[test]
    fn config_validation() {
        assert!(cfg4(1.0, 0).validate().is_ok());
        assert!(cfg4(6.0, 0).validate().is_err());
        assert!(cfg4(1.0, 0).with_population(3).validate().is_err());
        let mut c = cfg4(1.0, 0);
        c.bounds[2] = (1.0, 1.0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn weights_are_normalised_and_decreasing() {
        let s = Strategy::new(4, 8, 4);
        assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(s.weights.windows(2).all(|w| w[0] > w[1]));
        assert!(s.c_1 + s.c_mu <= 1.0);
    }

    #[test]
    fn tiny_sigma_collapses_onto_mean() {
        let mut c = cfg4(0.7, 3);
        c.initial_step = 1e-300;
        let mut st = CmaesState::new(&c).unwrap();
        for x in st.ask().unwrap() {
            assert!(x.iter().all(|&v| (v - 0.7).abs() < 1e-15));
        }
    }

    #[test]
    fn samples_respect_bounds() {
        let mut c = CmaesConfig::new(vec![0.99, -0.99], vec![(-1.0, 1.0); 2], 11);
        c.initial_step = 5.0;
        let mut st = CmaesState::new(&c).unwrap();
        for _ in 0..5 {
            let xs = st.ask().unwrap();
            assert!(xs.iter().flatten().all(|v| (-1.0..=1.0).contains(v)));
            let costs: Vec<f64> = xs.iter().map(|x| sphere(x).unwrap()).collect();
            st.tell(&xs, &costs).unwrap();
        }
    }

    #[test]
    fn constant_cost_keeps_mean() {
        let mut st = CmaesState::new(&cfg4(1.0, 5)).unwrap();
        let xs = st.ask().unwrap();
        st.tell(&xs, &[2.5; 8]).unwrap();
        assert_eq!(st.mean.as_slice(), &[1.0; 4]);
        assert_eq!(st.best.as_ref().unwrap().0, xs[0]);
    }

    #[test]
    fn nan_costs_lose() {
        let mut st = CmaesState::new(&cfg4(1.0, 5)).unwrap();
        let xs = st.ask().unwrap();
        let mut costs = vec![f64::NAN; 8];
        costs[5] = 3.0;
        st.tell(&xs, &costs).unwrap();
        assert_eq!(st.best.as_ref().unwrap().0, xs[5]);
        let xs = st.ask().unwrap();
        assert_eq!(st.tell(&xs, &[f64::NAN; 8]).unwrap_err(), CmaesError::AllNan(2));
        assert!(st.tell(&xs[..3], &[1.0; 3]).is_err());
    }

    #[test]
    fn repair_restores_positive_definiteness() {
        let mut c = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        c[(0, 1)] += 1e-17;
        let r = repair(&c);
        let w = SymmetricEigen::new(r).eigenvalues;
        assert!(w.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn cost_failure_carries_candidate() {
        let failing = |x: &[f64]| -> Result<f64, String> { if x[0] > 0.0 { Err("boom".into()) } else { Ok(0.0) } };
        let c = CmaesConfig::new(vec![1.0], vec![(0.5, 1.5)], 0).with_population(4);
        match optimize(failing, &c) {
            Err(CmaesError::CostFailure { candidate, message }) => {
                assert_eq!(message, "boom");
                assert!(candidate[0] > 0.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn start_at_optimum_reaches_target_in_one_generation() {
        let mut c = cfg4(0.0, 9);
        c.target_cost = 1e-6;
        let r = optimize(sphere, &c).unwrap();
        assert_eq!(r.termination, Termination::TargetReached);
        assert_eq!(r.history.len(), 1);
        assert_eq!(r.best_cost, 0.0);
        assert_eq!(r.evaluations, 9);
    }

    #[test]
    fn budget_is_respected() {
        let mut c = cfg4(3.0, 2);
        c.max_evaluations = 100;
        let r = optimize(sphere, &c).unwrap();
        assert_eq!(r.termination, Termination::BudgetExhausted);
        assert!(r.evaluations <= 100);
        let csv = r.history_csv();
        assert!(csv.as_str().starts_with("generation,eval_count,best_cost,median_cost,sigma\n"));
        assert_eq!(csv.rows(), r.history.len());
        assert!(r.candidates_csv().as_str().starts_with("generation,index,x0,x1,x2,x3,cost\n"));
    }
}
