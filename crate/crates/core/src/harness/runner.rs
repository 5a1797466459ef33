use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::manifest::{OutputSet, RunManifest, TOOL_VERSION};
use super::{ExperimentConfig, HarnessError, RobustnessAxes, RobustnessMode, TimeSweepSpec, CALIBRATION_TARGET};
use crate::cmaes::{optimize, OptimizationResult};
use crate::metrics::{transfer_report, FidelityReport};
use crate::propagation::{
    propagate_lindblad, propagate_state, DensityMatrix, DrivenQudit, PropagationConfig, QuantumState,
    ThreeLevelDrive, TrajectoryRecord,
};
use crate::pulse_synthesis::{
    gaussian_envelopes, make_protocol_schedule, sta_dressed_pulses, ControlParams, GaussianStirapParams, Protocol,
};
use crate::qudit_model::collapse_operators;
use crate::table::{sci, Table};

const TARGET_LEVEL: usize = 2;

/// One propagated transfer.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub trajectory: TrajectoryRecord,
    pub report: FidelityReport,
}

/// Runs `variant` with explicit pulse parameters and controls. Pure: no I/O.
pub fn simulate(
    cfg: &ExperimentConfig,
    variant: Protocol,
    params: &GaussianStirapParams,
    control: Option<&ControlParams>,
    decoherence: bool,
) -> Result<Simulation, HarnessError> {
    let spec = cfg.effective_transmon(decoherence);
    let schedule = make_protocol_schedule(variant, params, control, &spec)?;
    let dim = spec.level_count;
    let open = spec.has_decoherence() || spec.thermal_pop1 > 0.0;
    let channels = if open { collapse_operators(&spec)? } else { Vec::new() };
    let p1 = spec.thermal_pop1;
    let h = DrivenQudit::new(spec, schedule, cfg.propagation.frame);
    let trajectory = if open {
        propagate_lindblad(&h, &channels, &DensityMatrix::thermal(dim, p1), params.total_time, &cfg.propagation)?
    } else {
        propagate_state(&h, &QuantumState::basis(dim, 0), params.total_time, &cfg.propagation)?
    };
    let report = transfer_report(&trajectory, TARGET_LEVEL)?;
    Ok(Simulation { trajectory, report })
}

/// Resonant three-level system driven by `H + H_cd`, starting in `|0>`.
pub fn three_level_cd_transfer(params: &GaussianStirapParams, prop: &PropagationConfig) -> Result<Simulation, HarnessError> {
    let pair = gaussian_envelopes(params)?;
    let trajectory = propagate_state(
        &ThreeLevelDrive::CounterDiabatic(pair),
        &QuantumState::basis(3, 0),
        params.total_time,
        prop,
    )?;
    let report = transfer_report(&trajectory, TARGET_LEVEL)?;
    Ok(Simulation { trajectory, report })
}

fn transfer_cost(
    cfg: &ExperimentConfig,
    params: &GaussianStirapParams,
    control: &ControlParams,
    decoherence: bool,
) -> Result<f64, HarnessError> {
    Ok(simulate(cfg, Protocol::StirsapOpt, params, Some(control), decoherence)?.report.cost)
}

fn optimize_at(
    cfg: &ExperimentConfig,
    params: &GaussianStirapParams,
) -> Result<(ControlParams, OptimizationResult), HarnessError> {
    let opt = cfg.optimizer.as_ref().ok_or_else(|| HarnessError::Config("no [optimizer] section".into()))?;
    let cmaes = opt.cmaes(cfg.seed);
    let mut inner = cfg.clone();
    inner.propagation.snapshots = false;
    let result = optimize(
        |x: &[f64]| transfer_cost(&inner, params, &ControlParams::from_slice(x), opt.with_decoherence),
        &cmaes,
    )?;
    Ok((ControlParams::from_slice(&result.best_params), result))
}

/// CMA-ES over `(alpha_p, alpha_s, beta_p, beta_s)` at the configured pulse.
pub fn optimize_protocol(cfg: &ExperimentConfig) -> Result<(ControlParams, OptimizationResult), HarnessError> {
    if cfg.protocol != Protocol::StirsapOpt {
        return Err(HarnessError::Config(format!("optimisation needs protocol STIRSAP_OPT, got {}", cfg.protocol)));
    }
    cfg.validate()?;
    optimize_at(cfg, &cfg.pulse.params())
}

/// Controls to play for `variant` at `params`: stored ones when present,
/// otherwise a fresh optimisation for STIRSAP_OPT.
pub fn resolve_control(
    cfg: &ExperimentConfig,
    variant: Protocol,
    params: &GaussianStirapParams,
) -> Result<(Option<ControlParams>, Option<OptimizationResult>), HarnessError> {
    if variant != Protocol::StirsapOpt {
        return Ok((None, None));
    }
    match cfg.control {
        Some(c) => Ok((Some(c), None)),
        None => {
            let (c, r) = optimize_at(cfg, params)?;
            Ok((Some(c), Some(r)))
        }
    }
}

fn manifest(
    cfg: &ExperimentConfig,
    command: &str,
    report: Option<FidelityReport>,
    results: serde_json::Value,
    files: Vec<String>,
    warnings: Vec<String>,
    started: Instant,
) -> RunManifest {
    RunManifest {
        tool_version: TOOL_VERSION.to_string(),
        command: command.to_string(),
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        config: cfg.clone(),
        seed: cfg.seed,
        report,
        results,
        files,
        warnings,
        duration_s: started.elapsed().as_secs_f64(),
    }
}

fn optimization_summary(control: &ControlParams, r: &OptimizationResult) -> serde_json::Value {
    json!({
        "control": control,
        "best_cost": r.best_cost,
        "evaluations": r.evaluations,
        "generations": r.history.len(),
        "termination": r.termination,
    })
}

#[derive(Debug, Clone)]
pub struct TransferOutcome {
    pub trajectory: TrajectoryRecord,
    pub report: FidelityReport,
    pub manifest: RunManifest,
    pub control: Option<ControlParams>,
    pub optimization: Option<OptimizationResult>,
}

/// Single transfer of `cfg.protocol`; writes `trajectory.csv` and `manifest.json`.
pub fn run_transfer(cfg: &ExperimentConfig) -> Result<TransferOutcome, HarnessError> {
    let started = Instant::now();
    cfg.validate()?;
    let params = cfg.pulse.params();
    let (control, optimization) = resolve_control(cfg, cfg.protocol, &params)?;
    let sim = simulate(cfg, cfg.protocol, &params, control.as_ref(), cfg.decoherence_enabled)?;
    let mut out = OutputSet::create(&cfg.output_dir)?;
    out.write("trajectory.csv", sim.trajectory.to_csv().as_str())?;
    let mut results = json!({ "protocol": cfg.protocol, "control": control });
    if let (Some(c), Some(r)) = (control.as_ref(), optimization.as_ref()) {
        out.write("optimization_history.csv", r.history_csv().as_str())?;
        results["optimization"] = optimization_summary(c, r);
    }
    let mut m = manifest(cfg, "simulate", Some(sim.report.clone()), results, out.names(), sim.trajectory.warnings.clone(), started);
    m.files = out.commit(&m)?;
    m.files.retain(|f| !f.ends_with("manifest.json"));
    Ok(TransferOutcome { trajectory: sim.trajectory, report: sim.report, manifest: m, control, optimization })
}

#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    pub control: ControlParams,
    pub result: OptimizationResult,
    /// Transfer at the best controls, with the run's decoherence setting.
    pub report: FidelityReport,
    pub manifest: RunManifest,
}

/// Optimises, then writes the generation history, every candidate, the
/// best trajectory and the manifest.
pub fn run_optimize(cfg: &ExperimentConfig) -> Result<OptimizeOutcome, HarnessError> {
    let started = Instant::now();
    let (control, result) = optimize_protocol(cfg)?;
    let sim = simulate(cfg, Protocol::StirsapOpt, &cfg.pulse.params(), Some(&control), cfg.decoherence_enabled)?;
    let mut out = OutputSet::create(&cfg.output_dir)?;
    out.write("optimization_history.csv", result.history_csv().as_str())?;
    out.write("optimization_candidates.csv", result.candidates_csv().as_str())?;
    out.write("trajectory.csv", sim.trajectory.to_csv().as_str())?;
    let results = json!({ "optimization": optimization_summary(&control, &result) });
    let mut m = manifest(cfg, "optimize", Some(sim.report.clone()), results, out.names(), sim.trajectory.warnings.clone(), started);
    m.files = out.commit(&m)?;
    m.files.retain(|f| !f.ends_with("manifest.json"));
    Ok(OptimizeOutcome { control, result, report: sim.report, manifest: m })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub total_time: f64,
    pub variant: Protocol,
    pub fidelity: f64,
    pub leakage: f64,
    /// Failure message; the numeric fields are NaN when set.
    pub error: Option<String>,
    /// Controls played for STIRSAP_OPT.
    pub control: Option<ControlParams>,
}

fn sweep_point(cfg: &ExperimentConfig, variant: Protocol, params: &GaussianStirapParams) -> SweepRow {
    let run = || -> Result<(FidelityReport, Option<ControlParams>), HarnessError> {
        let (control, _) = resolve_control(cfg, variant, params)?;
        Ok((simulate(cfg, variant, params, control.as_ref(), cfg.decoherence_enabled)?.report, control))
    };
    match run() {
        Ok((r, control)) => SweepRow {
            total_time: params.total_time,
            variant,
            fidelity: r.fidelity,
            leakage: r.leakage,
            error: None,
            control,
        },
        Err(e) => SweepRow {
            total_time: params.total_time,
            variant,
            fidelity: f64::NAN,
            leakage: f64::NAN,
            error: Some(e.to_string()),
            control: None,
        },
    }
}

/// Fidelity against total time at fixed amplitude. STIRSAP_OPT is
/// re-optimised at every `T` unless `cfg.control` is set. Failed points
/// become NaN rows.
pub fn sweep_total_time(
    cfg: &ExperimentConfig,
    spec: &TimeSweepSpec,
    variants: &[Protocol],
) -> Result<Vec<SweepRow>, HarnessError> {
    cfg.validate()?;
    let mut base = cfg.clone();
    base.pulse.omega0 = spec.omega0;
    let points: Vec<(f64, Protocol)> =
        spec.times.iter().flat_map(|&t| variants.iter().map(move |&v| (t, v))).collect();
    let rows = points.par_iter().map(|&(t, v)| sweep_point(&base, v, &base.pulse.params_at(t))).collect();
    Ok(rows)
}

/// CSV `T_ns,variant,fidelity,leakage,error`.
pub fn sweep_table(rows: &[SweepRow]) -> Table {
    let mut t = Table::new(&["T_ns", "variant", "fidelity", "leakage", "error"]);
    for r in rows {
        let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        t.push_raw(&[sci(r.total_time), r.variant.name().into(), sci(r.fidelity), sci(r.leakage), err]);
    }
    t
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub manifest: RunManifest,
}

pub fn run_sweep(cfg: &ExperimentConfig, spec: &TimeSweepSpec, variants: &[Protocol]) -> Result<SweepOutcome, HarnessError> {
    let started = Instant::now();
    let rows = sweep_total_time(cfg, spec, variants)?;
    let mut out = OutputSet::create(&cfg.output_dir)?;
    out.write("sweep.csv", sweep_table(&rows).as_str())?;
    let failed: Vec<String> = rows
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| format!("T = {} ns {}: {e}", r.total_time, r.variant)))
        .collect();
    let results = json!({
        "times": spec.times,
        "omega0": spec.omega0,
        "reference_period": spec.reference_period(),
        "rows": rows,
    });
    let mut m = manifest(cfg, "sweep-time", None, results, out.names(), failed, started);
    m.files = out.commit(&m)?;
    m.files.retain(|f| !f.ends_with("manifest.json"));
    Ok(SweepOutcome { rows, manifest: m })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub err_p: f64,
    pub err_s: f64,
    pub fidelity: f64,
    pub error: Option<String>,
}

/// Row-major grid: `err_p` outer, `err_s` inner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessGrid {
    pub mode: RobustnessMode,
    pub err_p_values: Vec<f64>,
    pub err_s_values: Vec<f64>,
    pub cells: Vec<GridCell>,
    pub reference: ControlParams,
    pub reference_fidelity: f64,
}

impl RobustnessGrid {
    pub fn cell(&self, i: usize, j: usize) -> &GridCell {
        &self.cells[i * self.err_s_values.len() + j]
    }

    /// CSV `err_p,err_s,fidelity`.
    pub fn to_csv(&self) -> Table {
        let mut t = Table::new(&["err_p", "err_s", "fidelity"]);
        for c in &self.cells {
            t.push(&[c.err_p, c.err_s, c.fidelity]);
        }
        t
    }
}

/// Controls after applying the errors of one grid cell.
pub fn perturbed_control(reference: &ControlParams, mode: RobustnessMode, err_p: f64, err_s: f64) -> ControlParams {
    match mode {
        RobustnessMode::Amplitude => ControlParams {
            alpha_p: (1.0 - err_p) * reference.alpha_p,
            alpha_s: (1.0 - err_s) * reference.alpha_s,
            ..*reference
        },
        RobustnessMode::Detuning => ControlParams {
            beta_p: reference.beta_p + err_p,
            beta_s: reference.beta_s + err_s,
            ..*reference
        },
    }
}

/// Perturbs both tones independently around `axes.reference` on a 2-D grid.
pub fn robustness_scan(
    cfg: &ExperimentConfig,
    axes: &RobustnessAxes,
    mode: RobustnessMode,
) -> Result<RobustnessGrid, HarnessError> {
    cfg.validate()?;
    let params = cfg.pulse.params();
    let values = match mode {
        RobustnessMode::Amplitude => &axes.eta_values,
        RobustnessMode::Detuning => &axes.delta_values,
    };
    let reference_fidelity =
        simulate(cfg, Protocol::StirsapOpt, &params, Some(&axes.reference), cfg.decoherence_enabled)?.report.fidelity;
    let pairs: Vec<(f64, f64)> = values.iter().flat_map(|&p| values.iter().map(move |&s| (p, s))).collect();
    let cells = pairs
        .par_iter()
        .map(|&(err_p, err_s)| {
            let c = perturbed_control(&axes.reference, mode, err_p, err_s);
            match simulate(cfg, Protocol::StirsapOpt, &params, Some(&c), cfg.decoherence_enabled) {
                Ok(sim) => GridCell { err_p, err_s, fidelity: sim.report.fidelity, error: None },
                Err(e) => GridCell { err_p, err_s, fidelity: f64::NAN, error: Some(e.to_string()) },
            }
        })
        .collect();
    Ok(RobustnessGrid {
        mode,
        err_p_values: values.clone(),
        err_s_values: values.clone(),
        cells,
        reference: axes.reference,
        reference_fidelity,
    })
}

/// CSV `mode,err_p,err_s,fidelity` of the cells `(i, n - 1 - i)`.
pub fn antidiagonal(grids: &[RobustnessGrid]) -> Table {
    let mut t = Table::new(&["mode", "err_p", "err_s", "fidelity"]);
    for g in grids {
        let n = g.err_p_values.len().min(g.err_s_values.len());
        for i in 0..n {
            let c = g.cell(i, g.err_s_values.len() - 1 - i);
            t.push_raw(&[g.mode.name().into(), sci(c.err_p), sci(c.err_s), sci(c.fidelity)]);
        }
    }
    t
}

#[derive(Debug, Clone)]
pub struct RobustnessOutcome {
    pub grids: Vec<RobustnessGrid>,
    pub optimization: Option<OptimizationResult>,
    pub manifest: RunManifest,
}

/// Scans every mode in `modes` around the configured controls (optimising
/// first when none are stored) and writes the grids plus the anti-diagonal.
pub fn run_robustness(cfg: &ExperimentConfig, modes: &[RobustnessMode]) -> Result<RobustnessOutcome, HarnessError> {
    let started = Instant::now();
    cfg.validate()?;
    let (control, optimization) = resolve_control(cfg, Protocol::StirsapOpt, &cfg.pulse.params())?;
    let reference = control.expect("STIRSAP_OPT always resolves a control");
    let axes = RobustnessAxes::from_scan(&cfg.scan, reference)?;
    let grids = modes.iter().map(|&m| robustness_scan(cfg, &axes, m)).collect::<Result<Vec<_>, _>>()?;
    let mut out = OutputSet::create(&cfg.output_dir)?;
    for g in &grids {
        out.write(g.mode.file_name(), g.to_csv().as_str())?;
    }
    out.write("antidiagonal.csv", antidiagonal(&grids).as_str())?;
    let failed: Vec<String> = grids
        .iter()
        .flat_map(|g| g.cells.iter().filter_map(|c| c.error.as_ref().map(|e| format!("({}, {}): {e}", c.err_p, c.err_s))))
        .collect();
    let mut results = json!({
        "reference": reference,
        "reference_fidelity": grids.first().map(|g| g.reference_fidelity),
    });
    if let Some(r) = &optimization {
        results["optimization"] = optimization_summary(&reference, r);
    }
    let mut m = manifest(cfg, "scan-robustness", None, results, out.names(), failed, started);
    m.files = out.commit(&m)?;
    m.files.retain(|f| !f.ends_with("manifest.json"));
    Ok(RobustnessOutcome { grids, optimization, manifest: m })
}

/// Writes `pulses_<variant>.csv` for all three variants: the raw pair, the
/// dressed envelopes with `omega_cd,zeta`, and the played STIRSAP_OPT
/// envelopes (configured controls, identity when absent).
pub fn emit_pulses(cfg: &ExperimentConfig) -> Result<Vec<String>, HarnessError> {
    let started = Instant::now();
    cfg.validate()?;
    let params = cfg.pulse.params();
    let pair = gaussian_envelopes(&params)?;
    let dressed = Arc::new(sta_dressed_pulses(&pair));
    let control = cfg.control.unwrap_or_default();
    let spec = cfg.effective_transmon(false);
    let played = make_protocol_schedule(Protocol::StirsapOpt, &params, Some(&control), &spec)?;
    let step = played.sample_step;
    let mut out = OutputSet::create(&cfg.output_dir)?;
    out.write("pulses_stirap.csv", pair.to_csv(step).as_str())?;
    out.write("pulses_stirsap.csv", dressed.to_csv(step).as_str())?;
    out.write("pulses_stirsap_opt.csv", played.to_csv().as_str())?;
    let results = json!({ "ramp_end": dressed.ramp_end, "control": control, "sample_step": step });
    let m = manifest(cfg, "pulses", None, results, out.names(), Vec::new(), started);
    let mut files = out.commit(&m)?;
    files.retain(|f| !f.ends_with("manifest.json"));
    Ok(files)
}

/// Bisects a uniform T1 so that STIRAP at 500 ns (2 pi x 0.02 rad/ns)
/// ends at `CALIBRATION_TARGET`; returns the T1 in ns.
pub fn calibrate_uniform_t1(cfg: &ExperimentConfig, tolerance: f64) -> Result<f64, HarnessError> {
    let params = GaussianStirapParams { omega0: cfg.scan.sweep_omega0, ..cfg.pulse.params_at(500.0) };
    let fidelity = |t1: f64| -> Result<f64, HarnessError> {
        let mut c = cfg.clone();
        c.transmon = c.transmon.clone().with_uniform_t1(t1);
        c.transmon.tphi_times = None;
        Ok(simulate(&c, Protocol::Stirap, &params, None, true)?.report.fidelity)
    };
    // Fidelity grows with T1.
    let (mut lo, mut hi) = (1e3, 1e6);
    if !(fidelity(lo)? < CALIBRATION_TARGET && fidelity(hi)? > CALIBRATION_TARGET) {
        return Err(HarnessError::Numerical("calibration target not bracketed by T1 in [1 us, 1 ms]".into()));
    }
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        if fidelity(mid)? < CALIBRATION_TARGET {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
