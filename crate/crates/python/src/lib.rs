//! Python bindings: configs, single transfers, optimisation, sweeps and a
//! generic CMA-ES minimiser over Python callables.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use stirsap_core::cmaes::{self, CmaesConfig};
use stirsap_core::harness::{self, ExperimentConfig, HarnessError, TimeSweepSpec};
use stirsap_core::pulse_synthesis::{self as ps, Protocol};

fn to_py(e: HarnessError) -> PyErr {
    match e {
        HarnessError::Config(m) => PyValueError::new_err(m),
        HarnessError::Numerical(m) => PyRuntimeError::new_err(m),
        HarnessError::Io(m) => PyIOError::new_err(m),
    }
}

fn parse_protocol(name: &str) -> PyResult<Protocol> {
    name.parse().map_err(PyValueError::new_err)
}

#[pyclass(name = "ControlParams", from_py_object)]
#[derive(Clone, Copy)]
struct PyControl {
    #[pyo3(get, set)]
    alpha_p: f64,
    #[pyo3(get, set)]
    alpha_s: f64,
    #[pyo3(get, set)]
    beta_p: f64,
    #[pyo3(get, set)]
    beta_s: f64,
}

impl From<ps::ControlParams> for PyControl {
    fn from(c: ps::ControlParams) -> Self {
        Self { alpha_p: c.alpha_p, alpha_s: c.alpha_s, beta_p: c.beta_p, beta_s: c.beta_s }
    }
}

impl From<PyControl> for ps::ControlParams {
    fn from(c: PyControl) -> Self {
        Self { alpha_p: c.alpha_p, alpha_s: c.alpha_s, beta_p: c.beta_p, beta_s: c.beta_s }
    }
}

#[pymethods]
impl PyControl {
    #[new]
    #[pyo3(signature = (alpha_p=1.0, alpha_s=1.0, beta_p=0.0, beta_s=0.0))]
    fn new(alpha_p: f64, alpha_s: f64, beta_p: f64, beta_s: f64) -> Self {
        Self { alpha_p, alpha_s, beta_p, beta_s }
    }

    fn as_list(&self) -> Vec<f64> {
        vec![self.alpha_p, self.alpha_s, self.beta_p, self.beta_s]
    }

    fn __repr__(&self) -> String {
        format!(
            "ControlParams(alpha_p={}, alpha_s={}, beta_p={}, beta_s={})",
            self.alpha_p, self.alpha_s, self.beta_p, self.beta_s
        )
    }
}

/// Experiment configuration; mirrors the TOML file of the CLI.
#[pyclass(name = "ExperimentConfig", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (toml=None))]
    fn new(toml: Option<&str>) -> PyResult<Self> {
        let inner = match toml {
            Some(text) => ExperimentConfig::from_toml(text).map_err(to_py)?,
            None => ExperimentConfig::default(),
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: ExperimentConfig::load(path.as_ref()).map_err(to_py)? })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    #[getter]
    fn protocol(&self) -> String {
        self.inner.protocol.name().to_string()
    }

    #[setter]
    fn set_protocol(&mut self, name: &str) -> PyResult<()> {
        self.inner.protocol = parse_protocol(name)?;
        Ok(())
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    #[getter]
    fn omega0(&self) -> f64 {
        self.inner.pulse.omega0
    }

    #[setter]
    fn set_omega0(&mut self, omega0: f64) {
        self.inner.pulse.omega0 = omega0;
    }

    #[getter]
    fn total_time(&self) -> f64 {
        self.inner.pulse.total_time
    }

    #[setter]
    fn set_total_time(&mut self, t: f64) {
        self.inner.pulse.total_time = t;
    }

    #[getter]
    fn output_dir(&self) -> String {
        self.inner.output_dir.display().to_string()
    }

    #[setter]
    fn set_output_dir(&mut self, dir: &str) {
        self.inner.output_dir = dir.into();
    }

    #[getter]
    fn decoherence_enabled(&self) -> bool {
        self.inner.decoherence_enabled
    }

    #[setter]
    fn set_decoherence_enabled(&mut self, on: bool) {
        self.inner.decoherence_enabled = on;
    }

    #[getter]
    fn control(&self) -> Option<PyControl> {
        self.inner.control.map(Into::into)
    }

    #[setter]
    fn set_control(&mut self, c: Option<PyControl>) {
        self.inner.control = c.map(Into::into);
    }

    #[getter]
    fn max_evaluations(&self) -> Option<usize> {
        self.inner.optimizer.as_ref().map(|o| o.max_evaluations)
    }

    #[setter]
    fn set_max_evaluations(&mut self, n: usize) {
        self.inner.optimizer.get_or_insert_with(Default::default).max_evaluations = n;
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(to_py)
    }
}

fn report_dict<'py>(py: Python<'py>, r: &stirsap_core::FidelityReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("fidelity", r.fidelity)?;
    d.set_item("cost", r.cost)?;
    d.set_item("leakage", r.leakage)?;
    d.set_item("intermediate_peak", r.intermediate_peak)?;
    d.set_item("final_populations", r.final_populations.clone())?;
    Ok(d)
}

/// Propagates one transfer without writing files. Returns the fidelity
/// report plus the recorded `times` and `populations`.
#[pyfunction]
#[pyo3(signature = (config, protocol=None, control=None, decoherence=None))]
fn simulate<'py>(
    py: Python<'py>,
    config: &PyConfig,
    protocol: Option<&str>,
    control: Option<PyControl>,
    decoherence: Option<bool>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = &config.inner;
    let variant = protocol.map(parse_protocol).transpose()?.unwrap_or(cfg.protocol);
    let control: Option<ps::ControlParams> = control.map(Into::into).or(cfg.control);
    if variant == Protocol::StirsapOpt && control.is_none() {
        return Err(PyValueError::new_err("STIRSAP_OPT needs control parameters"));
    }
    let open = decoherence.unwrap_or(cfg.decoherence_enabled);
    let params = cfg.pulse.params();
    let sim = py
        .detach(|| harness::simulate(cfg, variant, &params, control.as_ref(), open))
        .map_err(to_py)?;
    let d = report_dict(py, &sim.report)?;
    d.set_item("times", sim.trajectory.times.clone())?;
    d.set_item("populations", sim.trajectory.populations.clone())?;
    Ok(d)
}

/// Full `simulate` run: writes `trajectory.csv` and `manifest.json`.
#[pyfunction]
fn run_transfer<'py>(py: Python<'py>, config: &PyConfig) -> PyResult<Bound<'py, PyDict>> {
    let out = py.detach(|| harness::run_transfer(&config.inner)).map_err(to_py)?;
    let d = report_dict(py, &out.report)?;
    d.set_item("files", out.manifest.files.clone())?;
    Ok(d)
}

/// CMA-ES over the four control parameters; returns `(control, best_cost, evaluations)`.
#[pyfunction]
fn optimize_protocol(py: Python<'_>, config: &PyConfig) -> PyResult<(PyControl, f64, usize)> {
    let mut cfg = config.inner.clone();
    cfg.protocol = Protocol::StirsapOpt;
    cfg.optimizer.get_or_insert_with(Default::default);
    let (c, r) = py.detach(|| harness::optimize_protocol(&cfg)).map_err(to_py)?;
    Ok((c.into(), r.best_cost, r.evaluations))
}

/// Fidelity for each `(T, variant)`; rows are dicts.
#[pyfunction]
#[pyo3(signature = (config, times, omega0, variants=None))]
fn sweep_total_time<'py>(
    py: Python<'py>,
    config: &PyConfig,
    times: Vec<f64>,
    omega0: f64,
    variants: Option<Vec<String>>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let spec = TimeSweepSpec::new(times, omega0).map_err(to_py)?;
    let variants = match variants {
        Some(v) => v.iter().map(|s| parse_protocol(s)).collect::<PyResult<Vec<_>>>()?,
        None => Protocol::ALL.to_vec(),
    };
    let rows = py.detach(|| harness::sweep_total_time(&config.inner, &spec, &variants)).map_err(to_py)?;
    rows.iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("T_ns", r.total_time)?;
            d.set_item("variant", r.variant.name())?;
            d.set_item("fidelity", r.fidelity)?;
            d.set_item("leakage", r.leakage)?;
            d.set_item("error", r.error.clone())?;
            Ok(d)
        })
        .collect()
}

/// Raw and dressed envelopes sampled on the schedule grid.
#[pyfunction]
fn pulses<'py>(py: Python<'py>, config: &PyConfig) -> PyResult<Bound<'py, PyDict>> {
    let cfg = &config.inner;
    let pair = ps::gaussian_envelopes(&cfg.pulse.params()).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let dressed = ps::sta_dressed_pulses(&pair);
    let times = pair.sample_times(ps::DEFAULT_SAMPLE_STEP_NS);
    let d = PyDict::new(py);
    d.set_item("t_ns", times.clone())?;
    d.set_item("omega_p", times.iter().map(|&t| pair.p.value(t)).collect::<Vec<_>>())?;
    d.set_item("omega_s", times.iter().map(|&t| pair.s.value(t)).collect::<Vec<_>>())?;
    d.set_item("omega_cd", times.iter().map(|&t| dressed.cd(t)).collect::<Vec<_>>())?;
    d.set_item("omega_p_tilde", times.iter().map(|&t| dressed.p_tilde(t)).collect::<Vec<_>>())?;
    d.set_item("omega_s_tilde", times.iter().map(|&t| dressed.s_tilde(t)).collect::<Vec<_>>())?;
    d.set_item("zeta", times.iter().map(|&t| dressed.zeta(t)).collect::<Vec<_>>())?;
    Ok(d)
}

/// Minimises a Python callable `f(list[float]) -> float` inside a box.
/// Returns `(best_params, best_cost, evaluations, termination)`.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (f, x0, bounds, seed=1, max_evaluations=None, target_cost=None, sigma0=None))]
fn cmaes_minimize(
    py: Python<'_>,
    f: Py<PyAny>,
    x0: Vec<f64>,
    bounds: Vec<(f64, f64)>,
    seed: u64,
    max_evaluations: Option<usize>,
    target_cost: Option<f64>,
    sigma0: Option<f64>,
) -> PyResult<(Vec<f64>, f64, usize, String)> {
    let mut cfg = CmaesConfig::new(x0, bounds, seed);
    if let Some(n) = max_evaluations {
        cfg.max_evaluations = n;
    }
    if let Some(t) = target_cost {
        cfg.target_cost = t;
    }
    if let Some(s) = sigma0 {
        cfg.initial_step = s;
    }
    let cost = |x: &[f64]| -> Result<f64, String> {
        Python::attach(|py| f.call1(py, (x.to_vec(),)).and_then(|v| v.extract::<f64>(py)).map_err(|e| e.to_string()))
    };
    let r = py.detach(|| cmaes::optimize(cost, &cfg)).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok((r.best_params, r.best_cost, r.evaluations, format!("{:?}", r.termination)))
}

#[pymodule]
fn stirsap(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyControl>()?;
    m.add_class::<PyConfig>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(run_transfer, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_protocol, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_total_time, m)?)?;
    m.add_function(wrap_pyfunction!(pulses, m)?)?;
    m.add_function(wrap_pyfunction!(cmaes_minimize, m)?)?;
    m.add("CALIBRATED_T1_NS", harness::CALIBRATED_T1_NS)?;
    Ok(())
}
