//! Python bindings for `ackpc`.

use std::path::PathBuf;
use std::sync::Arc;

use ackpc::agent::{AgentParams, AgentState};
use ackpc::config::ScenarioConfig;
use ackpc::game::{self, GameSpec, IterateOptions};
use ackpc::link::{CodingModel, Feedback};
use ackpc::{cli, sim};
use nalgebra::DMatrix;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: ackpc::Error) -> PyErr {
    match e {
        ackpc::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        ackpc::Error::InvalidArgument(_)
        | ackpc::Error::Config(_)
        | ackpc::Error::RateNotInSet(_)
        | ackpc::Error::PairOutOfRange { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let k = rows.len();
    if k == 0 || rows.iter().any(|r| r.len() != k) {
        return Err(PyValueError::new_err("gains must be a non-empty square matrix"));
    }
    Ok(DMatrix::from_fn(k, k, |r, c| rows[r][c]))
}

fn spec(gains: Vec<Vec<f64>>, noise: f64, targets: Vec<f64>) -> PyResult<GameSpec> {
    GameSpec::new(matrix(&gains)?, noise, targets).map_err(to_py)
}

/// Scenario file contents. Attributes mirror the TOML keys.
#[pyclass(name = "ScenarioConfig", from_py_object)]
#[derive(Clone)]
struct PyScenarioConfig {
    inner: ScenarioConfig,
}

#[pymethods]
impl PyScenarioConfig {
    #[new]
    #[pyo3(signature = (toml = ""))]
    fn new(toml: &str) -> PyResult<Self> {
        ScenarioConfig::from_toml_str(toml, "<string>")
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        ScenarioConfig::load(&path).map(|inner| Self { inner }).map_err(to_py)
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml_string()
    }

    #[getter]
    fn pairs(&self) -> usize {
        self.inner.pairs
    }

    #[setter]
    fn set_pairs(&mut self, v: usize) {
        self.inner.pairs = v;
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, v: u64) {
        self.inner.seed = v;
    }

    #[getter]
    fn packets(&self) -> u64 {
        self.inner.packets
    }

    #[setter]
    fn set_packets(&mut self, v: u64) {
        self.inner.packets = v;
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta
    }

    #[setter]
    fn set_beta(&mut self, v: f64) {
        self.inner.beta = v;
    }

    #[getter]
    fn mode(&self) -> String {
        format!("{:?}", self.inner.mode).to_lowercase()
    }

    #[setter]
    fn set_mode(&mut self, v: &str) -> PyResult<()> {
        self.inner.mode = v.parse().map_err(to_py)?;
        Ok(())
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("ScenarioConfig(pairs={}, seed={}, packets={}, beta={})", self.inner.pairs, self.inner.seed, self.inner.packets, self.inner.beta)
    }
}

/// Error-probability model of one packet.
#[pyclass(name = "CodingModel", frozen)]
struct PyCodingModel {
    inner: Arc<CodingModel>,
}

#[pymethods]
impl PyCodingModel {
    #[new]
    #[pyo3(signature = (symbols_per_packet = 500, union_bound_rho = 1.0, rates = None, eps_floor = ackpc::link::DEFAULT_EPS_FLOOR))]
    fn new(symbols_per_packet: u32, union_bound_rho: f64, rates: Option<Vec<f64>>, eps_floor: f64) -> PyResult<Self> {
        let rates = rates.unwrap_or_else(sim::default_rate_set);
        CodingModel::new(symbols_per_packet, union_bound_rho, rates, eps_floor)
            .map(|m| Self { inner: Arc::new(m) })
            .map_err(to_py)
    }

    fn error_prob(&self, mu: f64, p: f64, r: f64) -> f64 {
        self.inner.error_prob(mu, p, r)
    }

    fn error_prob_derivative(&self, mu: f64, p: f64, r: f64) -> f64 {
        self.inner.error_prob_derivative(mu, p, r)
    }

    fn fisher_info(&self, mu: f64, p: f64, r: f64) -> f64 {
        self.inner.fisher_info(mu, p, r)
    }

    #[getter]
    fn rates(&self) -> Vec<f64> {
        self.inner.rate_set().to_vec()
    }
}

/// One transmitter's learning controller.
#[pyclass(name = "Agent")]
struct PyAgent {
    inner: AgentState,
}

#[pymethods]
impl PyAgent {
    #[new]
    #[pyo3(signature = (model, target, beta, mu_init, r_init = 1.0))]
    fn new(model: &PyCodingModel, target: f64, beta: f64, mu_init: f64, r_init: f64) -> PyResult<Self> {
        AgentState::new(AgentParams::new(target, beta), model.inner.clone(), mu_init, r_init)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    /// Consumes one feedback bit, `True` for ACK.
    fn step(&mut self, ack: bool) {
        self.inner.step(if ack { Feedback::Ack } else { Feedback::Nack });
    }

    /// Consumes a real-valued feedback in `[0, 1]`.
    fn step_with(&mut self, f: f64) {
        self.inner.step_with(f);
    }

    fn estimate_increment(&self, f: f64) -> f64 {
        self.inner.estimate_increment(f)
    }

    #[getter]
    fn mu_hat(&self) -> f64 {
        self.inner.mu_hat()
    }

    #[getter]
    fn power(&self) -> f64 {
        self.inner.power()
    }

    #[getter]
    fn rate(&self) -> f64 {
        self.inner.rate()
    }

    #[getter]
    fn packet_index(&self) -> u64 {
        self.inner.packet_index()
    }
}

/// Spectral radius, verdict and normalized matrix of a game.
#[pyfunction]
fn feasibility<'py>(py: Python<'py>, gains: Vec<Vec<f64>>, noise: f64, targets: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let r = game::check_feasibility(&spec(gains, noise, targets)?).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("spectral_radius", r.spectral_radius)?;
    d.set_item("feasible", r.feasible)?;
    d.set_item("g_matrix", r.g_matrix)?;
    Ok(d)
}

/// Equilibrium powers by direct solve.
#[pyfunction]
fn solve_gne(gains: Vec<Vec<f64>>, noise: f64, targets: Vec<f64>) -> PyResult<Vec<f64>> {
    game::solve_gne_direct(&spec(gains, noise, targets)?)
        .map(|e| e.powers)
        .map_err(to_py)
}

/// Equilibrium powers by best-response iteration from `p0`.
#[pyfunction]
#[pyo3(signature = (gains, noise, targets, p0, tol = 1e-12, max_iter = 100_000))]
fn best_response_iterate(
    gains: Vec<Vec<f64>>,
    noise: f64,
    targets: Vec<f64>,
    p0: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> PyResult<(Vec<f64>, usize)> {
    let opts = IterateOptions {
        tol,
        max_iter,
        ..IterateOptions::default()
    };
    game::best_response_iterate(&spec(gains, noise, targets)?, &p0, opts)
        .map(|e| (e.powers, e.iterations))
        .map_err(to_py)
}

/// Runs a scenario. Returns the trace CSV and a dict of run statistics.
#[pyfunction]
fn run<'py>(py: Python<'py>, config: &PyScenarioConfig) -> PyResult<(String, Bound<'py, PyDict>)> {
    let cfg = config.inner.clone();
    let out = py.detach(move || cli::cmd_run(&cfg)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("median_convergence_packet", out.stats.median_convergence_packet)?;
    d.set_item("network_convergence_packet", out.stats.network_convergence_packet)?;
    d.set_item("median_post_convergence_std", out.stats.median_post_convergence_std)?;
    d.set_item("converged_pairs", out.stats.converged_pairs)?;
    d.set_item("pairs", out.stats.pairs)?;
    d.set_item("convergence_packet", out.metrics.convergence_packet)?;
    d.set_item("final_power_gap", out.metrics.final_power_gap)?;
    d.set_item("gne_powers", out.metrics.gne_powers)?;
    Ok((out.csv, d))
}

#[pymodule]
#[pyo3(name = "ackpc")]
fn ackpc_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenarioConfig>()?;
    m.add_class::<PyCodingModel>()?;
    m.add_class::<PyAgent>()?;
    m.add_function(wrap_pyfunction!(feasibility, m)?)?;
    m.add_function(wrap_pyfunction!(solve_gne, m)?)?;
    m.add_function(wrap_pyfunction!(best_response_iterate, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add("CSV_HEADER", sim::CSV_HEADER)?;
    Ok(())
}
