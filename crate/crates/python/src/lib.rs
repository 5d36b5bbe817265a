//! Python bindings for `tolc`.
//!
//! Input problems raise `ValueError`; simulation faults raise `RuntimeError`.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use tolc::config::WorkspaceConfig;
use tolc::contract::{TimingRecord, TimingTrace};
use tolc::jitter::{DelayDistribution, DelayFamily};
use tolc::margin::{effective_period_bound as period_bound, Synthesis, SynthesisRequest};
use tolc::{composite_stats as stats, jitter_margin as margin, SweepConfig};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Rational transfer function from ascending coefficient lists.
#[pyclass(name = "TransferFunction", frozen)]
struct PyTransferFunction(tolc::TransferFunction);

#[pymethods]
impl PyTransferFunction {
    #[new]
    fn new(num: Vec<f64>, den: Vec<f64>) -> PyResult<Self> {
        tolc::TransferFunction::from_coeffs(&num, &den)
            .map(Self)
            .map_err(value_err)
    }

    #[staticmethod]
    fn closed_loop(plant: PyRef<'_, Self>, controller: PyRef<'_, Self>) -> PyResult<Self> {
        tolc::TransferFunction::closed_loop(&plant.0, &controller.0)
            .map(Self)
            .map_err(value_err)
    }

    #[getter]
    fn num(&self) -> Vec<f64> {
        self.0.num().coeffs().to_vec()
    }

    #[getter]
    fn den(&self) -> Vec<f64> {
        self.0.den().coeffs().to_vec()
    }

    fn evaluate(&self, omega: f64) -> PyResult<Complex64> {
        self.0.evaluate(omega).map_err(value_err)
    }

    fn poles(&self) -> Vec<Complex64> {
        self.0.poles()
    }

    fn zeros(&self) -> Vec<Complex64> {
        self.0.zeros()
    }

    fn is_hurwitz_stable(&self) -> bool {
        self.0.is_hurwitz_stable()
    }

    fn __repr__(&self) -> String {
        format!("TransferFunction({})", self.0)
    }
}

/// `(j_max, omega_star)` of a closed loop.
#[pyfunction]
#[pyo3(signature = (t, omega_lo = 1e-3, omega_hi = 1e6, grid_points = 2000))]
fn jitter_margin(
    t: PyRef<'_, PyTransferFunction>,
    omega_lo: f64,
    omega_hi: f64,
    grid_points: usize,
) -> PyResult<(f64, f64)> {
    let sweep = SweepConfig {
        omega_lo,
        omega_hi,
        grid_points,
    };
    let m = margin(&t.0, &sweep).map_err(value_err)?;
    Ok((m.j_max, m.omega_star))
}

#[pyfunction]
fn effective_period_bound(j_max: f64, h: f64) -> f64 {
    period_bound(j_max, h)
}

/// Channel-load chain with a delay distribution per state.
///
/// Each delay is `(family, min, max, mean, std)`; `mean` and `std` are ignored
/// for the `"uniform"` family.
#[pyclass(name = "MarkovDelayModel", frozen)]
struct PyMarkovDelayModel(tolc::MarkovDelayModel);

#[pymethods]
impl PyMarkovDelayModel {
    #[new]
    fn new(
        states: Vec<String>,
        transition: Vec<Vec<f64>>,
        delays: Vec<(String, f64, f64, f64, f64)>,
    ) -> PyResult<Self> {
        let delays = delays
            .into_iter()
            .map(|(family, min, max, mean, std)| match family.as_str() {
                "uniform" => DelayDistribution::uniform(min, max),
                "truncated_normal" => DelayDistribution::new(mean, std, min, max, DelayFamily::TruncatedNormal),
                other => Err(tolc::jitter::JitterError::InvalidLabel(other.to_string())),
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(value_err)?;
        tolc::MarkovDelayModel::new(states, transition, delays)
            .map(Self)
            .map_err(value_err)
    }

    #[staticmethod]
    fn low_high_demo() -> Self {
        Self(tolc::MarkovDelayModel::low_high_demo())
    }

    #[getter]
    fn states(&self) -> Vec<String> {
        self.0.states().to_vec()
    }

    fn stationary_distribution(&self) -> PyResult<Vec<f64>> {
        self.0.stationary_distribution().map_err(value_err)
    }

    /// `(mu_N, sigma_N)` of the stationary delay mixture.
    fn network_moments(&self) -> PyResult<(f64, f64)> {
        self.0.network_moments().map_err(value_err)
    }
}

/// `(sigma_T, mu_T)` from hardware, software and network terms.
#[pyfunction]
fn composite_stats(
    alpha_c: f64,
    tau_s: f64,
    j_exec: f64,
    network: PyRef<'_, PyMarkovDelayModel>,
) -> PyResult<(f64, f64)> {
    let hw = tolc::HardwareJitter::new(alpha_c).map_err(value_err)?;
    let sw = tolc::SoftwareJitter::new(tau_s, j_exec).map_err(value_err)?;
    let s = stats(&hw, &sw, &network.0).map_err(value_err)?;
    Ok((s.sigma_t, s.mu_t))
}

type ViolationRow = (u64, String, f64, f64, f64);

#[pyclass(name = "TolcContract", frozen)]
struct PyTolcContract(tolc::TolcContract);

#[pymethods]
impl PyTolcContract {
    #[new]
    #[pyo3(signature = (h, tau, j_h, j_tau, machine_id = "controller"))]
    fn new(h: f64, tau: f64, j_h: f64, j_tau: f64, machine_id: &str) -> Self {
        Self(tolc::TolcContract::new(machine_id, h, tau, j_h, j_tau))
    }

    #[getter]
    fn h(&self) -> f64 {
        self.0.h
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.0.tau
    }

    #[getter]
    fn j_h(&self) -> f64 {
        self.0.j_h
    }

    #[getter]
    fn j_tau(&self) -> f64 {
        self.0.j_tau
    }

    /// Descriptions of every violated parameter constraint.
    fn validate_parameters(&self) -> Vec<String> {
        self.0.validate_parameters().iter().map(ToString::to_string).collect()
    }

    fn is_valid(&self) -> bool {
        self.0.is_valid()
    }

    /// Violations of a trace of `(k, t_s, t_a, t_u)` as `(k, kind, observed, lo, hi)`.
    fn check_trace(&self, records: Vec<(u64, f64, f64, f64)>) -> PyResult<Vec<ViolationRow>> {
        let trace = TimingTrace::new(
            records
                .into_iter()
                .map(|(k, t_s, t_a, t_u)| TimingRecord { k, t_s, t_a, t_u })
                .collect(),
        )
        .map_err(value_err)?;
        let verdict = self.0.check_trace(&trace).map_err(value_err)?;
        Ok(verdict
            .violations()
            .iter()
            .map(|v| (v.k, v.kind.to_string(), v.observed, v.allowed.lo, v.allowed.hi))
            .collect())
    }

    fn __repr__(&self) -> String {
        self.0.to_string()
    }
}

/// Synthesize a contract from a TOML workspace; returns `(contract or None, report)`.
#[pyfunction]
#[pyo3(signature = (config, rho = None, gamma = None, h = None, tau = None))]
fn synthesize(
    config: &str,
    rho: Option<f64>,
    gamma: Option<f64>,
    h: Option<f64>,
    tau: Option<f64>,
) -> PyResult<(Option<PyTolcContract>, String)> {
    let cfg = WorkspaceConfig::parse(config).map_err(value_err)?;
    let (h, tau, policy) = cfg.synthesis_inputs(h, tau, rho, gamma).map_err(value_err)?;
    let plant = cfg.plant().map_err(value_err)?;
    let bank = cfg.bank().map_err(value_err)?;
    let s = stats(
        &cfg.hardware().map_err(value_err)?,
        &cfg.software().map_err(value_err)?,
        &cfg.network().map_err(value_err)?,
    )
    .map_err(value_err)?;
    let machine_id = cfg.machine_id();
    let result = tolc::synthesize_contract(&SynthesisRequest {
        machine_id: &machine_id,
        plant: &plant,
        bank: &bank,
        stats: s,
        h,
        tau,
        policy,
        sweep: cfg.sweep(),
    })
    .map_err(value_err)?;
    Ok(match result {
        Synthesis::Feasible { contract, .. } => {
            let text = contract.to_string();
            (Some(PyTolcContract(contract)), text)
        }
        Synthesis::Infeasible { report, .. } => (None, report.describe()),
    })
}

/// One simulation of a TOML workspace as a dict of lists.
#[pyfunction]
#[pyo3(signature = (config, seed = None))]
fn simulate<'py>(py: Python<'py>, config: &str, seed: Option<u64>) -> PyResult<Bound<'py, PyDict>> {
    let cfg = WorkspaceConfig::parse(config).map_err(value_err)?;
    let scenario = cfg.scenario(seed).map_err(value_err)?;
    let res = tolc::run(&scenario).map_err(runtime_err)?;
    let out = PyDict::new(py);
    let trace: Vec<(u64, f64, f64, f64)> = res.trace.records().iter().map(|r| (r.k, r.t_s, r.t_a, r.t_u)).collect();
    out.set_item("trace", trace)?;
    out.set_item("t", res.signals.iter().map(|s| s.t).collect::<Vec<_>>())?;
    out.set_item("y", res.signals.iter().map(|s| s.y).collect::<Vec<_>>())?;
    out.set_item("u", res.signals.iter().map(|s| s.u).collect::<Vec<_>>())?;
    out.set_item("latencies", res.latencies.clone())?;
    out.set_item("satisfied", res.verdict.satisfied())?;
    out.set_item("violations", res.verdict.violations().len())?;
    out.set_item("iae", res.metrics.iae)?;
    Ok(out)
}

/// Monte Carlo aggregate over `runs` seeds starting at the configured (or given) seed.
#[pyfunction]
#[pyo3(signature = (config, runs, seed = None))]
fn monte_carlo<'py>(py: Python<'py>, config: &str, runs: usize, seed: Option<u64>) -> PyResult<Bound<'py, PyDict>> {
    let cfg = WorkspaceConfig::parse(config).map_err(value_err)?;
    let scenario = cfg.scenario(seed).map_err(value_err)?;
    let report = py.detach(|| tolc::monte_carlo(&scenario, runs)).map_err(runtime_err)?;
    let out = PyDict::new(py);
    out.set_item("pass_fraction", report.pass_fraction)?;
    out.set_item("latency_mean", report.latency_mean)?;
    out.set_item("latency_std", report.latency_std)?;
    out.set_item("predicted_latency_mean", report.predicted_latency_mean)?;
    out.set_item("predicted_sigma_t", report.predicted.sigma_t)?;
    out.set_item("samples", report.samples)?;
    Ok(out)
}

#[pymodule]
fn tolc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTransferFunction>()?;
    m.add_class::<PyMarkovDelayModel>()?;
    m.add_class::<PyTolcContract>()?;
    m.add_function(wrap_pyfunction!(jitter_margin, m)?)?;
    m.add_function(wrap_pyfunction!(effective_period_bound, m)?)?;
    m.add_function(wrap_pyfunction!(composite_stats, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo, m)?)?;
    Ok(())
}
