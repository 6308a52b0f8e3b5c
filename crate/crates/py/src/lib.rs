//! Python bindings. Plans and reports cross the boundary as JSON strings,
//! the same documents the command-line tool reads and writes.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use slobatch::batching::{cost_per_request, equivalent_timeout as eq_timeout};
use slobatch::io::{to_json, ProvisionReport, RunConfig};
use slobatch::perfmodel::predict as predict_latency;
use slobatch::profile::{fit_cpu_coeffs, fit_gpu_coeffs, GpuPlatform};
use slobatch::provisioner::{KneeMode, ProvisionOptions, Strategy};
use slobatch::simulator::{gpu_slice_completion as slice_completion, simulate as run_sim, LatencyMode};
use slobatch::{AppSpec, FunctionConfig, ModelProfile, PricingConfig, Provisioner, SimConfig};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn pricing_of(p: Option<(f64, f64, f64)>) -> PyResult<PricingConfig> {
    match p {
        Some((k1, k2, k3)) => PricingConfig::new(k1, k2, k3).map_err(value_err),
        None => Ok(PricingConfig::alibaba_2023()),
    }
}

fn config_of(profile: &ModelProfile, kind: &str, resource: f64) -> PyResult<FunctionConfig> {
    let c = match kind {
        "cpu" => FunctionConfig::cpu(resource),
        "gpu" if resource.fract() == 0.0 && resource >= 0.0 => FunctionConfig::gpu(resource as u32),
        "gpu" => return Err(PyValueError::new_err("GPU memory must be a whole number of units")),
        other => return Err(PyValueError::new_err(format!("kind must be 'cpu' or 'gpu', got {other:?}"))),
    };
    c.validate(profile).map_err(value_err)?;
    Ok(c)
}

/// Fitted latency model of one DNN on the CPU and GPU platforms.
#[pyclass(name = "Profile", frozen)]
struct PyProfile {
    inner: ModelProfile,
}

#[pymethods]
impl PyProfile {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: ModelProfile::load(path).map_err(value_err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: ModelProfile::from_json(text).map_err(value_err)? })
    }

    fn to_json(&self) -> String {
        self.inner.to_document().to_json_pretty()
    }

    /// `(avg, max)` latency in seconds; `resource` is cores or memory units.
    fn predict(&self, kind: &str, resource: f64, batch: u32) -> PyResult<(f64, f64)> {
        let c = config_of(&self.inner, kind, resource)?;
        let e = predict_latency(&self.inner, &c, batch).map_err(value_err)?;
        Ok((e.avg, e.max))
    }

    #[pyo3(signature = (kind, resource, batch, pricing=None))]
    fn cost(&self, kind: &str, resource: f64, batch: u32, pricing: Option<(f64, f64, f64)>) -> PyResult<f64> {
        let c = config_of(&self.inner, kind, resource)?;
        cost_per_request(&self.inner, &pricing_of(pricing)?, &c, batch).map_err(value_err)
    }

    /// Arrival rate where the GPU becomes the cheaper function; `inf` if never.
    #[pyo3(signature = (slo, pricing=None))]
    fn knee_rate(&self, slo: f64, pricing: Option<(f64, f64, f64)>) -> PyResult<f64> {
        Ok(Provisioner::new(&self.inner, pricing_of(pricing)?).knee_rate(slo))
    }
}

/// Expected wait of the first buffered request for `(rate, timeout)` members.
#[pyfunction]
fn equivalent_timeout(members: Vec<(f64, f64)>) -> PyResult<f64> {
    eq_timeout(&members).map_err(value_err)
}

#[pyfunction]
fn gpu_slice_completion(l0: f64, mem: u32, m_max: u32, tau: f64, phase: f64) -> PyResult<f64> {
    let platform = GpuPlatform::new(m_max, tau, 1).map_err(value_err)?;
    Ok(slice_completion(l0, mem, &platform, phase))
}

/// `(alpha, beta, gamma, rms)` from `(cores, latency)` samples.
#[pyfunction]
fn fit_cpu(samples: Vec<(f64, f64)>) -> PyResult<(f64, f64, f64, f64)> {
    let f = fit_cpu_coeffs(&samples).map_err(value_err)?;
    Ok((f.coeffs.alpha, f.coeffs.beta, f.coeffs.gamma, f.rms))
}

/// `(xi1, xi2, rms)` from `(batch, latency)` samples.
#[pyfunction]
fn fit_gpu(samples: Vec<(u32, f64)>) -> PyResult<(f64, f64, f64)> {
    let f = fit_gpu_coeffs(&samples).map_err(value_err)?;
    Ok((f.coeffs.xi1, f.coeffs.xi2, f.rms))
}

/// Provisioning plan as a JSON document. `apps` holds `(id, slo, rate)`.
#[pyfunction]
#[pyo3(signature = (profile, apps, strategy="harmony", pricing=None, shards=None, knee_mode="per-window"))]
fn provision(
    profile: &PyProfile,
    apps: Vec<(String, f64, f64)>,
    strategy: &str,
    pricing: Option<(f64, f64, f64)>,
    shards: Option<usize>,
    knee_mode: &str,
) -> PyResult<String> {
    let strategy: Strategy = strategy.parse().map_err(value_err)?;
    let knee_mode = match knee_mode {
        "per-window" => KneeMode::PerWindow,
        "global" => KneeMode::Global,
        other => return Err(PyValueError::new_err(format!("unknown knee mode {other:?}"))),
    };
    let apps = apps
        .into_iter()
        .map(|(id, slo, rate)| AppSpec::new(id, slo, rate))
        .collect::<Result<Vec<_>, _>>()
        .map_err(value_err)?;
    let pricing = pricing_of(pricing)?;
    let options = ProvisionOptions { knee_mode, ..ProvisionOptions::default() };
    let result = Provisioner::with_options(&profile.inner, pricing, options)
        .provision(strategy, &apps, shards)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let config = RunConfig { command: "provision".into(), pricing: Some(pricing), ..RunConfig::default() };
    to_json(&ProvisionReport::new(config, result)).map_err(value_err)
}

/// Simulates a plan produced by [`provision`]; returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (profile, plan, duration=3600.0, seed=0, latency_mode="analytic-sampled", replications=1, pricing=None))]
fn simulate(
    profile: &PyProfile,
    plan: &str,
    duration: f64,
    seed: u64,
    latency_mode: &str,
    replications: u32,
    pricing: Option<(f64, f64, f64)>,
) -> PyResult<String> {
    let report: ProvisionReport = serde_json::from_str(plan).map_err(value_err)?;
    let latency_mode: LatencyMode = latency_mode.parse().map_err(value_err)?;
    let cfg = SimConfig { duration, seed, latency_mode, replications, keep_log: false };
    let out = run_sim(&report.result, &profile.inner, &pricing_of(pricing)?, &cfg).map_err(value_err)?;
    to_json(&out.report).map_err(value_err)
}

#[pymodule]
fn slobatch_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProfile>()?;
    m.add_function(wrap_pyfunction!(equivalent_timeout, m)?)?;
    m.add_function(wrap_pyfunction!(gpu_slice_completion, m)?)?;
    m.add_function(wrap_pyfunction!(fit_cpu, m)?)?;
    m.add_function(wrap_pyfunction!(fit_gpu, m)?)?;
    m.add_function(wrap_pyfunction!(provision, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
