//! Python bindings: `import fbtransfer`.

use fbtransfer_core::harness::{self, Table};
use fbtransfer_core::oracle::TrajectoryConfig;
use fbtransfer_core::phasespace::{default_grid, min_wigner};
use fbtransfer_core::{
    self as core, noise, GainHandling, GainPolicy, GridSpec, StateSpec, SweepAxis, SweepGrid,
    SweepSpec,
};
use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: core::Error) -> PyErr {
    match e {
        core::Error::Validation { .. } | core::Error::Contract(_) | core::Error::Coverage(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

#[pyclass(name = "SystemConfig", module = "fbtransfer", frozen)]
struct PySystemConfig {
    inner: core::SystemConfig,
}

#[pymethods]
impl PySystemConfig {
    /// Canonical parameters: Ω/2π = 1 MHz, Γ/2π = 1 Hz, C = 6241, G = 8C.
    #[staticmethod]
    fn canonical() -> Self {
        PySystemConfig {
            inner: core::SystemConfig::canonical(),
        }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PySystemConfig {
            inner: core::SystemConfig::from_json(text).map_err(to_py)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    /// Copy with C = ratio · n_th, set through g_om.
    fn with_cooperativity_ratio(&self, ratio: f64) -> Self {
        PySystemConfig {
            inner: self.inner.with_cooperativity_ratio(ratio),
        }
    }

    /// Copy with an explicit feedback gain G.
    fn with_feedback_gain(&self, gain: f64) -> Self {
        let mut inner = self.inner.clone();
        inner.gain_policy = GainPolicy::Explicit(gain);
        PySystemConfig { inner }
    }

    fn with_eta(&self, eta: f64) -> Self {
        let mut inner = self.inner.clone();
        inner.eta = eta;
        PySystemConfig { inner }
    }

    /// Diagnostics as strings; empty when the configuration is clean.
    fn validate(&self) -> Vec<String> {
        core::validate(&self.inner)
            .iter()
            .map(|d| d.to_string())
            .collect()
    }

    fn derive(&self) -> PyResult<PyDerivedParams> {
        Ok(PyDerivedParams {
            inner: core::derive(&self.inner).map_err(to_py)?,
        })
    }

    #[getter]
    fn config_hash(&self) -> String {
        self.inner.hash_hex()
    }

    fn __repr__(&self) -> String {
        format!(
            "SystemConfig({})",
            serde_json::to_string(&self.inner).unwrap_or_default()
        )
    }
}

#[pyclass(name = "DerivedParams", module = "fbtransfer", frozen)]
struct PyDerivedParams {
    inner: core::DerivedParams,
}

#[pymethods]
impl PyDerivedParams {
    #[getter]
    fn omega_m(&self) -> f64 {
        self.inner.omega_m
    }
    #[getter]
    fn gamma_m(&self) -> f64 {
        self.inner.gamma_m
    }
    #[getter]
    fn gamma_f(&self) -> f64 {
        self.inner.gamma_f
    }
    #[getter]
    fn kappa(&self) -> f64 {
        self.inner.kappa
    }
    #[getter]
    fn g_om(&self) -> f64 {
        self.inner.g_om
    }
    #[getter]
    fn cooperativity(&self) -> f64 {
        self.inner.cooperativity
    }
    #[getter]
    fn n_th(&self) -> f64 {
        self.inner.n_th
    }
    #[getter]
    fn feedback_gain(&self) -> f64 {
        self.inner.feedback_gain
    }
    #[getter]
    fn eta(&self) -> f64 {
        self.inner.eta
    }
    #[getter]
    fn gamma_eff(&self) -> f64 {
        self.inner.gamma_eff()
    }

    fn __repr__(&self) -> String {
        format!(
            "DerivedParams(cooperativity={}, n_th={}, feedback_gain={}, eta={})",
            self.inner.cooperativity, self.inner.n_th, self.inner.feedback_gain, self.inner.eta
        )
    }
}

#[pyclass(name = "Gains", module = "fbtransfer", frozen)]
struct PyGains {
    inner: core::Gains,
}

#[pymethods]
impl PyGains {
    #[getter]
    fn g_x(&self) -> f64 {
        self.inner.g_x
    }
    #[getter]
    fn g_y(&self) -> f64 {
        self.inner.g_y
    }
    #[getter]
    fn overall(&self) -> f64 {
        self.inner.overall
    }
    #[getter]
    fn squeeze(&self) -> f64 {
        self.inner.squeeze
    }

    fn __repr__(&self) -> String {
        format!("Gains(g_x={}, g_y={})", self.inner.g_x, self.inner.g_y)
    }
}

/// Gains from quadrature of the response functions.
#[pyfunction]
fn gains_numeric(params: &PyDerivedParams) -> PyResult<PyGains> {
    Ok(PyGains {
        inner: core::gains_numeric(&params.inner).map_err(to_py)?,
    })
}

/// Closed-form gains, valid for Ω ≫ Γ_eff.
#[pyfunction]
fn gains_analytic(params: &PyDerivedParams) -> PyGains {
    PyGains {
        inner: core::gains_analytic(&params.inner),
    }
}

/// φ, f, χ and u at each angular frequency, as lists of complex numbers.
#[pyfunction]
fn response<'py>(
    py: Python<'py>,
    params: &PyDerivedParams,
    omegas: Vec<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let rows = harness::response_table(&params.inner, &omegas).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("omega", omegas)?;
    d.set_item(
        "phi",
        rows.iter().map(|r| r.phi).collect::<Vec<Complex64>>(),
    )?;
    d.set_item("f", rows.iter().map(|r| r.f).collect::<Vec<Complex64>>())?;
    d.set_item(
        "chi",
        rows.iter().map(|r| r.chi).collect::<Vec<Complex64>>(),
    )?;
    d.set_item("u", rows.iter().map(|r| r.u).collect::<Vec<Complex64>>())?;
    Ok(d)
}

fn json_to_dict<'py, T: serde::Serialize>(
    py: Python<'py>,
    value: &T,
) -> PyResult<Bound<'py, PyDict>> {
    let map = serde_json::to_value(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let d = PyDict::new(py);
    if let serde_json::Value::Object(m) = map {
        for (k, v) in m {
            match v {
                serde_json::Value::Number(n) => d.set_item(k, n.as_f64())?,
                other => d.set_item(k, other.to_string())?,
            }
        }
    }
    Ok(d)
}

/// Variance budget on Q and P with the gains from quadrature.
#[pyfunction]
fn variance<'py>(py: Python<'py>, params: &PyDerivedParams) -> PyResult<Bound<'py, PyDict>> {
    let gains = core::gains_numeric(&params.inner).map_err(to_py)?;
    let v = noise::variance_numeric(&params.inner, &gains).map_err(to_py)?;
    json_to_dict(py, &v)
}

/// Added-noise covariance `(v11, v12, v22)`.
#[pyfunction]
fn noise_covariance(params: &PyDerivedParams) -> PyResult<(f64, f64, f64)> {
    let gains = core::gains_numeric(&params.inner).map_err(to_py)?;
    let v = noise::variance_numeric(&params.inner, &gains).map_err(to_py)?;
    let c = noise::noise_covariance(&v).map_err(to_py)?;
    Ok((c.v11, c.v12, c.v22))
}

/// `(q, p, w)` with `w[i][j]` at `(q[i], p[j])`.
type Sampled = (Vec<f64>, Vec<f64>, Vec<Vec<f64>>);

fn state_spec(state: &str, alpha: Complex64) -> PyResult<StateSpec> {
    match state {
        "coherent" => Ok(StateSpec::coherent(alpha)),
        "fock1" => Ok(StateSpec::fock1()),
        "cat" => Ok(StateSpec::cat(alpha)),
        _ => Err(PyValueError::new_err(format!(
            "unknown state {state:?}; use coherent, fock1 or cat"
        ))),
    }
}

/// Wigner function of `state` on a square grid of half-width `extent`.
/// Returns `(q, p, w)` with `w[i][j]` at `(q[i], p[j])`.
#[pyfunction]
#[pyo3(signature = (state, alpha = Complex64::new(1.0, 0.0), extent = 6.0, samples = 256))]
fn wigner(state: &str, alpha: Complex64, extent: f64, samples: usize) -> PyResult<Sampled> {
    let spec = state_spec(state, alpha)?;
    let grid = GridSpec::square(extent, samples).map_err(to_py)?;
    let w = core::wigner_state(&spec, &grid).map_err(to_py)?;
    Ok(unpack(&w))
}

fn unpack(w: &core::PhaseSpaceGrid) -> Sampled {
    let s = &w.spec;
    let q = (0..s.n_q).map(|i| s.q(i)).collect();
    let p = (0..s.n_p).map(|j| s.p(j)).collect();
    let values = w.values.chunks(s.n_p).map(|r| r.to_vec()).collect();
    (q, p, values)
}

/// Fidelity of `state` through the channel, with the minimum of the
/// transferred Wigner function: `(fidelity, min_w)`.
#[pyfunction]
#[pyo3(signature = (params, state, alpha = Complex64::new(1.0, 0.0), paper_literal = false))]
fn fidelity(
    params: &PyDerivedParams,
    state: &str,
    alpha: Complex64,
    paper_literal: bool,
) -> PyResult<(f64, f64)> {
    let spec = state_spec(state, alpha)?;
    let gains = core::gains_numeric(&params.inner).map_err(to_py)?;
    let cov =
        noise::noise_covariance(&noise::variance_numeric(&params.inner, &gains).map_err(to_py)?)
            .map_err(to_py)?;
    let grid = default_grid(&[spec]);
    let handling = if paper_literal {
        GainHandling::Unscaled
    } else {
        GainHandling::Scaled
    };
    let target = core::wigner_state(&spec, &grid).map_err(to_py)?;
    let out = core::transfer_wigner(&spec, &cov, &gains, &grid, handling).map_err(to_py)?;
    let f = core::fidelity(&target, &out).map_err(to_py)?;
    Ok((f.value, min_wigner(&out).0))
}

/// Runs a named recipe (`fig2`, `fig3a`, `fig3b`, `fig3b-inset`) or a JSON
/// sweep description and returns the report as CSV text.
#[pyfunction]
#[pyo3(signature = (config, recipe = None, spec_json = None, seed = 0, threads = None))]
fn sweep(
    py: Python<'_>,
    config: &PySystemConfig,
    recipe: Option<&str>,
    spec_json: Option<&str>,
    seed: u64,
    threads: Option<usize>,
) -> PyResult<String> {
    let spec = match (recipe, spec_json) {
        (Some(r), None) => SweepSpec::recipe(r)
            .ok_or_else(|| PyValueError::new_err(format!("unknown recipe {r:?}")))?,
        (None, Some(text)) => {
            serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?
        }
        _ => {
            return Err(PyValueError::new_err(
                "give exactly one of recipe and spec_json",
            ))
        }
    };
    let cfg = config.inner.clone();
    let report = py
        .detach(|| core::run_sweep(&cfg, &spec, seed, threads))
        .map_err(to_py)?;
    harness::report_csv(&report).map_err(to_py)
}

/// Gains over a list of G/C values; unstable points give NaN.
#[pyfunction]
fn gain_curve(
    py: Python<'_>,
    config: &PySystemConfig,
    g_over_c: Vec<f64>,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let mut spec = SweepSpec::new(SweepAxis::GainRatio, SweepGrid::Values(g_over_c));
    spec.outputs = vec![Table::Gains];
    let cfg = config.inner.clone();
    let report = py
        .detach(|| core::run_sweep(&cfg, &spec, 0, None))
        .map_err(to_py)?;
    let pick = |f: fn(&harness::GainValues) -> f64| {
        report
            .rows
            .iter()
            .map(|r| r.gains.as_ref().map(f).unwrap_or(f64::NAN))
            .collect()
    };
    Ok((pick(|g| g.g_x), pick(|g| g.g_y)))
}

/// Monte Carlo sample moments of Q and P against the frequency-domain
/// prediction. `length` is the recorded time per trajectory in 1/Γ_eff.
#[pyfunction]
#[pyo3(signature = (params, trajectories = 16, length = 200.0, seed = 0, threads = None))]
fn simulate<'py>(
    py: Python<'py>,
    params: &PyDerivedParams,
    trajectories: usize,
    length: f64,
    seed: u64,
    threads: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let p = params.inner;
    let cfg = TrajectoryConfig::bandpass(&p, length, trajectories, seed);
    let traces = py
        .detach(|| core::simulate_ensemble(&p, &cfg, threads))
        .map_err(to_py)?;
    let m = core::sample_variance(&traces);
    let d = json_to_dict(py, &m)?;
    let gains = core::gains_numeric(&p).map_err(to_py)?;
    let v = noise::variance_numeric(&p, &gains).map_err(to_py)?;
    d.set_item("expected_var_q", v.v_q_total)?;
    d.set_item("expected_var_p", v.v_p_total)?;
    d.set_item("expected_cov_qp", v.v_qp_total)?;
    Ok(d)
}

#[pymodule]
fn fbtransfer(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystemConfig>()?;
    m.add_class::<PyDerivedParams>()?;
    m.add_class::<PyGains>()?;
    m.add_function(wrap_pyfunction!(gains_numeric, m)?)?;
    m.add_function(wrap_pyfunction!(gains_analytic, m)?)?;
    m.add_function(wrap_pyfunction!(response, m)?)?;
    m.add_function(wrap_pyfunction!(variance, m)?)?;
    m.add_function(wrap_pyfunction!(noise_covariance, m)?)?;
    m.add_function(wrap_pyfunction!(wigner, m)?)?;
    m.add_function(wrap_pyfunction!(fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(gain_curve, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
