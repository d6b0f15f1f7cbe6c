use num_complex::Complex64;
use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;

use qmem_core::fidelity::{self, PhaseMode};
use qmem_core::metrology::{self, CouplingConvention, InferenceMode, MeasurementScenario, TradeoffUnknown};
use qmem_core::reliability::{self, CorrelationSpec};
use qmem_core::{berry, fock, runner, Error};

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        e if e.is_numerical() => PyArithmeticError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for qmem_core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

/// Photon-number superposition with complex amplitudes.
#[pyclass(name = "StoredState", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyStoredState(fock::StoredState);

#[pymethods]
impl PyStoredState {
    #[staticmethod]
    #[pyo3(signature = (re, im = 0.0))]
    fn coherent(re: f64, im: f64) -> PyResult<Self> {
        fock::make_coherent(Complex64::new(re, im)).py().map(Self)
    }

    #[staticmethod]
    #[pyo3(signature = (re, im = 0.0, eta = 0.0, theta = 0.0))]
    fn cat(re: f64, im: f64, eta: f64, theta: f64) -> PyResult<Self> {
        fock::make_cat(Complex64::new(re, im), eta, theta).py().map(Self)
    }

    #[staticmethod]
    fn uniform(m: usize) -> Self {
        Self(fock::make_uniform(m))
    }

    #[staticmethod]
    fn fock(n: usize) -> Self {
        Self(fock::make_fock(n))
    }

    #[staticmethod]
    fn from_probabilities(probabilities: Vec<f64>) -> PyResult<Self> {
        fock::StoredState::from_probabilities(&probabilities).py().map(Self)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        fock::StoredState::from_json(text).py().map(Self)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().py()
    }

    #[getter]
    fn n_max(&self) -> usize {
        self.0.n_max()
    }

    fn probabilities(&self) -> Vec<f64> {
        self.0.probabilities()
    }

    /// `(mean, variance)` of the photon number.
    fn stats(&self) -> (f64, f64) {
        let s = fock::photon_stats(&self.0, 2);
        (s.mean, s.variance)
    }

    fn __repr__(&self) -> String {
        let (mean, var) = self.stats();
        format!("StoredState(n_max={}, mean={mean:.6}, variance={var:.6})", self.0.n_max())
    }
}

#[pyclass(name = "SystemParams", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PySystemParams(qmem_core::SystemParams);

#[pymethods]
impl PySystemParams {
    #[new]
    fn new(n_atoms: u64, delta: f64, delta_spread: f64, g: f64, g_spread: f64) -> PyResult<Self> {
        let p = qmem_core::SystemParams {
            n_atoms,
            delta,
            delta_spread,
            g,
            g_spread,
        };
        p.validate().py()?;
        Ok(Self(p))
    }

    #[getter]
    fn n_atoms(&self) -> u64 {
        self.0.n_atoms
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.0.delta
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.0)
    }
}

/// Storage cycle with a Gaussian-shaped driving pulse.
#[pyclass(name = "Protocol", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyProtocol(berry::Protocol);

#[pymethods]
impl PyProtocol {
    #[new]
    #[pyo3(signature = (tau_s, tau_d, xi = 1000.0, grid_points = 2001, convention = "paper"))]
    fn new(tau_s: f64, tau_d: f64, xi: f64, grid_points: usize, convention: &str) -> PyResult<Self> {
        let profile = qmem_core::PulseProfile::gaussian(xi, tau_d, grid_points).py()?;
        let convention = convention.parse().py()?;
        berry::Protocol::new(tau_s, profile, convention).py().map(Self)
    }

    /// `(kappa_theta, zeta_theta, alpha_theta)`.
    #[getter]
    fn factors(&self) -> (f64, f64, f64) {
        let f = &self.0.factors;
        (f.kappa_theta, f.zeta_theta, f.alpha_theta)
    }
}

#[pyclass(name = "PhaseModel", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyPhaseModel(berry::PhaseModel);

#[pymethods]
impl PyPhaseModel {
    #[staticmethod]
    fn build(params: &PySystemParams, protocol: &PyProtocol) -> PyResult<Self> {
        berry::build_phase_model(&params.0, &protocol.0).py().map(Self)
    }

    #[staticmethod]
    fn from_variance(gamma0: f64, gamma: f64, n_atoms: u64) -> Self {
        Self(berry::PhaseModel::from_variance(gamma0, gamma, n_atoms))
    }

    #[getter]
    fn gamma0(&self) -> f64 {
        self.0.gamma0
    }

    #[getter]
    fn mu0(&self) -> f64 {
        self.0.mu0
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.0.gamma
    }

    #[getter]
    fn gamma_over_n(&self) -> f64 {
        self.0.gamma_over_n()
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().py()
    }
}

fn states_of(states: &[PyRef<'_, PyStoredState>]) -> Vec<fock::StoredState> {
    states.iter().map(|s| s.0.clone()).collect()
}

#[pyfunction]
#[pyo3(signature = (xi, tau_d = 1.0, convention = "definition"))]
fn pulse_factors(xi: f64, tau_d: f64, convention: &str) -> PyResult<(f64, f64, f64)> {
    let profile = qmem_core::PulseProfile::gaussian(xi, tau_d, 2001).py()?;
    let f = qmem_core::pulse_factors(&profile, convention.parse().py()?).py()?;
    Ok((f.kappa_theta, f.zeta_theta, f.alpha_theta))
}

#[pyfunction]
#[pyo3(signature = (state, model, compensated = true))]
fn fidelity_analytic(state: &PyStoredState, model: &PyPhaseModel, compensated: bool) -> f64 {
    fidelity::fidelity_analytic(&state.0, &model.0, compensated).value
}

/// Returns `(value, std_error)`.
#[pyfunction]
#[pyo3(signature = (state, params, protocol, samples, seed, phase_mode = "linear", compensated = true))]
fn fidelity_monte_carlo(
    py: Python<'_>,
    state: &PyStoredState,
    params: &PySystemParams,
    protocol: &PyProtocol,
    samples: u64,
    seed: u64,
    phase_mode: &str,
    compensated: bool,
) -> PyResult<(f64, f64)> {
    let mode = match phase_mode {
        "linear" => PhaseMode::Linear,
        "exact" => PhaseMode::Exact,
        other => return Err(PyValueError::new_err(format!("unknown phase mode '{other}'"))),
    };
    let r = py
        .detach(|| {
            fidelity::fidelity_monte_carlo(&state.0, &params.0, &protocol.0, mode, samples, seed, compensated)
        })
        .py()?;
    Ok((r.value, r.std_error))
}

#[pyfunction]
fn series_coefficients(state: &PyStoredState, max_m: usize) -> PyResult<Vec<f64>> {
    fidelity::series_coefficients(&state.0, max_m).py()
}

/// Returns `(value, truncation_error)`.
#[pyfunction]
#[pyo3(signature = (state, x, max_m = 3))]
fn fidelity_series(state: &PyStoredState, x: f64, max_m: usize) -> PyResult<(f64, f64)> {
    let r = fidelity::fidelity_series(&state.0, x, max_m).py()?;
    Ok((r.value, r.truncation_error))
}

#[pyfunction]
fn fidelity_lower_bound(x: f64) -> PyResult<f64> {
    fidelity::fidelity_lower_bound(x).py().map(|r| r.value)
}

#[pyfunction]
fn fidelity_coherent_closed(re: f64, im: f64, phase_error: f64) -> f64 {
    fidelity::fidelity_coherent_closed(Complex64::new(re, im), phase_error).value
}

#[pyfunction]
fn compensated_fidelity_at(state: &PyStoredState, x: f64) -> f64 {
    fidelity::compensated_fidelity_at(&state.0, x)
}

#[pyfunction]
#[pyo3(signature = (state, x_lo = 10.0, x_hi = 100.0, points = 20))]
fn tail_exponent(state: &PyStoredState, x_lo: f64, x_hi: f64, points: usize) -> PyResult<f64> {
    fidelity::tail_exponent(&state.0, x_lo, x_hi, points).py().map(|t| t.slope)
}

#[pyfunction]
#[pyo3(signature = (states, model, compensated = true))]
fn reliability_sync(states: Vec<PyRef<'_, PyStoredState>>, model: &PyPhaseModel, compensated: bool) -> PyResult<f64> {
    reliability::reliability_sync(&states_of(&states), &model.0, compensated).py()
}

#[pyfunction]
#[pyo3(signature = (state, model, k, compensated = true))]
fn reliability_repeater(state: &PyStoredState, model: &PyPhaseModel, k: usize, compensated: bool) -> PyResult<f64> {
    reliability::reliability_repeater(&state.0, &model.0, k, compensated).py()
}

#[pyfunction]
#[pyo3(signature = (states, model, rho, compensated = true))]
fn reliability_general(
    py: Python<'_>,
    states: Vec<PyRef<'_, PyStoredState>>,
    model: &PyPhaseModel,
    rho: Vec<Vec<f64>>,
    compensated: bool,
) -> PyResult<f64> {
    let spec = CorrelationSpec::custom(rho).py()?;
    let states = states_of(&states);
    py.detach(|| reliability::reliability_general(&states, &model.0, &spec, compensated))
        .py()
}

#[pyfunction]
fn capacity_from_variance(max_variance: f64) -> PyResult<f64> {
    metrology::capacity_from_variance(max_variance).py()
}

#[pyfunction]
fn residual_detuning(tau_s_de: f64, tau_d_de: f64, delta_true: f64, alpha_theta: f64) -> PyResult<f64> {
    metrology::residual_detuning(&MeasurementScenario {
        tau_s_de,
        tau_d_de,
        delta_true,
        alpha_theta,
    })
    .py()
}

#[pyfunction]
fn infer_detuning(measured_phase: f64, tau_s: f64, tau_d: f64, kappa_theta: f64, mode: &str) -> PyResult<f64> {
    let mode: InferenceMode = mode.parse().py()?;
    metrology::infer_detuning(measured_phase, tau_s, tau_d, kappa_theta, mode).py()
}

/// Solves the trade-off for `solve_for` in {"tau_s", "tau_d", "capacity"} with the fixed pulse constants.
#[pyfunction]
#[pyo3(signature = (target_fidelity, params, solve_for, capacity = None, tau_s = None, tau_d = None, coupling_convention = "printed"))]
fn tradeoff_solve(
    target_fidelity: f64,
    params: &PySystemParams,
    solve_for: &str,
    capacity: Option<f64>,
    tau_s: Option<f64>,
    tau_d: Option<f64>,
    coupling_convention: &str,
) -> PyResult<f64> {
    let need = |v: Option<f64>, name: &str| {
        v.ok_or_else(|| PyValueError::new_err(format!("{name} must be given when solving for {solve_for}")))
    };
    let unknown = match solve_for {
        "tau_s" => TradeoffUnknown::TauS {
            capacity: need(capacity, "capacity")?,
            tau_d: need(tau_d, "tau_d")?,
        },
        "tau_d" => TradeoffUnknown::TauD {
            capacity: need(capacity, "capacity")?,
            tau_s: need(tau_s, "tau_s")?,
        },
        "capacity" => TradeoffUnknown::Capacity {
            tau_s: need(tau_s, "tau_s")?,
            tau_d: need(tau_d, "tau_d")?,
        },
        other => return Err(PyValueError::new_err(format!("unknown variable '{other}'"))),
    };
    let convention = match coupling_convention {
        "printed" => CouplingConvention::Printed,
        "phase_model" => CouplingConvention::PhaseModel,
        other => return Err(PyValueError::new_err(format!("unknown convention '{other}'"))),
    };
    let factors = qmem_core::PulseFactors::paper_constants();
    metrology::tradeoff_solve(target_fidelity, &params.0, &factors, convention, unknown).py()
}

/// Runs a JSON run configuration and returns its CSV output.
#[pyfunction]
fn run_config(py: Python<'_>, document: &str) -> PyResult<String> {
    let config = runner::validate_config(document).py()?;
    py.detach(|| runner::run(&config)).py()
}

#[pymodule]
fn qmem(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyStoredState>()?;
    m.add_class::<PySystemParams>()?;
    m.add_class::<PyProtocol>()?;
    m.add_class::<PyPhaseModel>()?;
    m.add_function(wrap_pyfunction!(pulse_factors, m)?)?;
    m.add_function(wrap_pyfunction!(fidelity_analytic, m)?)?;
    m.add_function(wrap_pyfunction!(fidelity_monte_carlo, m)?)?;
    m.add_function(wrap_pyfunction!(series_coefficients, m)?)?;
    m.add_function(wrap_pyfunction!(fidelity_series, m)?)?;
    m.add_function(wrap_pyfunction!(fidelity_lower_bound, m)?)?;
    m.add_function(wrap_pyfunction!(fidelity_coherent_closed, m)?)?;
    m.add_function(wrap_pyfunction!(compensated_fidelity_at, m)?)?;
    m.add_function(wrap_pyfunction!(tail_exponent, m)?)?;
    m.add_function(wrap_pyfunction!(reliability_sync, m)?)?;
    m.add_function(wrap_pyfunction!(reliability_repeater, m)?)?;
    m.add_function(wrap_pyfunction!(reliability_general, m)?)?;
    m.add_function(wrap_pyfunction!(capacity_from_variance, m)?)?;
    m.add_function(wrap_pyfunction!(residual_detuning, m)?)?;
    m.add_function(wrap_pyfunction!(infer_detuning, m)?)?;
    m.add_function(wrap_pyfunction!(tradeoff_solve, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
