//! Python bindings (`import pychsh`).

use chsh_verify::harness::{self, ExperimentSpec, Sweep, SweepParam};
use chsh_verify::netsim::NetworkConfig;
use chsh_verify::protocols::{self, FixedState};
use chsh_verify::quantum::{self as q, Mat4, Party};
use chsh_verify::stats;
use chsh_verify::teleport::{pauli_eigenstates, teleport_report_with_budget};
use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn err(e: chsh_verify::Error) -> PyErr {
    match e {
        chsh_verify::Error::SourceExhausted { .. } | chsh_verify::Error::AttemptCap(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Round-trips a serialisable value through JSON into Python objects.
fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Two-qubit density matrix.
#[pyclass(name = "DensityMatrix", module = "pychsh", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyDensityMatrix {
    inner: q::DensityMatrix,
}

#[pymethods]
impl PyDensityMatrix {
    /// From a 4×4 nested list of (complex) numbers.
    #[new]
    fn new(rows: Vec<Vec<Complex64>>) -> PyResult<Self> {
        if rows.len() != 4 || rows.iter().any(|r| r.len() != 4) {
            return Err(PyValueError::new_err("expected a 4x4 matrix"));
        }
        let m = Mat4::from_fn(|i, j| rows[i][j]);
        Ok(Self {
            inner: q::DensityMatrix::new(m).map_err(err)?,
        })
    }

    #[staticmethod]
    fn phi_plus() -> Self {
        Self {
            inner: q::bell_state_phi_plus(),
        }
    }

    #[staticmethod]
    fn werner(w: f64) -> PyResult<Self> {
        Ok(Self {
            inner: q::DensityMatrix::werner(w).map_err(err)?,
        })
    }

    #[staticmethod]
    fn werner_with_fidelity(fidelity: f64) -> PyResult<Self> {
        Ok(Self {
            inner: q::DensityMatrix::werner_with_fidelity(fidelity).map_err(err)?,
        })
    }

    #[staticmethod]
    fn maximally_mixed() -> Self {
        Self {
            inner: q::DensityMatrix::maximally_mixed(),
        }
    }

    /// Depolarizes Alice's (`"alice"`) or Bob's (`"bob"`) qubit with probability `p`.
    fn depolarize(&self, party: &str, p: f64) -> PyResult<Self> {
        let which = match party {
            "alice" => Party::Alice,
            "bob" => Party::Bob,
            other => return Err(PyValueError::new_err(format!("unknown party {other:?}"))),
        };
        Ok(Self {
            inner: q::depolarize_one_qubit(&self.inner, which, p).map_err(err)?,
        })
    }

    fn mix(&self, other: &PyDensityMatrix, weight: f64) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.mix(&other.inner, weight).map_err(err)?,
        })
    }

    fn matrix(&self) -> Vec<Vec<Complex64>> {
        let m = self.inner.matrix();
        (0..4).map(|i| (0..4).map(|j| m[(i, j)]).collect()).collect()
    }

    fn chsh(&self) -> f64 {
        q::chsh_expectation(&self.inner)
    }

    fn fidelity(&self) -> f64 {
        q::entanglement_fidelity(&self.inner)
    }

    fn min_eigenvalue(&self) -> f64 {
        self.inner.min_eigenvalue()
    }

    /// Average fidelity of teleporting the six Pauli eigenstates through this pair.
    fn teleport_fidelity(&self) -> PyResult<f64> {
        let report = teleport_report_with_budget(std::slice::from_ref(&self.inner), &pauli_eigenstates(), None)
            .map_err(err)?;
        Ok(report.average_fidelity)
    }

    fn __repr__(&self) -> String {
        format!(
            "DensityMatrix(F={:.6}, S={:.6})",
            q::entanglement_fidelity(&self.inner),
            q::chsh_expectation(&self.inner)
        )
    }
}

fn method(name: Option<&str>) -> PyResult<Option<stats::Method>> {
    name.map(|n| n.parse::<stats::Method>().map_err(PyValueError::new_err)).transpose()
}

/// Copies per setting for precision `epsilon` at confidence `1 - delta`.
#[pyfunction]
#[pyo3(signature = (epsilon, delta, method=None))]
fn plan<'py>(py: Python<'py>, epsilon: f64, delta: f64, method: Option<&str>) -> PyResult<Bound<'py, PyAny>> {
    let p = match self::method(method)? {
        Some(stats::Method::Chebyshev) => stats::sample_size_chebyshev(epsilon, delta, true),
        Some(stats::Method::Hoeffding) => stats::sample_size_hoeffding(epsilon, delta),
        None => stats::sample_size_optimal(epsilon, delta),
    }
    .map_err(err)?;
    to_py(py, &p)
}

#[pyfunction]
fn crossover_delta(epsilon: f64) -> PyResult<f64> {
    stats::crossover_delta(epsilon).map_err(err)
}

/// `(lower, upper)` fidelity bounds implied by an exact CHSH value.
#[pyfunction]
fn fidelity_bounds(s: f64) -> PyResult<(f64, f64)> {
    let b = stats::fidelity_bounds_exact(s).map_err(err)?;
    Ok((b.lower, b.upper))
}

/// `(lo, hi)` fidelity interval from an estimate `s_bar` with precision `epsilon`.
#[pyfunction]
fn fidelity_interval(s_bar: f64, epsilon: f64, delta: f64) -> PyResult<(f64, f64)> {
    let ci = stats::fidelity_interval_from_estimate(s_bar, epsilon, delta).map_err(err)?;
    Ok((ci.lo, ci.hi))
}

#[pyfunction]
fn ev_sample_size(alpha: f64, delta: f64) -> PyResult<u64> {
    Ok(stats::ev_sample_size(alpha, delta).map_err(err)?.n_per_setting)
}

#[pyfunction]
fn ev_error_bound(n: u64, alpha: f64) -> PyResult<f64> {
    protocols::ev_error_bound(n, alpha).map_err(err)
}

#[pyfunction]
fn ev_threshold(alpha: f64) -> f64 {
    protocols::ev_threshold(alpha)
}

#[pyfunction]
fn pev_threshold(alpha: f64) -> f64 {
    protocols::pev_threshold(alpha)
}

/// Estimated CHSH value from `n` copies per setting of `state`.
#[pyfunction]
#[pyo3(signature = (state, n, seed=0))]
fn estimate_chsh(state: &PyDensityMatrix, n: u64, seed: u64) -> PyResult<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut source = FixedState::new(state.inner.clone());
    Ok(protocols::estimate_chsh(&mut source, n, &mut rng).map_err(err)?.s_bar)
}

/// Runs the gapped test (when `n` is None) or the gap-free test on i.i.d.
/// copies of `state`. Returns the outcome as a dict.
#[pyfunction]
#[pyo3(signature = (state, alpha, delta=0.1, n=None, seed=0))]
fn verify<'py>(
    py: Python<'py>,
    state: &PyDensityMatrix,
    alpha: f64,
    delta: f64,
    n: Option<u64>,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut source = FixedState::new(state.inner.clone());
    let outcome = match n {
        Some(n) => protocols::verify_pev(&mut source, n, alpha, &mut rng),
        None => protocols::verify_ev(&mut source, alpha, delta, &mut rng),
    }
    .map_err(err)?;
    to_py(py, &outcome)
}

fn spec_from_kwargs(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<ExperimentSpec> {
    let mut spec = ExperimentSpec::default();
    let Some(kwargs) = kwargs else {
        return Ok(spec);
    };
    let net: &mut NetworkConfig = &mut spec.network;
    for (key, value) in kwargs.iter() {
        let key: String = key.extract()?;
        match key.as_str() {
            "distance_km" => net.distance_km = value.extract()?,
            "depolar_rate_hz" => net.channel_depolar_rate_hz = value.extract()?,
            "memory_depolar_rate_hz" => net.memory_depolar_rate_hz = value.extract()?,
            "attenuation_length_km" => net.attenuation_length_km = value.extract()?,
            "fiber_speed_km_per_s" => net.fiber_speed_km_per_s = value.extract()?,
            "attempt_rate_hz" => net.attempt_rate_hz = value.extract()?,
            "capacity" => spec.capacity = value.extract()?,
            "beta" => spec.beta = value.extract()?,
            "alpha" => spec.alpha = value.extract()?,
            "delta" => spec.delta = value.extract()?,
            "repetitions" => spec.repetitions = value.extract()?,
            "seed" => spec.seed = value.extract()?,
            other => return Err(PyValueError::new_err(format!("unknown parameter {other:?}"))),
        }
    }
    spec.validate().map_err(err)?;
    Ok(spec)
}

/// Repeated network experiments; keyword arguments override the baseline.
/// Returns aggregate metrics as a dict.
#[pyfunction]
#[pyo3(signature = (**kwargs))]
fn run_experiment<'py>(py: Python<'py>, kwargs: Option<&Bound<'py, PyDict>>) -> PyResult<Bound<'py, PyAny>> {
    let spec = spec_from_kwargs(kwargs)?;
    let metrics = py.detach(|| harness::run_experiment(&spec)).map_err(err)?;
    to_py(py, &metrics)
}

/// Sweeps `param` over `values`; returns a list of `{value, metrics}` dicts.
#[pyfunction]
#[pyo3(signature = (param, values=None, **kwargs))]
fn run_sweep<'py>(
    py: Python<'py>,
    param: &str,
    values: Option<Vec<f64>>,
    kwargs: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyAny>> {
    let param: SweepParam = param.parse().map_err(err)?;
    let mut spec = spec_from_kwargs(kwargs)?;
    spec.sweep = Some(Sweep {
        param,
        values: values.unwrap_or_else(|| param.default_grid()),
    });
    let points = py.detach(|| harness::run_sweep(&spec)).map_err(err)?;
    to_py(py, &points)
}

#[pymodule]
fn pychsh(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("TSIRELSON_BOUND", q::TSIRELSON_BOUND)?;
    m.add_class::<PyDensityMatrix>()?;
    m.add_function(wrap_pyfunction!(plan, m)?)?;
    m.add_function(wrap_pyfunction!(crossover_delta, m)?)?;
    m.add_function(wrap_pyfunction!(fidelity_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(fidelity_interval, m)?)?;
    m.add_function(wrap_pyfunction!(ev_sample_size, m)?)?;
    m.add_function(wrap_pyfunction!(ev_error_bound, m)?)?;
    m.add_function(wrap_pyfunction!(ev_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(pev_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_chsh, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    Ok(())
}
