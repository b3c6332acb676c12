//! Python bindings: generators, projections, experiment runs and trace
//! diagnostics. Structured results come back as plain dicts and lists.

use bregalt::alternator::{detect_gap, Trace};
use bregalt::diagnostics::{annotate, classify_transversality, errors_to_final, fit_rate as core_fit_rate};
use bregalt::experiment::{ExperimentConfig, Outcome};
use bregalt::legendre::{self, GeneratorParams, GENERATOR_NAMES};
use bregalt::sets::{self, SetSpec, MAP_NAMES};
use bregalt::{fixtures, Error, Point};
use pyo3::exceptions::{PyArithmeticError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

fn to_py_err(err: Error) -> PyErr {
    match err {
        Error::Domain(_) => PyArithmeticError::new_err(err.to_string()),
        Error::SolverFailure(_) => PyRuntimeError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn point(v: Vec<f64>) -> Point {
    Point::from_vec(v)
}

fn to_dict<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn rows(points: &[Point]) -> Vec<Vec<f64>> {
    points.iter().map(|p| p.as_slice().to_vec()).collect()
}

/// Legendre-type generator `f` on `R^dim`.
#[pyclass(name = "Generator", frozen)]
struct PyGenerator {
    inner: legendre::Generator,
}

#[pymethods]
impl PyGenerator {
    #[new]
    #[pyo3(signature = (name, dim, sigma=None))]
    fn new(name: &str, dim: usize, sigma: Option<f64>) -> PyResult<Self> {
        let inner = legendre::by_name(name, dim, &GeneratorParams { sigma }).map_err(to_py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// Generator of `f*`.
    fn conjugate(&self) -> Self {
        Self { inner: legendre::conjugate(&self.inner) }
    }

    /// `D(x, y)`.
    fn divergence(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
        legendre::divergence(self.inner.as_ref(), &point(x), &point(y)).map_err(to_py_err)
    }

    /// `D*(u, v)` under the conjugate.
    fn dual_divergence(&self, u: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
        legendre::dual_divergence(self.inner.as_ref(), &point(u), &point(v)).map_err(to_py_err)
    }

    fn gradient(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(legendre::gradient(self.inner.as_ref(), &point(x)).map_err(to_py_err)?.as_slice().to_vec())
    }

    /// `∇f*(y)`.
    fn conj_gradient(&self, y: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(legendre::conj_gradient(self.inner.as_ref(), &point(y)).map_err(to_py_err)?.as_slice().to_vec())
    }

    fn __repr__(&self) -> String {
        format!("Generator('{}', dim={})", self.inner.name(), self.inner.dim())
    }
}

/// Closed set described by the JSON set spec used in configs.
#[pyclass(name = "SetSpec", frozen)]
struct PySetSpec {
    inner: SetSpec,
}

#[pymethods]
impl PySetSpec {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: SetSpec = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        inner.validate().map_err(to_py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn affine(base: Vec<f64>, directions: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = SetSpec::affine(base, directions);
        inner.validate().map_err(to_py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn parametric(map: &str, params: Vec<f64>, lo: Vec<f64>, hi: Vec<f64>) -> PyResult<Self> {
        let inner = SetSpec::parametric(map, params, lo, hi);
        inner.validate().map_err(to_py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn finite(points: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = SetSpec::finite(points);
        inner.validate().map_err(to_py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn variant(&self) -> &'static str {
        self.inner.variant_name()
    }

    fn is_convex(&self) -> bool {
        self.inner.is_convex()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }
}

/// `argmin_{b′∈B} D(b′, a)`; returns `(point, divergence)`.
#[pyfunction]
fn left_project(generator: &PyGenerator, set: &PySetSpec, a: Vec<f64>) -> PyResult<(Vec<f64>, f64)> {
    let r = sets::left_project(generator.inner.as_ref(), &set.inner, &point(a)).map_err(to_py_err)?;
    Ok((r.point.as_slice().to_vec(), r.divergence_value))
}

/// `argmin_{a′∈A} D(b, a′)`; returns `(point, divergence)`.
#[pyfunction]
fn right_project(generator: &PyGenerator, set: &PySetSpec, b: Vec<f64>) -> PyResult<(Vec<f64>, f64)> {
    let r = sets::right_project(generator.inner.as_ref(), &set.inner, &point(b)).map_err(to_py_err)?;
    Ok((r.point.as_slice().to_vec(), r.divergence_value))
}

/// Experiment config: problem, run settings, diagnostics and sweep.
#[pyclass(name = "Experiment", frozen)]
struct PyExperiment {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyExperiment {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: ExperimentConfig::from_json(text).map_err(to_py_err)? })
    }

    #[staticmethod]
    fn fixture(name: &str) -> PyResult<Self> {
        fixtures::fixture(name).map(|inner| Self { inner }).ok_or_else(|| PyValueError::new_err(format!("unknown fixture '{name}'")))
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn description(&self) -> String {
        self.inner.description.clone()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn generator(&self) -> PyResult<PyGenerator> {
        Ok(PyGenerator { inner: self.inner.generator().map_err(to_py_err)? })
    }

    /// Run from the configured start, or from `start`.
    #[pyo3(signature = (start=None, max_iters=None))]
    fn run(&self, py: Python<'_>, start: Option<Vec<f64>>, max_iters: Option<usize>) -> PyResult<PyRun> {
        let mut cfg = self.inner.clone();
        if let Some(n) = max_iters {
            cfg.run.stop.max_iters = n;
        }
        let start = match start {
            Some(s) => s,
            None => cfg.default_start().map_err(to_py_err)?,
        };
        let outcome = py.detach(|| cfg.execute_from(&start)).map_err(to_py_err)?;
        Ok(PyRun { name: cfg.name.clone(), start, toggles: cfg.diagnostics.clone(), outcome })
    }
}

/// Finished run: trace columns, summary and diagnostics.
#[pyclass(name = "Run", frozen)]
struct PyRun {
    name: String,
    start: Vec<f64>,
    toggles: bregalt::experiment::DiagnosticsToggles,
    outcome: Outcome,
}

impl PyRun {
    fn trace(&self) -> &Trace {
        &self.outcome.trace
    }
}

#[pymethods]
impl PyRun {
    #[getter]
    fn a(&self) -> Vec<Vec<f64>> {
        rows(&self.trace().a)
    }

    #[getter]
    fn b(&self) -> Vec<Vec<f64>> {
        rows(&self.trace().b)
    }

    /// `D(b_k, a_k)` per row.
    #[getter]
    fn divergences(&self) -> Vec<f64> {
        self.trace().d_b_a.clone()
    }

    #[getter]
    fn stop_reason(&self) -> &'static str {
        self.trace().stop_reason.as_str()
    }

    fn __len__(&self) -> usize {
        self.trace().len()
    }

    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_dict(py, &self.outcome.summary(&self.name, &self.start, &self.toggles))
    }

    /// `{r_star, uncertainty, feasible, tail_len}`.
    fn gap<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let g = detect_gap(self.trace()).map_err(to_py_err)?;
        let d = PyDict::new(py);
        d.set_item("r_star", g.r_star)?;
        d.set_item("uncertainty", g.uncertainty)?;
        d.set_item("feasible", g.feasible)?;
        d.set_item("tail_len", g.tail_len)?;
        Ok(d)
    }

    fn transversality<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_dict(py, &classify_transversality(self.trace()))
    }

    /// Rate fit of `‖b_k − b_N‖`.
    fn rate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_dict(py, &core_fit_rate(&errors_to_final(self.trace())).map_err(to_py_err)?)
    }

    /// Per-row `(angle_rl, angle_lr, ell_rl)`, NaN where undefined.
    fn diagnostics(&self) -> Vec<(f64, f64, f64)> {
        annotate(self.outcome.generator.as_ref(), self.trace()).into_iter().map(|r| (r.angle_rl, r.angle_lr, r.ell_rl)).collect()
    }
}

/// Classify the decay of an error sequence.
#[pyfunction]
fn fit_rate<'py>(py: Python<'py>, errors: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    to_dict(py, &core_fit_rate(&errors).map_err(to_py_err)?)
}

#[pyfunction]
fn list_generators() -> Vec<&'static str> {
    GENERATOR_NAMES.to_vec()
}

#[pyfunction]
fn list_maps() -> Vec<&'static str> {
    MAP_NAMES.to_vec()
}

#[pyfunction]
fn list_fixtures() -> Vec<String> {
    fixtures::all().into_iter().map(|c| c.name).collect()
}

#[pymodule]
fn bregalt_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGenerator>()?;
    m.add_class::<PySetSpec>()?;
    m.add_class::<PyExperiment>()?;
    m.add_class::<PyRun>()?;
    m.add_function(wrap_pyfunction!(left_project, m)?)?;
    m.add_function(wrap_pyfunction!(right_project, m)?)?;
    m.add_function(wrap_pyfunction!(fit_rate, m)?)?;
    m.add_function(wrap_pyfunction!(list_generators, m)?)?;
    m.add_function(wrap_pyfunction!(list_maps, m)?)?;
    m.add_function(wrap_pyfunction!(list_fixtures, m)?)?;
    Ok(())
}
