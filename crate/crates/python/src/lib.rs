//! Python bindings: parse, simulate, localize and repair charts.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ::flowmend::dsl;
use ::flowmend::engine::{self, Algo, RunConfig};
use ::flowmend::localize as fl;
use ::flowmend::model::{self, Value, VarKind};
use ::flowmend::oracle;
use ::flowmend::sim::{self, StimulusSet};

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl ToString) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn to_py(py: Python<'_>, v: Value) -> PyResult<Py<PyAny>> {
    Ok(match v {
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any().unbind(),
        Value::Int(i) => i.into_pyobject(py)?.into_any().unbind(),
        Value::Real(r) => r.into_pyobject(py)?.into_any().unbind(),
    })
}

/// A parsed and validated chart.
#[pyclass(module = "flowmend", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Chart {
    inner: model::Chart,
}

#[pymethods]
impl Chart {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        dsl::parse(text).map(|inner| Chart { inner }).map_err(|d| value_err(join(&d)))
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        dsl::parse_file(&path).map(|inner| Chart { inner }).map_err(|d| value_err(join(&d)))
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn states(&self) -> Vec<String> {
        self.inner.states.iter().map(|s| s.name.clone()).collect()
    }

    /// `(id, label)` for every state and transition.
    fn components(&self) -> Vec<(String, String)> {
        self.inner.components().into_iter().map(|(id, _)| (id.to_string(), self.inner.label(id))).collect()
    }

    fn serialize(&self) -> String {
        dsl::serialize(&self.inner)
    }

    /// Unified diff from this chart to `other`; empty when equal.
    fn diff(&self, other: &Chart) -> String {
        dsl::render_diff(&self.inner, &other.inner)
    }

    /// Applies a patch given as the JSON written to `NNN.patch.json`.
    fn apply_patch(&self, patch_json: &str) -> PyResult<Chart> {
        let patch: model::Patch = serde_json::from_str(patch_json).map_err(value_err)?;
        model::apply_patch(&self.inner, &patch).map(|inner| Chart { inner }).map_err(value_err)
    }

    fn __eq__(&self, other: &Chart) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("<Chart {} states={} transitions={}>", self.inner.name, self.inner.states.len(), self.inner.transitions.len())
    }
}

fn join(d: &[dsl::Diagnostic]) -> String {
    d.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n")
}

/// A test suite loaded from `<dir>/<test>/{stim.csv, expected.csv, test.json}`.
#[pyclass(module = "flowmend", frozen)]
struct TestSuite {
    inner: oracle::TestSuite,
}

#[pymethods]
impl TestSuite {
    /// Loads the suite; with `check`, the chart must fail the failing test
    /// and pass the others.
    #[staticmethod]
    #[pyo3(signature = (dir, chart, check = true))]
    fn load(dir: PathBuf, chart: &Chart, check: bool) -> PyResult<Self> {
        let inner = if check {
            oracle::TestSuite::load(&dir, &chart.inner)
        } else {
            oracle::TestSuite::load_unchecked(&dir, &chart.inner)
        };
        inner.map(|inner| TestSuite { inner }).map_err(value_err)
    }

    #[getter]
    fn failing(&self) -> String {
        self.inner.failing.name.clone()
    }

    #[getter]
    fn passing(&self) -> Vec<String> {
        self.inner.passing.iter().map(|t| t.name.clone()).collect()
    }
}

fn verdict_dict<'py>(py: Python<'py>, v: &oracle::Verdict) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("pass", v.pass)?;
    d.set_item("o1", v.o1_failure_active)?;
    d.set_item("o2", v.o2_failure_onset)?;
    d.set_item("o3", v.o3_severity)?;
    d.set_item("regression", v.regression)?;
    d.set_item("sim_error", v.sim_error.clone())?;
    Ok(d)
}

/// Simulates `chart` on a stimulus CSV and returns `{output: [values]}`.
#[pyfunction]
#[pyo3(signature = (chart, stim_csv, dt = None, duration = None))]
fn simulate(py: Python<'_>, chart: &Chart, stim_csv: PathBuf, dt: Option<f64>, duration: Option<f64>) -> PyResult<Py<PyDict>> {
    let c = &chart.inner;
    let table = sim::read_csv_table(&stim_csv).map_err(value_err)?;
    let dt = match dt {
        Some(dt) => dt,
        None => table.dt().map_err(value_err)?.unwrap_or(0.1),
    };
    let inputs = table
        .to_traces(dt, |n| c.var(n).filter(|v| v.kind == VarKind::Input).map(|v| v.ty))
        .map_err(value_err)?;
    let duration = duration.unwrap_or(*table.times.last().expect("non-empty"));
    let result = py
        .detach(|| sim::simulate(c, &StimulusSet { dt, duration, inputs }))
        .map_err(runtime_err)?;
    let out = PyDict::new(py);
    for trace in &result.outputs {
        let values = trace.values.iter().map(|v| to_py(py, *v)).collect::<PyResult<Vec<_>>>()?;
        out.set_item(&trace.name, values)?;
    }
    Ok(out.unbind())
}

/// Runs the failing test and, if it passes, the passing tests.
#[pyfunction]
fn run_suite(py: Python<'_>, chart: &Chart, suite: &TestSuite) -> PyResult<Py<PyDict>> {
    let v = py.detach(|| oracle::run_suite(&chart.inner, &suite.inner));
    let d = PyDict::new(py);
    d.set_item("plausible", v.plausible)?;
    d.set_item("failing", verdict_dict(py, &v.failing)?)?;
    d.set_item("passing", v.passing.iter().map(|p| verdict_dict(py, p)).collect::<PyResult<Vec<_>>>()?)?;
    Ok(d.unbind())
}

/// Tarantula ranking as a list of `{component, label, ef, ep, score}`.
#[pyfunction]
fn localize(py: Python<'_>, chart: &Chart, suite: &TestSuite) -> PyResult<Vec<Py<PyDict>>> {
    let ranking = py.detach(|| fl::localize(&chart.inner, &suite.inner)).map_err(runtime_err)?;
    ranking
        .entries()
        .iter()
        .map(|e| {
            let d = PyDict::new(py);
            d.set_item("component", e.component.to_string())?;
            d.set_item("label", chart.inner.label(e.component))?;
            d.set_item("ef", e.ef)?;
            d.set_item("ep", e.ep)?;
            d.set_item("score", e.score)?;
            Ok(d.unbind())
        })
        .collect()
}

/// Searches for plausible patches. Returns `{plausible: [...], candidates,
/// elapsed, summary}`; each plausible entry holds the patched `chart`, the
/// `patch` JSON and the `diff`.
#[pyfunction]
#[pyo3(signature = (chart, suite, budget = 120.0, seed = 0, algo = "flowrepair", local_tries = 30))]
fn repair(
    py: Python<'_>,
    chart: &Chart,
    suite: &TestSuite,
    budget: f64,
    seed: u64,
    algo: &str,
    local_tries: usize,
) -> PyResult<Py<PyDict>> {
    let algo: Algo = algo.parse().map_err(value_err)?;
    let cfg = RunConfig { budget, seed, algo, local_tries, ..RunConfig::default() };
    let (plausible, log) = py
        .detach(|| {
            let ranking = fl::localize(&chart.inner, &suite.inner).map_err(|e| e.to_string())?;
            engine::run(&chart.inner, &suite.inner, &ranking, &cfg).map_err(|e| e.to_string())
        })
        .map_err(runtime_err)?;
    let entries = plausible
        .iter()
        .map(|e| {
            let patched = e.chart().expect("fresh entries keep their chart").clone();
            let d = PyDict::new(py);
            d.set_item("patch", serde_json::to_string(&e.patch).map_err(runtime_err)?)?;
            d.set_item("diff", dsl::render_diff(&chart.inner, &patched))?;
            d.set_item("found_at", e.found_at)?;
            d.set_item("chart", Chart { inner: patched })?;
            Ok(d.unbind())
        })
        .collect::<PyResult<Vec<_>>>()?;
    let summary: BTreeMap<String, usize> = engine::summary_rows(&log)
        .iter()
        .map(|r| (format!("{}", r.t_seconds), r.plausible_count))
        .collect();
    let d = PyDict::new(py);
    d.set_item("plausible", entries)?;
    d.set_item("candidates", log.candidates.len())?;
    d.set_item("elapsed", log.elapsed)?;
    d.set_item("summary", summary)?;
    Ok(d.unbind())
}

#[pymodule]
fn flowmend(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Chart>()?;
    m.add_class::<TestSuite>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite, m)?)?;
    m.add_function(wrap_pyfunction!(localize, m)?)?;
    m.add_function(wrap_pyfunction!(repair, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
