//! Python bindings for the cubicml search loop.
//!
//! Configurations, job records and reports cross the boundary as plain
//! Python dicts and lists (via JSON).
//!
//!     import cubicml_py as cm
//!     space = cm.SearchSpace.from_file("spaces/ads_fsdp_reduced.space")
//!     sim = cm.Simulator("fsdp", "sims/fsdp_reduced.params")
//!     report = cm.run_loop(space, sim, {"bootstrap": 60, "rounds": 2})
//!     print(report["best_metric"], report["best_config"])

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;
use serde::de::DeserializeOwned;
use serde::Serialize;

use cubicml::metrics::CorrelationReport;
use cubicml::orchestrator::{self, LoopConfig};
use cubicml::predictor::{self, Backend, ConfigScorer, Dataset};
use cubicml::sim::{self, DatasetOptions, ExecError, Executor, JobContext};
use cubicml::space::{self, ConfigPoint, SpaceError};
use cubicml::store::{JobRecord, JobStore, StoreError};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn space_err(e: SpaceError) -> PyErr {
    match e {
        SpaceError::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => value_err(e),
    }
}

fn store_err(e: StoreError) -> PyErr {
    match e {
        StoreError::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => value_err(e),
    }
}

fn exec_err(e: ExecError) -> PyErr {
    match e {
        ExecError::ParamsFile { .. } => PyIOError::new_err(e.to_string()),
        _ => value_err(e),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(value_err)
}

/// A search space loaded from a TOML space document.
#[pyclass(frozen, module = "cubicml_py")]
struct SearchSpace {
    inner: space::SearchSpace,
}

impl SearchSpace {
    fn config(&self, obj: &Bound<'_, PyAny>) -> PyResult<ConfigPoint> {
        let cfg: ConfigPoint = from_py(obj)?;
        let idx = self.inner.indices_of(&cfg).map_err(space_err)?;
        Ok(self.inner.config_from_indices(&idx))
    }
}

#[pymethods]
impl SearchSpace {
    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        let inner = space::SearchSpace::from_file(path).map_err(space_err)?;
        Ok(SearchSpace { inner })
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        let inner = space::SearchSpace::parse(text).map_err(space_err)?;
        Ok(SearchSpace { inner })
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn version(&self) -> u32 {
        self.inner.version
    }

    /// Exact number of configurations.
    fn cardinality(&self) -> num_bigint::BigUint {
        self.inner.cardinality()
    }

    fn dimension_names(&self) -> Vec<String> {
        self.inner.dimensions().iter().map(|d| d.name.clone()).collect()
    }

    fn sample(&self, py: Python<'_>, seed: u64) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.sample_uniform(seed))
    }

    fn contains(&self, config: &Bound<'_, PyAny>) -> bool {
        self.config(config).is_ok()
    }

    fn __repr__(&self) -> String {
        format!("SearchSpace({:?}, cardinality={})", self.inner.name, self.inner.cardinality())
    }
}

/// A simulated executor: "fsdp" or "llm", with an optional TOML parameter file.
#[pyclass(frozen, module = "cubicml_py")]
struct Simulator {
    inner: Box<dyn Executor>,
}

#[pymethods]
impl Simulator {
    #[new]
    #[pyo3(signature = (name, params=None))]
    fn new(name: &str, params: Option<PathBuf>) -> PyResult<Self> {
        let inner = sim::executor_by_name(name, params.as_deref()).map_err(exec_err)?;
        Ok(Simulator { inner })
    }

    #[getter]
    fn name(&self) -> &str {
        self.inner.name()
    }

    /// Runs one job and returns `{"status", "metric", "scale"}`.
    #[pyo3(signature = (space, config, timestamp=0.0))]
    fn execute(
        &self,
        py: Python<'_>,
        space: &SearchSpace,
        config: &Bound<'_, PyAny>,
        timestamp: f64,
    ) -> PyResult<Py<PyAny>> {
        let cfg = space.config(config)?;
        let out = self.inner.execute(&cfg, &JobContext { timestamp }).map_err(exec_err)?;
        let record = out.into_record(cfg, timestamp, "adhoc");
        to_py(py, &serde_json::json!({
            "status": record.status,
            "metric": record.metric,
            "scale": record.scale,
        }))
    }

    fn without_noise(&self) -> Simulator {
        Simulator {
            inner: self.inner.without_noise(),
        }
    }

    fn __repr__(&self) -> String {
        format!("Simulator({:?})", self.inner.name())
    }
}

/// A fitted predictor.
#[pyclass(frozen, module = "cubicml_py")]
struct Predictor {
    inner: predictor::Predictor,
}

#[pymethods]
impl Predictor {
    /// Fits on the completed records. `backend` is a dict such as
    /// `{"backend": "gbdt", "log_target": True}`; the default is the MLP ensemble.
    #[staticmethod]
    #[pyo3(signature = (space, records, backend=None, seed=0))]
    fn fit(
        py: Python<'_>,
        space: &SearchSpace,
        records: &Bound<'_, PyAny>,
        backend: Option<&Bound<'_, PyAny>>,
        seed: u64,
    ) -> PyResult<Self> {
        let records: Vec<JobRecord> = from_py(records)?;
        let backend: Backend = match backend {
            Some(b) => from_py(b)?,
            None => Backend::default(),
        };
        let data = Dataset::from_records(&space.inner, backend.encoding(), &records).map_err(value_err)?;
        let inner = py.detach(|| backend.fit(&data, seed)).map_err(value_err)?;
        Ok(Predictor { inner })
    }

    fn predict(&self, space: &SearchSpace, config: &Bound<'_, PyAny>) -> PyResult<f64> {
        let cfg = space.config(config)?;
        ConfigScorer::new(&space.inner, &self.inner)
            .and_then(|s| s.score(&cfg))
            .map_err(value_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(|e| PyIOError::new_err(e.to_string()))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = predictor::Predictor::load(path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        Ok(Predictor { inner })
    }
}

/// Runs bootstrap plus search rounds and returns the final report as a dict.
/// With `history` the job history is also written to that JSON-lines file.
#[pyfunction]
#[pyo3(signature = (space, simulator, config=None, history=None))]
fn run_loop(
    py: Python<'_>,
    space: &SearchSpace,
    simulator: &Simulator,
    config: Option<&Bound<'_, PyAny>>,
    history: Option<PathBuf>,
) -> PyResult<Py<PyAny>> {
    let config: LoopConfig = match config {
        Some(c) => from_py(c)?,
        None => LoopConfig::default(),
    };
    let mut store = match history {
        Some(p) => JobStore::open(p).map_err(store_err)?,
        None => JobStore::in_memory(),
    };
    let report = py
        .detach(|| orchestrator::run_loop(&space.inner, simulator.inner.as_ref(), &mut store, &config))
        .map_err(value_err)?;
    to_py(py, &report)
}

/// Synthetic job history as a list of record dicts, sorted by timestamp.
#[pyfunction]
#[pyo3(signature = (space, simulator, count, seed=0))]
fn generate_dataset(
    py: Python<'_>,
    space: &SearchSpace,
    simulator: &Simulator,
    count: usize,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let opts = DatasetOptions::new(count, seed);
    let records = py
        .detach(|| sim::generate_dataset(&space.inner, simulator.inner.as_ref(), &opts))
        .map_err(exec_err)?;
    to_py(py, &records)
}

/// Best configuration by brute force; returns `(config, metric)` or `None`.
#[pyfunction]
fn exhaustive_optimum(py: Python<'_>, space: &SearchSpace, simulator: &Simulator) -> PyResult<Py<PyAny>> {
    let best = py
        .detach(|| sim::exhaustive_optimum(&space.inner, simulator.inner.as_ref(), sim::EXHAUSTIVE_LIMIT))
        .map_err(exec_err)?;
    to_py(py, &best)
}

/// Reads a JSON-lines job history into a list of record dicts.
#[pyfunction]
fn load_history(py: Python<'_>, path: PathBuf) -> PyResult<Py<PyAny>> {
    to_py(py, &JobStore::load(path).map_err(store_err)?)
}

/// `{"kendall", "pearson", "spearman", "n"}` for predicted versus actual.
#[pyfunction]
fn correlation_report(py: Python<'_>, predicted: Vec<f64>, actual: Vec<f64>) -> PyResult<Py<PyAny>> {
    to_py(py, &CorrelationReport::compute(&predicted, &actual).map_err(value_err)?)
}

#[pyfunction]
fn kendall_tau(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    cubicml::kendall_tau(&x, &y).map_err(value_err)
}

#[pyfunction]
fn pearson(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    cubicml::pearson(&x, &y).map_err(value_err)
}

#[pyfunction]
fn spearman(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    cubicml::spearman(&x, &y).map_err(value_err)
}

/// Nearest-rank percentile of per-step samples.
#[pyfunction]
#[pyo3(signature = (samples, percentile=90.0))]
fn aggregate_metric(samples: Vec<f64>, percentile: f64) -> PyResult<f64> {
    cubicml::aggregate_metric(&samples, percentile).map_err(value_err)
}

#[pyfunction]
fn derive_seed(seed: u64, component: &str) -> u64 {
    cubicml::derive_seed(seed, component)
}

#[pymodule]
fn cubicml_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<SearchSpace>()?;
    m.add_class::<Simulator>()?;
    m.add_class::<Predictor>()?;
    m.add_function(wrap_pyfunction!(run_loop, m)?)?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(exhaustive_optimum, m)?)?;
    m.add_function(wrap_pyfunction!(load_history, m)?)?;
    m.add_function(wrap_pyfunction!(correlation_report, m)?)?;
    m.add_function(wrap_pyfunction!(kendall_tau, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate_metric, m)?)?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    Ok(())
}
