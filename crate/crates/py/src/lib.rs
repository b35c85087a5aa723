//! Python bindings: grid cases, dataset generation, training, scoring and
//! cross-validation. Heavy work runs with the interpreter detached.

use std::path::PathBuf;

use ghm_tsa::eval_harness::{self, MetricsReport};
use ghm_tsa::ghm_boost::{self, BoostingMode, Ensemble, GHMConfig, TrainingConfig};
use ghm_tsa::grid_case::{self, GridCase};
use ghm_tsa::transient_sim::{self, Dataset, GenerationOptions};
use ghm_tsa::Error;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

#[pyclass(name = "GridCase", module = "ghm_tsa", frozen)]
pub struct PyGridCase {
    inner: GridCase,
}

#[pymethods]
impl PyGridCase {
    /// The bundled New England 39-bus case.
    #[staticmethod]
    fn ne39() -> Self {
        PyGridCase {
            inner: GridCase::ne39(),
        }
    }

    /// Parses a case from its text format.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(PyGridCase {
            inner: grid_case::parse_case(text).map_err(to_py)?,
        })
    }

    #[getter]
    fn n_buses(&self) -> usize {
        self.inner.n_buses()
    }

    #[getter]
    fn n_branches(&self) -> usize {
        self.inner.n_branches()
    }

    #[getter]
    fn n_features(&self) -> usize {
        transient_sim::feature_count(&self.inner)
    }

    fn digest(&self) -> String {
        self.inner.digest()
    }

    fn feature_names(&self) -> Vec<String> {
        transient_sim::feature_names(&self.inner)
    }

    fn describe_feature(&self, index: usize) -> String {
        transient_sim::describe_feature(&self.inner, index)
    }

    fn __repr__(&self) -> String {
        format!(
            "GridCase({} buses, {} branches)",
            self.inner.n_buses(),
            self.inner.n_branches()
        )
    }
}

#[pyclass(name = "Dataset", module = "ghm_tsa", frozen)]
pub struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn load_csv(path: PathBuf) -> PyResult<Self> {
        Ok(PyDataset {
            inner: Dataset::load_csv(path).map_err(to_py)?,
        })
    }

    fn save_csv(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save_csv(path).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn n_features(&self) -> usize {
        self.inner.n_features()
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.feature_names.clone()
    }

    /// Feature rows as a list of lists.
    #[getter]
    fn features(&self) -> Vec<Vec<f64>> {
        self.inner
            .samples
            .iter()
            .map(|s| s.features.clone())
            .collect()
    }

    /// 1 = stable, 0 = unstable.
    #[getter]
    fn labels(&self) -> Vec<u8> {
        self.inner.labels()
    }

    #[getter]
    fn tsi(&self) -> Vec<f64> {
        self.inner.samples.iter().map(|s| s.tsi).collect()
    }

    fn subset(&self, indices: Vec<usize>) -> PyResult<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.inner.len()) {
            return Err(PyValueError::new_err(format!(
                "index {bad} out of range for {} samples",
                self.inner.len()
            )));
        }
        Ok(PyDataset {
            inner: self.inner.subset(&indices),
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset({} samples, {} features, {} stable)",
            self.inner.len(),
            self.inner.n_features(),
            self.inner.count_label(1)
        )
    }
}

#[pyclass(name = "Model", module = "ghm_tsa", frozen)]
pub struct PyModel {
    inner: Ensemble,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyModel {
            inner: ghm_boost::load_model(path).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyModel {
            inner: ghm_boost::model_from_str(text).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        ghm_boost::save_model(&self.inner, path).map_err(to_py)
    }

    fn to_json(&self) -> String {
        ghm_boost::model_to_string(&self.inner)
    }

    #[getter]
    fn n_trees(&self) -> usize {
        self.inner.trees.len()
    }

    #[getter]
    fn feature_count(&self) -> usize {
        self.inner.feature_count
    }

    #[getter]
    fn base_score(&self) -> f64 {
        self.inner.base_score
    }

    /// Stability probability per row.
    fn predict_proba(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        self.inner.predict_proba_batch(&rows).map_err(to_py)
    }

    /// Labels at the 0.5 threshold.
    fn predict(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<u8>> {
        self.inner.predict_labels(&rows).map_err(to_py)
    }

    /// Split-gain share per feature, in percent.
    fn feature_importance(&self) -> Vec<f64> {
        ghm_boost::feature_importance(&self.inner).scores
    }

    /// Per-iteration training loss, when the model was trained in this process.
    fn training_losses(&self) -> Option<Vec<f64>> {
        self.inner.training_meta.as_ref().map(|m| m.losses.clone())
    }

    fn __repr__(&self) -> String {
        format!(
            "Model({} trees, {} features)",
            self.inner.trees.len(),
            self.inner.feature_count
        )
    }
}

#[allow(clippy::too_many_arguments)]
fn training_config(
    iterations: usize,
    depth: usize,
    learning_rate: f64,
    ghm: bool,
    z_bins: usize,
    mode: &str,
    permutations: usize,
    borders: usize,
    seed: u64,
) -> PyResult<TrainingConfig> {
    let boosting_mode = match mode {
        "plain" => BoostingMode::Plain,
        "ordered" => BoostingMode::Ordered,
        other => {
            return Err(PyValueError::new_err(format!(
                "mode must be 'plain' or 'ordered', got '{other}'"
            )))
        }
    };
    Ok(TrainingConfig {
        n_iterations: iterations,
        depth,
        learning_rate,
        boosting_mode,
        n_permutations: permutations,
        ghm: ghm.then(|| GHMConfig {
            z_bins,
            ..GHMConfig::default()
        }),
        threshold_candidates_per_feature: borders,
        min_samples_per_leaf: 1,
        rng_seed: seed,
    })
}

fn metrics_dict<'py>(py: Python<'py>, r: &MetricsReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("acc", r.acc)?;
    d.set_item("far", r.far)?;
    d.set_item("frr", r.frr)?;
    d.set_item("tp", r.counts.tp)?;
    d.set_item("fp", r.counts.fp)?;
    d.set_item("fn", r.counts.fn_)?;
    d.set_item("tn", r.counts.tn)?;
    d.set_item("wall_time_s", r.wall_time_s)?;
    Ok(d)
}

/// Simulates `n` random fault scenarios on `case` (the 39-bus case by default).
#[pyfunction]
#[pyo3(signature = (n, seed, case = None, threads = None))]
fn generate_dataset(
    py: Python<'_>,
    n: usize,
    seed: u64,
    case: Option<&PyGridCase>,
    threads: Option<usize>,
) -> PyResult<PyDataset> {
    let case = case.map_or_else(GridCase::ne39, |c| c.inner.clone());
    let opts = GenerationOptions {
        threads,
        ..GenerationOptions::new(n, seed)
    };
    let (inner, _) = py
        .detach(|| transient_sim::generate_dataset_with(&case, &opts))
        .map_err(to_py)?;
    Ok(PyDataset { inner })
}

/// Trains a classifier on feature rows and 0/1 labels.
#[pyfunction]
#[pyo3(signature = (
    rows, labels, *, iterations = 500, depth = 6, learning_rate = 0.1, ghm = true, z_bins = 10,
    mode = "plain", permutations = 4, borders = 32, seed = 0
))]
#[allow(clippy::too_many_arguments)]
fn fit(
    py: Python<'_>,
    rows: Vec<Vec<f64>>,
    labels: Vec<u8>,
    iterations: usize,
    depth: usize,
    learning_rate: f64,
    ghm: bool,
    z_bins: usize,
    mode: &str,
    permutations: usize,
    borders: usize,
    seed: u64,
) -> PyResult<PyModel> {
    let cfg = training_config(
        iterations,
        depth,
        learning_rate,
        ghm,
        z_bins,
        mode,
        permutations,
        borders,
        seed,
    )?;
    let inner = py
        .detach(|| ghm_boost::fit(&rows, &labels, &cfg))
        .map_err(to_py)?;
    Ok(PyModel { inner })
}

/// Accuracy, false-alarm and false-rejection rates of `model` on labelled rows.
#[pyfunction]
fn evaluate<'py>(
    py: Python<'py>,
    model: &PyModel,
    rows: Vec<Vec<f64>>,
    labels: Vec<u8>,
) -> PyResult<Bound<'py, PyDict>> {
    let r = eval_harness::evaluate(&model.inner, &rows, &labels).map_err(to_py)?;
    metrics_dict(py, &r)
}

/// Stratified k-fold cross-validation; returns the fold-averaged metrics.
#[pyfunction]
#[pyo3(signature = (
    dataset, k = 5, seed = 0, *, iterations = 500, depth = 6, learning_rate = 0.1, ghm = true,
    z_bins = 10, mode = "plain", permutations = 4, borders = 32
))]
#[allow(clippy::too_many_arguments)]
fn kfold_cv<'py>(
    py: Python<'py>,
    dataset: &PyDataset,
    k: usize,
    seed: u64,
    iterations: usize,
    depth: usize,
    learning_rate: f64,
    ghm: bool,
    z_bins: usize,
    mode: &str,
    permutations: usize,
    borders: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = training_config(
        iterations,
        depth,
        learning_rate,
        ghm,
        z_bins,
        mode,
        permutations,
        borders,
        seed,
    )?;
    let r = py
        .detach(|| eval_harness::kfold_cv(&dataset.inner, k, &cfg, seed))
        .map_err(to_py)?;
    metrics_dict(py, &r.mean)
}

/// Gradient-harmonizing weights for gradient moduli in [0, 1].
#[pyfunction]
#[pyo3(signature = (g, z_bins = 10))]
fn ghm_weights(g: Vec<f64>, z_bins: usize) -> PyResult<Vec<f64>> {
    Ok(ghm_boost::ghm_weights(&g, z_bins).map_err(to_py)?.beta)
}

#[pymodule(name = "ghm_tsa")]
fn ghm_tsa_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGridCase>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(kfold_cv, m)?)?;
    m.add_function(wrap_pyfunction!(ghm_weights, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
