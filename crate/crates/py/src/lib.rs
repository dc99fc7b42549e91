//! Python bindings. Setplays cross the boundary as `Setplay` objects; FCM
//! partitions and distance tables as nested lists (one list per row);
//! pipeline reports as JSON text.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use setplay_core::cvi::{self, SilhouetteConfig};
use setplay_core::datagen;
use setplay_core::fcm::{self, EuclideanSpace, FcmConfig};
use setplay_core::metrics::{self, DistanceConfig};
use setplay_core::model::{self, SetplayFeatures};
use setplay_core::partition::{DistanceMatrix, PartitionMatrix};
use setplay_core::pipeline::{self, PipelineConfig};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Feature row of one setplay.
#[pyclass(frozen, from_py_object, module = "setplay")]
#[derive(Clone)]
pub struct Setplay {
    inner: SetplayFeatures,
}

#[pymethods]
impl Setplay {
    /// Parse, validate and flatten setplay source text.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        let record = model::parse_setplay(text).map_err(value_error)?;
        Ok(Setplay {
            inner: model::extract_features(&record),
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(text).map_err(value_error)?;
        Ok(Setplay { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(value_error)
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn id(&self) -> i64 {
        self.inner.id
    }

    #[getter]
    fn our_players_number(&self) -> u32 {
        self.inner.our_players_number
    }

    #[getter]
    fn their_players_number(&self) -> u32 {
        self.inner.their_players_number
    }

    #[getter]
    fn steps(&self) -> u32 {
        self.inner.steps_count
    }

    /// Behaviors of every step, one list per step.
    #[getter]
    fn behaviors(&self) -> Vec<Vec<String>> {
        self.inner
            .steps_list
            .iter()
            .map(|s| s.behaviors_list.clone())
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Setplay(name={:?}, ours={}, theirs={}, steps={})",
            self.inner.name,
            self.inner.our_players_number,
            self.inner.their_players_number,
            self.inner.steps_count
        )
    }
}

fn unwrap_all(plans: &[Setplay]) -> Vec<SetplayFeatures> {
    plans.iter().map(|p| p.inner.clone()).collect()
}

/// Validation messages for setplay text; empty when the plan is valid.
#[pyfunction]
fn validate(text: &str) -> Vec<String> {
    match model::parse_setplay(text) {
        Ok(_) => Vec::new(),
        Err(model::ModelError::Invalid(violations)) => {
            violations.iter().map(ToString::to_string).collect()
        }
        Err(e) => vec![e.to_string()],
    }
}

#[pyfunction]
fn level1_distance(a: &Setplay, b: &Setplay) -> f64 {
    metrics::level1_distance(&a.inner, &b.inner)
}

#[pyfunction]
#[pyo3(signature = (a, b, unmatched_player_penalty = 36.06, normalize = false))]
fn level2_distance(
    a: &Setplay,
    b: &Setplay,
    unmatched_player_penalty: f64,
    normalize: bool,
) -> PyResult<f64> {
    let cfg = DistanceConfig {
        unmatched_player_penalty,
        normalize_features: normalize,
    };
    cfg.validate().map_err(value_error)?;
    Ok(metrics::level2_distance(&a.inner, &b.inner, &cfg))
}

/// Result of one fuzzy c-means run.
#[pyclass(frozen, get_all, module = "setplay")]
pub struct FcmRun {
    partition: Vec<Vec<f64>>,
    objective_history: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// Fuzzy c-means on Euclidean vectors.
#[pyfunction]
#[pyo3(signature = (points, clusters, m = 2.0, seed = 0, max_iters = 300, epsilon = 1e-6))]
fn fcm_euclidean(
    points: Vec<Vec<f64>>,
    clusters: usize,
    m: f64,
    seed: u64,
    max_iters: usize,
    epsilon: f64,
) -> PyResult<FcmRun> {
    let cfg = FcmConfig {
        clusters,
        fuzzifier: m,
        max_iters,
        epsilon,
        seed,
    };
    let run = fcm::run_fcm(&EuclideanSpace::new(points), &cfg).map_err(value_error)?;
    Ok(FcmRun {
        partition: run.partition.rows(),
        objective_history: run.objective_history,
        iterations: run.iterations,
        converged: run.converged,
    })
}

/// Fuzzy Silhouette of a partition (rows = clusters) under a distance table.
#[pyfunction]
#[pyo3(signature = (partition, distances, alpha = 1.0))]
fn fuzzy_silhouette(
    partition: Vec<Vec<f64>>,
    distances: Vec<Vec<f64>>,
    alpha: f64,
) -> PyResult<f64> {
    let p = PartitionMatrix::from_rows(&partition).map_err(value_error)?;
    if distances.len() != p.objects() || distances.iter().any(|r| r.len() != p.objects()) {
        return Err(PyValueError::new_err(
            "distance table must be N x N for N objects",
        ));
    }
    let d = DistanceMatrix::from_rows(&distances);
    Ok(cvi::fuzzy_silhouette(&p, &d, &SilhouetteConfig { alpha }).value)
}

/// Member indices of every cluster under the gamma rule.
#[pyfunction]
fn assign_members(partition: Vec<Vec<f64>>, gamma: f64) -> PyResult<Vec<Vec<usize>>> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(PyValueError::new_err("gamma must lie in [0, 1]"));
    }
    let p = PartitionMatrix::from_rows(&partition).map_err(value_error)?;
    Ok(pipeline::assign_members(&p, gamma))
}

/// The four-family, 18-plan synthetic corpus as (name, text) pairs.
#[pyfunction]
#[pyo3(signature = (seed = 0, jitter = 0.5))]
fn generate_corpus(seed: u64, jitter: f64) -> PyResult<Vec<(String, String)>> {
    let plans =
        datagen::generate_corpus(&datagen::paper_shape_spec(seed, jitter)).map_err(value_error)?;
    Ok(plans.into_iter().map(|p| (p.name, p.text)).collect())
}

/// Run both clustering stages; `config` is a JSON object of pipeline
/// settings (missing fields take defaults). Returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (plans, config = None))]
fn run_pipeline(py: Python<'_>, plans: Vec<Setplay>, config: Option<&str>) -> PyResult<String> {
    let cfg: PipelineConfig = match config {
        Some(text) => serde_json::from_str(text).map_err(value_error)?,
        None => PipelineConfig::default(),
    };
    let data = unwrap_all(&plans);
    let output = py
        .detach(|| pipeline::run(&data, &cfg))
        .map_err(value_error)?;
    serde_json::to_string(&pipeline::report(&data, &output, &cfg)).map_err(value_error)
}

#[pymodule]
fn setplay(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Setplay>()?;
    m.add_class::<FcmRun>()?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(level1_distance, m)?)?;
    m.add_function(wrap_pyfunction!(level2_distance, m)?)?;
    m.add_function(wrap_pyfunction!(fcm_euclidean, m)?)?;
    m.add_function(wrap_pyfunction!(fuzzy_silhouette, m)?)?;
    m.add_function(wrap_pyfunction!(assign_members, m)?)?;
    m.add_function(wrap_pyfunction!(generate_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
