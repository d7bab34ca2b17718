//! Python bindings for the chaotic VAE one-class classifier.
//!
//! Build with `cargo build -p cvae-python --release`; the resulting
//! `libcvae_py.so` imports as `cvae_py` (see python/smoke_test.py).

use cvae_core::chaos::{self, ChaoticGenerator, NoiseTransform};
use cvae_core::data;
use cvae_core::occ::{self, ThresholdStrategy};
use cvae_core::stats::{self, ModelTag, RunSeries};
use cvae_core::vae::{NoiseSpec, OptimizerChoice, TrainConfig, VaeModel};
use ndarray::Array2;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn to_matrix(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    if rows.is_empty() {
        return Err(value_err("matrix needs at least one row"));
    }
    let cols = rows[0].len();
    if cols == 0 {
        return Err(value_err("matrix needs at least one column"));
    }
    if rows.iter().any(|r| r.len() != cols) {
        return Err(value_err("rows have unequal lengths"));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((flat.len() / cols, cols), flat).map_err(value_err)
}

fn from_matrix(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn parse_transform(name: &str) -> PyResult<NoiseTransform> {
    name.parse().map_err(value_err)
}

/// Stateful logistic-map iterator x_{t+1} = lam * x_t * (1 - x_t).
#[pyclass]
struct LogisticMap {
    inner: ChaoticGenerator,
}

#[pymethods]
impl LogisticMap {
    #[new]
    #[pyo3(signature = (seed, lam = 4.0, burn_in = 0))]
    fn new(seed: f64, lam: f64, burn_in: u64) -> PyResult<Self> {
        Ok(LogisticMap {
            inner: ChaoticGenerator::new(lam, seed, burn_in).map_err(value_err)?,
        })
    }

    /// Next raw iterate.
    fn next_value(&mut self) -> PyResult<f64> {
        self.inner.next_value().map_err(runtime_err)
    }

    /// `n` consecutive raw iterates.
    fn sample(&mut self, n: usize) -> PyResult<Vec<f64>> {
        self.inner.take_raw(n).map_err(runtime_err)
    }

    /// Row-major noise matrix with an optional transform
    /// ("raw" or "standardized").
    #[pyo3(signature = (rows, cols, transform = "raw"))]
    fn sample_matrix(&mut self, rows: usize, cols: usize, transform: &str) -> PyResult<Vec<Vec<f64>>> {
        let t = parse_transform(transform)?;
        let m = self.inner.sample_noise(t, rows, cols).map_err(runtime_err)?;
        Ok(from_matrix(&m))
    }

    #[getter]
    fn lam(&self) -> f64 {
        self.inner.lambda()
    }

    #[getter]
    fn seed(&self) -> f64 {
        self.inner.seed()
    }

    #[getter]
    fn steps_emitted(&self) -> u64 {
        self.inner.steps_emitted()
    }
}

/// True when the seed survives the orbit probe (range + period checks).
#[pyfunction]
#[pyo3(signature = (seed, lam = 4.0, probe_len = 1000))]
fn validate_seed(seed: f64, lam: f64, probe_len: usize) -> bool {
    chaos::seed_validate(seed, lam, probe_len).is_ok()
}

/// One-sample KS statistic against a named reference CDF
/// ("uniform" or "arcsine").
#[pyfunction]
fn ks_statistic(samples: Vec<f64>, cdf: &str) -> PyResult<f64> {
    let result = match cdf {
        "uniform" => chaos::ks_statistic(&samples, chaos::uniform_cdf),
        "arcsine" => chaos::ks_statistic(&samples, chaos::arcsine_cdf),
        other => return Err(value_err(format!("unknown reference CDF `{other}`"))),
    };
    result.map_err(value_err)
}

/// Synthetic one-class dataset; returns (rows, labels).
#[pyfunction]
#[pyo3(signature = (seed = 7, n_neg = 500, n_pos = 50, nf = 8, shift = 0.4))]
fn synth_occ(seed: u64, n_neg: usize, n_pos: usize, nf: usize, shift: f64) -> (Vec<Vec<f64>>, Vec<u8>) {
    let ds = data::synth_occ(seed, n_neg, n_pos, nf, shift);
    (from_matrix(&ds.rows), ds.labels)
}

/// Per-sample decision report from an `evaluate` call.
#[pyclass(get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyDecisionReport {
    scores: Vec<f64>,
    threshold: f64,
    predictions: Vec<u8>,
    cr: f64,
}

/// VAE / C-VAE one-class classifier over rows of floats in [0, 1].
#[pyclass]
struct VaeClassifier {
    config: TrainConfig,
    model: Option<VaeModel>,
}

#[pymethods]
impl VaeClassifier {
    #[new]
    #[pyo3(signature = (
        model = "cvae",
        epochs = 100,
        learning_rate = 0.001,
        momentum = 0.009,
        activation = "relu",
        optimizer = "adam",
        total_layers = 5,
        batch_size = 64,
        latent_dim = 2,
        noise_transform = "raw",
        lam = 4.0,
        burn_in = 100,
        seed = 0,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        model: &str,
        epochs: usize,
        learning_rate: f64,
        momentum: f64,
        activation: &str,
        optimizer: &str,
        total_layers: usize,
        batch_size: usize,
        latent_dim: usize,
        noise_transform: &str,
        lam: f64,
        burn_in: u64,
        seed: u64,
    ) -> PyResult<Self> {
        let tag: ModelTag = model.parse().map_err(value_err)?;
        let noise = match tag {
            ModelTag::Vae => NoiseSpec::Gaussian,
            ModelTag::Cvae => NoiseSpec::Chaotic {
                lambda: lam,
                seed: None,
                burn_in,
                transform: parse_transform(noise_transform)?,
            },
        };
        let config = TrainConfig {
            epochs,
            learning_rate,
            momentum,
            activation: activation.parse().map_err(value_err)?,
            optimizer: optimizer.parse::<OptimizerChoice>().map_err(value_err)?,
            total_layers,
            batch_size,
            latent_dim,
            noise,
            init_seed: seed,
        };
        config.validate().map_err(value_err)?;
        Ok(VaeClassifier {
            config,
            model: None,
        })
    }

    /// Trains on genuine-class rows; returns the per-epoch mean loss trace.
    fn fit(&mut self, x_train: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let x = to_matrix(x_train)?;
        let mut model = VaeModel::new(x.ncols(), &self.config).map_err(value_err)?;
        let trace = model.train(&x, &self.config).map_err(runtime_err)?;
        self.model = Some(model);
        Ok(trace)
    }

    fn is_fitted(&self) -> bool {
        self.model.is_some()
    }

    fn reconstruct(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let model = self.model.as_ref().ok_or_else(|| runtime_err("call fit first"))?;
        let m = to_matrix(x)?;
        Ok(from_matrix(&model.reconstruct(&m).map_err(runtime_err)?))
    }

    /// Per-row mean squared reconstruction error.
    fn scores(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let model = self.model.as_ref().ok_or_else(|| runtime_err("call fit first"))?;
        let m = to_matrix(x)?;
        let recon = model.reconstruct(&m).map_err(runtime_err)?;
        occ::decision_scores(&m, &recon).map_err(runtime_err)
    }

    /// Scores an all-positive test set against the `percentile` threshold of
    /// the training scores.
    #[pyo3(signature = (x_train, x_test, percentile = 99.0))]
    fn evaluate(
        &self,
        x_train: Vec<Vec<f64>>,
        x_test: Vec<Vec<f64>>,
        percentile: f64,
    ) -> PyResult<PyDecisionReport> {
        let model = self.model.as_ref().ok_or_else(|| runtime_err("call fit first"))?;
        let train = to_matrix(x_train)?;
        let test = to_matrix(x_test)?;
        let train_scores = occ::decision_scores(
            &train,
            &model.reconstruct(&train).map_err(runtime_err)?,
        )
        .map_err(runtime_err)?;
        let report = occ::DecisionReport::evaluate(
            &test,
            &model.reconstruct(&test).map_err(runtime_err)?,
            ThresholdStrategy::TrainPercentile { p: percentile },
            Some(&train_scores),
        )
        .map_err(value_err)?;
        Ok(PyDecisionReport {
            scores: report.scores,
            threshold: report.threshold,
            predictions: report.predictions,
            cr: report.cr,
        })
    }
}

/// Pooled two-sample t-test result.
#[pyclass(get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyTTest {
    t_statistic: f64,
    degrees_of_freedom: usize,
    p_value: f64,
    significant_at_5pct: bool,
    significant_at_1pct: bool,
}

/// Pooled-variance two-sample Student's t-test (df = n1 + n2 - 2).
#[pyfunction]
fn two_sample_t(a: Vec<f64>, b: Vec<f64>) -> PyResult<PyTTest> {
    let r = stats::two_sample_t(
        &RunSeries::new(ModelTag::Vae, "a", a),
        &RunSeries::new(ModelTag::Cvae, "b", b),
    )
    .map_err(value_err)?;
    Ok(PyTTest {
        t_statistic: r.t_statistic,
        degrees_of_freedom: r.degrees_of_freedom,
        p_value: r.p_value,
        significant_at_5pct: r.significant_at_5pct,
        significant_at_1pct: r.significant_at_1pct,
    })
}

/// CDF of Student's t.
#[pyfunction]
fn t_cdf(t: f64, df: f64) -> f64 {
    stats::t_cdf(t, df)
}

/// Mean and sample standard deviation of a CR series.
#[pyfunction]
fn aggregate(values: Vec<f64>) -> PyResult<(f64, f64)> {
    stats::aggregate(&RunSeries::new(ModelTag::Vae, "series", values)).map_err(value_err)
}

#[pymodule]
fn cvae_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<LogisticMap>()?;
    m.add_class::<VaeClassifier>()?;
    m.add_class::<PyDecisionReport>()?;
    m.add_class::<PyTTest>()?;
    m.add_function(wrap_pyfunction!(validate_seed, m)?)?;
    m.add_function(wrap_pyfunction!(ks_statistic, m)?)?;
    m.add_function(wrap_pyfunction!(synth_occ, m)?)?;
    m.add_function(wrap_pyfunction!(two_sample_t, m)?)?;
    m.add_function(wrap_pyfunction!(t_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    Ok(())
}
