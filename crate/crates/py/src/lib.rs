//! Python bindings: datasets, model fits, summaries and the scenario simulator.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;

use swolca_core::dist::rng_stream;
use swolca_core::fit::default_prior;
use swolca_core::postprocess::outcome_probability;
use swolca_core::sim::{run_scenario, ScenarioSpec};
use swolca_core::wolca::probit_outcome_probability;
use swolca_core::{CodingSpec, Error};

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Numerical(_) | Error::Convergence(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_python<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A validated survey table.
#[pyclass(name = "SurveyDataset", module = "swolca", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySurveyDataset {
    inner: swolca_core::SurveyDataset,
}

#[pymethods]
impl PySurveyDataset {
    /// Reads and validates a survey CSV; `levels` is one count for every item
    /// or one per item. Raises ValueError listing every violation.
    #[staticmethod]
    #[pyo3(signature = (path, levels=None))]
    fn read_csv(path: std::path::PathBuf, levels: Option<Vec<usize>>) -> PyResult<Self> {
        let text = std::fs::read_to_string(&path).map_err(|e| PyValueError::new_err(format!("{}: {e}", path.display())))?;
        Self::from_csv(&text, levels)
    }

    #[staticmethod]
    #[pyo3(signature = (text, levels=None))]
    fn from_csv(text: &str, levels: Option<Vec<usize>>) -> PyResult<Self> {
        let mut inner = swolca_core::SurveyDataset::from_csv_str(text, None).map_err(to_py_err)?;
        if let Some(l) = levels {
            let l = if l.len() == 1 { vec![l[0]; inner.n_items] } else { l };
            inner = swolca_core::SurveyDataset::from_csv_str(text, Some(&l)).map_err(to_py_err)?;
        }
        inner.ensure_valid().map_err(to_py_err)?;
        Ok(PySurveyDataset { inner })
    }

    /// The bundled 60-row example survey.
    #[staticmethod]
    fn fixture() -> PyResult<Self> {
        Ok(PySurveyDataset { inner: swolca_core::sim::tiny_fixture().map_err(to_py_err)? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn n_items(&self) -> usize {
        self.inner.n_items
    }

    #[getter]
    fn item_levels(&self) -> Vec<usize> {
        self.inner.item_levels.clone()
    }

    #[getter]
    fn covariate_names(&self) -> Vec<String> {
        self.inner.covariate_names.clone()
    }

    #[getter]
    fn outcome(&self) -> Vec<u8> {
        self.inner.outcome.clone()
    }

    #[getter]
    fn weight(&self) -> Vec<f64> {
        self.inner.weight.clone()
    }

    /// Validation report as a dict with a `violations` list.
    fn validate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_python(py, &self.inner.validate())
    }

    fn write_csv(&self, path: std::path::PathBuf) -> PyResult<()> {
        self.inner.write_csv(path).map_err(to_py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.n
    }

    fn __repr__(&self) -> String {
        format!("SurveyDataset(n={}, items={}, covariates={:?})", self.inner.n, self.inner.n_items, self.inner.covariate_names)
    }
}

/// Sampler settings.
#[pyclass(name = "McmcConfig", module = "swolca", get_all, set_all, from_py_object)]
#[derive(Clone)]
struct PyMcmcConfig {
    n_iter: usize,
    n_burn: usize,
    thin: usize,
    seed: u64,
    k_max: usize,
    class_cutoff: f64,
    adjust_variance: bool,
    n_boot_reps: usize,
}

impl PyMcmcConfig {
    fn to_core(&self) -> swolca_core::McmcConfig {
        swolca_core::McmcConfig {
            n_iter: self.n_iter,
            n_burn: self.n_burn,
            thin: self.thin,
            seed: self.seed,
            k_max: self.k_max,
            class_cutoff: self.class_cutoff,
            adjust_variance: self.adjust_variance,
            n_boot_reps: self.n_boot_reps,
            ..swolca_core::McmcConfig::default()
        }
    }
}

#[pymethods]
impl PyMcmcConfig {
    #[new]
    #[pyo3(signature = (n_iter=None, n_burn=None, thin=None, seed=None, k_max=None, class_cutoff=None, adjust_variance=None, n_boot_reps=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        n_iter: Option<usize>,
        n_burn: Option<usize>,
        thin: Option<usize>,
        seed: Option<u64>,
        k_max: Option<usize>,
        class_cutoff: Option<f64>,
        adjust_variance: Option<bool>,
        n_boot_reps: Option<usize>,
    ) -> PyResult<Self> {
        let d = swolca_core::McmcConfig::default();
        let cfg = PyMcmcConfig {
            n_iter: n_iter.unwrap_or(d.n_iter),
            n_burn: n_burn.unwrap_or(match n_iter {
                Some(it) if d.n_burn >= it => it / 2,
                _ => d.n_burn,
            }),
            thin: thin.unwrap_or(d.thin),
            seed: seed.unwrap_or(d.seed),
            k_max: k_max.unwrap_or(d.k_max),
            class_cutoff: class_cutoff.unwrap_or(d.class_cutoff),
            adjust_variance: adjust_variance.unwrap_or(d.adjust_variance),
            n_boot_reps: n_boot_reps.unwrap_or(d.n_boot_reps),
        };
        cfg.to_core().validate().map_err(to_py_err)?;
        Ok(cfg)
    }

    fn __repr__(&self) -> String {
        format!(
            "McmcConfig(n_iter={}, n_burn={}, thin={}, seed={}, k_max={})",
            self.n_iter, self.n_burn, self.thin, self.seed, self.k_max
        )
    }
}

/// Result of one model fit.
#[pyclass(name = "FitResult", module = "swolca", frozen)]
struct PyFitResult {
    inner: swolca_core::FitOutput,
    covariate_names: Vec<String>,
}

#[pymethods]
impl PyFitResult {
    #[getter]
    fn model(&self) -> &'static str {
        self.inner.model.name()
    }

    #[getter]
    fn k_hat(&self) -> usize {
        self.inner.k_hat
    }

    #[getter]
    fn n_draws(&self) -> usize {
        self.inner.chain.n_draws()
    }

    /// 1-based modal class per individual.
    #[getter]
    fn modal_class(&self) -> Vec<usize> {
        self.inner.modal_class.iter().map(|c| c + 1).collect()
    }

    /// Posterior summary (medians and 95% intervals) as a dict.
    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_python(py, &self.inner.summary)
    }

    fn unadjusted_summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_python(py, &self.inner.unadjusted_summary)
    }

    fn adjustment<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_python(py, &self.inner.adjustment)
    }

    /// Median class shares.
    fn class_shares(&self) -> Vec<f64> {
        self.inner.summary.pi.iter().map(|iv| iv.median).collect()
    }

    /// Modal item levels, 1-based, indexed `[class][item]`.
    fn modal_patterns(&self) -> Vec<Vec<usize>> {
        let modal = self.inner.summary.modal_levels();
        (0..self.inner.k_hat).map(|k| modal.iter().map(|row| row[k] + 1).collect()).collect()
    }

    /// `P(y = 1 | class, covariates)` as `(median, lower, upper)`; `class` is
    /// 1-based and omitted covariates are 0.
    #[pyo3(signature = (class_, covariates=None))]
    fn outcome_probability(
        &self,
        class_: usize,
        covariates: Option<std::collections::HashMap<String, f64>>,
    ) -> PyResult<(f64, f64, f64)> {
        if class_ == 0 || class_ > self.inner.k_hat {
            return Err(PyValueError::new_err(format!("class must be in 1..={}", self.inner.k_hat)));
        }
        let covariates = covariates.unwrap_or_default();
        if let Some(bad) = covariates.keys().find(|k| !self.covariate_names.contains(k)) {
            return Err(PyValueError::new_err(format!("unknown covariate '{bad}'")));
        }
        let mut block = vec![1.0];
        block.extend(self.covariate_names.iter().map(|n| covariates.get(n).copied().unwrap_or(0.0)));
        let iv = match &self.inner.probit {
            Some(fit) => probit_outcome_probability(fit, block.len(), class_ - 1, &block),
            None => outcome_probability(&self.inner.chain.draws, class_ - 1, &block),
        }
        .map_err(to_py_err)?;
        Ok((iv.median, iv.lower, iv.upper))
    }

    fn __repr__(&self) -> String {
        format!("FitResult(model={}, k_hat={}, draws={})", self.inner.model, self.inner.k_hat, self.inner.chain.n_draws())
    }
}

fn parse_model(name: &str) -> PyResult<swolca_core::ModelKind> {
    name.parse().map_err(to_py_err)
}

/// Fits `model` ("swolca", "solca" or "wolca") to a dataset.
#[pyfunction]
#[pyo3(signature = (dataset, model="swolca", config=None))]
fn fit(py: Python<'_>, dataset: &PySurveyDataset, model: &str, config: Option<PyMcmcConfig>) -> PyResult<PyFitResult> {
    let kind = parse_model(model)?;
    let config = config.map(|c| c.to_core()).unwrap_or_default();
    let ds = dataset.inner.clone();
    let inner = py
        .detach(move || {
            let coding = CodingSpec::full(1, ds.n_covariates);
            let prior = default_prior(&ds, &coding, &config);
            let mut rng = rng_stream(config.seed, 0);
            swolca_core::fit_model(&ds, kind, &coding, &prior, &config, &mut rng)
        })
        .map_err(to_py_err)?;
    Ok(PyFitResult { inner, covariate_names: dataset.inner.covariate_names.clone() })
}

/// Runs a preset scenario (1-9) and returns the metrics report as a dict.
#[pyfunction]
#[pyo3(signature = (scenario=2, replicates=None, models=None, config=None, n=None))]
fn simulate<'py>(
    py: Python<'py>,
    scenario: u8,
    replicates: Option<usize>,
    models: Option<Vec<String>>,
    config: Option<PyMcmcConfig>,
    n: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut spec = ScenarioSpec::preset(scenario).map_err(to_py_err)?;
    if let Some(r) = replicates {
        spec.replicates = r;
    }
    if let Some(n) = n {
        spec.n = n;
    }
    let models = match models {
        Some(m) => m.iter().map(|s| parse_model(s)).collect::<PyResult<Vec<_>>>()?,
        None => swolca_core::ModelKind::ALL.to_vec(),
    };
    let config = config.map(|c| c.to_core()).unwrap_or_default();
    let out = py.detach(move || run_scenario(&spec, &models, &config)).map_err(to_py_err)?;
    to_python(py, &out.report)
}

/// Normalized weights `w / mean(w)`.
#[pyfunction]
fn normalize_weights(weights: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(swolca_core::normalize_weights(&weights).map_err(to_py_err)?.wtilde)
}

/// One cluster of binary outcomes with marginal probabilities `p` and latent
/// within-cluster correlation `rho`.
#[pyfunction]
#[pyo3(signature = (p, rho, seed=0))]
fn correlated_outcomes(p: Vec<f64>, rho: f64, seed: u64) -> PyResult<Vec<u8>> {
    swolca_core::sim::correlated_outcomes(&p, rho, &mut rng_stream(seed, 0)).map_err(to_py_err)
}

#[pymodule]
fn swolca(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySurveyDataset>()?;
    m.add_class::<PyMcmcConfig>()?;
    m.add_class::<PyFitResult>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_weights, m)?)?;
    m.add_function(wrap_pyfunction!(correlated_outcomes, m)?)?;
    Ok(())
}
