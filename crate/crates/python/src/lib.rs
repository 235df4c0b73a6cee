//! Python bindings: tables, synthetic cohorts, preprocessing, training,
//! inference, model selection and consensus.
//!
//! Matrices cross the boundary as lists of row lists.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use smilegan::data::{self, AtrophySpec, Group, Rate, SyntheticCounts};
use smilegan::selection::{self, HoldoutConfig, Partition};
use smilegan::{Matrix, ModelError};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn model_err(e: ModelError) -> PyErr {
    match e {
        ModelError::NonFiniteLoss { .. } | ModelError::Numerical(_) => PyRuntimeError::new_err(e.to_string()),
        other => value_err(other),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    Matrix::from_rows(&rows).map_err(value_err)
}

/// Participants by ROI features with CN/PT group labels.
#[pyclass(module = "smilegan", skip_from_py_object)]
#[derive(Clone)]
pub struct RoiTable {
    inner: data::RoiTable,
}

#[pymethods]
impl RoiTable {
    #[staticmethod]
    fn read_csv(path: &str) -> PyResult<Self> {
        Ok(Self { inner: data::RoiTable::read_csv(path).map_err(value_err)? })
    }

    #[staticmethod]
    fn from_csv_str(text: &str) -> PyResult<Self> {
        Ok(Self { inner: data::RoiTable::from_csv_str(text).map_err(value_err)? })
    }

    fn to_csv_string(&self) -> String {
        self.inner.to_csv_string()
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        self.inner.write_csv(path).map_err(value_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.inner.ids.clone()
    }

    #[getter]
    fn groups(&self) -> Vec<String> {
        self.inner.groups.iter().map(ToString::to_string).collect()
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.feature_names.clone()
    }

    #[getter]
    fn values(&self) -> Vec<Vec<f64>> {
        self.inner.values.to_rows()
    }

    fn cn_rows(&self) -> Vec<Vec<f64>> {
        self.inner.cn_rows().to_rows()
    }

    fn pt_rows(&self) -> Vec<Vec<f64>> {
        self.inner.pt_rows().to_rows()
    }

    fn pt_ids(&self) -> Vec<String> {
        self.inner.ids_of(Group::Pt)
    }
}

fn preset_spec(preset: &str) -> PyResult<AtrophySpec> {
    match preset {
        "paper-supp131" => Ok(AtrophySpec::three_pattern()),
        "semi-synthetic" => Ok(AtrophySpec::semi_synthetic(Rate::Uniform { lo: 0.1, hi: 0.3 })),
        other => Err(PyValueError::new_err(format!("unknown preset `{other}`"))),
    }
}

fn with_rate(spec: AtrophySpec, rate: Option<f64>, rate_range: Option<(f64, f64)>) -> AtrophySpec {
    match (rate, rate_range) {
        (_, Some((lo, hi))) => spec.with_rate(Rate::Uniform { lo, hi }),
        (Some(r), None) => spec.with_rate(Rate::Fixed(r)),
        (None, None) => spec,
    }
}

/// Synthetic cohort. Returns the table and the pattern index of every row
/// (`None` for CN rows).
#[pyfunction]
#[pyo3(signature = (seed, preset = "paper-supp131", n_cn = 600, n_pt = 600, n_features = 145, rate = None, rate_range = None))]
fn simulate(
    seed: u64,
    preset: &str,
    n_cn: usize,
    n_pt: usize,
    n_features: usize,
    rate: Option<f64>,
    rate_range: Option<(f64, f64)>,
) -> PyResult<(RoiTable, Vec<Option<usize>>)> {
    let spec = with_rate(preset_spec(preset)?, rate, rate_range);
    let (table, truth) =
        data::generate_synthetic(&spec, SyntheticCounts { n_features, n_cn, n_pt }, seed).map_err(value_err)?;
    Ok((RoiTable { inner: table }, truth.pattern))
}

/// Adds simulated atrophy to the PT rows of `base`.
#[pyfunction]
#[pyo3(signature = (base, seed, preset = "semi-synthetic", rate = None, rate_range = None))]
fn inject(
    base: &RoiTable,
    seed: u64,
    preset: &str,
    rate: Option<f64>,
    rate_range: Option<(f64, f64)>,
) -> PyResult<(RoiTable, Vec<Option<usize>>)> {
    let spec = with_rate(preset_spec(preset)?, rate, rate_range);
    let (table, truth) = data::inject_atrophy(&base.inner, &spec, seed).map_err(value_err)?;
    Ok((RoiTable { inner: table }, truth.pattern))
}

/// Residualizes covariates (when requested) and normalizes against the CN
/// rows. Returns the new table and the statistics as JSON.
#[pyfunction]
#[pyo3(signature = (table, residualize = false))]
fn preprocess(table: &RoiTable, residualize: bool) -> PyResult<(RoiTable, String)> {
    let (out, stats) = data::preprocess(&table.inner, residualize).map_err(value_err)?;
    Ok((RoiTable { inner: out }, serde_json::to_string(&stats).map_err(value_err)?))
}

/// Training hyper-parameters. Keyword arguments override the defaults, or
/// the JSON document when one is given.
#[pyclass(module = "smilegan", skip_from_py_object)]
#[derive(Clone)]
pub struct TrainingConfig {
    inner: smilegan::TrainingConfig,
}

#[pymethods]
impl TrainingConfig {
    #[new]
    #[pyo3(signature = (json = None, **overrides))]
    fn new(json: Option<&str>, overrides: Option<&Bound<'_, pyo3::types::PyDict>>) -> PyResult<Self> {
        let mut value = match json {
            Some(text) => serde_json::from_str(text).map_err(value_err)?,
            None => serde_json::to_value(smilegan::TrainingConfig::default()).map_err(value_err)?,
        };
        if let Some(kw) = overrides {
            let text: String = kw.py().import("json")?.call_method1("dumps", (kw,))?.extract()?;
            let patch: serde_json::Value = serde_json::from_str(&text).map_err(value_err)?;
            merge(&mut value, patch);
        }
        let inner: smilegan::TrainingConfig = serde_json::from_value(value).map_err(value_err)?;
        inner.validate().map_err(PyValueError::new_err)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.inner).expect("config serializes")
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }

    #[getter]
    fn max_epoch(&self) -> usize {
        self.inner.max_epoch
    }

    fn __repr__(&self) -> String {
        format!("TrainingConfig({})", serde_json::to_string(&self.inner).expect("config serializes"))
    }
}

fn merge(dst: &mut serde_json::Value, patch: serde_json::Value) {
    match (dst, patch) {
        (serde_json::Value::Object(d), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                merge(d.entry(k).or_insert(serde_json::Value::Null), v);
            }
        }
        (d, p) => *d = p,
    }
}

/// Per-epoch monitoring values.
#[pyclass(module = "smilegan", get_all, skip_from_py_object)]
#[derive(Clone)]
pub struct MonitorRecord {
    epoch: usize,
    wd_per_cluster: Vec<Option<f64>>,
    wd_aggregate: Option<f64>,
    alteration_quantity: usize,
    cluster_loss: f64,
    stop: bool,
}

impl From<&smilegan::MonitorRecord> for MonitorRecord {
    fn from(r: &smilegan::MonitorRecord) -> Self {
        Self {
            epoch: r.epoch,
            wd_per_cluster: r.wd_per_cluster.clone(),
            wd_aggregate: r.wd_aggregate,
            alteration_quantity: r.alteration_quantity,
            cluster_loss: r.cluster_loss,
            stop: r.stop,
        }
    }
}

/// Trained mapping, discriminator and clustering networks.
#[pyclass(module = "smilegan", from_py_object)]
#[derive(Clone)]
pub struct Model {
    inner: smilegan::SmileGanModel,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: smilegan::SmileGanModel::load(path).map_err(model_err)? })
    }

    #[staticmethod]
    fn from_checkpoint_str(text: &str) -> PyResult<Self> {
        Ok(Self { inner: smilegan::SmileGanModel::from_checkpoint_str(text).map_err(model_err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(model_err)
    }

    fn to_checkpoint_string(&self) -> String {
        self.inner.to_checkpoint_string()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn epoch(&self) -> usize {
        self.inner.epoch
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    /// Subtype probabilities, one row per input row.
    fn assign(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(self.inner.assign(&matrix(rows)?).map_err(model_err)?.to_rows())
    }

    /// Rows mapped along subtype direction `subtype`.
    fn transform(&self, rows: Vec<Vec<f64>>, subtype: usize) -> PyResult<Vec<Vec<f64>>> {
        if subtype >= self.inner.m() {
            return Err(PyValueError::new_err(format!("subtype {subtype} out of range")));
        }
        let x = matrix(rows)?;
        let z = smilegan::model::constant_subtype_batch(self.inner.m(), x.rows(), subtype);
        Ok(self.inner.forward_f(&x, &z).map_err(model_err)?.0.to_rows())
    }

    /// Largest absolute weight of the mapping and clustering networks.
    fn max_abs_box_param(&self) -> f64 {
        self.inner.mapping().max_abs_param().max(self.inner.clustering().max_abs_param())
    }
}

/// Trains one model on the CN and PT rows of `table`. The GIL is released
/// while training.
#[pyfunction]
fn train(py: Python<'_>, table: &RoiTable, config: &TrainingConfig, seed: u64) -> PyResult<(Model, Vec<MonitorRecord>)> {
    let (cn, pt) = (table.inner.cn_rows(), table.inner.pt_rows());
    let cfg = config.inner.clone();
    let out = py.detach(move || smilegan::train(&cn, &pt, &cfg, seed)).map_err(model_err)?;
    Ok((Model { inner: out.model }, out.monitor.iter().map(MonitorRecord::from).collect()))
}

#[pyfunction]
fn ari(a: Vec<usize>, b: Vec<usize>) -> PyResult<f64> {
    selection::ari(&Partition::from_labels(a), &Partition::from_labels(b)).map_err(value_err)
}

/// Best accuracy over relabelings of `pred`, and the relabeling
/// (`perm[pred_label] = truth_label`).
#[pyfunction]
fn match_accuracy(pred: Vec<usize>, truth: Vec<usize>) -> PyResult<(f64, Vec<usize>)> {
    selection::match_accuracy(&Partition::from_labels(pred), &Partition::from_labels(truth)).map_err(value_err)
}

/// Holdout reproducibility over candidate subtype counts. Returns
/// `(chosen_m, mean_ari_per_candidate, ari_std_per_candidate)`.
#[pyfunction]
#[pyo3(signature = (table, config, seed, candidate_ms = vec![3, 4, 5], repetitions = 20, holdout_fraction = 0.1))]
fn choose_m(
    py: Python<'_>,
    table: &RoiTable,
    config: &TrainingConfig,
    seed: u64,
    candidate_ms: Vec<usize>,
    repetitions: usize,
    holdout_fraction: f64,
) -> PyResult<(usize, Vec<f64>, Vec<f64>)> {
    let (cn, pt) = (table.inner.cn_rows(), table.inner.pt_rows());
    let holdout = HoldoutConfig { candidate_ms, repetitions, holdout_fraction };
    let cfg = config.inner.clone();
    let report = py.detach(move || selection::choose_m(&cn, &pt, &holdout, &cfg, seed)).map_err(value_err)?;
    Ok((report.chosen_m, report.per_m_mean_ari, report.per_m_ari_std))
}

/// Template-aligned average of the models' probabilities on `rows`.
/// Returns `(template, permutations, probabilities)`.
#[pyfunction]
fn consensus(models: Vec<Model>, rows: Vec<Vec<f64>>) -> PyResult<(usize, Vec<Vec<usize>>, Vec<Vec<f64>>)> {
    let models: Vec<smilegan::SmileGanModel> = models.into_iter().map(|m| m.inner).collect();
    let result = selection::consensus(&models, &matrix(rows)?).map_err(value_err)?;
    Ok((result.template, result.permutations, result.probabilities.to_rows()))
}

#[pymodule]
#[pyo3(name = "smilegan")]
fn smilegan_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<RoiTable>()?;
    m.add_class::<TrainingConfig>()?;
    m.add_class::<MonitorRecord>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(inject, m)?)?;
    m.add_function(wrap_pyfunction!(preprocess, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(ari, m)?)?;
    m.add_function(wrap_pyfunction!(match_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(choose_m, m)?)?;
    m.add_function(wrap_pyfunction!(consensus, m)?)?;
    Ok(())
}
