//! Python bindings. Tensors cross the boundary as nested lists of floats.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use cotsfa::augment::{anomaly_curve as curve, CurveParams};
use cotsfa::config::RunConfig;
use cotsfa::dataset::{prepare, PreparedDataset};
use cotsfa::eval::{
    compute_metrics as metrics, delta_improvement as delta, paired_t_test as t_test, TestCondition,
};
use cotsfa::loss::SimilarityBatch;
use cotsfa::model::{load_checkpoint, predict, save_checkpoint, ModelParams};
use cotsfa::numeric::Tensor;
use cotsfa::train::train_model;

fn to_py(e: cotsfa::Error) -> PyErr {
    if e.exit_code() == 1 {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn tensor(rows: Vec<Vec<f64>>) -> PyResult<Tensor> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("rows must have equal length"));
    }
    let n = rows.len();
    Tensor::new(vec![n, cols], rows.into_iter().flatten().collect()).map_err(to_py)
}

type Rows = Vec<Vec<f64>>;

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    let cols = t.shape()[1];
    t.data().chunks(cols).map(<[f64]>::to_vec).collect()
}

/// Windowed, normalized dataset.
#[pyclass(name = "Dataset")]
pub struct PyDataset {
    inner: PreparedDataset,
    synthetic: bool,
}

#[pymethods]
impl PyDataset {
    /// Synthetic sinusoid + trend + noise series.
    #[staticmethod]
    #[pyo3(signature = (n_series=20, length=2000, channels=1, seed=0, window=16, horizon=4))]
    fn synthetic(
        n_series: usize,
        length: usize,
        channels: usize,
        seed: u64,
        window: usize,
        horizon: usize,
    ) -> PyResult<Self> {
        let cfg = RunConfig::load(
            None,
            &[
                format!("dataset.synthetic.n_series={n_series}"),
                format!("dataset.synthetic.length={length}"),
                format!("dataset.synthetic.channels={channels}"),
                format!("dataset.synthetic.seed={seed}"),
                format!("dataset.split.window={window}"),
                format!("dataset.split.horizon={horizon}"),
            ],
        )
        .map_err(to_py)?;
        let frames = cfg.load_frames(None).map_err(to_py)?;
        Ok(Self {
            inner: prepare(&frames, &cfg.dataset.split).map_err(to_py)?,
            synthetic: true,
        })
    }

    /// CSV file or directory of CSVs.
    #[staticmethod]
    #[pyo3(signature = (path, window=16, horizon=4))]
    fn from_csv(path: PathBuf, window: usize, horizon: usize) -> PyResult<Self> {
        let cfg = RunConfig::load(
            None,
            &[
                format!("dataset.split.window={window}"),
                format!("dataset.split.horizon={horizon}"),
            ],
        )
        .map_err(to_py)?;
        let frames = cfg.load_frames(Some(&path)).map_err(to_py)?;
        Ok(Self {
            inner: prepare(&frames, &cfg.dataset.split).map_err(to_py)?,
            synthetic: false,
        })
    }

    #[getter]
    fn channels(&self) -> usize {
        self.inner.channels()
    }

    /// `(train, val, test)` window counts.
    fn sizes(&self) -> (usize, usize, usize) {
        let s = &self.inner.splits;
        (s.train.len(), s.val.len(), s.test.len())
    }

    /// Input and target of one test window as `(x, y)`.
    fn test_window(&self, index: usize) -> PyResult<(Rows, Rows)> {
        let w =
            self.inner.splits.test.get(index).ok_or_else(|| {
                PyValueError::new_err(format!("test window {index} out of range"))
            })?;
        Ok((rows(&w.x), rows(&w.y)))
    }
}

/// Trained forecaster.
#[pyclass(name = "Model")]
pub struct PyModel {
    params: ModelParams,
}

#[pymethods]
impl PyModel {
    /// Train on `dataset`; `overrides` are `key=value` config assignments
    /// such as `"train.lambda_align=0"`.
    #[staticmethod]
    #[pyo3(signature = (dataset, overrides=Vec::new()))]
    fn train(py: Python<'_>, dataset: &PyDataset, overrides: Vec<String>) -> PyResult<Self> {
        let cfg = RunConfig::load(None, &overrides).map_err(to_py)?;
        let ds = &dataset.inner;
        let model = cfg.model.config(
            ds.spec.window,
            ds.spec.horizon,
            ds.channels(),
            cfg.train.seed,
        );
        let val = if cfg.train.early_stopping {
            &ds.splits.val[..]
        } else {
            &[]
        };
        let augment = cfg.augment.config();
        let (params, _) = py
            .detach(|| train_model(&ds.splits.train, val, &model, &cfg.train, &augment))
            .map_err(to_py)?;
        Ok(Self { params })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            params: load_checkpoint(&path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_checkpoint(&self.params, &path).map_err(to_py)
    }

    /// Forecast `H×C` from an `L×C` window.
    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&predict(&self.params, &tensor(x)?).map_err(to_py)?))
    }

    /// MAE/MSE/SMAPE per seed under a test condition such as `"input_output"`.
    #[pyo3(signature = (dataset, condition="clean", seed=0))]
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        dataset: &PyDataset,
        condition: &str,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let cond: TestCondition = condition.parse().map_err(to_py)?;
        let cfg = RunConfig::default();
        let test = cotsfa::eval::test_set(&dataset.inner, &cond, &cfg.augment.config(), seed)
            .map_err(to_py)?;
        let m = cotsfa::eval::evaluate_pairs(
            &self.params,
            &test,
            &dataset.inner,
            cfg.metric_space(dataset.synthetic),
        )
        .map_err(to_py)?;
        metrics_dict(py, m)
    }
}

fn metrics_dict(py: Python<'_>, m: cotsfa::eval::Metrics) -> PyResult<Bound<'_, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("mae", m.mae)?;
    d.set_item("mse", m.mse)?;
    d.set_item("smape", m.smape)?;
    Ok(d)
}

/// Anomaly curve `A·t·exp(-B·t^C)/Z`; the mean parameters when omitted.
#[pyfunction]
#[pyo3(signature = (t, a=None, c=None))]
fn anomaly_curve(t: f64, a: Option<f64>, c: Option<f64>) -> PyResult<f64> {
    let mut p = CurveParams::mean();
    p.a = a.unwrap_or(p.a);
    p.c = c.unwrap_or(p.c);
    curve(&p, t).map_err(to_py)
}

#[pyfunction]
fn compute_metrics(
    py: Python<'_>,
    pred: Vec<Vec<f64>>,
    target: Vec<Vec<f64>>,
) -> PyResult<Bound<'_, PyDict>> {
    metrics_dict(
        py,
        metrics(&tensor(pred)?, &tensor(target)?).map_err(to_py)?,
    )
}

#[pyfunction]
fn delta_improvement(err_base: f64, err_cotsfa: f64) -> Option<f64> {
    delta(err_base, err_cotsfa)
}

/// `(t, p, tier)` of a two-sided paired t-test.
#[pyfunction]
fn paired_t_test(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64, String)> {
    let r = t_test(&a, &b).map_err(to_py)?;
    Ok((r.t, r.p, format!("{:?}", r.tier).to_lowercase()))
}

/// Alignment loss of a batch: `z`, `y` hold `B` sequences, `z_aug`, `y_aug`
/// hold `views·B` sequences in view-major order.
#[pyfunction]
#[pyo3(signature = (z, y, z_aug, y_aug, views, tau=1.0))]
fn alignment_loss(
    z: Vec<Vec<Vec<f64>>>,
    y: Vec<Vec<Vec<f64>>>,
    z_aug: Vec<Vec<Vec<f64>>>,
    y_aug: Vec<Vec<Vec<f64>>>,
    views: usize,
    tau: f64,
) -> PyResult<f64> {
    let conv = |v: Vec<Vec<Vec<f64>>>| v.into_iter().map(tensor).collect::<PyResult<Vec<_>>>();
    let batch = SimilarityBatch::new(conv(z)?, conv(y)?, conv(z_aug)?, conv(y_aug)?, views, tau)
        .map_err(to_py)?;
    Ok(batch.alignment_loss())
}

#[pymodule]
pub fn cotsfa_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(anomaly_curve, m)?)?;
    m.add_function(wrap_pyfunction!(compute_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(delta_improvement, m)?)?;
    m.add_function(wrap_pyfunction!(paired_t_test, m)?)?;
    m.add_function(wrap_pyfunction!(alignment_loss, m)?)?;
    Ok(())
}
