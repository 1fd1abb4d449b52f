use std::path::PathBuf;

use crnl::{CrnlError, DenseTensor};
use ndarray::Array2;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: CrnlError) -> PyErr {
    match e {
        CrnlError::Shape(_)
        | CrnlError::ModeOutOfRange { .. }
        | CrnlError::InvalidArgument(_)
        | CrnlError::Empty(_)
        | CrnlError::Parse { .. } => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn rows_to_array(rows: &[Vec<f64>]) -> PyResult<Array2<f64>> {
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Array2::from_shape_vec((rows.len(), d), rows.concat())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn array_to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Dense row-major tensor of f64.
#[pyclass(name = "Tensor", module = "crnl_py", from_py_object)]
#[derive(Clone)]
struct PyTensor {
    inner: DenseTensor,
}

#[pymethods]
impl PyTensor {
    #[new]
    fn new(shape: Vec<usize>, data: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: DenseTensor::new(shape, data).map_err(to_py)?,
        })
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.inner.shape().to_vec()
    }

    #[getter]
    fn data(&self) -> Vec<f64> {
        self.inner.data().to_vec()
    }

    fn get(&self, index: Vec<usize>) -> PyResult<f64> {
        if index.len() != self.inner.order()
            || index.iter().zip(self.inner.shape()).any(|(i, n)| i >= n)
        {
            return Err(PyValueError::new_err("index out of range"));
        }
        Ok(self.inner.get(&index))
    }

    fn unfold(&self, mode: usize) -> PyResult<Vec<Vec<f64>>> {
        Ok(array_to_rows(&self.inner.unfold(mode).map_err(to_py)?))
    }

    #[staticmethod]
    fn fold(matrix: Vec<Vec<f64>>, mode: usize, shape: Vec<usize>) -> PyResult<Self> {
        let m = rows_to_array(&matrix)?;
        Ok(Self {
            inner: DenseTensor::fold(&m, mode, &shape).map_err(to_py)?,
        })
    }

    fn mode_product(&self, matrix: Vec<Vec<f64>>, mode: usize) -> PyResult<Self> {
        let m = rows_to_array(&matrix)?;
        Ok(Self {
            inner: self.inner.mode_product(&m, mode).map_err(to_py)?,
        })
    }

    fn numerical_tucker_rank(&self, tolerance: f64) -> PyResult<Vec<usize>> {
        Ok(self
            .inner
            .numerical_tucker_rank(tolerance)
            .map_err(to_py)?
            .ranks)
    }

    fn tv_norm(&self) -> PyResult<f64> {
        crnl::regularizers::tv_norm(&self.inner).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Tensor(shape={:?})", self.inner.shape())
    }
}

/// Fully connected network with sine activations.
#[pyclass(name = "SineMlp", module = "crnl_py")]
struct PySineMlp {
    inner: crnl::SineMlp,
}

#[pymethods]
impl PySineMlp {
    #[new]
    #[pyo3(signature = (widths, omega = 30.0, use_bias = true, seed = 0))]
    fn new(widths: Vec<usize>, omega: f64, use_bias: bool, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: crnl::SineMlp::siren(&widths, omega, use_bias, seed).map_err(to_py)?,
        })
    }

    fn forward(&self, points: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let x = rows_to_array(&points)?;
        Ok(array_to_rows(&self.inner.forward(x.view()).map_err(to_py)?))
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.param_count()
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }
}

/// Trained factorization model.
#[pyclass(name = "Model", module = "crnl_py")]
struct PyModel {
    inner: crnl::CrnlModel,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: crnl::CrnlModel::from_json(text).map_err(to_py)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    /// Predictions at raw coordinates (without the similar-index column).
    fn infer(&self, points: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let x = rows_to_array(&points)?;
        self.inner.infer(x.view()).map_err(to_py)
    }

    #[getter]
    fn groups(&self) -> usize {
        self.inner.groups()
    }

    #[getter]
    fn ranks(&self) -> Vec<usize> {
        self.inner.ranks().to_vec()
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.param_count()
    }
}

fn parse_task(task: &str) -> PyResult<crnl::Task> {
    serde_json::from_value(serde_json::Value::String(task.to_ascii_lowercase()))
        .map_err(|_| PyValueError::new_err(format!("unknown task {task:?}")))
}

/// Default configuration of a task as a JSON string.
#[pyfunction]
fn default_config(task: &str) -> PyResult<String> {
    serde_json::to_string_pretty(&crnl::RunConfig::defaults(parse_task(task)?))
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Runs a task. `config` is a JSON object overriding the defaults.
/// Returns `(metrics_json, model)`.
#[pyfunction]
#[pyo3(signature = (task, config = None, output = None))]
fn run_task(
    py: Python<'_>,
    task: &str,
    config: Option<&str>,
    output: Option<PathBuf>,
) -> PyResult<(String, PyModel)> {
    let task = parse_task(task)?;
    let mut cfg = match config {
        Some(text) => crnl::RunConfig::from_json_overrides(task, text).map_err(to_py)?,
        None => crnl::RunConfig::defaults(task),
    };
    cfg.output = output.unwrap_or_default();
    let outcome = py.detach(|| crnl::run_task(&cfg)).map_err(to_py)?;
    Ok((
        outcome.report.to_json().map_err(to_py)?,
        PyModel {
            inner: outcome.model,
        },
    ))
}

/// Runs the self-checks. Returns `(all_passed, report_json)`.
#[pyfunction]
#[pyo3(signature = (seed = 0, trials = 10_000))]
fn run_oracles(py: Python<'_>, seed: u64, trials: usize) -> PyResult<(bool, String)> {
    let report = py
        .detach(|| crnl::run_oracles(seed, trials))
        .map_err(to_py)?;
    let json =
        serde_json::to_string_pretty(&report).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((report.passed(), json))
}

/// Evaluates one of the synthetic regression targets `f1`..`f4`.
#[pyfunction]
fn synthetic_function(name: &str, x: f64, y: f64) -> PyResult<f64> {
    let f: crnl::synthetic::SyntheticFunction = name.parse().map_err(to_py)?;
    Ok(f.eval(x, y))
}

#[pyfunction]
#[pyo3(signature = (x, reference, peak = 1.0))]
fn psnr(x: &PyTensor, reference: &PyTensor, peak: f64) -> PyResult<f64> {
    crnl::metrics::psnr(&x.inner, &reference.inner, peak).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (x, reference, range = 1.0))]
fn ssim(x: &PyTensor, reference: &PyTensor, range: f64) -> PyResult<f64> {
    crnl::metrics::ssim(&x.inner, &reference.inner, range).map_err(to_py)
}

#[pyfunction]
fn nrmse(x: Vec<f64>, reference: Vec<f64>) -> PyResult<f64> {
    crnl::metrics::nrmse(&x, &reference).map_err(to_py)
}

#[pyfunction]
fn r_square(pred: Vec<f64>, truth: Vec<f64>) -> PyResult<f64> {
    crnl::metrics::r_square(&pred, &truth).map_err(to_py)
}

#[pyfunction]
fn make_mask(count: usize, rate: f64, seed: u64) -> PyResult<Vec<bool>> {
    crnl::tasks::make_mask(count, rate, seed).map_err(to_py)
}

#[pymodule]
fn crnl_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTensor>()?;
    m.add_class::<PySineMlp>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_task, m)?)?;
    m.add_function(wrap_pyfunction!(run_oracles, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_function, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(nrmse, m)?)?;
    m.add_function(wrap_pyfunction!(r_square, m)?)?;
    m.add_function(wrap_pyfunction!(make_mask, m)?)?;
    Ok(())
}
