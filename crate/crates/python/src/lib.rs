use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use gaussian_moments::effective_dim;
use gaussian_moments::estimators;
use gaussian_moments::gaussian::{self, make_covariance};
use gaussian_moments::linalg::Matrix;
use gaussian_moments::norms::{self, HopmOptions, NormResult};
use gaussian_moments::pairings;
use gaussian_moments::perturbation::{self, BoundReport};
use gaussian_moments::{
    BlockCovariance, CovarianceFamily, CovarianceModel, DenseTensor, Error, EstimatorKind, NormKind, SampleBatch,
};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    let d = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != c) {
        return Err(PyValueError::new_err("rows must have equal length"));
    }
    Ok(Matrix::from_row_iterator(d, c, rows.into_iter().flatten()))
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn parse_norm(s: &str) -> PyResult<NormKind> {
    s.parse().map_err(to_py)
}

fn hopm(restarts: usize, seed: u64) -> HopmOptions {
    HopmOptions { restarts, seed, ..HopmOptions::default() }
}

fn norm_dict<'py>(py: Python<'py>, r: &NormResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("value", r.value)?;
    d.set_item("method", serde_name(&r.method))?;
    d.set_item("certificate", r.certificate.clone())?;
    d.set_item("iterations", r.iterations)?;
    d.set_item("restarts", r.restarts)?;
    Ok(d)
}

fn serde_name<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

fn bound_dict<'py>(py: Python<'py>, r: &BoundReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("lhs", r.lhs)?;
    d.set_item("rhs", r.rhs)?;
    d.set_item("epsilon_star", r.epsilon_star)?;
    d.set_item("norm", r.norm.as_str())?;
    d.set_item("satisfied", r.satisfied)?;
    d.set_item("slack", r.slack)?;
    d.set_item("lhs_method", serde_name(&r.lhs_method))?;
    d.set_item("pairing_bound", r.pairing_bound)?;
    Ok(d)
}

/// Dense row-major tensor.
#[pyclass(name = "Tensor", module = "gaussian_moments_py")]
struct PyTensor {
    inner: DenseTensor,
}

#[pymethods]
impl PyTensor {
    #[new]
    fn new(shape: Vec<usize>, data: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: DenseTensor::from_vec(&shape, data).map_err(to_py)? })
    }

    #[staticmethod]
    fn zeros(shape: Vec<usize>) -> PyResult<Self> {
        Ok(Self { inner: DenseTensor::zeros(&shape).map_err(to_py)? })
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(Self { inner: DenseTensor::from_text(text).map_err(to_py)? })
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.inner.shape().to_vec()
    }

    #[getter]
    fn order(&self) -> usize {
        self.inner.order()
    }

    #[getter]
    fn data(&self) -> Vec<f64> {
        self.inner.data().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __getitem__(&self, index: Vec<usize>) -> PyResult<f64> {
        self.inner
            .get(&index)
            .ok_or_else(|| PyValueError::new_err(format!("index {index:?} out of range")))
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn max_norm<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        norm_dict(py, &norms::max_norm(&self.inner))
    }

    #[pyo3(signature = (restarts = 20, seed = 0))]
    fn operator_norm<'py>(&self, py: Python<'py>, restarts: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
        let r = norms::operator_norm_hopm(&self.inner, &hopm(restarts, seed)).map_err(to_py)?;
        norm_dict(py, &r)
    }

    fn operator_norm_grid<'py>(&self, py: Python<'py>, steps: usize) -> PyResult<Bound<'py, PyDict>> {
        let r = norms::operator_norm_grid(&self.inner, steps).map_err(to_py)?;
        norm_dict(py, &r)
    }

    #[pyo3(signature = (other, norm = "max", restarts = 20, seed = 0))]
    fn distance(&self, other: &PyTensor, norm: &str, restarts: usize, seed: u64) -> PyResult<f64> {
        norms::tensor_distance(&self.inner, &other.inner, parse_norm(norm)?, &hopm(restarts, seed)).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Tensor(shape={:?})", self.inner.shape())
    }
}

/// Gaussian covariance model with its Cholesky factor.
#[pyclass(name = "Covariance", module = "gaussian_moments_py")]
struct PyCovariance {
    inner: CovarianceModel,
}

fn param(params: Option<&Bound<'_, PyDict>>, key: &str) -> PyResult<f64> {
    params
        .and_then(|p| p.get_item(key).ok().flatten())
        .ok_or_else(|| PyValueError::new_err(format!("missing parameter `{key}`")))?
        .extract()
}

#[pymethods]
impl PyCovariance {
    /// Builds a parametric family: identity, scaled_identity(scale),
    /// spiked(lambda, epsilon), toeplitz(rho), low_rank_plus_identity(rank, lambda, seed).
    #[staticmethod]
    #[pyo3(signature = (family, dim, **params))]
    fn family(family: &str, dim: usize, params: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let fam = match family {
            "identity" => CovarianceFamily::Identity,
            "scaled_identity" => CovarianceFamily::ScaledIdentity { scale: param(params, "scale")? },
            "spiked" => CovarianceFamily::Spiked {
                lambda: param(params, "lambda")?,
                epsilon: param(params, "epsilon")?,
            },
            "toeplitz" => CovarianceFamily::Toeplitz { rho: param(params, "rho")? },
            "low_rank_plus_identity" => CovarianceFamily::LowRankPlusIdentity {
                rank: param(params, "rank")? as usize,
                lambda: param(params, "lambda")?,
                seed: param(params, "seed")? as u64,
            },
            other => return Err(PyValueError::new_err(format!("unknown family `{other}`"))),
        };
        Ok(Self { inner: make_covariance(fam, dim).map_err(to_py)? })
    }

    #[staticmethod]
    fn explicit(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self { inner: CovarianceModel::explicit(matrix(rows)?).map_err(to_py)? })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn matrix(&self) -> Vec<Vec<f64>> {
        rows_of(self.inner.matrix())
    }

    fn sample(&self, n: usize, seed: u64) -> PyResult<PyBatch> {
        Ok(PyBatch { inner: gaussian::sample(&self.inner, n, seed).map_err(to_py)? })
    }

    fn r2(&self) -> PyResult<f64> {
        effective_dim::r2(&self.inner).map_err(to_py)
    }

    #[pyo3(signature = (mc_samples = effective_dim::DEFAULT_MC_SAMPLES, seed = 0))]
    fn effective_dims<'py>(&self, py: Python<'py>, mc_samples: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
        let e = effective_dim::r_max(&self.inner, mc_samples, seed).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("r2", e.r2)?;
        d.set_item("r_max", e.r_max)?;
        d.set_item("r_max_stderr", e.r_max_stderr)?;
        d.set_item("e_max_abs", e.e_max_abs)?;
        d.set_item("e_max_abs_stderr", e.e_max_abs_stderr)?;
        d.set_item("mc_samples", e.mc_samples)?;
        d.set_item("seed", e.seed)?;
        Ok(d)
    }
}

/// `N × d` sample matrix.
#[pyclass(name = "Batch", module = "gaussian_moments_py")]
struct PyBatch {
    inner: SampleBatch,
}

#[pymethods]
impl PyBatch {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self { inner: SampleBatch::from_rows(&rows).map_err(to_py)? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.rows().map(<[f64]>::to_vec).collect()
    }

    fn covariance(&self) -> Vec<Vec<f64>> {
        rows_of(&gaussian::sample_covariance(&self.inner))
    }

    /// Sample moment (`"sample"`) or Isserlis plug-in (`"isserlis"`) estimate.
    #[pyo3(signature = (order, estimator = "isserlis", blocks = None))]
    fn estimate(&self, order: usize, estimator: &str, blocks: Option<Vec<usize>>) -> PyResult<PyTensor> {
        let kind: EstimatorKind = estimator.parse().map_err(to_py)?;
        let out = estimators::estimate(&self.inner, kind, order, blocks.as_deref()).map_err(to_py)?;
        Ok(PyTensor { inner: out.tensor })
    }
}

/// Pairings of `{0, …, p−1}` as lists of index pairs.
#[pyfunction]
fn enumerate_pairings(p: usize) -> PyResult<Vec<Vec<(usize, usize)>>> {
    let set = pairings::enumerate_pairings(p).map_err(to_py)?;
    Ok(set.iter().map(|pi| pi.pairs().to_vec()).collect())
}

#[pyfunction]
fn double_factorial(p: usize) -> PyResult<u64> {
    pairings::double_factorial(p).map_err(to_py)
}

/// Moment tensor of `N(0, Σ)` from the pairing sum.
#[pyfunction]
fn isserlis_tensor(sigma: Vec<Vec<f64>>, order: usize) -> PyResult<PyTensor> {
    Ok(PyTensor { inner: estimators::isserlis_symmetric(&matrix(sigma)?, order).map_err(to_py)? })
}

fn blocks_of(m: &Matrix, order: usize, blocks: Option<&[usize]>) -> PyResult<BlockCovariance> {
    match blocks {
        Some(b) => BlockCovariance::from_joint(m, b),
        None => BlockCovariance::replicated(m, order),
    }
    .map_err(to_py)
}

/// Both sides of the block perturbation bound for joint covariances `Σ_X`, `Σ_Y`.
#[pyfunction]
#[pyo3(signature = (sigma_x, sigma_y, order, norm = "max", blocks = None, restarts = 20, seed = 0))]
fn check_bounds<'py>(
    py: Python<'py>,
    sigma_x: Vec<Vec<f64>>,
    sigma_y: Vec<Vec<f64>>,
    order: usize,
    norm: &str,
    blocks: Option<Vec<usize>>,
    restarts: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let x = blocks_of(&matrix(sigma_x)?, order, blocks.as_deref())?;
    let y = blocks_of(&matrix(sigma_y)?, order, blocks.as_deref())?;
    let r = perturbation::check_proposition(&x, &y, parse_norm(norm)?, &hopm(restarts, seed)).map_err(to_py)?;
    bound_dict(py, &r)
}

/// Relative form of the bound for a single pair of covariances.
#[pyfunction]
#[pyo3(signature = (sigma_x, sigma_y, order, norm = "max", restarts = 20, seed = 0))]
fn check_relative_bound<'py>(
    py: Python<'py>,
    sigma_x: Vec<Vec<f64>>,
    sigma_y: Vec<Vec<f64>>,
    order: usize,
    norm: &str,
    restarts: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let r = perturbation::check_corollary(
        &matrix(sigma_x)?,
        &matrix(sigma_y)?,
        order,
        parse_norm(norm)?,
        &hopm(restarts, seed),
    )
    .map_err(to_py)?;
    bound_dict(py, &r)
}

#[pymodule]
fn gaussian_moments_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyTensor>()?;
    m.add_class::<PyCovariance>()?;
    m.add_class::<PyBatch>()?;
    m.add_function(wrap_pyfunction!(enumerate_pairings, m)?)?;
    m.add_function(wrap_pyfunction!(double_factorial, m)?)?;
    m.add_function(wrap_pyfunction!(isserlis_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(check_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(check_relative_bound, m)?)?;
    Ok(())
}
