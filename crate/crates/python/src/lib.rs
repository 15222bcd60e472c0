//! Python bindings: metrics, magnitude, diversity, peeling, products and
//! the path pipeline.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use peelkit_core::diversity::{self, SimplexVector};
use peelkit_core::error::{Error, ErrorClass};
use peelkit_core::io::read_node_table;
use peelkit_core::magnitude;
use peelkit_core::metric::{self as core_metric, MetricMatrix, DEFAULT_TOL_EIG, DEFAULT_TOL_TRI};
use peelkit_core::paths::{self, PathPeelOptions, PipelineConfig};
use peelkit_core::peeling::{self, Certify, PeelLayer, PeelOptions, DEFAULT_TOL_KKT, DEFAULT_TOL_NEG};
use peelkit_core::product;

create_exception!(peelkit, PeelkitError, PyException, "Base class for peelkit errors.");
create_exception!(peelkit, InputError, PeelkitError, "Invalid input or configuration.");
create_exception!(peelkit, NumericalError, PeelkitError, "A solve or factorization failed.");
create_exception!(peelkit, CertificationError, PeelkitError, "The metric is not of the required negative type.");

fn err(e: Error) -> PyErr {
    let msg = format!("{}: {e}", e.kind());
    match e.class() {
        ErrorClass::Input => InputError::new_err(msg),
        ErrorClass::Numerical => NumericalError::new_err(msg),
        ErrorClass::Certification => CertificationError::new_err(msg),
    }
}

/// A validated finite metric.
#[pyclass(name = "Metric", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyMetric {
    inner: MetricMatrix,
}

#[pymethods]
impl PyMetric {
    /// Validates a square distance matrix.
    #[new]
    #[pyo3(signature = (matrix, labels=None, tol_tri=DEFAULT_TOL_TRI))]
    fn new(matrix: Vec<Vec<f64>>, labels: Option<Vec<String>>, tol_tri: f64) -> PyResult<Self> {
        let (m, _) = core_metric::validate_metric(&matrix, tol_tri).map_err(err)?;
        let inner = match labels {
            Some(l) => m.with_labels(l).map_err(err)?,
            None => m,
        };
        Ok(Self { inner })
    }

    /// ℓ^p distances between the rows of `points`.
    #[staticmethod]
    #[pyo3(signature = (points, norm_p=2.0))]
    fn from_points(points: Vec<Vec<f64>>, norm_p: f64) -> PyResult<Self> {
        let inner = core_metric::euclidean_distance_matrix(&points, norm_p).map_err(err)?;
        Ok(Self { inner })
    }

    /// Geodesic distances between the normalized rows of `vectors`.
    #[staticmethod]
    fn spherical(vectors: Vec<Vec<f64>>) -> PyResult<Self> {
        let s = core_metric::spherical_distance_matrix(&vectors, core_metric::DEFAULT_ANTIPODE_TOL).map_err(err)?;
        Ok(Self { inner: s.metric })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Metric(n={})", self.inner.len())
    }

    #[getter]
    fn labels(&self) -> Option<Vec<String>> {
        self.inner.labels().map(<[String]>::to_vec)
    }

    fn to_list(&self) -> Vec<Vec<f64>> {
        self.inner.to_rows()
    }

    fn restrict(&self, indices: Vec<usize>) -> PyResult<Self> {
        if let Some(&i) = indices.iter().find(|&&i| i >= self.inner.len()) {
            return Err(err(Error::IndexOutOfRange {
                index: i,
                n: self.inner.len(),
            }));
        }
        Ok(Self {
            inner: self.inner.restrict(&indices),
        })
    }

    /// `{"class", "min_eigenvalue", "max_abs_eigenvalue", "k_used"}`.
    #[pyo3(signature = (tol_eig=DEFAULT_TOL_EIG))]
    fn classify<'py>(&self, py: Python<'py>, tol_eig: f64) -> PyResult<Bound<'py, PyDict>> {
        let c = core_metric::classify_negative_type(&self.inner, tol_eig).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("class", format!("{:?}", c.class))?;
        d.set_item("min_eigenvalue", c.min_eigenvalue)?;
        d.set_item("max_abs_eigenvalue", c.max_abs_eigenvalue)?;
        d.set_item("k_used", c.k_used)?;
        Ok(d)
    }

    /// Unit zero-sum `x` minimizing `-xᵀdx`, with `xᵀdx`; positive values
    /// certify that the metric is not of negative type.
    #[pyo3(signature = (k=0))]
    fn negative_type_witness(&self, k: usize) -> PyResult<(f64, Vec<f64>)> {
        core_metric::negative_type_witness(&self.inner, k).map_err(err)
    }
}

/// One maximum-diversity peel.
#[pyclass(name = "Peel", frozen, get_all)]
struct PyPeel {
    p_star: Vec<f64>,
    support: Vec<usize>,
    entropy: f64,
    kkt_residual: f64,
    kkt_ok: bool,
    iterations: usize,
    support_sizes: Vec<usize>,
    refinement_steps: usize,
    heuristic: bool,
    ratio_bound: Option<f64>,
}

impl From<PeelLayer> for PyPeel {
    fn from(l: PeelLayer) -> Self {
        Self {
            p_star: l.p_star.into_vec(),
            support: l.support,
            entropy: l.entropy,
            kkt_residual: l.kkt_residual,
            kkt_ok: l.kkt_ok,
            iterations: l.iterations,
            support_sizes: l.support_sizes,
            refinement_steps: l.refinement_steps,
            heuristic: l.heuristic,
            ratio_bound: l.ratio_bound,
        }
    }
}

#[pymethods]
impl PyPeel {
    fn __repr__(&self) -> String {
        format!("Peel(support={:?}, entropy={})", self.support, self.entropy)
    }
}

fn simplex(p: Vec<f64>) -> PyResult<SimplexVector> {
    SimplexVector::new(p).map_err(err)
}

/// `(w, magnitude)` for `Z = exp[-t d]`.
#[pyfunction]
fn weighting(metric: &PyMetric, t: f64) -> PyResult<(Vec<f64>, f64)> {
    let z = magnitude::similarity_matrix(&metric.inner, t).map_err(err)?;
    let w = magnitude::weighting(&z).map_err(err)?;
    Ok((w.w, w.magnitude))
}

/// Magnitude at each scale; `None` where the solve failed.
#[pyfunction]
fn magnitude_profile(metric: &PyMetric, ts: Vec<f64>) -> PyResult<Vec<Option<f64>>> {
    let points = magnitude::magnitude_profile(&metric.inner, &ts).map_err(err)?;
    Ok(points.iter().map(|p| p.magnitude()).collect())
}

/// Diversity of order `q` (`float("inf")` allowed) of `p` at scale `t`.
#[pyfunction]
fn diversity_order_q(metric: &PyMetric, p: Vec<f64>, t: f64, q: f64) -> PyResult<f64> {
    let z = magnitude::similarity_matrix(&metric.inner, t).map_err(err)?;
    diversity::diversity_order_q(&z, &simplex(p)?, q).map_err(err)
}

/// The normalized weighting; requires a positive weighting.
#[pyfunction]
fn max_diversity(metric: &PyMetric, t: f64) -> PyResult<Vec<f64>> {
    let z = magnitude::similarity_matrix(&metric.inner, t).map_err(err)?;
    Ok(diversity::max_diversity_from_weighting(&z).map_err(err)?.into_vec())
}

#[pyfunction]
fn quadratic_entropy(metric: &PyMetric, p: Vec<f64>) -> PyResult<f64> {
    diversity::quadratic_entropy(&metric.inner, &simplex(p)?).map_err(err)
}

/// The maximizer of `pᵀdp` on the simplex.
#[pyfunction]
#[pyo3(signature = (metric, certify=true, tol_neg=DEFAULT_TOL_NEG, tol_kkt=DEFAULT_TOL_KKT, tol_eig=DEFAULT_TOL_EIG))]
fn peel(metric: &PyMetric, certify: bool, tol_neg: f64, tol_kkt: f64, tol_eig: f64) -> PyResult<PyPeel> {
    let opts = PeelOptions { tol_neg, tol_kkt };
    let mode = if certify { Certify::Check } else { Certify::Skip };
    let (layer, _) = peeling::peel_certified(&metric.inner, &opts, mode, tol_eig).map_err(err)?;
    Ok(layer.into())
}

/// Layers as `(indices, weights)` in original indexing.
#[pyfunction]
#[pyo3(signature = (metric, max_layers=None))]
fn iterated_peeling(metric: &PyMetric, max_layers: Option<usize>) -> PyResult<Vec<(Vec<usize>, Vec<f64>)>> {
    let dec = peeling::iterated_peeling(&metric.inner, max_layers).map_err(err)?;
    Ok(dec.layers.into_iter().map(|l| (l.indices, l.weights)).collect())
}

#[pyfunction]
fn medoid(metric: &PyMetric) -> PyResult<usize> {
    Ok(peeling::medoid(&metric.inner).map_err(err)?.index)
}

/// `(p_aff, 1 / (1ᵀd⁻¹1))`.
#[pyfunction]
fn affine_extremum(metric: &PyMetric) -> PyResult<(Vec<f64>, f64)> {
    let a = peeling::affine_extremum(&metric.inner).map_err(err)?;
    Ok((a.p_aff, a.value))
}

/// Projected gradient reference solver for the peel.
#[pyfunction]
#[pyo3(signature = (metric, tol=1e-10, max_iter=500_000))]
fn qp_oracle(metric: &PyMetric, tol: f64, max_iter: usize) -> PyResult<Vec<f64>> {
    Ok(peeling::qp_oracle(&metric.inner, tol, max_iter).map_err(err)?.p)
}

/// L^p product of two or more factors, in row-major tuple order.
#[pyfunction]
fn lp_product(factors: Vec<PyRef<'_, PyMetric>>, p_exponent: f64) -> PyResult<PyMetric> {
    let refs: Vec<&MetricMatrix> = factors.iter().map(|f| &f.inner).collect();
    let prod = product::lp_product_many(&refs, p_exponent).map_err(err)?;
    Ok(PyMetric { inner: prod.result })
}

/// Zero-sum vector with `xᵀ(d ⊕₁ d')x = 0` on the L¹ product.
#[pyfunction]
fn degeneracy_witness_l1(a: &PyMetric, b: &PyMetric) -> PyResult<Vec<f64>> {
    product::degeneracy_witness_l1(&a.inner, &b.inner).map_err(err)
}

/// Runs the path pipeline and returns the ranked table as dicts.
#[pyfunction]
#[pyo3(signature = (nodes, features, source, target, stops=2, k=500, p_exponent=2.0, certify=true))]
#[allow(clippy::too_many_arguments)]
fn diverse_paths<'py>(
    py: Python<'py>,
    nodes: &str,
    features: &str,
    source: &str,
    target: &str,
    stops: usize,
    k: usize,
    p_exponent: f64,
    certify: bool,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let table = read_node_table(nodes.as_ref(), features.as_ref()).map_err(err)?;
    let config = PipelineConfig {
        source: source.into(),
        target: target.into(),
        stops,
        k,
        p_exponent,
        seed: paths::SYNTHETIC_SEED,
    };
    let opts = PathPeelOptions {
        certify,
        ..PathPeelOptions::default()
    };
    let run = paths::run_pipeline(&table, &config, &opts).map_err(err)?;
    run.peel
        .rows
        .into_iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("nodes", r.nodes)?;
            d.set_item("labels", r.labels)?;
            d.set_item("geo_length", r.geo_length)?;
            d.set_item("weight", r.weight)?;
            d.set_item("relative_weighting", r.relative_weighting)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn peelkit(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("PeelkitError", py.get_type::<PeelkitError>())?;
    m.add("InputError", py.get_type::<InputError>())?;
    m.add("NumericalError", py.get_type::<NumericalError>())?;
    m.add("CertificationError", py.get_type::<CertificationError>())?;
    m.add_class::<PyMetric>()?;
    m.add_class::<PyPeel>()?;
    m.add_function(wrap_pyfunction!(weighting, m)?)?;
    m.add_function(wrap_pyfunction!(magnitude_profile, m)?)?;
    m.add_function(wrap_pyfunction!(diversity_order_q, m)?)?;
    m.add_function(wrap_pyfunction!(max_diversity, m)?)?;
    m.add_function(wrap_pyfunction!(quadratic_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(peel, m)?)?;
    m.add_function(wrap_pyfunction!(iterated_peeling, m)?)?;
    m.add_function(wrap_pyfunction!(medoid, m)?)?;
    m.add_function(wrap_pyfunction!(affine_extremum, m)?)?;
    m.add_function(wrap_pyfunction!(qp_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(lp_product, m)?)?;
    m.add_function(wrap_pyfunction!(degeneracy_witness_l1, m)?)?;
    m.add_function(wrap_pyfunction!(diverse_paths, m)?)?;
    Ok(())
}
