use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use lipext::constants::{constants_report, IndexedSample};
use lipext::extension::{optimal_alpha, ExtensionKind, ExtensionModel};
use lipext::metric::{BaseMetric, CompositionMetric};
use lipext::phi::{validate_phi, PhiAtom, PhiCombination};
use lipext::pipeline::{cross_validate, CvOptions, Method, ModelSpec, PhiSpec};
use lipext::swarm::{optimize_phi, KqObjective, PsoConfig};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_metric(name: &str) -> PyResult<BaseMetric> {
    name.parse().map_err(value_err)
}

fn parse_atoms(names: &[String]) -> PyResult<Vec<PhiAtom>> {
    names
        .iter()
        .map(|n| n.parse::<PhiAtom>().map_err(value_err))
        .collect()
}

fn sample(points: Vec<Vec<f64>>, values: Vec<f64>) -> PyResult<IndexedSample> {
    IndexedSample::new(points, values).map_err(value_err)
}

/// A modulus `φ = Σ λⱼ φⱼ`.
#[pyclass(name = "Phi", module = "lipext_py", frozen, from_py_object)]
#[derive(Clone)]
struct PyPhi {
    inner: PhiCombination,
}

#[pymethods]
impl PyPhi {
    #[new]
    fn new(atoms: Vec<String>, coefficients: Vec<f64>) -> PyResult<Self> {
        let inner = PhiCombination::new(parse_atoms(&atoms)?, coefficients).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn identity() -> Self {
        Self {
            inner: PhiCombination::identity(),
        }
    }

    #[getter]
    fn atoms(&self) -> Vec<String> {
        self.inner
            .atoms()
            .iter()
            .map(|a| a.name().to_string())
            .collect()
    }

    #[getter]
    fn coefficients(&self) -> Vec<f64> {
        self.inner.coefficients().to_vec()
    }

    fn __call__(&self, x: f64) -> PyResult<f64> {
        self.inner.eval(x).map_err(value_err)
    }

    /// Returns `(passed, probes)` of the seeded modulus-axiom probe.
    #[pyo3(signature = (probe_count=10_000, seed=0))]
    fn validate(&self, probe_count: usize, seed: u64) -> (bool, usize) {
        let r = validate_phi(&self.inner, probe_count, seed);
        (r.passed, r.probes)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!("Phi({})", self.inner)
    }
}

fn phi_or_identity(phi: Option<PyPhi>) -> PhiCombination {
    phi.map(|p| p.inner)
        .unwrap_or_else(PhiCombination::identity)
}

/// `φ(d(a, b))`.
#[pyfunction]
#[pyo3(signature = (a, b, metric="euclidean", phi=None))]
fn distance(a: Vec<f64>, b: Vec<f64>, metric: &str, phi: Option<PyPhi>) -> PyResult<f64> {
    CompositionMetric::new(parse_metric(metric)?, phi_or_identity(phi))
        .distance(&a, &b)
        .map_err(value_err)
}

/// Coherence `K`, normalization `Q`, bound `C` and `(KQ − 1)C`.
#[pyfunction]
#[pyo3(signature = (points, values, metric="euclidean", phi=None))]
fn constants<'py>(
    py: Python<'py>,
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
    metric: &str,
    phi: Option<PyPhi>,
) -> PyResult<Bound<'py, PyDict>> {
    let cm = CompositionMetric::new(parse_metric(metric)?, phi_or_identity(phi));
    let r = constants_report(&sample(points, values)?, &cm).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("K", r.coherence.value)?;
    d.set_item("K_pair", r.coherence.pair)?;
    d.set_item("Q", r.normalization.value)?;
    d.set_item("Q_pair", r.normalization.pair)?;
    d.set_item("C", r.bound)?;
    d.set_item("KQ", r.kq)?;
    d.set_item("error_bound", r.error_bound)?;
    Ok(d)
}

/// Fitted McShane/Whitney/blend/standard extension.
#[pyclass(name = "ExtensionModel", module = "lipext_py", frozen)]
struct PyExtensionModel {
    inner: ExtensionModel,
}

#[pymethods]
impl PyExtensionModel {
    /// `method` is one of `mcshane`, `whitney`, `blend` (needs `alpha`) or
    /// `standard`; `K` defaults to the coherence constant.
    #[staticmethod]
    #[pyo3(signature = (points, values, method="whitney", alpha=None, metric="euclidean", phi=None, lipschitz=None))]
    #[allow(clippy::too_many_arguments)]
    fn fit(
        points: Vec<Vec<f64>>,
        values: Vec<f64>,
        method: &str,
        alpha: Option<f64>,
        metric: &str,
        phi: Option<PyPhi>,
        lipschitz: Option<f64>,
    ) -> PyResult<Self> {
        let kind = match (method, alpha) {
            ("mcshane", _) => ExtensionKind::Mcshane,
            ("whitney", _) => ExtensionKind::Whitney,
            ("standard", _) => ExtensionKind::Standard,
            ("blend", Some(alpha)) => ExtensionKind::Blend { alpha },
            ("blend", None) => return Err(value_err("blend needs alpha")),
            (other, _) => return Err(value_err(format!("unknown method `{other}`"))),
        };
        let cm = CompositionMetric::new(parse_metric(metric)?, phi_or_identity(phi));
        let s = sample(points, values)?;
        let inner = match lipschitz {
            Some(k) => ExtensionModel::with_constant(s, cm, k, kind),
            None => ExtensionModel::fit(s, cm, kind),
        }
        .map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn lipschitz(&self) -> f64 {
        self.inner.lipschitz()
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.predict(&x).map_err(value_err)
    }

    fn predict_many(&self, xs: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        self.inner.predict_many(&xs).map_err(value_err)
    }

    fn whitney(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.whitney(&x).map_err(value_err)
    }

    fn mcshane(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.mcshane(&x).map_err(value_err)
    }

    fn blend(&self, x: Vec<f64>, alpha: f64) -> PyResult<f64> {
        self.inner.blend(&x, alpha).map_err(value_err)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(value_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: serde_json::from_str(text).map_err(value_err)?,
        })
    }
}

/// Least-squares blend weight, clamped to `[0, 1]`.
#[pyfunction(name = "optimal_alpha")]
fn py_optimal_alpha(truth: Vec<f64>, whitney: Vec<f64>, mcshane: Vec<f64>) -> PyResult<f64> {
    optimal_alpha(&truth, &whitney, &mcshane)
        .map(|f| f.alpha)
        .map_err(value_err)
}

/// Swarm search for coefficients minimizing `K·Q` of the shifted index.
/// Returns `(phi, best_objective, history)`.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (points, values, atoms=None, metric="euclidean", swarm_size=40, iterations=200, seed=0))]
fn optimize_kq(
    py: Python<'_>,
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
    atoms: Option<Vec<String>>,
    metric: &str,
    swarm_size: usize,
    iterations: usize,
    seed: u64,
) -> PyResult<(PyPhi, f64, Vec<f64>)> {
    let atoms = match atoms {
        Some(names) => parse_atoms(&names)?,
        None => PhiAtom::PHI_BASIS.to_vec(),
    };
    let s = lipext::katetov_shift(&sample(points, values)?);
    let cfg = PsoConfig {
        swarm_size,
        iterations,
        seed,
        ..PsoConfig::default()
    };
    let metric = parse_metric(metric)?;
    let (phi, result) = py
        .detach(|| {
            let obj = KqObjective::new(&s, metric, &atoms);
            optimize_phi(&|l: &[f64]| obj.evaluate(l), &atoms, &cfg)
        })
        .map_err(value_err)?;
    Ok((PyPhi { inner: phi }, result.best_objective, result.history))
}

/// Repeated random-split evaluation; returns the per-repeat RMSE list and
/// its mean, median and standard deviation.
#[pyfunction(name = "cross_validate")]
#[pyo3(signature = (points, values, method="blend", phi=None, metric="euclidean", repeats=20, seed=0, train_fraction=0.7))]
#[allow(clippy::too_many_arguments)]
fn py_cross_validate<'py>(
    py: Python<'py>,
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
    method: &str,
    phi: Option<PyPhi>,
    metric: &str,
    repeats: usize,
    seed: u64,
    train_fraction: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let method: Method =
        serde_json::from_value(serde_json::Value::String(method.to_string())).map_err(value_err)?;
    let spec = ModelSpec {
        method,
        metric: parse_metric(metric)?,
        phi: PhiSpec::Fixed(phi_or_identity(phi)),
        ..ModelSpec::default()
    };
    let opts = CvOptions {
        repeats,
        seed,
        train_fraction,
        ..CvOptions::default()
    };
    let s = sample(points, values)?;
    let report = py
        .detach(|| cross_validate(&s, &spec, &opts))
        .map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("per_repeat_rmse", report.per_repeat_rmse)?;
    d.set_item("mean", report.mean)?;
    d.set_item("median", report.median)?;
    d.set_item("std_dev", report.std_dev)?;
    d.set_item("failed_repeats", report.failed_repeats)?;
    d.set_item("seconds_per_iteration", report.seconds_per_iteration)?;
    Ok(d)
}

/// `(rank, id, value)` rows, highest value first, ties by id.
#[pyfunction(name = "rank")]
fn py_rank(ids: Vec<String>, predictions: Vec<f64>) -> PyResult<Vec<(usize, String, f64)>> {
    if ids.len() != predictions.len() {
        return Err(value_err("ids and predictions differ in length"));
    }
    Ok(lipext::rank(&ids, &predictions)
        .into_iter()
        .map(|r| (r.rank, r.id, r.value))
        .collect())
}

#[pymodule]
fn lipext_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPhi>()?;
    m.add_class::<PyExtensionModel>()?;
    m.add_function(wrap_pyfunction!(distance, m)?)?;
    m.add_function(wrap_pyfunction!(constants, m)?)?;
    m.add_function(wrap_pyfunction!(py_optimal_alpha, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_kq, m)?)?;
    m.add_function(wrap_pyfunction!(py_cross_validate, m)?)?;
    m.add_function(wrap_pyfunction!(py_rank, m)?)?;
    m.add(
        "ATOMS",
        PhiAtom::ALL.iter().map(|a| a.name()).collect::<Vec<_>>(),
    )?;
    Ok(())
}
