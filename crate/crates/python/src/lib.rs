//! Python bindings. Exact rationals cross the boundary as `fractions.Fraction`,
//! big group orders as Python ints, cycle structures as tuples of ints.

use std::collections::BTreeMap;

use num_rational::BigRational;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyTuple};

use trimarkov::error::Error;
use trimarkov::fpfactor::{self, reduce_mod_p, PcfCubic};
use trimarkov::groups::{self, CdMode, CosetUnion, GenName, GroupFamily, GroupKind, DEFAULT_ENUMERATION_CAP};
use trimarkov::harness::{self, CompareConfig, PrimeFilter, Target};
use trimarkov::markov::{self, parse_rational, ModelId, OrbitSpec, DEFAULT_MAX_SUPPORT};
use trimarkov::perm_group::PermGroup;
use trimarkov::theorems::{self, ReportConfig};
use trimarkov::tree::{self, CycleStructure};

fn err(e: Error) -> PyErr {
    match e {
        Error::InvalidArgument(m) => PyValueError::new_err(m),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for trimarkov::error::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(err)
    }
}

/// Accepts int, str or Fraction.
fn rational(v: &Bound<'_, PyAny>) -> PyResult<BigRational> {
    parse_rational(&v.str()?.to_string_lossy()).py()
}

fn fraction<'py>(py: Python<'py>, q: &BigRational) -> PyResult<Bound<'py, PyAny>> {
    let cls = py.import("fractions")?.getattr("Fraction")?;
    cls.call1((q.numer().clone(), q.denom().clone()))
}

fn cycles<'py>(py: Python<'py>, c: &CycleStructure) -> PyResult<Bound<'py, PyTuple>> {
    PyTuple::new(py, c.lengths())
}

fn exact_dist<'py>(py: Python<'py>, entries: &BTreeMap<CycleStructure, BigRational>) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (c, q) in entries {
        d.set_item(cycles(py, c)?, fraction(py, q)?)?;
    }
    Ok(d)
}

fn float_dist<'py>(py: Python<'py>, entries: &BTreeMap<CycleStructure, f64>) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (c, f) in entries {
        d.set_item(cycles(py, c)?, *f)?;
    }
    Ok(d)
}

fn json<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.getattr("loads")?.call1((text,))
}

fn model_id(orbit_length: u8, model: u8) -> PyResult<ModelId> {
    ModelId::new(orbit_length, model).py()
}

/// A post-critically finite cubic from the catalog, possibly shifted by a parameter.
#[pyclass(name = "Cubic", module = "trimarkov", frozen)]
struct PyCubic {
    inner: PcfCubic,
}

#[pymethods]
impl PyCubic {
    #[new]
    #[pyo3(signature = (id, a = None))]
    fn new(id: &str, a: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let a = a.map(rational).transpose()?.unwrap_or_default();
        Ok(PyCubic { inner: fpfactor::catalog_entry(id, &a).py()? })
    }

    #[getter]
    fn id(&self) -> &str {
        self.inner.id()
    }

    #[getter]
    fn formula(&self) -> &str {
        self.inner.formula()
    }

    #[getter]
    fn orbit_length(&self) -> u8 {
        self.inner.orbit_length()
    }

    /// Coefficients from z^3 down to the constant term.
    #[getter]
    fn coefficients<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyAny>>> {
        self.inner.coefficients().iter().map(|q| fraction(py, q)).collect()
    }

    /// (sum, product) of each pair in the combined critical orbit.
    #[getter]
    fn critical_orbit<'py>(&self, py: Python<'py>) -> PyResult<Vec<(Bound<'py, PyAny>, Bound<'py, PyAny>)>> {
        self.inner.combined_orbit().iter().map(|o| Ok((fraction(py, &o.sum)?, fraction(py, &o.product)?))).collect()
    }

    fn __call__<'py>(&self, py: Python<'py>, z: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
        fraction(py, &self.inner.eval(&rational(z)?))
    }

    /// Model number for the target value t.
    fn select_model(&self, t: &Bound<'_, PyAny>) -> PyResult<u8> {
        fpfactor::select_model(&self.inner, &rational(t)?).py()
    }

    /// Irreducible factors of f^n - t mod p as (degree, label) pairs.
    fn factor_mod_p(&self, t: &Bound<'_, PyAny>, level: usize, p: u64) -> PyResult<Vec<(usize, String)>> {
        let r = reduce_mod_p(&self.inner, &rational(t)?, p).map_err(|s| PyValueError::new_err(s.name()))?;
        let fac = r.iterate_and_factor(level).map_err(|s| PyValueError::new_err(s.name()))?;
        Ok(fac.factors.iter().map(|(g, l)| (g.degree().unwrap_or(0), l.to_string())).collect())
    }

    fn __repr__(&self) -> String {
        format!("Cubic({:?}, {})", self.inner.id(), self.inner.formula())
    }
}

/// An automorphism of the level-n ternary tree.
#[pyclass(name = "TreeAut", module = "trimarkov", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct PyTreeAut {
    inner: tree::TreeAut,
}

#[pymethods]
impl PyTreeAut {
    #[staticmethod]
    fn identity(level: usize) -> Self {
        PyTreeAut { inner: tree::TreeAut::identity(level) }
    }

    /// One of x, y, z, k, l at a level.
    #[staticmethod]
    #[pyo3(signature = (name, level, orbit_length = 1))]
    fn generator(name: &str, level: usize, orbit_length: u8) -> PyResult<Self> {
        let g: GenName = name.parse().py()?;
        Ok(PyTreeAut { inner: groups::recursive_generator(g, level, orbit_length).py()? })
    }

    #[staticmethod]
    fn from_text(s: &str) -> PyResult<Self> {
        Ok(PyTreeAut { inner: tree::TreeAut::from_text(s).py()? })
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[getter]
    fn level(&self) -> usize {
        self.inner.level()
    }

    fn leaf_permutation(&self) -> Vec<u32> {
        self.inner.leaf_permutation()
    }

    /// self, then other.
    fn compose(&self, other: &PyTreeAut) -> PyResult<Self> {
        Ok(PyTreeAut { inner: self.inner.compose(&other.inner).py()? })
    }

    fn __mul__(&self, other: &PyTreeAut) -> PyResult<Self> {
        self.compose(other)
    }

    fn inverse(&self) -> Self {
        PyTreeAut { inner: self.inner.inverse() }
    }

    fn __pow__(&self, e: u32, _modulo: Option<u32>) -> Self {
        PyTreeAut { inner: self.inner.pow(e) }
    }

    /// g^-1 self g.
    fn conjugate_by(&self, g: &PyTreeAut) -> PyResult<Self> {
        Ok(PyTreeAut { inner: self.inner.conjugate_by(&g.inner).py()? })
    }

    fn cycle_structure<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyTuple>> {
        cycles(py, &self.inner.cycle_structure())
    }

    fn sgn(&self) -> PyResult<i8> {
        groups::sgn(&self.inner).py()
    }

    fn __repr__(&self) -> String {
        format!("TreeAut({:?})", self.inner.to_text())
    }
}

/// One of the Markov groups (M, L, H, K, KY, LYL, LL) or Aut at a level.
#[pyclass(name = "Group", module = "trimarkov", frozen)]
struct PyGroup {
    family: GroupFamily,
    inner: PermGroup,
}

#[pymethods]
impl PyGroup {
    #[new]
    fn new(orbit_length: u8, kind: &str, level: usize) -> PyResult<Self> {
        let kind: GroupKind = kind.parse().py()?;
        let family = GroupFamily::new(orbit_length, kind, level).py()?;
        let inner = groups::build_group(&family).py()?;
        Ok(PyGroup { family, inner })
    }

    /// The group a model's data describes.
    #[staticmethod]
    fn for_model(orbit_length: u8, model: u8, level: usize) -> PyResult<Self> {
        let family = GroupFamily::for_model(orbit_length, model, level).py()?;
        let inner = groups::build_group(&family).py()?;
        Ok(PyGroup { family, inner })
    }

    #[getter]
    fn order(&self) -> num_bigint::BigUint {
        self.inner.order()
    }

    #[getter]
    fn degree(&self) -> usize {
        self.inner.degree()
    }

    fn __contains__(&self, a: &PyTreeAut) -> bool {
        let p = groups::to_perm(&a.inner);
        p.degree() == self.inner.degree() && self.inner.contains(&p)
    }

    fn index_of(&self, sub: &PyGroup) -> PyResult<num_bigint::BigUint> {
        self.inner.index_of(&sub.inner).py()
    }

    fn is_normal_in(&self, g: &PyGroup) -> bool {
        self.inner.is_normal_in(&g.inner)
    }

    /// Name of self/sub when the quotient is small (C1, C2, C3, V4, S3, A4, ...).
    fn quotient(&self, sub: &PyGroup) -> PyResult<String> {
        Ok(groups::identify_small_quotient(&self.inner, &sub.inner).py()?.to_string())
    }

    /// Exact cycle data by enumeration; fails above the cap.
    #[pyo3(signature = (cap = DEFAULT_ENUMERATION_CAP))]
    fn cycle_data<'py>(&self, py: Python<'py>, cap: u64) -> PyResult<Bound<'py, PyDict>> {
        let u = CosetUnion::group(self.inner.clone());
        let cd = groups::cycle_data(&u, &self.inner, CdMode::Exhaustive { cap }).py()?;
        exact_dist(py, cd.entries())
    }

    /// Cycle-type counts over uniform samples.
    #[pyo3(signature = (samples, seed = 1))]
    fn sample_cycle_types<'py>(&self, py: Python<'py>, samples: u64, seed: u64) -> PyResult<Bound<'py, PyDict>> {
        let counts = groups::sample_cycle_types(&CosetUnion::group(self.inner.clone()), samples, seed);
        let d = PyDict::new(py);
        for (c, k) in counts {
            d.set_item(cycles(py, &c)?, k)?;
        }
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Group({})", self.family)
    }
}

/// Level-n data of a model: {typed partition text: Fraction}.
#[pyfunction]
#[pyo3(signature = (orbit_length, model, level, max_support = DEFAULT_MAX_SUPPORT))]
fn model_data<'py>(py: Python<'py>, orbit_length: u8, model: u8, level: usize, max_support: usize) -> PyResult<Bound<'py, PyDict>> {
    let data = harness::model_data(&model_id(orbit_length, model)?, level, max_support).py()?;
    let d = PyDict::new(py);
    for (tp, q) in data.iter() {
        d.set_item(tp.to_string(), fraction(py, &q)?)?;
    }
    Ok(d)
}

/// Cycle-structure marginal of a model's level-n data, exactly.
#[pyfunction]
#[pyo3(signature = (orbit_length, model, level, max_support = DEFAULT_MAX_SUPPORT))]
fn cycle_marginal<'py>(py: Python<'py>, orbit_length: u8, model: u8, level: usize, max_support: usize) -> PyResult<Bound<'py, PyDict>> {
    let data = harness::model_data(&model_id(orbit_length, model)?, level, max_support).py()?;
    exact_dist(py, markov::cycle_marginal(&data).entries())
}

/// Monte Carlo estimate of the cycle marginal.
#[pyfunction]
#[pyo3(signature = (orbit_length, model, level, samples = 100_000, seed = 1))]
fn simulate<'py>(py: Python<'py>, orbit_length: u8, model: u8, level: usize, samples: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    if level == 0 {
        return Err(PyValueError::new_err("model data starts at level 1"));
    }
    let id = model_id(orbit_length, model)?;
    let orbit = OrbitSpec::standard(orbit_length).py()?;
    let init = markov::initial_data(&id).py()?;
    let marginal = py.detach(|| markov::simulate_chain(&init, level - 1, samples, seed, &orbit)).py()?;
    float_dist(py, &marginal)
}

#[pyfunction]
fn catalog() -> Vec<PyCubic> {
    fpfactor::catalog().into_iter().map(|inner| PyCubic { inner }).collect()
}

fn target(poly: &str, t: &Bound<'_, PyAny>, a: Option<&Bound<'_, PyAny>>) -> PyResult<Target> {
    let a = a.map(rational).transpose()?.unwrap_or_default();
    Target::parse(poly, &a, &rational(t)?).py()
}

/// Factorization shapes of f^n - t over primes up to `prime_bound`.
/// `poly` is a catalog id or comma-separated coefficients from the top degree.
#[pyfunction]
#[pyo3(signature = (poly, t, level, prime_bound, all_primes = false, a = None))]
fn sweep<'py>(
    py: Python<'py>,
    poly: &str,
    t: &Bound<'py, PyAny>,
    level: usize,
    prime_bound: u64,
    all_primes: bool,
    a: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let tg = target(poly, t, a)?;
    let filter = if all_primes { PrimeFilter::All } else { PrimeFilter::OneModThree };
    let sw = py.detach(|| harness::sweep(&tg, level, prime_bound, filter)).py()?;
    json(py, &sw.summary())
}

/// Model, group and empirical distributions side by side.
#[pyfunction]
#[pyo3(signature = (poly, t, level, prime_bound, model = None, samples = 100_000, seed = 1, a = None))]
#[allow(clippy::too_many_arguments)]
fn compare<'py>(
    py: Python<'py>,
    poly: &str,
    t: &Bound<'py, PyAny>,
    level: usize,
    prime_bound: u64,
    model: Option<&str>,
    samples: u64,
    seed: u64,
    a: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let tg = target(poly, t, a)?;
    let orbit = match &tg {
        Target::Catalog { cubic, .. } => Some(cubic.orbit_length()),
        Target::Plain { .. } => None,
    };
    let mut cfg = CompareConfig::new(tg, level, prime_bound);
    cfg.model = model.map(|m| harness::parse_model(m, orbit)).transpose().py()?;
    cfg.samples = samples;
    cfg.seed = seed;
    let r = py.detach(|| harness::compare(&cfg)).py()?;
    json(py, &serde_json::to_value(&r).map_err(|e| PyRuntimeError::new_err(e.to_string()))?)
}

/// Structural, order and coset-identity checks at one level.
#[pyfunction]
#[pyo3(signature = (level, orbit_length, samples = 100_000, seed = 1))]
fn theorem_report<'py>(py: Python<'py>, level: usize, orbit_length: u8, samples: u64, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let cfg = ReportConfig { samples, seed, ..ReportConfig::default() };
    let items = py.detach(|| theorems::theorem_report(level, orbit_length, &cfg)).py()?;
    json(py, &serde_json::to_value(&items).map_err(|e| PyRuntimeError::new_err(e.to_string()))?)
}

/// log|M_n| / log|Aut(T_n)| from the closed forms.
#[pyfunction]
fn hausdorff_ratio(orbit_length: u8, level: usize) -> PyResult<f64> {
    theorems::hausdorff_ratio(orbit_length, level).py()
}

#[pyfunction]
fn hausdorff_limit(orbit_length: u8) -> PyResult<f64> {
    theorems::hausdorff_limit(orbit_length).py()
}

#[pyfunction]
fn markov_order_formula(orbit_length: u8, level: usize) -> PyResult<num_bigint::BigUint> {
    theorems::markov_order_formula(orbit_length, level).py()
}

#[pymodule]
#[pyo3(name = "trimarkov")]
fn trimarkov_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCubic>()?;
    m.add_class::<PyTreeAut>()?;
    m.add_class::<PyGroup>()?;
    m.add_function(wrap_pyfunction!(model_data, m)?)?;
    m.add_function(wrap_pyfunction!(cycle_marginal, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(catalog, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(theorem_report, m)?)?;
    m.add_function(wrap_pyfunction!(hausdorff_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(hausdorff_limit, m)?)?;
    m.add_function(wrap_pyfunction!(markov_order_formula, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    #[test]
    fn rationals_round_trip_through_fractions() {
        Python::initialize();
        Python::attach(|py| {
            let q = BigRational::new(BigInt::from(-7), BigInt::from(6));
            let f = fraction(py, &q).unwrap();
            assert_eq!(f.str().unwrap().to_string(), "-7/6");
            assert_eq!(rational(&f).unwrap(), q);
        });
    }

    #[test]
    fn group_orders_are_python_ints() {
        Python::initialize();
        Python::attach(|py| {
            let g = PyGroup::new(1, "M", 2).unwrap();
            let o = g.order().into_pyobject(py).unwrap();
            assert_eq!(o.extract::<u64>().unwrap(), 648);
        });
    }
}
