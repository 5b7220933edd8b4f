//! Python bindings. Rationals cross the boundary as `"p/q"` strings;
//! structured results come back as plain dicts and lists.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use vmc_core::kernels::{self, Family, NamedBalayage, VtmGenerator};
use vmc_core::levels::{self, LevelPath, State, VirtualPathPrefix};
use vmc_core::rational::{format_rational, parse_rational};
use vmc_core::simplex::{self, ExtendedBalayageTable, SequenceModel};
use vmc_core::{smc, vmcsim, zolaw, Rational, VmcError};

fn py_err(e: VmcError) -> PyErr {
    match e {
        VmcError::Io(e) => PyIOError::new_err(e.to_string()),
        e @ (VmcError::InternalUnreachableState { .. } | VmcError::SingularSystem { .. } | VmcError::CertificateRejected(_)) => {
            PyRuntimeError::new_err(e.to_string())
        }
        e => PyValueError::new_err(e.to_string()),
    }
}

/// Accepts a JSON string or any JSON-serializable Python object.
fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text = match obj.extract::<String>() {
        Ok(s) => s,
        Err(_) => obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?,
    };
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn strings(xs: &[Rational]) -> Vec<String> {
    xs.iter().map(format_rational).collect()
}

fn parse(s: &str) -> PyResult<Rational> {
    parse_rational(s).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// A VTM family with its lazily built levels.
#[pyclass(module = "vmc", frozen)]
struct Model {
    family: Family,
    generator: VtmGenerator,
}

#[pymethods]
impl Model {
    #[new]
    fn new(spec: &Bound<'_, PyAny>) -> PyResult<Self> {
        let family: Family = from_py(spec)?;
        let generator = VtmGenerator::new(family.clone()).map_err(py_err)?;
        Ok(Model { family, generator })
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.family.name()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.family).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    /// `K_N` as rows of rational strings.
    fn level(&self, n: usize) -> PyResult<Vec<Vec<String>>> {
        Ok(self.generator.level(n).map_err(py_err)?.rows().iter().map(|r| strings(r)).collect())
    }

    /// Whether projecting `K_{N+1}` gives back `K_N`.
    fn projects(&self, n: usize) -> PyResult<bool> {
        let upper = self.generator.level(n + 1).map_err(py_err)?;
        let projected = kernels::project_matrix(&upper).map_err(py_err)?;
        Ok(projected == *self.generator.level(n).map_err(py_err)?)
    }

    fn balayage(&self, levels: usize) -> PyResult<Balayage> {
        let k = self.generator.prefix(levels.max(1)).map_err(py_err)?;
        Ok(Balayage(kernels::Balayage::of_vtm(&k).map_err(py_err)?))
    }

    /// VTM validity and, given a sequence, compatibility through `levels`.
    #[pyo3(signature = (levels, sequence=None))]
    fn check<'py>(&self, py: Python<'py>, levels: usize, sequence: Option<&Sequence>) -> PyResult<Bound<'py, PyAny>> {
        let k = self.generator.prefix(levels).map_err(py_err)?;
        let vtm = kernels::validate_vtm(&k);
        let compat = match sequence {
            Some(s) => Some(kernels::validate_compatibility(&s.0.truncated(levels).map_err(py_err)?.to_vid(), &k).map_err(py_err)?),
            None => None,
        };
        to_py(py, &serde_json::json!({ "vtm": vtm, "compatibility": compat }))
    }
}

#[pyclass(module = "vmc", frozen)]
struct Balayage(kernels::Balayage);

#[pymethods]
impl Balayage {
    /// `kind` is one of `uniform`, `down`, `two-down`.
    #[staticmethod]
    fn named(kind: &str, len: usize) -> PyResult<Self> {
        let kind = match kind.replace('_', "-").as_str() {
            "uniform" => NamedBalayage::Uniform,
            "down" => NamedBalayage::Down,
            "two-down" => NamedBalayage::TwoDown,
            other => return Err(PyValueError::new_err(format!("unknown balayage {other:?}"))),
        };
        Ok(Balayage(kernels::Balayage::named(kind, len)))
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.0.rows().iter().map(|r| strings(r.weights())).collect()
    }

    fn recognize(&self) -> Option<&'static str> {
        self.0.recognize().map(|k| k.name())
    }

    fn __len__(&self) -> usize {
        self.0.rows().len()
    }
}

/// A prefix `(ν_0, …, ν_L)` of a marginal sequence.
#[pyclass(module = "vmc", frozen)]
struct Sequence(simplex::MarginalSequence);

#[pymethods]
impl Sequence {
    /// Resolves a sequence description (`{"kind": "delta", "a": 1}`, …)
    /// against a balayage, and a model for `row`.
    #[staticmethod]
    #[pyo3(signature = (spec, balayage, top, model=None))]
    fn resolve(spec: &Bound<'_, PyAny>, balayage: &Balayage, top: usize, model: Option<&Model>) -> PyResult<Self> {
        let spec: SequenceModel = from_py(spec)?;
        let k = match model {
            Some(m) => Some(m.generator.prefix(top.max(spec.max_state()).max(1)).map_err(py_err)?),
            None => None,
        };
        Ok(Sequence(spec.resolve(&balayage.0, k.as_ref(), top).map_err(py_err)?))
    }

    #[staticmethod]
    fn delta(balayage: &Balayage, a: State, top: usize) -> PyResult<Self> {
        Ok(Sequence(simplex::delta_point(&balayage.0, a, top).map_err(py_err)?))
    }

    #[staticmethod]
    fn uniform(top: usize) -> Self {
        Sequence(simplex::MarginalSequence::virtual_uniform(top))
    }

    #[staticmethod]
    fn zero(top: usize) -> Self {
        Sequence(simplex::MarginalSequence::zero(top))
    }

    /// Convex combination of `(weight, sequence)` pairs.
    #[staticmethod]
    fn mixture(parts: Vec<(String, PyRef<'_, Sequence>)>) -> PyResult<Self> {
        let weights: Vec<Rational> = parts.iter().map(|(w, _)| parse(w)).collect::<PyResult<_>>()?;
        let pairs: Vec<(Rational, &simplex::MarginalSequence)> = weights.into_iter().zip(parts.iter().map(|(_, s)| &s.0)).collect();
        Ok(Sequence(simplex::MarginalSequence::mixture(&pairs).map_err(py_err)?))
    }

    #[getter]
    fn top_level(&self) -> usize {
        self.0.top_level()
    }

    fn level(&self, n: usize) -> PyResult<Vec<String>> {
        if n > self.0.top_level() {
            return Err(PyValueError::new_err(format!("level {n} above {}", self.0.top_level())));
        }
        Ok(strings(self.0.level(n).weights()))
    }

    /// `ν_N(a)`.
    fn eval(&self, a: State, n: usize) -> String {
        format_rational(&self.0.eval(a, n))
    }

    fn is_member(&self, balayage: &Balayage) -> PyResult<bool> {
        Ok(simplex::membership(&self.0, &balayage.0).map_err(py_err)?.member)
    }
}

/// The projection of a fully observed level-`level` path down to `target`.
#[pyfunction]
fn project_path(level: usize, states: Vec<State>, target: usize) -> PyResult<Vec<Option<State>>> {
    let p = LevelPath::determined(level, states).map_err(py_err)?;
    Ok(levels::project_path(&p, target).map_err(py_err)?.entries().collect())
}

/// Staircase decomposition of a path table given as one row per level
/// (or just the top row).
#[pyfunction]
#[pyo3(signature = (rows, amax=3, kmax=3))]
fn decompose<'py>(py: Python<'py>, rows: Vec<Vec<State>>, amax: State, kmax: usize) -> PyResult<Bound<'py, PyAny>> {
    let table = if rows.len() == 1 {
        let top = rows.into_iter().next().unwrap();
        let level = top.iter().copied().max().unwrap_or(0);
        VirtualPathPrefix::from_top(LevelPath::determined(level, top).map_err(py_err)?)
    } else {
        let paths = rows.into_iter().enumerate().map(|(n, r)| LevelPath::determined(n, r)).collect::<Result<_, _>>().map_err(py_err)?;
        VirtualPathPrefix::new(paths)
    }
    .map_err(py_err)?;
    if let Some(m) = levels::validate_virtual_prefix(&table).first() {
        return Err(PyValueError::new_err(format!("level {} is not the projection of level {}", m.lower, m.upper)));
    }
    to_py(py, &vmcsim::staircase_decomposition(&table, amax, kmax))
}

/// One simulated virtual path prefix, as a list of level paths.
#[pyfunction]
#[pyo3(signature = (model, sequence, level, steps, seed=0, replicate=0))]
fn simulate<'py>(
    py: Python<'py>,
    model: &Model,
    sequence: &Sequence,
    level: usize,
    steps: usize,
    seed: u64,
    replicate: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let k = model.generator.prefix(level).map_err(py_err)?;
    let vid = sequence.0.truncated(level).map_err(py_err)?.to_vid();
    let vp = py
        .detach(|| vmcsim::VmcSampler::new(&vid, &k, level).and_then(|s| s.sample(steps, seed, replicate)))
        .map_err(py_err)?;
    to_py(py, &vp)
}

/// Exact `(q_a, p_a)` and verdicts for `a = 1..=amax`.
#[pyfunction]
fn classify<'py>(py: Python<'py>, model: &Model, sequence: &Sequence, amax: State) -> PyResult<Bound<'py, PyAny>> {
    let k = model.generator.prefix(amax).map_err(py_err)?;
    let vid = sequence.0.truncated(amax).map_err(py_err)?.to_vid();
    to_py(py, &vmcsim::classify_states(&vid, &k, amax).map_err(py_err)?)
}

/// The zero-one law report. The sequence must reach `amax + 2` levels (or
/// twice that with the default limit scan).
#[pyfunction]
#[pyo3(signature = (model, sequence, amax=16, shortcut=true))]
fn zero_one<'py>(py: Python<'py>, model: &Model, sequence: &Sequence, amax: usize, shortcut: bool) -> PyResult<Bound<'py, PyAny>> {
    let opts = zolaw::EvaluateOptions { use_irreducible_shortcut: shortcut, ..zolaw::EvaluateOptions::new(amax) };
    let k = model.generator.prefix(opts.vtm_level()).map_err(py_err)?;
    let report = py.detach(|| zolaw::evaluate(&sequence.0, &k, Some(&model.family), opts)).map_err(py_err)?;
    to_py(py, &report)
}

/// `replicates` staircases `s_0, …, s_levels` from the SMC kernel of `sequence`.
#[pyfunction]
#[pyo3(signature = (sequence, levels, replicates, seed=0))]
fn smc_sample(py: Python<'_>, sequence: &Sequence, levels: usize, replicates: usize, seed: u64) -> PyResult<Vec<Vec<State>>> {
    let kernel = smc::SmcKernel::new(sequence.0.clone()).map_err(py_err)?;
    let samples = py.detach(|| kernel.sample_many(levels, replicates, seed)).map_err(py_err)?;
    Ok(samples.into_iter().map(|s| s.entries().to_vec()).collect())
}

/// The compactness statistic for `a` in `N..=amax`; `cells` holds one entry per `a`.
#[pyfunction]
fn sternfeld<'py>(py: Python<'py>, balayage: &Balayage, m: usize, c: State, n: usize, amax: usize) -> PyResult<Bound<'py, PyAny>> {
    let table = ExtendedBalayageTable::build(&balayage.0, amax).map_err(py_err)?;
    to_py(py, &simplex::sternfeld_statistic(&table, m, c, n, n..=amax).map_err(py_err)?)
}

#[pymodule]
fn vmc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_class::<Balayage>()?;
    m.add_class::<Sequence>()?;
    m.add_function(wrap_pyfunction!(project_path, m)?)?;
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(zero_one, m)?)?;
    m.add_function(wrap_pyfunction!(smc_sample, m)?)?;
    m.add_function(wrap_pyfunction!(sternfeld, m)?)?;
    Ok(())
}
