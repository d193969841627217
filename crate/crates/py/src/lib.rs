//! Python module `flowshop`: instances, schedule evaluation, dispatching,
//! and the optimizers (Johnson, exhaustive search, annealing, GBML).
//!
//! Structured results cross the boundary as JSON and come back as plain
//! Python dicts and lists, in the same shape the CLI and service emit.

use flowshop_core::bench::{generate_instance, UniformTimes};
use flowshop_core::dispatch::DispatchConfig;
use flowshop_core::engine::{run_algorithm, Algorithm, AlgorithmSpec, TimelineDocument};
use flowshop_core::{
    brute_force_optimal, johnson_sequence, makespan, Capacity, RuleSet, Sequence, WeightVector,
};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn from_json<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

/// Accepts `None`, a JSON string, or any `json.dumps`-able object.
fn to_json_value(config: Option<&Bound<'_, PyAny>>) -> PyResult<serde_json::Value> {
    let Some(obj) = config else {
        return Ok(serde_json::Value::Null);
    };
    if obj.is_none() {
        return Ok(serde_json::Value::Null);
    }
    let text: String = match obj.extract::<String>() {
        Ok(s) => s,
        Err(_) => obj
            .py()
            .import("json")?
            .call_method1("dumps", (obj,))?
            .extract()?,
    };
    serde_json::from_str(&text).map_err(value_err)
}

fn capacities(buffers: Vec<Option<u32>>) -> Vec<Capacity> {
    buffers.into_iter().map(Capacity::from).collect()
}

/// A permutation flow-shop instance with per-stage buffer capacities.
#[pyclass(name = "Instance", module = "flowshop", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyInstance {
    inner: flowshop_core::Instance,
}

#[pymethods]
impl PyInstance {
    /// `p[j][k]` is the time of job j on machine k; `None` buffers are unbounded.
    #[new]
    #[pyo3(signature = (p, buffers=None, id="instance".to_string(), seed=None))]
    fn new(
        p: Vec<Vec<u64>>,
        buffers: Option<Vec<Option<u32>>>,
        id: String,
        seed: Option<u64>,
    ) -> PyResult<Self> {
        let m = p.first().map_or(0, Vec::len);
        let buffers = match buffers {
            Some(b) => capacities(b),
            None => vec![Capacity::Unbounded; m.saturating_sub(1)],
        };
        let inner = flowshop_core::Instance::new(id, p, buffers, seed).map_err(value_err)?;
        Ok(PyInstance { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = flowshop_core::Instance::from_json(text).map_err(value_err)?;
        Ok(PyInstance { inner })
    }

    /// Uniform integer times in `[lo, hi]`; identical to `flowshop gen`.
    #[staticmethod]
    #[pyo3(signature = (n, m, seed=0, lo=1, hi=10, buffers=None))]
    fn generate(
        n: usize,
        m: usize,
        seed: u64,
        lo: u64,
        hi: u64,
        buffers: Option<Vec<Option<u32>>>,
    ) -> PyResult<Self> {
        let buffers = match buffers {
            Some(b) => capacities(b),
            None => vec![Capacity::Unbounded; m.saturating_sub(1)],
        };
        let inner =
            generate_instance(n, m, UniformTimes { lo, hi }, buffers, seed).map_err(value_err)?;
        Ok(PyInstance { inner })
    }

    /// Canonical JSON document.
    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn with_buffers(&self, buffers: Vec<Option<u32>>) -> PyResult<Self> {
        let inner = self
            .inner
            .with_buffers(capacities(buffers))
            .map_err(value_err)?;
        Ok(PyInstance { inner })
    }

    #[getter]
    fn id(&self) -> &str {
        self.inner.id()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.jobs()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.machines()
    }

    #[getter]
    fn buffers(&self) -> Vec<Option<u32>> {
        self.inner.buffers().iter().map(|c| c.as_option()).collect()
    }

    #[getter]
    fn p(&self) -> Vec<Vec<u64>> {
        self.inner.processing_times().to_vec()
    }

    fn makespan(&self, sequence: Vec<usize>) -> PyResult<u64> {
        let seq = Sequence::new(sequence, self.inner.jobs()).map_err(value_err)?;
        Ok(makespan(&self.inner, &seq))
    }

    /// Timeline document: operation times, blocking intervals, buffer occupancy.
    fn evaluate<'py>(&self, py: Python<'py>, sequence: Vec<usize>) -> PyResult<Bound<'py, PyAny>> {
        let seq = Sequence::new(sequence, self.inner.jobs()).map_err(value_err)?;
        let doc = TimelineDocument::new(&self.inner, &seq);
        from_json(py, &serde_json::to_string(&doc).map_err(value_err)?)
    }

    fn __repr__(&self) -> String {
        format!(
            "Instance(id={:?}, n={}, m={}, buffers={:?})",
            self.inner.id(),
            self.inner.jobs(),
            self.inner.machines(),
            self.inner
                .buffers()
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
        )
    }
}

/// Johnson's two-machine sequence.
#[pyfunction]
fn johnson(instance: &PyInstance) -> PyResult<Vec<usize>> {
    Ok(johnson_sequence(&instance.inner)
        .map_err(value_err)?
        .into_inner())
}

/// Exhaustive search: `(sequence, makespan)` of the lexicographically smallest optimum.
#[pyfunction]
fn brute_force(py: Python<'_>, instance: &PyInstance) -> PyResult<(Vec<usize>, u64)> {
    let inst = instance.inner.clone();
    let (seq, c) = py
        .detach(move || brute_force_optimal(&inst))
        .map_err(value_err)?;
    Ok((seq.into_inner(), c))
}

/// Builds the sequence chosen by a rule-set: one weight vector per state cell.
#[pyfunction]
#[pyo3(signature = (instance, weights, config=None))]
fn dispatch(
    instance: &PyInstance,
    weights: Vec<Vec<i64>>,
    config: Option<&Bound<'_, PyAny>>,
) -> PyResult<(Vec<usize>, u64)> {
    let cfg: DispatchConfig = match to_json_value(config)? {
        serde_json::Value::Null => DispatchConfig::default(),
        v => serde_json::from_value(v).map_err(value_err)?,
    };
    let dispatcher = cfg.build().map_err(value_err)?;
    let weights = weights.into_iter().map(WeightVector).collect();
    let rules = RuleSet::new(dispatcher.decomposition.clone(), weights).map_err(value_err)?;
    let (seq, timeline) = dispatcher
        .schedule(&instance.inner, &rules)
        .map_err(value_err)?;
    Ok((seq.into_inner(), timeline.makespan))
}

/// Runs `algorithm` (`gbml`, `sa`, `johnson` or `brute`) and returns the result document.
#[pyfunction]
#[pyo3(signature = (instance, algorithm, config=None, seed=None))]
fn run<'py>(
    py: Python<'py>,
    instance: &PyInstance,
    algorithm: &str,
    config: Option<&Bound<'py, PyAny>>,
    seed: Option<u64>,
) -> PyResult<Bound<'py, PyAny>> {
    let algorithm: Algorithm = algorithm.parse().map_err(value_err)?;
    let mut spec =
        AlgorithmSpec::from_json(algorithm, &to_json_value(config)?).map_err(value_err)?;
    if let Some(seed) = seed {
        spec = spec.with_seed(seed);
    }
    let inst = instance.inner.clone();
    let outcome = py
        .detach(move || run_algorithm(&inst, &spec, &mut ()))
        .map_err(value_err)?;
    from_json(py, &outcome.result.to_json())
}

#[pymodule]
fn flowshop(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInstance>()?;
    m.add_function(wrap_pyfunction!(johnson, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force, m)?)?;
    m.add_function(wrap_pyfunction!(dispatch, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
