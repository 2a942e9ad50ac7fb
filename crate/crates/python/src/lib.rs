//! Python bindings: layouts, evaluation, fitness, the search drivers and the
//! campaign helpers. Structured results come back as plain dicts.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use latticefold::campaign::{self, MapStyle};
use latticefold::fitness::{self, FitnessConfig};
use latticefold::ga::{self, GaConfig};
use latticefold::lattice::{self, Coord, LatticeLayout, D4};
use latticefold::neutronics::{self, BuiltinEvaluator, Evaluator, FidelityTier, XsLibrary};
use latticefold::policy::{self, DpoConfig, Policy as _, PolicyParams};
use latticefold::symgen;
use latticefold::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Neutronics(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py_err<E: Into<Error>>(e: E) -> PyErr {
    py_err(e.into())
}

fn tier(name: &str) -> PyResult<FidelityTier> {
    name.parse().map_err(PyValueError::new_err)
}

/// Converts anything serializable to Python objects through `json.loads`.
fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A 17x17 assembly layout.
#[pyclass(
    name = "Layout",
    module = "latticefold_py",
    eq,
    frozen,
    skip_from_py_object
)]
#[derive(Clone, PartialEq)]
struct PyLayout {
    inner: LatticeLayout,
}

#[pymethods]
impl PyLayout {
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        Ok(PyLayout {
            inner: LatticeLayout::deserialize(text).map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn all_fuel() -> Self {
        PyLayout {
            inner: LatticeLayout::all_fuel(),
        }
    }

    #[staticmethod]
    fn from_gd_positions(positions: Vec<(usize, usize)>) -> PyResult<Self> {
        let coords = positions
            .into_iter()
            .map(|(r, c)| Coord::new(r, c))
            .collect::<Result<Vec<_>, _>>()
            .map_err(to_py_err)?;
        Ok(PyLayout {
            inner: LatticeLayout::from_gd_positions(coords).map_err(to_py_err)?,
        })
    }

    /// Uniform random layout with `inventory` Gd pins.
    #[staticmethod]
    fn random(inventory: usize, seed: u64) -> PyResult<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(PyLayout {
            inner: lattice::random_layout(inventory, &mut rng).map_err(to_py_err)?,
        })
    }

    /// Octant-symmetric layout drawn uniformly at the given inventory.
    #[staticmethod]
    fn symmetric(inventory: usize, seed: u64) -> PyResult<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(PyLayout {
            inner: symgen::sample_symmetric_layout(inventory, &mut rng).map_err(to_py_err)?,
        })
    }

    fn to_text(&self) -> String {
        self.inner.serialize().into_string()
    }

    #[getter]
    fn gd_count(&self) -> usize {
        self.inner.gd_count()
    }

    fn gd_positions(&self) -> Vec<(usize, usize)> {
        self.inner
            .gd_positions()
            .into_iter()
            .map(|c| (c.row(), c.col()))
            .collect()
    }

    /// Applies D4 element `g` (0..8) about the center pin.
    fn transform(&self, g: u8) -> PyResult<Self> {
        let g = *D4::ALL
            .get(g as usize)
            .ok_or_else(|| PyValueError::new_err("D4 element must be in 0..8"))?;
        Ok(PyLayout {
            inner: self.inner.transform(g),
        })
    }

    fn is_d4_invariant(&self) -> bool {
        self.inner.is_d4_invariant()
    }

    #[pyo3(signature = (style = "ascii"))]
    fn render(&self, style: &str) -> PyResult<String> {
        let style: MapStyle = style.parse().map_err(py_err)?;
        Ok(campaign::render_map(&self.inner, style))
    }

    fn __str__(&self) -> String {
        self.to_text()
    }

    fn __repr__(&self) -> String {
        format!("Layout(gd_count={})", self.inner.gd_count())
    }
}

/// Evaluates a layout with the built-in solver. Returns k_eff, fq, fdh and
/// the 264 pin powers.
#[pyfunction]
#[pyo3(signature = (layout, fidelity = "high", seed = 0))]
fn evaluate<'py>(
    py: Python<'py>,
    layout: PyRef<'py, PyLayout>,
    fidelity: &str,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let t = tier(fidelity)?;
    let l = layout.inner.clone();
    let res = py
        .detach(|| BuiltinEvaluator::default().evaluate(&l, t, seed))
        .map_err(to_py_err)?;
    to_py(py, &res)
}

/// k_inf of an infinite medium of fuel (or Gd fuel with `gd=True`).
#[pyfunction]
#[pyo3(signature = (gd = false))]
fn analytic_kinf(gd: bool) -> PyResult<f64> {
    let lib = XsLibrary::default();
    neutronics::analytic_kinf(if gd { &lib.gd } else { &lib.fuel }).map_err(to_py_err)
}

#[pyfunction]
fn penalty(k_eff: f64) -> PyResult<f64> {
    fitness::penalty(k_eff, &FitnessConfig::default()).map_err(to_py_err)
}

#[pyfunction]
#[pyo3(name = "fitness")]
fn fitness_of(k_eff: f64, fq: f64, fdh: f64) -> PyResult<f64> {
    let res = neutronics::NeutronicsResult {
        k_eff,
        fq,
        fdh,
        pin_power: Vec::new(),
    };
    Ok(fitness::fitness(&res, &FitnessConfig::default())
        .map_err(to_py_err)?
        .total)
}

#[pyfunction]
fn format_prompt(k_eff: f64, fq: f64, fdh: f64) -> PyResult<String> {
    lattice::format_prompt(k_eff, fq, fdh).map_err(to_py_err)
}

/// Genetic-algorithm search. Returns the best design and the event log.
#[pyfunction]
#[pyo3(signature = (seed = 1, eval_budget = 1000, population = 50, fidelity = "high"))]
fn run_ga<'py>(
    py: Python<'py>,
    seed: u64,
    eval_budget: usize,
    population: usize,
    fidelity: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = GaConfig {
        seed,
        eval_budget,
        population,
        fidelity: tier(fidelity)?,
        ..GaConfig::default()
    };
    let run = py
        .detach(|| {
            ga::run_ga(
                &cfg,
                &BuiltinEvaluator::default(),
                &FitnessConfig::default(),
            )
        })
        .map_err(py_err)?;
    let out = serde_json::json!({
        "best": run.best,
        "generations": run.generations,
        "evaluations": run.evaluations(),
        "log": run.log,
    });
    to_py(py, &out)
}

/// Per-position Bernoulli layout policy.
#[pyclass(
    name = "Policy",
    module = "latticefold_py",
    frozen,
    skip_from_py_object
)]
#[derive(Clone)]
struct PyPolicy {
    inner: PolicyParams,
}

#[pymethods]
impl PyPolicy {
    #[staticmethod]
    #[pyo3(signature = (logit = 0.0))]
    fn uniform(logit: f64) -> Self {
        PyPolicy {
            inner: PolicyParams::uniform(logit),
        }
    }

    #[staticmethod]
    fn from_logits(logits: Vec<f64>) -> PyResult<Self> {
        Ok(PyPolicy {
            inner: PolicyParams::from_logits(logits).map_err(py_err)?,
        })
    }

    /// Weighted likelihood fit on seeded fixed-inventory corpora.
    #[staticmethod]
    #[pyo3(signature = (low_records = 5000, high_records = 1000, inventory = 16))]
    fn pretrained(
        py: Python<'_>,
        low_records: usize,
        high_records: usize,
        inventory: usize,
    ) -> PyResult<Self> {
        let mut cfg = campaign::CampaignConfig::default();
        cfg.pretrain.low_records = low_records;
        cfg.pretrain.high_records = high_records;
        cfg.pretrain.inventory = inventory;
        let (inner, _, _) = py
            .detach(|| campaign::pretrain_policy(&cfg, &BuiltinEvaluator::default()))
            .map_err(py_err)?;
        Ok(PyPolicy { inner })
    }

    #[getter]
    fn logits(&self) -> Vec<f64> {
        self.inner.logits.clone()
    }

    fn log_prob(&self, layout: PyRef<'_, PyLayout>) -> f64 {
        self.inner.log_prob(&layout.inner)
    }

    #[pyo3(signature = (seed, temperature = 1.0))]
    fn sample(&self, seed: u64, temperature: f64) -> PyLayout {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PyLayout {
            inner: self.inner.sample(temperature, &mut rng).layout,
        }
    }

    fn expected_inventory(&self) -> f64 {
        self.inner.expected_inventory()
    }

    /// One preference step towards `winner` and away from `loser`.
    #[pyo3(signature = (winner, loser, beta = 0.01, learning_rate = policy::DEFAULT_LEARNING_RATE))]
    fn dpo_step(
        &self,
        winner: PyRef<'_, PyLayout>,
        loser: PyRef<'_, PyLayout>,
        beta: f64,
        learning_rate: f64,
    ) -> Self {
        let pair = policy::PreferencePair {
            winner: winner.inner.clone(),
            loser: loser.inner.clone(),
            prompt: policy::target_prompt(),
            winner_fitness: 0.0,
            loser_fitness: 0.0,
        };
        PyPolicy {
            inner: self.inner.dpo_step(&pair, beta, learning_rate),
        }
    }
}

/// Online preference alignment from `policy`. Returns the best design, the
/// final policy and the step log.
#[pyfunction]
#[pyo3(signature = (policy, steps = 500, seed = 1, learning_rate = policy::DEFAULT_LEARNING_RATE, fidelity = "high"))]
fn run_dpo<'py>(
    py: Python<'py>,
    policy: PyRef<'py, PyPolicy>,
    steps: usize,
    seed: u64,
    learning_rate: f64,
    fidelity: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = DpoConfig {
        steps,
        seed,
        learning_rate,
        fidelity: tier(fidelity)?,
        ..DpoConfig::default()
    };
    let start = policy.inner.clone();
    let run = py
        .detach(|| {
            policy::run_online_dpo(
                start,
                &BuiltinEvaluator::default(),
                &FitnessConfig::default(),
                &cfg,
            )
        })
        .map_err(py_err)?;
    let out = serde_json::json!({
        "best": run.best,
        "evaluations": run.evaluations(),
        "expected_inventory": run.params.expected_inventory(),
        "log": run.log,
    });
    let dict = to_py(py, &out)?;
    dict.set_item("policy", PyPolicy { inner: run.params })?;
    Ok(dict)
}

/// Writes a seeded corpus as JSONL and returns the number of records.
#[pyfunction]
#[pyo3(signature = (n, path, inventory = 16, fidelity = "low"))]
fn generate_dataset(
    py: Python<'_>,
    n: usize,
    path: PathBuf,
    inventory: usize,
    fidelity: &str,
) -> PyResult<usize> {
    let t = tier(fidelity)?;
    py.detach(|| {
        campaign::generate_dataset(n, inventory, t, &BuiltinEvaluator::default(), &path)
            .map(|r| r.len())
    })
    .map_err(py_err)
}

/// Analyzes a run directory and returns its summary.
#[pyfunction]
fn analyze_run<'py>(py: Python<'py>, run_dir: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let report = py
        .detach(|| campaign::analyze_run(&run_dir))
        .map_err(py_err)?;
    to_py(py, &report)
}

#[pyfunction]
fn pearson_corr<'py>(
    py: Python<'py>,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
) -> PyResult<Bound<'py, PyAny>> {
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let m = campaign::pearson_matrix(&refs, &columns).map_err(to_py_err)?;
    to_py(py, &m)
}

#[pymodule]
fn latticefold_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLayout>()?;
    m.add_class::<PyPolicy>()?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(analytic_kinf, m)?)?;
    m.add_function(wrap_pyfunction!(penalty, m)?)?;
    m.add_function(wrap_pyfunction!(fitness_of, m)?)?;
    m.add_function(wrap_pyfunction!(format_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(run_ga, m)?)?;
    m.add_function(wrap_pyfunction!(run_dpo, m)?)?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(analyze_run, m)?)?;
    m.add_function(wrap_pyfunction!(pearson_corr, m)?)?;
    m.add("SIDE", lattice::SIDE)?;
    m.add("FREE_CELLS", lattice::FREE_CELLS)?;
    Ok(())
}
