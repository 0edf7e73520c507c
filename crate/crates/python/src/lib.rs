//! Python bindings: PDDL values, the planner, keyframes, fusion, task
//! planning and the metrics. Failures raise `DemoplanError`.

use std::path::PathBuf;
use std::time::Duration;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use demoplan::eval::{or_k, spl, success_rate, Episode};
use demoplan::fusion::{fuse_all, Equivalence, FusionConfig};
use demoplan::graph::to_graph;
use demoplan::keyframes::{extract_keyframes, segment_demo, FrameSeq, DEFAULT_WINDOW};
use demoplan::oracle::{OracleConfig, OracleMode};
use demoplan::pddl::{parse_domain, parse_problem, print_domain, print_problem, validate_domain, validate_problem};
use demoplan::planner::{parse_plan, plan, validate_plan, GroundLimit, Mode, SearchLimit, Validation};
use demoplan::task_plan::{group_predicates, plan_task, PlanAblation, PlanConfig, TaskSpec};

create_exception!(demoplan_py, DemoplanError, PyException);

fn err(e: impl ToString) -> PyErr {
    DemoplanError::new_err(e.to_string())
}

fn json_to_py<'py>(py: Python<'py>, v: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn read(path: &PathBuf) -> PyResult<String> {
    std::fs::read_to_string(path).map_err(|e| err(format!("{}: {e}", path.display())))
}

/// A typed STRIPS domain.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct Domain {
    inner: demoplan::pddl::Domain,
}

#[pymethods]
impl Domain {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(Self { inner: parse_domain(text).map_err(err)? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Self::parse(&read(&path)?)
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn predicates(&self) -> Vec<String> {
        self.inner.predicates.keys().cloned().collect()
    }

    #[getter]
    fn operators(&self) -> Vec<String> {
        self.inner.operators.keys().cloned().collect()
    }

    /// Same domain under another name.
    fn renamed(&self, name: &str) -> Self {
        let mut inner = self.inner.clone();
        inner.name = name.to_string();
        Self { inner }
    }

    fn to_pddl(&self) -> String {
        print_domain(&self.inner)
    }

    /// Diagnostics as `severity: message` strings; empty when clean.
    fn validate(&self) -> Vec<String> {
        validate_domain(&self.inner).iter().map(ToString::to_string).collect()
    }

    /// Knowledge-graph counts.
    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json_to_py(py, &to_graph(&self.inner, &self.inner.name).stats())
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!(
            "Domain({:?}, {} predicates, {} operators)",
            self.inner.name,
            self.inner.predicates.len(),
            self.inner.operators.len()
        )
    }
}

#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct Problem {
    inner: demoplan::pddl::Problem,
}

#[pymethods]
impl Problem {
    #[staticmethod]
    fn parse(text: &str, domain: &Domain) -> PyResult<Self> {
        Ok(Self { inner: parse_problem(text, &domain.inner).map_err(err)? })
    }

    #[staticmethod]
    fn load(path: PathBuf, domain: &Domain) -> PyResult<Self> {
        Self::parse(&read(&path)?, domain)
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    /// Object name → type.
    #[getter]
    fn objects(&self) -> Vec<(String, String)> {
        self.inner.objects.iter().map(|(o, t)| (o.clone(), t.clone())).collect()
    }

    #[getter]
    fn init(&self) -> Vec<String> {
        self.inner.init.iter().map(ToString::to_string).collect()
    }

    #[getter]
    fn goal(&self) -> Vec<String> {
        self.inner.goal.iter().map(ToString::to_string).collect()
    }

    fn validate(&self, domain: &Domain) -> Vec<String> {
        validate_problem(&domain.inner, &self.inner).iter().map(ToString::to_string).collect()
    }

    fn to_pddl(&self) -> String {
        print_problem(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!("Problem({:?}, {} objects)", self.inner.name, self.inner.objects.len())
    }
}

/// Model client. Replay serves a recorded transcript; live talks to an
/// OpenAI-compatible endpoint configured by `ORACLE_*` variables.
#[pyclass(frozen)]
struct Oracle {
    inner: demoplan::oracle::Oracle,
}

#[pymethods]
impl Oracle {
    #[staticmethod]
    fn replay(transcript: PathBuf) -> PyResult<Self> {
        let cfg = OracleConfig {
            mode: OracleMode::Replay,
            transcript: Some(transcript),
            ..OracleConfig::default()
        };
        Ok(Self { inner: demoplan::oracle::Oracle::new(&cfg).map_err(err)? })
    }

    #[staticmethod]
    fn from_env() -> PyResult<Self> {
        let cfg = OracleConfig::default().with_env().map_err(err)?;
        Ok(Self { inner: demoplan::oracle::Oracle::new(&cfg).map_err(err)? })
    }

    /// Call counters and thinking time so far.
    fn usage<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json_to_py(py, &self.inner.total_usage())
    }
}

/// Steps of a plan as `(op arg ...)` strings, or None when no plan exists
/// within the budget.
#[pyfunction]
#[pyo3(signature = (domain, problem, optimal=true, max_expansions=None, time_limit_s=None))]
fn solve(
    py: Python<'_>,
    domain: &Domain,
    problem: &Problem,
    optimal: bool,
    max_expansions: Option<u64>,
    time_limit_s: Option<f64>,
) -> PyResult<Option<Vec<String>>> {
    let mut limits = SearchLimit::default();
    if let Some(n) = max_expansions {
        limits.max_expansions = n;
    }
    if let Some(t) = time_limit_s {
        limits.time_limit = Duration::try_from_secs_f64(t).map_err(|e| PyValueError::new_err(e.to_string()))?;
    }
    let mode = if optimal { Mode::Optimal } else { Mode::Satisficing };
    let (d, p) = (&domain.inner, &problem.inner);
    let r = py.detach(|| plan(d, p, mode, GroundLimit::default(), limits)).map_err(err)?;
    Ok(r.plan().map(|p| p.steps.iter().map(ToString::to_string).collect()))
}

/// None if the plan reaches the goal, else `(step, unmet literal)`.
#[pyfunction]
fn check_plan(domain: &Domain, problem: &Problem, steps: Vec<String>) -> PyResult<Option<(usize, String)>> {
    let p = parse_plan(&steps.join("\n")).map_err(err)?;
    match validate_plan(&domain.inner, &problem.inner, &p).map_err(err)? {
        Validation::Valid => Ok(None),
        Validation::FailureAt { step, unmet } => Ok(Some((step, unmet.to_string()))),
    }
}

/// Keyframe indices of an energy series.
#[pyfunction]
#[pyo3(signature = (energies, window=DEFAULT_WINDOW))]
fn keyframes(energies: Vec<u64>, window: usize) -> PyResult<Vec<usize>> {
    Ok(extract_keyframes(&energies, window).map_err(err)?.indices())
}

/// Keyframe indices of a directory of PNG/PNM frames.
#[pyfunction]
#[pyo3(signature = (directory, window=DEFAULT_WINDOW))]
fn segment(directory: PathBuf, window: usize) -> PyResult<Vec<usize>> {
    let frames = FrameSeq::load_dir(&directory).map_err(err)?;
    Ok(segment_demo(&frames, window).map_err(err)?.indices())
}

/// Fuses `domains` left to right in a binary tree.
#[pyfunction]
#[pyo3(signature = (oracle, domains, equivalence="llm", name=None))]
fn fuse(oracle: &Oracle, domains: Vec<Domain>, equivalence: &str, name: Option<&str>) -> PyResult<Domain> {
    let cfg = FusionConfig {
        equivalence: equivalence.parse::<Equivalence>().map_err(PyValueError::new_err)?,
        ..FusionConfig::default()
    };
    let ds: Vec<_> = domains.into_iter().map(|d| d.inner).collect();
    let mut inner = fuse_all(&oracle.inner, &ds, &cfg).map_err(err)?.domain;
    if let Some(n) = name {
        inner.name = n.to_string();
    }
    Ok(Domain { inner })
}

/// Runs the task pipeline against a fused domain; returns the trace as a
/// dict (`plan` is a list of step strings or None).
#[pyfunction]
#[pyo3(signature = (oracle, fused, task, grouping=true, filtering=true))]
fn plan_for_task<'py>(
    py: Python<'py>,
    oracle: &Oracle,
    fused: &Domain,
    task: PathBuf,
    grouping: bool,
    filtering: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let spec = TaskSpec::load(&task).map_err(err)?;
    let cfg = PlanConfig {
        ablation: PlanAblation {
            no_grouping: !grouping,
            no_filtering: !filtering,
        },
        ..PlanConfig::default()
    };
    let groups = if grouping {
        Some(group_predicates(&oracle.inner, &fused.inner, cfg.r_parse).map_err(err)?.0)
    } else {
        None
    };
    let trace = plan_task(&oracle.inner, &fused.inner, groups.as_ref(), &spec, &cfg).map_err(err)?;
    let out = json_to_py(py, &trace)?;
    let steps: Option<Vec<String>> = trace.plan().map(|p| p.steps.iter().map(ToString::to_string).collect());
    out.set_item("plan", steps)?;
    Ok(out)
}

/// SR, SPL and OR(0..=2) over `(success, cost, optimal_or_None)` triples.
#[pyfunction]
fn metrics(episodes: Vec<(bool, u32, Option<u32>)>) -> Vec<(String, f64)> {
    let eps: Vec<Episode> = episodes
        .into_iter()
        .enumerate()
        .map(|(i, (success, cost, optimal))| Episode {
            task_id: i.to_string(),
            domain: "all".into(),
            success,
            cost: if success { cost } else { 0 },
            optimal,
            thinking_time: 0.0,
            llm_calls: 0,
            error: None,
        })
        .collect();
    let mut out = vec![("sr".to_string(), success_rate(&eps)), ("spl".to_string(), spl(&eps))];
    out.extend((0..=2).map(|k| (format!("or{k}"), or_k(&eps, k))));
    out
}

#[pymodule]
fn demoplan_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DemoplanError", m.py().get_type::<DemoplanError>())?;
    m.add_class::<Domain>()?;
    m.add_class::<Problem>()?;
    m.add_class::<Oracle>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(check_plan, m)?)?;
    m.add_function(wrap_pyfunction!(keyframes, m)?)?;
    m.add_function(wrap_pyfunction!(segment, m)?)?;
    m.add_function(wrap_pyfunction!(fuse, m)?)?;
    m.add_function(wrap_pyfunction!(plan_for_task, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    Ok(())
}
