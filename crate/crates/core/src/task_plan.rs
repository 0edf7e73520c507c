//! Online planning for one instruction: group predicates, write an initial
//! problem from the scene, filter the domain to the operators that problem
//! touches, write a refined problem against that compact domain, and solve
//! it with the full domain.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::to_graph;
use crate::learn::{format_predicates, format_types};
use crate::oracle::{CallEntry, Oracle, OracleError, Part, Usage};
use crate::pddl::{extract_define, parse_problem_as, print_domain, print_problem, validate_domain, Domain, Plan, Problem};
use crate::planner::{ground, solve, Limits, Mode, Outcome, PlannerError, SolveResult};
use crate::prompt::{self, chat_with_repair, RepairError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TaskError {
    #[error("{0}")]
    Spec(String),
    #[error("{stage}: {source}")]
    Oracle {
        stage: String,
        #[source]
        source: OracleError,
    },
    #[error("{stage}: no usable reply: {diagnostics}")]
    Unparseable { stage: String, diagnostics: String },
    #[error("{stage}: {source}")]
    Planner {
        stage: String,
        #[source]
        source: PlannerError,
    },
    #[error("filtered domain is invalid: {0}")]
    Filter(String),
}

impl TaskError {
    fn at(stage: &str) -> impl Fn(RepairError) -> TaskError + '_ {
        move |e| match e {
            RepairError::Oracle(source) => TaskError::Oracle {
                stage: stage.to_string(),
                source,
            },
            RepairError::Unparseable { diagnostics, .. } => TaskError::Unparseable {
                stage: stage.to_string(),
                diagnostics,
            },
        }
    }

    /// The pipeline stage the error came from, if any.
    pub fn stage(&self) -> Option<&str> {
        match self {
            TaskError::Oracle { stage, .. } | TaskError::Unparseable { stage, .. } | TaskError::Planner { stage, .. } => Some(stage),
            TaskError::Filter(_) => Some("filter"),
            TaskError::Spec(_) => None,
        }
    }
}

/// A language instruction plus the scene it refers to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub instruction: String,
    pub image: PathBuf,
    /// Ground-truth problem used to judge success.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_problem: Option<PathBuf>,
    /// Groups tasks in evaluation reports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
}

impl TaskSpec {
    /// Reads one task; relative paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self, TaskError> {
        let text = std::fs::read_to_string(path).map_err(|e| TaskError::Spec(format!("{}: {e}", path.display())))?;
        let task: TaskSpec = serde_json::from_str(&text).map_err(|e| TaskError::Spec(format!("{}: {e}", path.display())))?;
        let task = task.resolved(path.parent().unwrap_or(Path::new(".")));
        task.check()?;
        Ok(task)
    }

    /// Reads a suite file: a JSON list of tasks.
    pub fn load_suite(path: &Path) -> Result<Vec<Self>, TaskError> {
        let text = std::fs::read_to_string(path).map_err(|e| TaskError::Spec(format!("{}: {e}", path.display())))?;
        let tasks: Vec<TaskSpec> = serde_json::from_str(&text).map_err(|e| TaskError::Spec(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        tasks
            .into_iter()
            .map(|t| {
                let t = t.resolved(base);
                t.check().map(|_| t)
            })
            .collect()
    }

    fn resolved(mut self, base: &Path) -> Self {
        if self.image.is_relative() {
            self.image = base.join(&self.image);
        }
        if let Some(p) = self.gt_problem.as_mut().filter(|p| p.is_relative()) {
            *p = base.join(&*p);
        }
        self
    }

    pub fn check(&self) -> Result<(), TaskError> {
        if self.instruction.trim().is_empty() {
            return Err(TaskError::Spec(format!("task `{}`: empty instruction", self.id)));
        }
        Ok(())
    }
}

/// A partition of a domain's predicates into four semantic groups.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PredicateGroups {
    pub object: Vec<String>,
    pub state: Vec<String>,
    pub spatial: Vec<String>,
    pub affordance: Vec<String>,
}

impl PredicateGroups {
    pub fn groups(&self) -> [(&'static str, &Vec<String>); 4] {
        [
            ("object", &self.object),
            ("state", &self.state),
            ("spatial", &self.spatial),
            ("affordance", &self.affordance),
        ]
    }

    pub fn len(&self) -> usize {
        self.groups().iter().map(|(_, g)| g.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Forces a partition of `dom`'s predicates: unknown names are dropped,
    /// repeats keep their first group, and anything left out goes to
    /// `state`. Returns one warning per change.
    pub fn repaired(self, dom: &Domain) -> (Self, Vec<String>) {
        let mut warnings = Vec::new();
        let mut seen: BTreeSet<String> = BTreeSet::new();
        let mut keep = |group: Vec<String>, label: &str| -> Vec<String> {
            let mut out = Vec::new();
            for raw in group {
                let name = raw.trim().trim_start_matches('(').trim_end_matches(')').to_ascii_lowercase();
                let name = name.split_whitespace().next().unwrap_or("").to_string();
                if !dom.predicates.contains_key(&name) {
                    warnings.push(format!("dropped unknown predicate `{raw}` from {label}"));
                } else if !seen.insert(name.clone()) {
                    warnings.push(format!("`{name}` listed twice; kept its first group"));
                } else {
                    out.push(name);
                }
            }
            out
        };
        let mut g = PredicateGroups {
            object: keep(self.object, "object"),
            state: keep(self.state, "state"),
            spatial: keep(self.spatial, "spatial"),
            affordance: keep(self.affordance, "affordance"),
        };
        for name in dom.predicates.keys().filter(|n| !seen.contains(*n)) {
            warnings.push(format!("`{name}` was not grouped; placed in state"));
            g.state.push(name.clone());
        }
        for w in &warnings {
            log::warn!("predicate grouping: {w}");
        }
        (g, warnings)
    }

    /// Grouped predicate listing for prompts.
    pub fn render(&self, dom: &Domain) -> String {
        let mut out = String::new();
        for (label, names) in self.groups() {
            out.push_str(&format!("{label}:\n"));
            if names.is_empty() {
                out.push_str("  (none)\n");
            }
            for n in names {
                if let Some(p) = dom.predicates.get(n) {
                    out.push_str(&format!("  {p}\n"));
                }
            }
        }
        out.trim_end().to_string()
    }
}

fn parse_groups(reply: &str) -> Result<PredicateGroups, String> {
    let start = reply.find('{').ok_or("- the reply contains no JSON object")?;
    let end = reply.rfind('}').filter(|&e| e > start).ok_or("- the JSON object is not closed")?;
    serde_json::from_str(&reply[start..=end]).map_err(|e| format!("- invalid JSON: {e}"))
}

/// One call sorting every predicate of `dom` into the four groups,
/// repaired into a partition. An empty domain needs no call.
pub fn group_predicates(oracle: &Oracle, dom: &Domain, r_parse: usize) -> Result<(PredicateGroups, Vec<String>), TaskError> {
    if dom.predicates.is_empty() {
        return Ok((PredicateGroups::default(), Vec::new()));
    }
    let oracle = oracle.stage("group");
    let req = oracle
        .request()
        .system(prompt::SYSTEM.text)
        .user(prompt::GROUP.render(&[("predicates", &format_predicates(dom))]));
    let raw = chat_with_repair(&oracle, req, "grouping", r_parse, parse_groups).map_err(TaskError::at("group"))?;
    Ok(raw.repaired(dom))
}

fn problem_reply(reply: &str, doms: &[&Domain]) -> Result<Problem, String> {
    let text = extract_define(reply).ok_or("- the reply contains no (define (problem ...)) form")?;
    let mut out = None;
    for dom in doms {
        let p = parse_problem_as(text, dom).map_err(|e| e.feedback())?;
        out.get_or_insert(p);
    }
    Ok(out.expect("at least one domain"))
}

fn scene_request(oracle: &Oracle, text: String, task: &TaskSpec, stage: &str) -> Result<crate::oracle::ChatRequest, TaskError> {
    let image = Part::image_file(&task.image).map_err(|source| TaskError::Oracle {
        stage: stage.to_string(),
        source,
    })?;
    Ok(oracle.request().system(prompt::SYSTEM.text).user_parts(vec![Part::text(text), image]))
}

/// P₀: a problem written from the scene, the instruction and the grouped
/// (or, without groups, flat) predicate listing of `dom`.
pub fn gen_initial_problem(
    oracle: &Oracle,
    dom: &Domain,
    groups: Option<&PredicateGroups>,
    task: &TaskSpec,
    r_parse: usize,
) -> Result<Problem, TaskError> {
    let stage = "initial_problem";
    let oracle = oracle.stage(stage);
    let listing = match groups {
        Some(g) => g.render(dom),
        None => format_predicates(dom),
    };
    let text = prompt::INITIAL_PROBLEM.render(&[
        ("instruction", &task.instruction),
        ("domain", &dom.name),
        ("types", &format_types(dom)),
        ("groups", &listing),
        ("problem", &task.id),
    ]);
    let req = scene_request(&oracle, text, task, stage)?;
    chat_with_repair(&oracle, req, "problem", r_parse, |r| problem_reply(r, &[dom])).map_err(TaskError::at(stage))
}

/// P₀, the operators it touches, and the compact domain built from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterResult {
    pub p0: BTreeSet<String>,
    pub o_pre: BTreeSet<String>,
    pub o_eff: BTreeSet<String>,
    pub o_reduced: BTreeSet<String>,
    #[serde(skip)]
    pub compact: Domain,
}

/// Keeps the operators that consume (precondition) or produce (effect) a
/// predicate of P₀, plus every predicate those operators mention.
pub fn filter_domain(dom: &Domain, p0_problem: &Problem) -> Result<FilterResult, TaskError> {
    let p0: BTreeSet<String> = p0_problem
        .init
        .iter()
        .map(|a| a.predicate.clone())
        .chain(p0_problem.goal.iter().map(|l| l.atom.predicate.clone()))
        .collect();
    let graph = to_graph(dom, &dom.name);
    let keys: BTreeSet<&str> = p0.iter().map(String::as_str).collect();
    let own = |s: BTreeSet<&str>| -> BTreeSet<String> { s.into_iter().map(str::to_string).collect() };
    let o_pre = own(graph.consumers(&keys));
    let o_eff = own(graph.producers(&keys));
    let o_reduced: BTreeSet<String> = o_pre.union(&o_eff).cloned().collect();
    let mut compact = Domain::new(dom.name.clone());
    compact.types = dom.types.clone();
    for name in &o_reduced {
        let op = &dom.operators[name];
        for p in op.mentioned_predicates() {
            compact.add_predicate(dom.predicates[p].clone());
        }
        compact.add_operator(op.clone());
    }
    for p in &p0 {
        if let Some(schema) = dom.predicates.get(p) {
            compact.add_predicate(schema.clone());
        }
    }
    let errors: Vec<String> = validate_domain(&compact).iter().filter(|d| d.is_error()).map(ToString::to_string).collect();
    if !errors.is_empty() {
        return Err(TaskError::Filter(errors.join("; ")));
    }
    Ok(FilterResult {
        p0,
        o_pre,
        o_eff,
        o_reduced,
        compact,
    })
}

/// P_new: a problem written against the compact domain. It must also
/// type-check against `full`, which is what gets solved.
pub fn gen_refined_problem(
    oracle: &Oracle,
    compact: &Domain,
    full: &Domain,
    task: &TaskSpec,
    r_parse: usize,
) -> Result<Problem, TaskError> {
    let stage = "refined_problem";
    let oracle = oracle.stage(stage);
    let text = prompt::REFINED_PROBLEM.render(&[
        ("instruction", &task.instruction),
        ("domain_text", &print_domain(compact)),
        ("problem", &task.id),
        ("domain", &full.name),
    ]);
    let req = scene_request(&oracle, text, task, stage)?;
    chat_with_repair(&oracle, req, "problem", r_parse, |r| problem_reply(r, &[full, compact])).map_err(TaskError::at(stage))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanAblation {
    pub no_grouping: bool,
    pub no_filtering: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanConfig {
    pub r_parse: usize,
    pub limits: Limits,
    pub ablation: PlanAblation,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            r_parse: 3,
            limits: Limits::default(),
            ablation: PlanAblation::default(),
        }
    }
}

/// Everything one task produced. Holds no wall-clock times, so replay
/// runs serialize identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub task_id: String,
    pub ablation: PlanAblation,
    pub initial_problem: String,
    pub filter: Option<FilterResult>,
    pub compact_domain: Option<String>,
    pub refined_problem: Option<String>,
    pub mode: Mode,
    /// Optimal search ran out of budget and satisficing search was used.
    pub fallback: bool,
    pub outcome: Outcome,
    pub expanded: u64,
    pub usage: Usage,
    pub calls: Vec<CallEntry>,
}

impl Trace {
    pub fn plan(&self) -> Option<&Plan> {
        match &self.outcome {
            Outcome::Solved(p) => Some(p),
            _ => None,
        }
    }
}

/// Runs the whole pipeline for one task. `groups` is ignored when grouping
/// is ablated. Calls are counted in a fresh scope of `oracle`.
pub fn plan_task(
    oracle: &Oracle,
    fused: &Domain,
    groups: Option<&PredicateGroups>,
    task: &TaskSpec,
    cfg: &PlanConfig,
) -> Result<Trace, TaskError> {
    plan_task_in(&oracle.scoped(), fused, groups, task, cfg)
}

/// [`plan_task`] counting into `oracle`'s own scope, so a caller can read
/// the usage even when the pipeline fails.
pub fn plan_task_in(
    oracle: &Oracle,
    fused: &Domain,
    groups: Option<&PredicateGroups>,
    task: &TaskSpec,
    cfg: &PlanConfig,
) -> Result<Trace, TaskError> {
    task.check()?;
    let groups = groups.filter(|_| !cfg.ablation.no_grouping);
    let p0 = gen_initial_problem(oracle, fused, groups, task, cfg.r_parse)?;
    let (filter, refined) = if cfg.ablation.no_filtering {
        (None, None)
    } else {
        let f = filter_domain(fused, &p0)?;
        let refined = gen_refined_problem(oracle, &f.compact, fused, task, cfg.r_parse)?;
        (Some(f), Some(refined))
    };
    let target = refined.as_ref().unwrap_or(&p0);
    let grounded = ground(fused, target, cfg.limits.ground).map_err(|source| TaskError::Planner {
        stage: "solve".into(),
        source,
    })?;
    let mut mode = Mode::Optimal;
    let mut result = solve(&grounded, mode, cfg.limits.search);
    let fallback = result.outcome == Outcome::ResourceLimit;
    if fallback {
        log::info!("{}: optimal search exhausted its budget; trying satisficing", task.id);
        mode = Mode::Satisficing;
        let second = solve(&grounded, mode, cfg.limits.search);
        result = SolveResult {
            expanded: result.expanded + second.expanded,
            ..second
        };
    }
    Ok(Trace {
        task_id: task.id.clone(),
        ablation: cfg.ablation,
        initial_problem: print_problem(&p0),
        compact_domain: filter.as_ref().map(|f| print_domain(&f.compact)),
        filter,
        refined_problem: refined.as_ref().map(print_problem),
        mode,
        fallback,
        outcome: result.outcome,
        expanded: result.expanded,
        usage: oracle.usage(),
        calls: oracle.calls(),
    })
}
