//! Success rate, success-weighted path length and optimality rates over a
//! suite of tasks, plus the runner that produces them.
//!
//! For N episodes with success indicator s, plan cost c and optimal cost c*:
//! `SPL = (1/N) Σ s·c*/c` and `OR(K) = (1/N) Σ 𝟙[0 < c ≤ c* + K]`.
//! Failed episodes carry c = 0, so the `0 < c` guard excludes them.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::Oracle;
use crate::pddl::{parse_problem_as, Domain, Problem};
use crate::planner::{optimal_cost, validate_plan, OptimalCost};
use crate::task_plan::{plan_task_in, PlanConfig, PredicateGroups, TaskSpec, Trace};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("no episodes")]
    NoEpisodes,
    #[error("unknown report format `{0}` (expected json, csv or markdown)")]
    Format(String),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub task_id: String,
    /// Breakdown key; tasks without one report under `all`.
    pub domain: String,
    pub success: bool,
    /// Plan length; 0 for failures.
    pub cost: u32,
    /// `None` when the optimal cost could not be certified.
    pub optimal: Option<u32>,
    pub thinking_time: f64,
    pub llm_calls: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Episode {
    pub fn failed(task_id: &str, domain: &str, error: impl Into<String>) -> Self {
        Self {
            task_id: task_id.to_string(),
            domain: domain.to_string(),
            success: false,
            cost: 0,
            optimal: None,
            thinking_time: 0.0,
            llm_calls: 0,
            error: Some(error.into()),
        }
    }

    /// c*/c for a success with known c*. An empty plan for a task whose
    /// goal already holds counts as 1.
    fn ratio(&self) -> f64 {
        match (self.success, self.optimal) {
            (true, Some(opt)) if self.cost == 0 => if opt == 0 { 1.0 } else { 0.0 },
            (true, Some(opt)) => f64::from(opt) / f64::from(self.cost),
            _ => 0.0,
        }
    }

    fn within(&self, k: u32) -> bool {
        match self.optimal {
            Some(opt) => 0 < self.cost && self.cost <= opt + k,
            None => false,
        }
    }
}

pub fn success_rate(episodes: &[Episode]) -> f64 {
    if episodes.is_empty() {
        return 0.0;
    }
    episodes.iter().filter(|e| e.success).count() as f64 / episodes.len() as f64
}

/// Success-weighted relative path length. Unknown c* contributes 0.
pub fn spl(episodes: &[Episode]) -> f64 {
    if episodes.is_empty() {
        return 0.0;
    }
    episodes.iter().map(Episode::ratio).sum::<f64>() / episodes.len() as f64
}

/// Fraction of episodes whose cost is within `k` of optimal.
pub fn or_k(episodes: &[Episode], k: u32) -> f64 {
    if episodes.is_empty() {
        return 0.0;
    }
    episodes.iter().filter(|e| e.within(k)).count() as f64 / episodes.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanErr {
    pub mean: f64,
    /// Sample standard deviation over √N; 0 for a single value.
    pub stderr: f64,
}

impl MeanErr {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Self::default();
        }
        let mean = xs.iter().sum::<f64>() / n;
        if xs.len() < 2 {
            return Self { mean, stderr: 0.0 };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self {
            mean,
            stderr: var.sqrt() / n.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub sr: f64,
    pub spl: f64,
    pub or2: f64,
    pub or1: f64,
    pub or0: f64,
    pub thinking_time: MeanErr,
    pub llm_calls: MeanErr,
    /// Episodes whose optimal cost is unknown; they count 0 toward SPL and OR.
    pub unknown_optimal: usize,
}

impl Metrics {
    pub fn of(episodes: &[Episode]) -> Self {
        let times: Vec<f64> = episodes.iter().map(|e| e.thinking_time).collect();
        let calls: Vec<f64> = episodes.iter().map(|e| e.llm_calls as f64).collect();
        Self {
            n: episodes.len(),
            sr: success_rate(episodes),
            spl: spl(episodes),
            or2: or_k(episodes, 2),
            or1: or_k(episodes, 1),
            or0: or_k(episodes, 0),
            thinking_time: MeanErr::of(&times),
            llm_calls: MeanErr::of(&calls),
            unknown_optimal: episodes.iter().filter(|e| e.success && e.optimal.is_none()).count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    /// Names the pipeline variant, e.g. `full` or `no-filtering`.
    pub label: String,
    pub overall: Metrics,
    pub per_domain: BTreeMap<String, Metrics>,
    /// Tasks skipped after cancellation.
    pub cancelled: usize,
    pub episodes: Vec<Episode>,
}

impl Report {
    pub fn new(label: &str, episodes: Vec<Episode>) -> Result<Self, EvalError> {
        if episodes.is_empty() {
            return Err(EvalError::NoEpisodes);
        }
        let mut groups: BTreeMap<String, Vec<Episode>> = BTreeMap::new();
        for e in &episodes {
            groups.entry(e.domain.clone()).or_default().push(e.clone());
        }
        Ok(Self {
            label: label.to_string(),
            overall: Metrics::of(&episodes),
            per_domain: groups.iter().map(|(d, es)| (d.clone(), Metrics::of(es))).collect(),
            cancelled: 0,
            episodes,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "markdown" | "md" => Ok(Self::Markdown),
            _ => Err(EvalError::Format(s.to_string())),
        }
    }
}

/// CSV columns, one row per episode.
pub const CSV_COLUMNS: [&str; 9] = [
    "task_id",
    "domain",
    "success",
    "cost",
    "optimal",
    "thinking_time",
    "llm_calls",
    "label",
    "error",
];

fn pct(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

fn markdown_row(name: &str, m: &Metrics) -> String {
    format!(
        "| {name} | {} | {} | {} | {} | {} | {} | {:.2} ± {:.2} | {:.1} ± {:.1} |\n",
        m.n,
        pct(m.sr),
        pct(m.spl),
        pct(m.or2),
        pct(m.or1),
        pct(m.or0),
        m.thinking_time.mean,
        m.thinking_time.stderr,
        m.llm_calls.mean,
        m.llm_calls.stderr
    )
}

/// Deterministic text rendering of a report.
pub fn emit_report(report: &Report, format: ReportFormat) -> Result<String, EvalError> {
    if report.episodes.is_empty() {
        return Err(EvalError::NoEpisodes);
    }
    Ok(match format {
        ReportFormat::Json => serde_json::to_string_pretty(report).expect("report serializes") + "\n",
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(CSV_COLUMNS).map_err(|e| EvalError::Io(e.to_string()))?;
            for e in &report.episodes {
                w.write_record([
                    e.task_id.clone(),
                    e.domain.clone(),
                    e.success.to_string(),
                    e.cost.to_string(),
                    e.optimal.map(|c| c.to_string()).unwrap_or_default(),
                    format!("{:.6}", e.thinking_time),
                    e.llm_calls.to_string(),
                    report.label.clone(),
                    e.error.clone().unwrap_or_default(),
                ])
                .map_err(|e| EvalError::Io(e.to_string()))?;
            }
            String::from_utf8(w.into_inner().map_err(|e| EvalError::Io(e.to_string()))?).expect("utf-8")
        }
        ReportFormat::Markdown => {
            let mut out = format!("Report: {}\n\n", report.label);
            out.push_str("| domain | N | SR (%) | SPL (%) | OR(2) (%) | OR(1) (%) | OR(0) (%) | thinking time (s) | LLM calls |\n");
            out.push_str("|---|---|---|---|---|---|---|---|---|\n");
            out.push_str(&markdown_row("all", &report.overall));
            if report.per_domain.len() > 1 {
                for (d, m) in &report.per_domain {
                    out.push_str(&markdown_row(d, m));
                }
            }
            if report.overall.unknown_optimal > 0 {
                out.push_str(&format!(
                    "\n{} successful episode(s) had no certified optimal cost and count 0 toward SPL and OR.\n",
                    report.overall.unknown_optimal
                ));
            }
            if report.cancelled > 0 {
                out.push_str(&format!("\n{} task(s) cancelled.\n", report.cancelled));
            }
            out
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub plan: PlanConfig,
    /// Tasks evaluated at once.
    pub parallelism: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            plan: PlanConfig::default(),
            parallelism: 4,
        }
    }
}

impl SuiteConfig {
    /// `full`, or the ablations joined by `+`.
    pub fn label(&self) -> String {
        let a = self.plan.ablation;
        let parts: Vec<&str> = [(a.no_grouping, "no-grouping"), (a.no_filtering, "no-filtering")]
            .into_iter()
            .filter_map(|(on, s)| on.then_some(s))
            .collect();
        if parts.is_empty() {
            "full".into()
        } else {
            parts.join("+")
        }
    }
}

/// One task's episode and, if the pipeline got that far, its trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub episode: Episode,
    pub trace: Option<Trace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteRun {
    pub report: Report,
    pub results: Vec<TaskResult>,
}

impl SuiteRun {
    /// Writes `report.json` and `traces/<task>.json` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), EvalError> {
        let io = |e: std::io::Error| EvalError::Io(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir.join("traces")).map_err(io)?;
        std::fs::write(dir.join("report.json"), emit_report(&self.report, ReportFormat::Json)?).map_err(io)?;
        for r in &self.results {
            if let Some(t) = &r.trace {
                let text = serde_json::to_string_pretty(t).expect("trace serializes") + "\n";
                std::fs::write(dir.join("traces").join(format!("{}.json", r.episode.task_id)), text).map_err(io)?;
            }
        }
        Ok(())
    }
}

fn ground_truth(fused: &Domain, task: &TaskSpec) -> Result<Problem, String> {
    let path = task.gt_problem.as_ref().ok_or("no ground-truth problem")?;
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_problem_as(&text, fused).map_err(|e| format!("{}: {e}", path.display()))
}

fn panic_message(p: &(dyn std::any::Any + Send)) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into())
}

/// Runs and judges one task. Never fails: errors and panics become a
/// failed episode.
pub fn run_task(oracle: &Oracle, fused: &Domain, groups: Option<&PredicateGroups>, task: &TaskSpec, cfg: &PlanConfig) -> TaskResult {
    let domain = task.domain.clone().unwrap_or_else(|| "all".into());
    let scope = oracle.scoped();
    let run = catch_unwind(AssertUnwindSafe(|| plan_task_in(&scope, fused, groups, task, cfg)));
    let usage = scope.usage();
    let mut episode = Episode {
        thinking_time: usage.thinking_time,
        llm_calls: usage.n_chat,
        ..Episode::failed(&task.id, &domain, "")
    };
    let trace = match run {
        Ok(Ok(t)) => t,
        Ok(Err(e)) => {
            episode.error = Some(e.to_string());
            return TaskResult { episode, trace: None };
        }
        Err(p) => {
            episode.error = Some(format!("panic: {}", panic_message(&*p)));
            return TaskResult { episode, trace: None };
        }
    };
    let gt = match ground_truth(fused, task) {
        Ok(gt) => gt,
        Err(e) => {
            episode.error = Some(e);
            return TaskResult { episode, trace: Some(trace) };
        }
    };
    episode.optimal = match optimal_cost(fused, &gt, cfg.limits.ground, cfg.limits.search) {
        Ok(OptimalCost::Cost(c)) => Some(c),
        _ => None,
    };
    match trace.plan().map(|p| (p, validate_plan(fused, &gt, p))) {
        Some((p, Ok(v))) if v.is_valid() => {
            episode.success = true;
            episode.cost = p.cost();
            episode.error = None;
        }
        Some((_, Ok(v))) => episode.error = Some(format!("plan fails the ground truth: {v:?}")),
        Some((_, Err(e))) => episode.error = Some(format!("plan fails the ground truth: {e}")),
        None => episode.error = Some(format!("no plan ({:?})", trace.outcome)),
    }
    TaskResult {
        episode,
        trace: Some(trace),
    }
}

/// Evaluates every task, at most `cfg.parallelism` at a time. Setting
/// `cancel` stops new tasks from starting; the report covers those done.
pub fn run_suite(
    oracle: &Oracle,
    fused: &Domain,
    groups: Option<&PredicateGroups>,
    tasks: &[TaskSpec],
    cfg: &SuiteConfig,
    cancel: Option<&AtomicBool>,
) -> Result<SuiteRun, EvalError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism.max(1))
        .build()
        .map_err(|e| EvalError::Io(e.to_string()))?;
    let cancelled = |_: &TaskSpec| cancel.is_some_and(|c| c.load(Ordering::SeqCst));
    let results: Vec<Option<TaskResult>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|t| (!cancelled(t)).then(|| run_task(oracle, fused, groups, t, &cfg.plan)))
            .collect()
    });
    let n_cancelled = results.iter().filter(|r| r.is_none()).count();
    let results: Vec<TaskResult> = results.into_iter().flatten().collect();
    let mut report = Report::new(&cfg.label(), results.iter().map(|r| r.episode.clone()).collect())?;
    report.cancelled = n_cancelled;
    Ok(SuiteRun { report, results })
}
