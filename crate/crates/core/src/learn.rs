//! Closed-loop learning of one atomic domain from a demonstration.
//!
//! propose (one call per keyframe transition) -> revise -> generate test
//! problems from the predicates alone -> loop { solvability check,
//! solution verification, refine on failure } with a single restart.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::{Oracle, OracleError, Part, Usage};
use crate::pddl::{
    extract_define, parse_domain, parse_problem_as, print_domain, print_problem, Domain, OperatorSchema, Plan,
};
use crate::planner::{ground, solve, Limits, Mode, Outcome};
use crate::prompt::{self, chat_with_repair, RepairError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LearnError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("{stage}: no usable reply after retries: {diagnostics}")]
    Unparseable { stage: String, diagnostics: String },
    #[error("domain for `{}` failed verification after a restart", .0.demo_id)]
    LearnFailed(Box<AtomicDomainRecord>),
    #[error("{0}")]
    Io(String),
}

impl LearnError {
    fn at(stage: impl Into<String>) -> impl FnOnce(RepairError) -> LearnError {
        let stage = stage.into();
        move |e| match e {
            RepairError::Oracle(o) => LearnError::Oracle(o),
            RepairError::Unparseable { diagnostics, .. } => LearnError::Unparseable { stage, diagnostics },
        }
    }
}

/// A demonstration: instruction plus ordered keyframe images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoManifest {
    pub id: String,
    pub instruction: String,
    pub keyframes: Vec<PathBuf>,
}

impl DemoManifest {
    /// Reads a JSON manifest; keyframe paths are relative to its directory.
    pub fn load(path: &Path) -> Result<Self, LearnError> {
        let text = std::fs::read_to_string(path).map_err(|e| LearnError::Io(format!("{}: {e}", path.display())))?;
        let mut m: DemoManifest =
            serde_json::from_str(&text).map_err(|e| LearnError::Manifest(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for k in &mut m.keyframes {
            if k.is_relative() {
                *k = base.join(&*k);
            }
        }
        m.check()?;
        Ok(m)
    }

    pub fn check(&self) -> Result<(), LearnError> {
        if self.keyframes.len() < 2 {
            return Err(LearnError::Manifest(format!(
                "`{}` has {} keyframe(s); at least 2 are needed",
                self.id,
                self.keyframes.len()
            )));
        }
        if self.instruction.trim().is_empty() {
            return Err(LearnError::Manifest(format!("`{}` has an empty instruction", self.id)));
        }
        Ok(())
    }

    /// The PDDL name used for the learned domain.
    pub fn domain_name(&self) -> String {
        let s: String = self
            .id
            .to_lowercase()
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
            .collect();
        if s.starts_with(|c: char| c.is_ascii_alphabetic()) {
            s
        } else {
            format!("d_{s}")
        }
    }
}

/// Steps of the loop that can be switched off for ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnAblation {
    pub no_revision: bool,
    pub no_solvability: bool,
    pub no_verification: bool,
    /// One pass, no refinement and no restart; the result is returned even
    /// when unverified.
    pub no_closed_loop: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnConfig {
    pub k_test: usize,
    pub theta: f64,
    pub l_max: usize,
    pub r_parse: usize,
    pub limits: Limits,
    pub ablation: LearnAblation,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            k_test: 5,
            theta: 0.6,
            l_max: 5,
            r_parse: 3,
            limits: Limits::default(),
            ablation: LearnAblation::default(),
        }
    }
}

impl LearnConfig {
    pub fn check(&self) -> Result<(), LearnError> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(LearnError::Config(format!("theta must be in (0, 1], got {}", self.theta)));
        }
        if self.k_test == 0 {
            return Err(LearnError::Config("k_test must be at least 1".into()));
        }
        if self.l_max == 0 {
            return Err(LearnError::Config("l_max must be at least 1".into()));
        }
        Ok(())
    }

    /// Upper bound on chat calls for one pass over a demonstration with
    /// `transitions` keyframe transitions.
    pub fn call_budget(&self, transitions: usize) -> usize {
        (transitions + 1 + self.k_test + 2 * self.l_max) * (1 + self.r_parse)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "feedback", rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Feedback(String),
}

/// Reads a verdict: the reply must start with PASS or FAIL (markdown
/// emphasis and case are ignored). Text after FAIL is the feedback.
pub fn parse_verdict(reply: &str) -> Result<Verdict, String> {
    let t = reply.trim_start_matches(|c: char| c.is_whitespace() || matches!(c, '*' | '#' | '`' | '>' | '_'));
    let upper = t.get(..4).map(str::to_ascii_uppercase);
    match upper.as_deref() {
        Some("PASS") => Ok(Verdict::Pass),
        Some("FAIL") => {
            let rest = t[4..]
                .trim_start_matches(|c: char| c.is_whitespace() || matches!(c, ':' | '-' | '*' | '.'))
                .trim_end();
            Ok(Verdict::Feedback(if rest.is_empty() {
                "the plan was rejected without a reason".into()
            } else {
                rest.to_string()
            }))
        }
        _ => Err("- the reply must start with PASS or FAIL".into()),
    }
}

/// Outcome of one test problem in a solvability check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ProblemStatus {
    Solved { plan: Plan },
    Unsolvable,
    ResourceLimit,
    /// The problem does not type-check against the current domain.
    IllTyped { reason: String },
    GroundingFailed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solvability {
    pub score: f64,
    pub statuses: Vec<ProblemStatus>,
}

impl Solvability {
    pub fn solved(&self) -> usize {
        self.statuses.iter().filter(|s| matches!(s, ProblemStatus::Solved { .. })).count()
    }

    /// Index of the hardest solved problem: longest plan, later index on ties.
    pub fn hardest(&self) -> Option<usize> {
        self.statuses
            .iter()
            .enumerate()
            .filter_map(|(i, s)| match s {
                ProblemStatus::Solved { plan } => Some((plan.len(), i)),
                _ => None,
            })
            .max()
            .map(|(_, i)| i)
    }

    /// Planner feedback for a refinement prompt.
    pub fn feedback(&self, problems: &[String], theta: f64) -> String {
        let mut out = format!(
            "Solvability check: {} of {} test problems solved (score {:.2}, threshold {:.2}).\n",
            self.solved(),
            self.statuses.len(),
            self.score,
            theta
        );
        for (i, s) in self.statuses.iter().enumerate() {
            let line = match s {
                ProblemStatus::Solved { plan } => format!("solved with a {}-step plan", plan.len()),
                ProblemStatus::Unsolvable => "no plan exists: the goal cannot be reached from the initial state".into(),
                ProblemStatus::ResourceLimit => "the planner ran out of budget".into(),
                ProblemStatus::IllTyped { reason } => format!("the problem does not fit the domain: {reason}"),
                ProblemStatus::GroundingFailed { reason } => format!("grounding failed: {reason}"),
            };
            out.push_str(&format!("- test_{}: {line}\n", i + 1));
        }
        for (i, s) in self.statuses.iter().enumerate() {
            if !matches!(s, ProblemStatus::Solved { .. }) {
                out.push_str(&format!("\nUnsolved test_{}:\n{}\n", i + 1, problems[i].trim()));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub attempt: usize,
    pub iteration: usize,
    pub score: f64,
    pub verdict: Option<Verdict>,
    pub refined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicDomainRecord {
    pub demo_id: String,
    pub domain: Domain,
    /// Refinements performed in the final attempt.
    pub iterations_used: usize,
    pub solvability_score: f64,
    /// Canonical text of each test problem (as generated if it no longer
    /// parses against the final domain).
    pub test_problems: Vec<String>,
    pub verified: bool,
    pub attempts: usize,
    pub history: Vec<IterationLog>,
    pub usage: Usage,
}

impl AtomicDomainRecord {
    /// Writes `domain.pddl`, `meta.json` and `tests/problem_k.pddl`.
    pub fn write(&self, dir: &Path) -> Result<(), LearnError> {
        let io = |e: std::io::Error| LearnError::Io(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir.join("tests")).map_err(io)?;
        std::fs::write(dir.join("domain.pddl"), print_domain(&self.domain)).map_err(io)?;
        for (i, p) in self.test_problems.iter().enumerate() {
            std::fs::write(dir.join("tests").join(format!("problem_{}.pddl", i + 1)), p).map_err(io)?;
        }
        let meta = serde_json::json!({
            "demo_id": self.demo_id,
            "template_version": prompt::TEMPLATE_VERSION,
            "verified": self.verified,
            "iterations_used": self.iterations_used,
            "attempts": self.attempts,
            "solvability_score": self.solvability_score,
            "history": self.history,
            "usage": self.usage,
        });
        let text = serde_json::to_string_pretty(&meta).expect("meta serializes");
        std::fs::write(dir.join("meta.json"), text + "\n").map_err(io)?;
        Ok(())
    }
}

pub(crate) fn format_predicates(dom: &Domain) -> String {
    if dom.predicates.is_empty() {
        return "(none yet)".into();
    }
    dom.predicates.values().map(|p| p.to_string()).collect::<Vec<_>>().join("\n")
}

pub(crate) fn format_types(dom: &Domain) -> String {
    if dom.types.is_empty() {
        return "(no types; every object is of type object)".into();
    }
    let decl: Vec<String> = dom.types.iter().map(|(t, p)| format!("{t} - {p}")).collect();
    format!("types: {}", decl.join(", "))
}

/// Parses a whole domain reply and renames it to `name`.
fn domain_reply(reply: &str, name: &str) -> Result<Domain, String> {
    let text = extract_define(reply).ok_or("- the reply contains no (define (domain ...)) form")?;
    let mut dom = parse_domain(text).map_err(|e| e.feedback())?;
    if dom.operators.is_empty() {
        return Err("- the domain declares no actions".into());
    }
    dom.name = name.to_string();
    Ok(dom)
}

/// Checks one transition's fragment against predicates accumulated so far.
fn fragment_reply(reply: &str, name: &str, acc: &Domain) -> Result<Domain, String> {
    let frag = domain_reply(reply, name)?;
    if frag.operators.len() != 1 {
        return Err(format!("- expected exactly one action, found {}", frag.operators.len()));
    }
    let clashes: Vec<String> = frag
        .predicates
        .values()
        .filter_map(|p| {
            let old = acc.predicates.get(&p.name)?;
            (old.arity() != p.arity()).then(|| {
                format!("- predicate `{}` was declared earlier as {old}; keep that arity", p.name)
            })
        })
        .collect();
    if clashes.is_empty() {
        Ok(frag)
    } else {
        Err(clashes.join("\n"))
    }
}

fn absorb(acc: &mut Domain, frag: Domain) {
    for (t, parent) in frag.types {
        acc.types.entry(t).or_insert(parent);
    }
    for (n, p) in frag.predicates {
        acc.predicates.entry(n).or_insert(p);
    }
    for op in frag.operators.into_values() {
        let name = free_name(acc, &op);
        if let Some(name) = name {
            acc.add_operator(OperatorSchema { name, ..op });
        }
    }
}

/// The name under which `op` joins `acc`; `None` if an identical operator
/// is already there.
fn free_name(acc: &Domain, op: &OperatorSchema) -> Option<String> {
    for k in 1.. {
        let cand = if k == 1 { op.name.clone() } else { format!("{}_{k}", op.name) };
        match acc.operators.get(&cand) {
            None => return Some(cand),
            Some(existing) if existing.params == op.params
                && existing.preconditions == op.preconditions
                && existing.effects == op.effects => return None,
            Some(_) => {}
        }
    }
    unreachable!()
}

/// One chat call per keyframe transition, each with both keyframes
/// attached; predicates accumulate across calls.
pub fn propose_domain(
    oracle: &Oracle,
    manifest: &DemoManifest,
    cfg: &LearnConfig,
    attempt: usize,
) -> Result<Domain, LearnError> {
    manifest.check()?;
    let name = manifest.domain_name();
    let mut acc = Domain::new(name.clone());
    let steps = manifest.keyframes.len() - 1;
    let restart = if attempt > 0 {
        "\nAn earlier attempt at this domain failed its checks; start afresh.\n"
    } else {
        ""
    };
    let oracle = oracle.stage("propose");
    for (i, pair) in manifest.keyframes.windows(2).enumerate() {
        let text = prompt::PROPOSE.render(&[
            ("instruction", &manifest.instruction),
            ("from", &(i + 1).to_string()),
            ("to", &(i + 2).to_string()),
            ("step", &(i + 1).to_string()),
            ("steps", &steps.to_string()),
            ("predicates", &format_predicates(&acc)),
            ("restart", restart),
            ("domain", &name),
        ]);
        let req = oracle.request().system(prompt::SYSTEM.text).user_parts(vec![
            Part::text(text),
            Part::image_file(&pair[0])?,
            Part::image_file(&pair[1])?,
        ]);
        let frag = chat_with_repair(&oracle, req, "domain", cfg.r_parse, |r| fragment_reply(r, &name, &acc))
            .map_err(LearnError::at(format!("propose transition {}", i + 1)))?;
        absorb(&mut acc, frag);
    }
    Ok(acc)
}

/// One holistic revision, re-validated with repair.
pub fn revise_domain(oracle: &Oracle, d0: &Domain, instruction: &str, cfg: &LearnConfig) -> Result<Domain, LearnError> {
    let text = prompt::REVISE.render(&[
        ("instruction", instruction),
        ("domain", &d0.name),
        ("domain_text", &print_domain(d0)),
    ]);
    let oracle = oracle.stage("revise");
    let req = oracle.request().system(prompt::SYSTEM.text).user(text);
    chat_with_repair(&oracle, req, "domain", cfg.r_parse, |r| domain_reply(r, &d0.name)).map_err(LearnError::at("revise"))
}

/// Types and predicates of `dom`, without operators.
pub fn vocabulary(dom: &Domain) -> Domain {
    Domain {
        operators: Default::default(),
        ..dom.clone()
    }
}

/// The prompt for test problem `index` (1-based). Built from the
/// vocabulary only: operators never appear in it.
pub fn test_problem_prompt(vocab: &Domain, instruction: &str, index: usize, count: usize) -> String {
    prompt::PROBLEMS.render(&[
        ("instruction", instruction),
        ("types", &format_types(vocab)),
        ("predicates", &format_predicates(vocab)),
        ("index", &index.to_string()),
        ("count", &count.to_string()),
        ("domain", &vocab.name),
    ])
}

/// One call per test problem, each repaired against the vocabulary.
pub fn gen_test_problems(
    oracle: &Oracle,
    dom: &Domain,
    instruction: &str,
    cfg: &LearnConfig,
) -> Result<Vec<String>, LearnError> {
    let vocab = vocabulary(dom);
    if vocab.predicates.is_empty() {
        return Err(LearnError::Config("cannot write test problems without predicates".into()));
    }
    let oracle = oracle.stage("test_problems");
    (1..=cfg.k_test)
        .map(|k| {
            let req = oracle
                .request()
                .system(prompt::SYSTEM.text)
                .user(test_problem_prompt(&vocab, instruction, k, cfg.k_test));
            chat_with_repair(&oracle, req, "problem", cfg.r_parse, |r| {
                let text = extract_define(r).ok_or("- the reply contains no (define (problem ...)) form")?;
                let p = parse_problem_as(text, &vocab).map_err(|e| e.feedback())?;
                Ok(print_problem(&p))
            })
            .map_err(LearnError::at(format!("test problem {k}")))
        })
        .collect()
}

/// Fraction of `problems` a satisficing search solves against `dom`.
/// Problems that no longer type-check count as unsolved.
pub fn solvability_score(dom: &Domain, problems: &[String], limits: Limits) -> Solvability {
    let statuses: Vec<ProblemStatus> = problems
        .par_iter()
        .map(|text| {
            let prob = match parse_problem_as(text, dom) {
                Ok(p) => p,
                Err(e) => return ProblemStatus::IllTyped { reason: e.to_string() },
            };
            let task = match ground(dom, &prob, limits.ground) {
                Ok(t) => t,
                Err(e) => return ProblemStatus::GroundingFailed { reason: e.to_string() },
            };
            match solve(&task, Mode::Satisficing, limits.search).outcome {
                Outcome::Solved(plan) => ProblemStatus::Solved { plan },
                Outcome::Unsolvable => ProblemStatus::Unsolvable,
                Outcome::ResourceLimit => ProblemStatus::ResourceLimit,
            }
        })
        .collect();
    let solved = statuses.iter().filter(|s| matches!(s, ProblemStatus::Solved { .. })).count();
    let score = if problems.is_empty() { 0.0 } else { solved as f64 / problems.len() as f64 };
    Solvability { score, statuses }
}

pub fn verify_solution(
    oracle: &Oracle,
    dom: &Domain,
    problem: &str,
    plan: &Plan,
    instruction: &str,
    cfg: &LearnConfig,
) -> Result<Verdict, LearnError> {
    let text = prompt::VERIFY.render(&[
        ("instruction", instruction),
        ("domain_text", &print_domain(dom)),
        ("problem_text", problem.trim()),
        ("plan_text", plan.to_string().trim_end()),
    ]);
    let oracle = oracle.stage("verify");
    let req = oracle.request().system(prompt::SYSTEM.text).user(text);
    chat_with_repair(&oracle, req, "verdict", cfg.r_parse, parse_verdict).map_err(LearnError::at("verify"))
}

pub fn refine_domain(
    oracle: &Oracle,
    dom: &Domain,
    instruction: &str,
    feedback: &str,
    cfg: &LearnConfig,
) -> Result<Domain, LearnError> {
    let text = prompt::REFINE.render(&[
        ("instruction", instruction),
        ("domain_text", &print_domain(dom)),
        ("feedback", feedback.trim()),
        ("domain", &dom.name),
    ]);
    let oracle = oracle.stage("refine");
    let req = oracle.request().system(prompt::SYSTEM.text).user(text);
    chat_with_repair(&oracle, req, "domain", cfg.r_parse, |r| domain_reply(r, &dom.name)).map_err(LearnError::at("refine"))
}

struct Attempt {
    domain: Domain,
    problems: Vec<String>,
    score: f64,
    verified: bool,
    refinements: usize,
}

fn run_attempt(
    oracle: &Oracle,
    manifest: &DemoManifest,
    cfg: &LearnConfig,
    attempt: usize,
    history: &mut Vec<IterationLog>,
) -> Result<Attempt, LearnError> {
    let ab = cfg.ablation;
    let d0 = propose_domain(oracle, manifest, cfg, attempt)?;
    let mut dom = if ab.no_revision {
        d0
    } else {
        revise_domain(oracle, &d0, &manifest.instruction, cfg)?
    };
    let problems = gen_test_problems(oracle, &dom, &manifest.instruction, cfg)?;
    let iterations = if ab.no_closed_loop { 1 } else { cfg.l_max };
    let mut out = Attempt {
        domain: Domain::default(),
        problems: Vec::new(),
        score: 0.0,
        verified: false,
        refinements: 0,
    };
    for it in 0..iterations {
        let sol = solvability_score(&dom, &problems, cfg.limits);
        let mut log = IterationLog {
            attempt,
            iteration: it,
            score: sol.score,
            verdict: None,
            refined: false,
        };
        out.score = sol.score;
        let feedback = if !ab.no_solvability && sol.score < cfg.theta {
            Some(sol.feedback(&problems, cfg.theta))
        } else if ab.no_verification {
            None
        } else {
            match sol.hardest() {
                None => Some(sol.feedback(&problems, cfg.theta)),
                Some(k) => {
                    let ProblemStatus::Solved { plan } = &sol.statuses[k] else { unreachable!() };
                    let verdict = verify_solution(oracle, &dom, &problems[k], plan, &manifest.instruction, cfg)?;
                    log.verdict = Some(verdict.clone());
                    match verdict {
                        Verdict::Pass => None,
                        Verdict::Feedback(f) => Some(format!(
                            "Solution verification rejected this plan for test_{}:\n{}\nReason: {f}",
                            k + 1,
                            plan.to_string().trim_end()
                        )),
                    }
                }
            }
        };
        let last = it + 1 == iterations;
        match feedback {
            None => {
                out.verified = true;
                history.push(log);
                break;
            }
            Some(f) if !last => {
                log.refined = true;
                history.push(log);
                dom = refine_domain(oracle, &dom, &manifest.instruction, &f, cfg)?;
                out.refinements += 1;
            }
            Some(_) => {
                history.push(log);
            }
        }
    }
    out.problems = problems
        .iter()
        .map(|t| parse_problem_as(t, &dom).map(|p| print_problem(&p)).unwrap_or_else(|_| t.clone()))
        .collect();
    out.domain = dom;
    Ok(out)
}

/// The full loop with one restart. Returns the verified record, or
/// `LearnFailed` carrying the last record.
pub fn learn_atomic_domain(
    oracle: &Oracle,
    manifest: &DemoManifest,
    cfg: &LearnConfig,
) -> Result<AtomicDomainRecord, LearnError> {
    cfg.check()?;
    manifest.check()?;
    let oracle = oracle.scoped();
    let max_attempts = if cfg.ablation.no_closed_loop { 1 } else { 2 };
    let mut history = Vec::new();
    let mut attempt = 0;
    loop {
        let a = run_attempt(&oracle, manifest, cfg, attempt, &mut history)?;
        attempt += 1;
        let record = AtomicDomainRecord {
            demo_id: manifest.id.clone(),
            domain: a.domain,
            iterations_used: a.refinements,
            solvability_score: a.score,
            test_problems: a.problems,
            verified: a.verified,
            attempts: attempt,
            history: history.clone(),
            usage: oracle.usage(),
        };
        if record.verified || cfg.ablation.no_closed_loop {
            return Ok(record);
        }
        if attempt == max_attempts {
            return Err(LearnError::LearnFailed(Box::new(record)));
        }
        log::info!("{}: restarting domain generation", manifest.id);
    }
}

/// Learns several demonstrations concurrently, each with its own counters.
pub fn learn_all(
    oracle: &Oracle,
    manifests: &[DemoManifest],
    cfg: &LearnConfig,
) -> Vec<Result<AtomicDomainRecord, LearnError>> {
    manifests.par_iter().map(|m| learn_atomic_domain(oracle, m, cfg)).collect()
}

/// Operator names of `dom` that occur in `text`; used to audit prompts.
pub fn operator_mentions<'a>(dom: &'a Domain, text: &str) -> BTreeSet<&'a str> {
    dom.operators.keys().map(String::as_str).filter(|n| text.contains(n)).collect()
}
