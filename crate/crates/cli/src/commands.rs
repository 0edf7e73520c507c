use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use demoplan::eval::{emit_report, run_suite, ReportFormat, SuiteConfig};
use demoplan::fusion::fuse_all;
use demoplan::graph::{export_dot, to_graph, union, DomainGraph};
use demoplan::keyframes::{extract_keyframes, read_energy_csv, segment_demo, FrameSeq};
use demoplan::learn::{learn_atomic_domain, AtomicDomainRecord, DemoManifest, LearnAblation, LearnError};
use demoplan::oracle::{Oracle, OracleError};
use demoplan::pddl::{extract_define, parse_domain, read_domain, read_problem, validate_domain, validate_problem, Diagnostic, Domain, PddlError, SourceMap};
use demoplan::task_plan::{group_predicates, plan_task, PlanAblation, PlanConfig, PredicateGroups, TaskSpec};

use crate::config::Config;
use crate::{CliError, PlanFlags, CANCEL};

fn read(path: &Path, stage: &str) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::failed(stage, format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str, stage: &str) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::failed(stage, format!("{}: {e}", path.display()));
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, text).map_err(io)
}

fn load_domain(path: &Path, stage: &str) -> Result<Domain, CliError> {
    parse_domain(&read(path, stage)?).map_err(|e| CliError::failed(stage, format!("{}: {e}", path.display())))
}

fn oracle(cfg: &Config) -> Result<Oracle, CliError> {
    Oracle::new(&cfg.oracle).map_err(|e| match e {
        OracleError::Config(m) => CliError::Config(m),
        other => CliError::failed("oracle", other),
    })
}

fn json(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("serializes") + "\n"
}

// ---------------------------------------------------------------- validate

enum Kind {
    Domain,
    Problem,
}

fn kind_of(text: &str) -> Option<Kind> {
    let body = extract_define(text)?;
    let inner = body.trim_start_matches('(').trim_start().strip_prefix("define")?.trim_start();
    let head = inner.strip_prefix('(')?.trim_start();
    if head.starts_with("domain") {
        Some(Kind::Domain)
    } else if head.starts_with("problem") {
        Some(Kind::Problem)
    } else {
        None
    }
}

/// `file:line:col: error: ...` for reader errors that carry a position.
fn reader_error(file: &str, e: &PddlError) -> String {
    match e {
        PddlError::Syntax { line, col, expected } => format!("{file}:{line}:{col}: error: syntax error: expected {expected}"),
        other => format!("{file}:1:1: error: {other}"),
    }
}

fn report(lines: &mut Vec<String>, file: &str, diags: Vec<Diagnostic>, sources: &SourceMap) -> usize {
    let mut errors = 0;
    for d in diags {
        errors += d.is_error() as usize;
        lines.push(d.render(file, sources));
    }
    errors
}

pub fn validate(files: &[PathBuf], domain: Option<&Path>) -> Result<(), CliError> {
    let mut lines: Vec<String> = Vec::new();
    let mut errors = 0;
    let mut domains: BTreeMap<String, Domain> = BTreeMap::new();
    let mut problems = Vec::new();
    let fixed = match domain {
        Some(p) => Some(load_domain(p, "validate")?),
        None => None,
    };
    for path in files {
        let text = read(path, "validate")?;
        let file = path.display().to_string();
        match kind_of(&text) {
            Some(Kind::Domain) => match read_domain(&text) {
                Ok(parsed) => {
                    let mut diags = parsed.diagnostics;
                    diags.extend(validate_domain(&parsed.value));
                    errors += report(&mut lines, &file, diags, &parsed.sources);
                    domains.insert(parsed.value.name.clone(), parsed.value);
                }
                Err(e) => {
                    errors += 1;
                    lines.push(reader_error(&file, &e));
                }
            },
            Some(Kind::Problem) => problems.push((file, text)),
            None => {
                errors += 1;
                lines.push(format!("{file}:1:1: error: no (define (domain ...)) or (define (problem ...)) form"));
            }
        }
    }
    for (file, text) in problems {
        match read_problem(&text) {
            Ok(parsed) => {
                let dom = fixed.as_ref().or_else(|| domains.get(&parsed.value.domain));
                match dom {
                    Some(dom) => {
                        let mut diags = parsed.diagnostics;
                        let mut prob = parsed.value;
                        if fixed.is_some() {
                            prob.domain = dom.name.clone();
                        }
                        diags.extend(validate_problem(dom, &prob));
                        errors += report(&mut lines, &file, diags, &parsed.sources);
                    }
                    None => {
                        errors += 1;
                        lines.push(format!(
                            "{file}:1:1: error: domain `{}` was not given; pass it alongside or with --domain",
                            parsed.value.domain
                        ));
                    }
                }
            }
            Err(e) => {
                errors += 1;
                lines.push(reader_error(&file, &e));
            }
        }
    }
    for l in &lines {
        println!("{l}");
    }
    eprintln!("{} file(s) checked, {errors} error(s), {} warning(s)", files.len(), lines.len() - errors);
    if errors > 0 {
        return Err(CliError::failed("validate", format!("{errors} error(s)")));
    }
    Ok(())
}

// --------------------------------------------------------------- keyframes

pub fn keyframes(input: &Path, window: usize, detail: bool) -> Result<(), CliError> {
    let stage = "keyframes";
    let (set, sources) = if input.is_dir() {
        let frames = FrameSeq::load_dir(input).map_err(|e| CliError::failed(stage, e))?;
        let set = segment_demo(&frames, window).map_err(|e| CliError::failed(stage, e))?;
        (set, frames.sources().to_vec())
    } else {
        let file = std::fs::File::open(input).map_err(|e| CliError::failed(stage, format!("{}: {e}", input.display())))?;
        let energies = read_energy_csv(file).map_err(|e| CliError::failed(stage, e))?;
        (extract_keyframes(&energies, window).map_err(|e| CliError::failed(stage, e))?, Vec::new())
    };
    let out = if detail {
        serde_json::to_string(&set.to_json(&sources))
    } else {
        serde_json::to_string(&set.indices())
    };
    println!("{}", out.expect("serializes"));
    Ok(())
}

// ------------------------------------------------------------------- learn

fn learn_summary(rec: &AtomicDomainRecord, dir: &Path) -> serde_json::Value {
    serde_json::json!({
        "demo_id": rec.demo_id,
        "verified": rec.verified,
        "iterations_used": rec.iterations_used,
        "attempts": rec.attempts,
        "solvability_score": rec.solvability_score,
        "n_predicates": rec.domain.predicates.len(),
        "n_operators": rec.domain.operators.len(),
        "llm_calls": rec.usage.n_chat,
        "dir": dir,
    })
}

pub fn learn(cfg: &Config, manifest: &Path, ablation: LearnAblation) -> Result<(), CliError> {
    let stage = "learn";
    let m = DemoManifest::load(manifest).map_err(|e| CliError::failed(stage, e))?;
    let oracle = oracle(cfg)?;
    let lcfg = demoplan::learn::LearnConfig {
        ablation,
        ..cfg.learn_config()
    };
    let dir = cfg.paths.out.join(m.domain_name());
    let (rec, failure) = match learn_atomic_domain(&oracle, &m, &lcfg) {
        Ok(rec) => (rec, None),
        Err(LearnError::LearnFailed(rec)) => {
            let msg = format!("domain for `{}` failed verification after a restart; last attempt written to {}", rec.demo_id, dir.display());
            (*rec, Some(msg))
        }
        Err(LearnError::Unparseable { stage: s, diagnostics }) => {
            return Err(CliError::failed(format!("learn/{s}"), format!("no usable reply after retries: {diagnostics}")))
        }
        Err(e) => return Err(CliError::failed(stage, e)),
    };
    rec.write(&dir).map_err(|e| CliError::failed(stage, e))?;
    print!("{}", json(&learn_summary(&rec, &dir)));
    match failure {
        Some(msg) => Err(CliError::failed("learn/verify", msg)),
        None => Ok(()),
    }
}

// -------------------------------------------------------------------- fuse

/// Non-empty, non-comment lines of `list`, resolved against its directory.
fn domain_list(list: &Path) -> Result<Vec<PathBuf>, CliError> {
    let base = list.parent().unwrap_or(Path::new("."));
    Ok(read(list, "fuse")?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| base.join(l))
        .collect())
}

pub fn fuse(cfg: &Config, list: &Path, name: Option<&str>, intermediates: bool) -> Result<(), CliError> {
    let stage = "fuse";
    let domains = domain_list(list)?
        .iter()
        .map(|p| load_domain(p, stage))
        .collect::<Result<Vec<_>, _>>()?;
    let oracle = oracle(cfg)?;
    let mut fusion = fuse_all(&oracle, &domains, &cfg.fusion_config()).map_err(|e| CliError::failed(stage, e))?;
    if let Some(name) = name {
        fusion.domain.name = name.to_string();
    }
    fusion.write(&cfg.paths.out, intermediates).map_err(|e| CliError::failed(stage, e))?;
    let summary = serde_json::json!({
        "domains": domains.len(),
        "name": fusion.domain.name,
        "n_predicates": fusion.domain.predicates.len(),
        "n_operators": fusion.domain.operators.len(),
        "merges": fusion.log.n_merges(),
        "verdicts_requested": fusion.log.verdicts_requested(),
        "fused": cfg.paths.out.join("fused.pddl"),
    });
    print!("{}", json(&summary));
    Ok(())
}

// ------------------------------------------------------------------- graph

pub fn graph(inputs: &[PathBuf], dot: bool) -> Result<(), CliError> {
    let stage = "graph";
    let graphs = inputs
        .iter()
        .map(|p| {
            let text = read(p, stage)?;
            if p.extension().is_some_and(|e| e == "json") {
                serde_json::from_str::<DomainGraph>(&text).map_err(|e| CliError::failed(stage, format!("{}: {e}", p.display())))
            } else {
                let dom = parse_domain(&text).map_err(|e| CliError::failed(stage, format!("{}: {e}", p.display())))?;
                let source = p.file_stem().map_or_else(|| dom.name.clone(), |s| s.to_string_lossy().into_owned());
                Ok(to_graph(&dom, &source))
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let g = if graphs.len() == 1 { graphs.into_iter().next().unwrap() } else { union(&graphs) };
    if dot {
        print!("{}", export_dot(&g));
    } else {
        print!("{}", json(&g.stats()));
    }
    Ok(())
}

// -------------------------------------------------------------- plan, eval

fn plan_config(cfg: &Config, flags: PlanFlags) -> PlanConfig {
    PlanConfig {
        r_parse: cfg.learn.r_parse,
        limits: cfg.limits(),
        ablation: PlanAblation {
            no_grouping: flags.no_grouping,
            no_filtering: flags.no_filtering,
        },
    }
}

fn groups(oracle: &Oracle, cfg: &Config, fused: &Domain, flags: PlanFlags) -> Result<Option<PredicateGroups>, CliError> {
    if flags.no_grouping {
        return Ok(None);
    }
    let (g, warnings) = group_predicates(oracle, fused, cfg.learn.r_parse).map_err(|e| {
        let stage = e.stage().map_or("group".to_string(), str::to_string);
        CliError::failed(stage, e)
    })?;
    for w in warnings {
        log::warn!("grouping: {w}");
    }
    Ok(Some(g))
}

pub fn plan(cfg: &Config, fused: &Path, task: &Path, flags: PlanFlags) -> Result<(), CliError> {
    let dom = load_domain(fused, "plan")?;
    let task = TaskSpec::load(task).map_err(|e| CliError::failed("plan", e))?;
    let oracle = oracle(cfg)?;
    let groups = groups(&oracle, cfg, &dom, flags)?;
    let trace = plan_task(&oracle, &dom, groups.as_ref(), &task, &plan_config(cfg, flags)).map_err(|e| {
        let stage = e.stage().map_or("plan".to_string(), |s| format!("plan/{s}"));
        CliError::failed(stage, e)
    })?;
    let path = cfg.paths.out.join("traces").join(format!("{}.json", task.id));
    write(&path, &json(&trace), "plan")?;
    match trace.plan() {
        Some(p) => {
            print!("{p}");
            log::info!("{}: {}-step plan, trace in {}", task.id, p.len(), path.display());
            Ok(())
        }
        None => Err(CliError::failed(
            "plan/solve",
            format!("no plan found ({}); trace in {}", serde_json::to_value(&trace.outcome).expect("serializes")["outcome"], path.display()),
        )),
    }
}

pub fn eval(cfg: &Config, fused: &Path, suite: &Path, flags: PlanFlags, format: ReportFormat) -> Result<(), CliError> {
    let dom = load_domain(fused, "eval")?;
    let tasks = TaskSpec::load_suite(suite).map_err(|e| CliError::failed("eval", e))?;
    let oracle = oracle(cfg)?;
    let groups = groups(&oracle, cfg, &dom, flags)?;
    let scfg = SuiteConfig {
        plan: plan_config(cfg, flags),
        parallelism: cfg.oracle.parallelism,
    };
    let run = run_suite(&oracle, &dom, groups.as_ref(), &tasks, &scfg, Some(&CANCEL)).map_err(|e| CliError::failed("eval", e))?;
    run.write(&cfg.paths.out).map_err(|e| CliError::failed("eval", e))?;
    print!("{}", emit_report(&run.report, format).map_err(|e| CliError::failed("eval", e))?);
    let r = &run.report;
    log::info!("{}: SR={:.3} SPL={:.3} OR(0)={:.3} over {} task(s)", r.label, r.overall.sr, r.overall.spl, r.overall.or0, r.overall.n);
    if r.cancelled > 0 {
        return Err(CliError::failed(
            "eval",
            format!("cancelled; partial report over {} task(s) written to {}", r.overall.n, cfg.paths.out.display()),
        ));
    }
    if r.overall.sr < cfg.eval.min_sr {
        return Err(CliError::failed("eval", format!("success rate {:.3} is below the floor {:.3}", r.overall.sr, cfg.eval.min_sr)));
    }
    Ok(())
}
