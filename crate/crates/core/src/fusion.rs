//! Hierarchical fusion of atomic domains along a binary tree.
//!
//! Each merge aligns predicates first (embedding similarity, then an
//! equivalence verdict), rewrites the second domain's operators through the
//! resulting renames, then aligns operators the same way. Merged operators
//! keep the first operator's name and parameters and take the union of both
//! precondition and effect sets.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::{cosine, Oracle, OracleError};
use crate::pddl::{print_domain, validate_domain, Diagnostic, Domain, Literal, OperatorSchema, PredicateSchema, Term};
use crate::prompt::{self, chat_with_repair, RepairError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FusionError {
    #[error("nothing to fuse")]
    Empty,
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("equivalence verdict: {0}")]
    Unparseable(String),
    #[error("fused domain `{domain}` is invalid: {}", render(.diagnostics))]
    ValidationFailed { domain: String, diagnostics: Vec<Diagnostic> },
    #[error("{0}")]
    Io(String),
}

fn render(d: &[Diagnostic]) -> String {
    d.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl From<RepairError> for FusionError {
    fn from(e: RepairError) -> Self {
        match e {
            RepairError::Oracle(o) => FusionError::Oracle(o),
            RepairError::Unparseable { diagnostics, .. } => FusionError::Unparseable(diagnostics),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Equivalence {
    /// Ask the model about every candidate pair above threshold.
    Llm,
    /// Only identically named symbols are equivalent; no model calls.
    ExactName,
}

impl std::str::FromStr for Equivalence {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "llm" => Ok(Self::Llm),
            "exact-name" | "exact_name" => Ok(Self::ExactName),
            other => Err(format!("unknown equivalence mode `{other}` (expected llm or exact-name)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub tau_p: f32,
    pub tau_o: f32,
    pub equivalence: Equivalence,
    pub r_parse: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            tau_p: 0.3,
            tau_o: 0.3,
            equivalence: Equivalence::Llm,
            r_parse: 3,
        }
    }
}

/// One accepted merge of a second-domain symbol into a first-domain one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMerge {
    pub kept: String,
    pub absorbed: String,
    /// `None` for identically named symbols, merged without a verdict.
    pub similarity: Option<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub first: String,
    pub second: String,
    pub reason: String,
}

/// What one binary merge did. Renames map second-domain names to their
/// names in the result (merges and collision suffixes alike).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MergeRecord {
    pub level: usize,
    pub left: String,
    pub right: String,
    pub predicate_merges: Vec<PairMerge>,
    pub operator_merges: Vec<PairMerge>,
    pub predicate_renames: BTreeMap<String, String>,
    pub operator_renames: BTreeMap<String, String>,
    pub rejected: Vec<Rejection>,
    /// Pairs sent for a verdict.
    pub verdicts_requested: usize,
}

impl MergeRecord {
    pub fn n_merges(&self) -> usize {
        self.predicate_merges.len() + self.operator_merges.len()
    }
}

/// Final names of one leaf's symbols in the fused domain.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LeafMap {
    pub domain: String,
    pub predicates: BTreeMap<String, String>,
    pub operators: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MergeLog {
    pub levels: Vec<Vec<MergeRecord>>,
    pub leaves: Vec<LeafMap>,
}

impl MergeLog {
    pub fn n_merges(&self) -> usize {
        self.levels.iter().flatten().map(MergeRecord::n_merges).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.n_merges() == 0
    }

    pub fn verdicts_requested(&self) -> usize {
        self.levels.iter().flatten().map(|r| r.verdicts_requested).sum()
    }
}

/// Shape of the fusion tree: per level, the merges as index pairs into the
/// previous level, plus an optional promoted trailing index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeLevel {
    pub merges: Vec<(usize, usize)>,
    pub promoted: Option<usize>,
}

/// Adjacent pairs per level; an odd trailing node moves up unmerged.
pub fn build_fusion_tree(n_leaves: usize) -> Vec<TreeLevel> {
    let mut levels = Vec::new();
    let mut n = n_leaves;
    while n > 1 {
        levels.push(TreeLevel {
            merges: (0..n / 2).map(|i| (2 * i, 2 * i + 1)).collect(),
            promoted: (n % 2 == 1).then_some(n - 1),
        });
        n = n.div_ceil(2);
    }
    levels
}

/// `name(?a, ?b)`: the string embedded for a predicate.
pub fn predicate_text(p: &PredicateSchema) -> String {
    let args: Vec<String> = p.params.iter().map(|a| format!("?{}", a.name)).collect();
    format!("{}({})", p.name, args.join(", "))
}

fn operator_text(o: &OperatorSchema) -> String {
    let params: Vec<String> = o.params.iter().map(|p| format!("?{} - {}", p.name, p.ty)).collect();
    let lits = |s: &BTreeSet<Literal>| s.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(" ");
    format!(
        "(:action {}\n  :parameters ({})\n  :precondition (and {})\n  :effect (and {}))",
        o.name,
        params.join(" "),
        lits(&o.preconditions),
        lits(&o.effects)
    )
}

/// YES/NO on the first line; markdown and case ignored.
pub fn parse_equivalence(reply: &str) -> Result<bool, String> {
    let t = reply.trim_start_matches(|c: char| c.is_whitespace() || matches!(c, '*' | '#' | '`' | '_'));
    let head: String = t.chars().take_while(|c| c.is_ascii_alphabetic()).collect::<String>().to_ascii_uppercase();
    match head.as_str() {
        "YES" => Ok(true),
        "NO" => Ok(false),
        _ => Err("- answer YES or NO on the first line".into()),
    }
}

fn ask(oracle: &Oracle, kind: &str, first: &str, second: &str, r_parse: usize) -> Result<bool, FusionError> {
    let text = prompt::EQUIVALENCE.render(&[("kind", kind), ("first", first), ("second", second)]);
    let req = oracle.request().user(text);
    Ok(chat_with_repair(oracle, req, "verdict", r_parse, parse_equivalence)?)
}

/// Cross pairs scoring at least `tau`, best first, ties by name.
fn ranked_pairs(
    oracle: &Oracle,
    left: &[(String, String, usize)],
    right: &[(String, String, usize)],
    tau: f32,
) -> Result<Vec<(f32, String, String)>, FusionError> {
    if left.is_empty() || right.is_empty() {
        return Ok(Vec::new());
    }
    let texts: Vec<String> = left.iter().chain(right).map(|(_, t, _)| t.clone()).collect();
    let vecs = oracle.embed(&texts)?;
    let (lv, rv) = vecs.split_at(left.len());
    let mut pairs = Vec::new();
    for (i, (a, _, arity_a)) in left.iter().enumerate() {
        for (j, (b, _, arity_b)) in right.iter().enumerate() {
            if arity_a != arity_b {
                continue;
            }
            let phi = cosine(&lv[i], &rv[j]);
            if phi >= tau {
                pairs.push((phi, a.clone(), b.clone()));
            }
        }
    }
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0).then_with(|| (&x.1, &x.2).cmp(&(&y.1, &y.2))));
    Ok(pairs)
}

fn fresh_name(taken: impl Fn(&str) -> bool, base: &str) -> String {
    (2..).map(|k| format!("{base}_{k}")).find(|c| !taken(c)).expect("unbounded")
}

fn rename_literal(l: &Literal, preds: &BTreeMap<String, String>, vars: &BTreeMap<String, String>) -> Literal {
    Literal {
        predicate: preds.get(&l.predicate).cloned().unwrap_or_else(|| l.predicate.clone()),
        args: l
            .args
            .iter()
            .map(|t| match t {
                Term::Var(v) => Term::Var(vars.get(v).cloned().unwrap_or_else(|| v.clone())),
                other => other.clone(),
            })
            .collect(),
        positive: l.positive,
    }
}

fn rewrite(op: &OperatorSchema, preds: &BTreeMap<String, String>) -> OperatorSchema {
    let none = BTreeMap::new();
    OperatorSchema {
        preconditions: op.preconditions.iter().map(|l| rename_literal(l, preds, &none)).collect(),
        effects: op.effects.iter().map(|l| rename_literal(l, preds, &none)).collect(),
        ..op.clone()
    }
}

fn contradictory(effects: &BTreeSet<Literal>) -> Option<&Literal> {
    effects.iter().find(|l| l.positive && effects.contains(&l.negated()))
}

/// Second-domain name → canonical name.
pub type Renames = BTreeMap<String, String>;

/// Aligns `p2` onto `p1`. Returns the merged predicate table and the rename
/// map for second-domain names. `o2` is consulted so that no merge makes a
/// second-domain operator contradict itself.
pub fn merge_predicates(
    oracle: &Oracle,
    d1: &Domain,
    d2: &Domain,
    cfg: &FusionConfig,
    record: &mut MergeRecord,
) -> Result<(BTreeMap<String, PredicateSchema>, Renames), FusionError> {
    let mut merged = d1.predicates.clone();
    let mut renames: BTreeMap<String, String> = BTreeMap::new();
    let mut taken_left: BTreeSet<String> = BTreeSet::new();
    let mut open_right: Vec<&PredicateSchema> = Vec::new();
    for p in d2.predicates.values() {
        match d1.predicates.get(&p.name) {
            Some(q) if q.arity() == p.arity() => {
                renames.insert(p.name.clone(), p.name.clone());
                taken_left.insert(p.name.clone());
                record.predicate_merges.push(PairMerge {
                    kept: p.name.clone(),
                    absorbed: p.name.clone(),
                    similarity: None,
                });
            }
            _ => open_right.push(p),
        }
    }
    if cfg.equivalence == Equivalence::Llm {
        let oracle = oracle.stage("fuse/predicates");
        let key = |p: &PredicateSchema| (p.name.clone(), predicate_text(p), p.arity());
        let left: Vec<_> = d1.predicates.values().filter(|p| !taken_left.contains(&p.name)).map(key).collect();
        let right: Vec<_> = open_right.iter().map(|p| key(p)).collect();
        for (phi, a, b) in ranked_pairs(&oracle, &left, &right, cfg.tau_p)? {
            if taken_left.contains(&a) || renames.contains_key(&b) {
                continue;
            }
            record.verdicts_requested += 1;
            let yes = ask(&oracle, "predicate", &predicate_text(&d1.predicates[&a]), &predicate_text(&d2.predicates[&b]), cfg.r_parse)?;
            if !yes {
                continue;
            }
            let mut trial = renames.clone();
            trial.insert(b.clone(), a.clone());
            if let Some(op) = d2.operators.values().find(|o| contradictory(&rewrite(o, &trial).effects).is_some()) {
                record.rejected.push(Rejection {
                    first: a,
                    second: b,
                    reason: format!("operator `{}` would both add and delete the merged predicate", op.name),
                });
                continue;
            }
            renames = trial;
            taken_left.insert(a.clone());
            record.predicate_merges.push(PairMerge {
                kept: a,
                absorbed: b,
                similarity: Some(phi),
            });
        }
    }
    for p in open_right {
        if renames.contains_key(&p.name) {
            continue;
        }
        let name = if merged.contains_key(&p.name) || d2.predicates.contains_key(&p.name) && d1.predicates.contains_key(&p.name) {
            fresh_name(|c| merged.contains_key(c) || d2.predicates.contains_key(c), &p.name)
        } else {
            p.name.clone()
        };
        renames.insert(p.name.clone(), name.clone());
        merged.insert(name.clone(), PredicateSchema { name, ..p.clone() });
    }
    Ok((merged, renames))
}

/// Unifies `o2` into `o1`: positional parameters with equal types, union of
/// preconditions and of effects, `o1`'s names. `Err` explains a rejection.
pub fn unify_operators(o1: &OperatorSchema, o2: &OperatorSchema) -> Result<OperatorSchema, String> {
    if o1.arity() != o2.arity() {
        return Err(format!("arity {} vs {}", o1.arity(), o2.arity()));
    }
    if let Some((a, b)) = o1.params.iter().zip(&o2.params).find(|(a, b)| a.ty != b.ty) {
        return Err(format!("parameter ?{} is `{}` but ?{} is `{}`", a.name, a.ty, b.name, b.ty));
    }
    let vars: BTreeMap<String, String> = o2.params.iter().zip(&o1.params).map(|(b, a)| (b.name.clone(), a.name.clone())).collect();
    let none = BTreeMap::new();
    let mut out = o1.clone();
    out.preconditions.extend(o2.preconditions.iter().map(|l| rename_literal(l, &none, &vars)));
    out.effects.extend(o2.effects.iter().map(|l| rename_literal(l, &none, &vars)));
    if let Some(l) = contradictory(&out.effects) {
        return Err(format!("effects would contain both {l} and {}", l.negated()));
    }
    Ok(out)
}

/// Aligns operators of `o2` (already rewritten to canonical predicates)
/// onto `o1`.
pub fn merge_operators(
    oracle: &Oracle,
    o1: &BTreeMap<String, OperatorSchema>,
    o2: &BTreeMap<String, OperatorSchema>,
    cfg: &FusionConfig,
    record: &mut MergeRecord,
) -> Result<BTreeMap<String, OperatorSchema>, FusionError> {
    let mut merged = o1.clone();
    let mut absorbed: BTreeSet<String> = BTreeSet::new();
    let mut taken_left: BTreeSet<String> = BTreeSet::new();
    let accept = |a: &str, b: &str, phi: Option<f32>, merged: &mut BTreeMap<String, OperatorSchema>, record: &mut MergeRecord| -> bool {
        match unify_operators(&merged[a], &o2[b]) {
            Ok(u) => {
                merged.insert(a.to_string(), u);
                record.operator_renames.insert(b.to_string(), a.to_string());
                record.operator_merges.push(PairMerge {
                    kept: a.to_string(),
                    absorbed: b.to_string(),
                    similarity: phi,
                });
                true
            }
            Err(reason) => {
                record.rejected.push(Rejection {
                    first: a.to_string(),
                    second: b.to_string(),
                    reason,
                });
                false
            }
        }
    };
    for name in o2.keys() {
        if o1.contains_key(name) && accept(name, name, None, &mut merged, record) {
            absorbed.insert(name.clone());
            taken_left.insert(name.clone());
        }
    }
    if cfg.equivalence == Equivalence::Llm {
        let oracle = oracle.stage("fuse/operators");
        let key = |o: &OperatorSchema| (o.name.clone(), o.name.clone(), o.arity());
        let left: Vec<_> = o1.values().filter(|o| !taken_left.contains(&o.name) && !o2.contains_key(&o.name)).map(key).collect();
        let right: Vec<_> = o2.values().filter(|o| !absorbed.contains(&o.name) && !o1.contains_key(&o.name)).map(key).collect();
        for (phi, a, b) in ranked_pairs(&oracle, &left, &right, cfg.tau_o)? {
            if taken_left.contains(&a) || absorbed.contains(&b) {
                continue;
            }
            record.verdicts_requested += 1;
            if !ask(&oracle, "operator", &operator_text(&o1[&a]), &operator_text(&o2[&b]), cfg.r_parse)? {
                continue;
            }
            if accept(&a, &b, Some(phi), &mut merged, record) {
                taken_left.insert(a);
                absorbed.insert(b);
            }
        }
    }
    for (name, op) in o2 {
        if absorbed.contains(name) {
            continue;
        }
        let new = if merged.contains_key(name) {
            fresh_name(|c| merged.contains_key(c) || o2.contains_key(c), name)
        } else {
            name.clone()
        };
        record.operator_renames.insert(name.clone(), new.clone());
        merged.insert(new.clone(), OperatorSchema { name: new, ..op.clone() });
    }
    Ok(merged)
}

/// Merges `d2` into `d1`. The result is named after `d1` and must validate.
pub fn fuse(oracle: &Oracle, d1: &Domain, d2: &Domain, cfg: &FusionConfig) -> Result<(Domain, MergeRecord), FusionError> {
    let mut record = MergeRecord {
        left: d1.name.clone(),
        right: d2.name.clone(),
        ..MergeRecord::default()
    };
    let (predicates, renames) = merge_predicates(oracle, d1, d2, cfg, &mut record)?;
    record.predicate_renames = renames.clone();
    let o2: BTreeMap<String, OperatorSchema> = d2.operators.iter().map(|(n, o)| (n.clone(), rewrite(o, &renames))).collect();
    let operators = merge_operators(oracle, &d1.operators, &o2, cfg, &mut record)?;
    let mut types = d1.types.clone();
    for (t, p) in &d2.types {
        types.entry(t.clone()).or_insert_with(|| p.clone());
    }
    let dom = Domain {
        name: d1.name.clone(),
        types,
        predicates,
        operators,
    };
    let diagnostics: Vec<Diagnostic> = validate_domain(&dom).into_iter().filter(Diagnostic::is_error).collect();
    if !diagnostics.is_empty() {
        return Err(FusionError::ValidationFailed {
            domain: dom.name,
            diagnostics,
        });
    }
    Ok((dom, record))
}

/// Result of fusing a list of domains.
#[derive(Debug, Clone, PartialEq)]
pub struct Fusion {
    pub domain: Domain,
    pub log: MergeLog,
    /// Domains at every level above the leaves, in tree order.
    pub levels: Vec<Vec<Domain>>,
}

impl Fusion {
    /// Writes `fused.pddl`, `merge_log.json` and, if asked, every
    /// intermediate level under `levels/`.
    pub fn write(&self, dir: &Path, intermediates: bool) -> Result<(), FusionError> {
        let io = |e: std::io::Error| FusionError::Io(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        std::fs::write(dir.join("fused.pddl"), print_domain(&self.domain)).map_err(io)?;
        let log = serde_json::to_string_pretty(&self.log).expect("log serializes");
        std::fs::write(dir.join("merge_log.json"), log + "\n").map_err(io)?;
        if intermediates {
            for (l, doms) in self.levels.iter().enumerate() {
                let ldir = dir.join("levels").join(format!("level_{}", l + 1));
                std::fs::create_dir_all(&ldir).map_err(io)?;
                for (i, d) in doms.iter().enumerate() {
                    std::fs::write(ldir.join(format!("node_{i}.pddl")), print_domain(d)).map_err(io)?;
                }
            }
        }
        Ok(())
    }
}

/// A node during fusion: its domain plus, for each leaf under it, the
/// current names of that leaf's symbols.
struct Node {
    domain: Domain,
    leaves: Vec<(usize, LeafMap)>,
}

fn compose(map: &mut BTreeMap<String, String>, step: &BTreeMap<String, String>) {
    for v in map.values_mut() {
        if let Some(next) = step.get(v) {
            *v = next.clone();
        }
    }
}

/// Fuses `domains` bottom-up. Merges within a level run in parallel; a
/// level starts only after the previous one has finished.
pub fn fuse_all(oracle: &Oracle, domains: &[Domain], cfg: &FusionConfig) -> Result<Fusion, FusionError> {
    if domains.is_empty() {
        return Err(FusionError::Empty);
    }
    let mut nodes: Vec<Node> = domains
        .iter()
        .enumerate()
        .map(|(i, d)| Node {
            domain: d.clone(),
            leaves: vec![(
                i,
                LeafMap {
                    domain: d.name.clone(),
                    predicates: d.predicates.keys().map(|k| (k.clone(), k.clone())).collect(),
                    operators: d.operators.keys().map(|k| (k.clone(), k.clone())).collect(),
                },
            )],
        })
        .collect();
    let mut log = MergeLog::default();
    let mut levels = Vec::new();
    for (depth, shape) in build_fusion_tree(domains.len()).into_iter().enumerate() {
        let results: Vec<Result<(Domain, MergeRecord), FusionError>> = shape
            .merges
            .par_iter()
            .map(|&(a, b)| fuse(oracle, &nodes[a].domain, &nodes[b].domain, cfg))
            .collect();
        let mut old: Vec<Option<Node>> = nodes.into_iter().map(Some).collect();
        let mut next = Vec::new();
        let mut records = Vec::new();
        for (&(a, b), res) in shape.merges.iter().zip(results) {
            let (domain, mut record) = res?;
            record.level = depth + 1;
            let left = old[a].take().expect("each node merges once");
            let mut right = old[b].take().expect("each node merges once");
            for (_, leaf) in &mut right.leaves {
                compose(&mut leaf.predicates, &record.predicate_renames);
                compose(&mut leaf.operators, &record.operator_renames);
            }
            let mut leaves = left.leaves;
            leaves.extend(right.leaves);
            next.push(Node { domain, leaves });
            records.push(record);
        }
        if let Some(p) = shape.promoted {
            next.push(old[p].take().expect("promoted node"));
        }
        log.levels.push(records);
        levels.push(next.iter().map(|n| n.domain.clone()).collect());
        nodes = next;
    }
    let root = nodes.pop().expect("one root");
    let mut leaves = root.leaves;
    leaves.sort_by_key(|(i, _)| *i);
    log.leaves = leaves
        .into_iter()
        .map(|(_, mut m)| {
            m.predicates.retain(|k, v| k != v);
            m.operators.retain(|k, v| k != v);
            m
        })
        .collect();
    Ok(Fusion {
        domain: root.domain,
        log,
        levels,
    })
}
