use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::sexpr::Pos;
use super::types::{Domain, Literal, Param, Problem, Term, OBJECT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

/// Logical position of a diagnostic inside a domain or problem.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Location {
    Domain,
    Type(String),
    Predicate(String),
    Operator(String),
    Problem,
    Object(String),
    Init,
    Goal,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Domain => f.write_str("domain"),
            Location::Type(t) => write!(f, "type `{t}`"),
            Location::Predicate(p) => write!(f, "predicate `{p}`"),
            Location::Operator(o) => write!(f, "operator `{o}`"),
            Location::Problem => f.write_str("problem"),
            Location::Object(o) => write!(f, "object `{o}`"),
            Location::Init => f.write_str(":init"),
            Location::Goal => f.write_str(":goal"),
        }
    }
}

/// Maps logical locations back to source positions for `file:line:col` output.
pub type SourceMap = BTreeMap<Location, Pos>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Issue {
    Arity {
        predicate: String,
        expected: usize,
        got: usize,
    },
    Undeclared(String),
    UnboundVariable(String),
    DuplicateVariable(String),
    DuplicateName(String),
    ContradictoryEffects(String),
    EmptyEffects,
    EmptyGoal,
    BadName(String),
    NameMismatch(String),
    TypeCycle(String),
    TypeMismatch {
        object: String,
        expected: String,
        got: String,
    },
    DomainMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub location: Location,
    pub issue: Issue,
    pub message: String,
}

impl Diagnostic {
    pub fn error(location: Location, issue: Issue) -> Self {
        let message = describe(&location, &issue);
        Self {
            severity: Severity::Error,
            location,
            issue,
            message,
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }

    /// `file:line:col: severity: message`. Unknown positions render as `1:1`.
    pub fn render(&self, file: &str, sources: &SourceMap) -> String {
        let pos = sources
            .get(&self.location)
            .copied()
            .unwrap_or(Pos { line: 1, col: 1 });
        format!(
            "{file}:{}:{}: {}: {}",
            pos.line, pos.col, self.severity, self.message
        )
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.severity, self.message)
    }
}

fn describe(loc: &Location, issue: &Issue) -> String {
    let what = match issue {
        Issue::Arity {
            predicate,
            expected,
            got,
        } => format!("`{predicate}` takes {expected} argument(s), got {got}"),
        Issue::Undeclared(s) => format!("undeclared symbol `{s}`"),
        Issue::UnboundVariable(v) => format!("variable `?{v}` is not a parameter"),
        Issue::DuplicateVariable(v) => format!("variable `?{v}` declared twice"),
        Issue::DuplicateName(n) => format!("`{n}` declared twice"),
        Issue::ContradictoryEffects(p) => format!("effects both add and delete {p}"),
        Issue::EmptyEffects => "operator has no effects".to_string(),
        Issue::EmptyGoal => "goal is empty".to_string(),
        Issue::BadName(n) => format!("`{n}` is not a lowercase identifier"),
        Issue::NameMismatch(n) => format!("declared under key `{n}` but named differently"),
        Issue::TypeCycle(t) => format!("type hierarchy cycles through `{t}`"),
        Issue::TypeMismatch {
            object,
            expected,
            got,
        } => format!("`{object}` has type `{got}`, expected `{expected}`"),
        Issue::DomainMismatch(d) => format!("problem refers to domain `{d}`"),
    };
    format!("{loc}: {what}")
}

fn check_name(name: &str, loc: &Location, out: &mut Vec<Diagnostic>) {
    if name.is_empty() || name != name.to_lowercase() || name.chars().any(char::is_whitespace) {
        out.push(Diagnostic::error(loc.clone(), Issue::BadName(name.to_string())));
    }
}

fn check_params(dom: &Domain, params: &[Param], loc: &Location, out: &mut Vec<Diagnostic>) {
    let mut seen = BTreeSet::new();
    for p in params {
        if !seen.insert(p.name.as_str()) {
            out.push(Diagnostic::error(
                loc.clone(),
                Issue::DuplicateVariable(p.name.clone()),
            ));
        }
        if !dom.has_type(&p.ty) {
            out.push(Diagnostic::error(loc.clone(), Issue::Undeclared(p.ty.clone())));
        }
    }
}

fn check_literal(
    dom: &Domain,
    params: &[Param],
    lit: &Literal,
    loc: &Location,
    out: &mut Vec<Diagnostic>,
) {
    match dom.predicates.get(&lit.predicate) {
        None => out.push(Diagnostic::error(
            loc.clone(),
            Issue::Undeclared(lit.predicate.clone()),
        )),
        Some(schema) if schema.arity() != lit.args.len() => out.push(Diagnostic::error(
            loc.clone(),
            Issue::Arity {
                predicate: lit.predicate.clone(),
                expected: schema.arity(),
                got: lit.args.len(),
            },
        )),
        Some(_) => {}
    }
    for arg in &lit.args {
        match arg {
            Term::Var(v) if !params.iter().any(|p| &p.name == v) => out.push(
                Diagnostic::error(loc.clone(), Issue::UnboundVariable(v.clone())),
            ),
            Term::Obj(o) => out.push(Diagnostic::error(loc.clone(), Issue::Undeclared(o.clone()))),
            Term::Var(_) => {}
        }
    }
}

/// Checks every structural invariant of a domain. Empty result means valid.
pub fn validate_domain(dom: &Domain) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    check_name(&dom.name, &Location::Domain, &mut out);

    for (ty, parent) in &dom.types {
        let loc = Location::Type(ty.clone());
        check_name(ty, &loc, &mut out);
        if !dom.has_type(parent) {
            out.push(Diagnostic::error(loc.clone(), Issue::Undeclared(parent.clone())));
        }
        // Walk up; returning to `ty` means a cycle.
        let mut cur = parent.as_str();
        for _ in 0..=dom.types.len() {
            if cur == ty {
                out.push(Diagnostic::error(loc.clone(), Issue::TypeCycle(ty.clone())));
                break;
            }
            match dom.types.get(cur) {
                Some(p) => cur = p,
                None => break,
            }
        }
    }

    for (key, pred) in &dom.predicates {
        let loc = Location::Predicate(key.clone());
        if key != &pred.name {
            out.push(Diagnostic::error(loc.clone(), Issue::NameMismatch(key.clone())));
        }
        check_name(&pred.name, &loc, &mut out);
        check_params(dom, &pred.params, &loc, &mut out);
    }

    for (key, op) in &dom.operators {
        let loc = Location::Operator(key.clone());
        if key != &op.name {
            out.push(Diagnostic::error(loc.clone(), Issue::NameMismatch(key.clone())));
        }
        check_name(&op.name, &loc, &mut out);
        check_params(dom, &op.params, &loc, &mut out);
        for lit in op.preconditions.iter().chain(&op.effects) {
            check_literal(dom, &op.params, lit, &loc, &mut out);
        }
        if op.effects.is_empty() {
            out.push(Diagnostic::error(loc.clone(), Issue::EmptyEffects));
        }
        for lit in op.effects.iter().filter(|l| l.positive) {
            if op.effects.contains(&lit.negated()) {
                out.push(Diagnostic::error(
                    loc.clone(),
                    Issue::ContradictoryEffects(lit.to_string()),
                ));
            }
        }
    }
    out
}

/// Checks that a problem is well-typed against `dom`.
pub fn validate_problem(dom: &Domain, prob: &Problem) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if prob.domain != dom.name {
        out.push(Diagnostic::error(
            Location::Problem,
            Issue::DomainMismatch(prob.domain.clone()),
        ));
    }
    check_name(&prob.name, &Location::Problem, &mut out);
    for (obj, ty) in &prob.objects {
        let loc = Location::Object(obj.clone());
        check_name(obj, &loc, &mut out);
        if !dom.has_type(ty) {
            out.push(Diagnostic::error(loc, Issue::Undeclared(ty.clone())));
        }
    }

    let check_atom = |pred: &str, args: &[String], loc: Location, out: &mut Vec<Diagnostic>| {
        let Some(schema) = dom.predicates.get(pred) else {
            out.push(Diagnostic::error(loc, Issue::Undeclared(pred.to_string())));
            return;
        };
        if schema.arity() != args.len() {
            out.push(Diagnostic::error(
                loc.clone(),
                Issue::Arity {
                    predicate: pred.to_string(),
                    expected: schema.arity(),
                    got: args.len(),
                },
            ));
        }
        for (arg, param) in args.iter().zip(&schema.params) {
            match prob.objects.get(arg) {
                None => out.push(Diagnostic::error(loc.clone(), Issue::Undeclared(arg.clone()))),
                Some(ty) if !dom.is_subtype(ty, &param.ty) => out.push(Diagnostic::error(
                    loc.clone(),
                    Issue::TypeMismatch {
                        object: arg.clone(),
                        expected: param.ty.clone(),
                        got: ty.clone(),
                    },
                )),
                Some(_) => {}
            }
        }
    };

    for atom in &prob.init {
        check_atom(&atom.predicate, &atom.args, Location::Init, &mut out);
    }
    for lit in &prob.goal {
        check_atom(&lit.atom.predicate, &lit.atom.args, Location::Goal, &mut out);
    }
    if prob.goal.is_empty() {
        out.push(Diagnostic::error(Location::Goal, Issue::EmptyGoal));
    }
    out
}

/// Object names of a problem grouped by every type they belong to (including ancestors).
pub fn objects_by_type(dom: &Domain, prob: &Problem) -> BTreeMap<String, Vec<String>> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let all_types = dom
        .types
        .keys()
        .cloned()
        .chain(std::iter::once(OBJECT.to_string()));
    for ty in all_types {
        let members = prob
            .objects
            .iter()
            .filter(|(_, t)| dom.is_subtype(t, &ty))
            .map(|(o, _)| o.clone())
            .collect();
        out.insert(ty, members);
    }
    out
}
