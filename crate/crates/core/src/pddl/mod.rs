//! The PDDL subset used throughout the crate: STRIPS with typing and
//! negative preconditions, unit action costs, conjunctive goals.
//!
//! Identifiers are lowercased on input. Untyped parameters and objects
//! default to `object`.

mod parse;
mod print;
mod sexpr;
mod types;
mod validate;

use thiserror::Error;

pub use parse::{
    extract_all_defines, extract_define, parse_domain, parse_problem, parse_problem_as, read_domain,
    read_problem,
    Parsed,
};
pub use print::{print_domain, print_problem};
pub use sexpr::Pos;
pub use types::{
    Atom, Domain, GroundLiteral, Literal, OperatorSchema, Param, Plan, PredicateSchema, Problem,
    Step, Term, OBJECT,
};
pub use validate::{
    objects_by_type, validate_domain, validate_problem, Diagnostic, Issue, Location, Severity,
    SourceMap,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PddlError {
    #[error("{line}:{col}: syntax error: expected {expected}")]
    Syntax {
        line: usize,
        col: usize,
        expected: String,
    },
    #[error("unsupported feature `{0}`")]
    UnsupportedFeature(String),
    #[error("`{predicate}` takes {expected} argument(s), got {got}")]
    Arity {
        predicate: String,
        expected: usize,
        got: usize,
    },
    #[error("undeclared symbol `{0}`")]
    UndeclaredSymbol(String),
    #[error("problem is declared for domain `{0}`")]
    DomainMismatch(String),
    #[error("{}", render_all(.0))]
    Invalid(Vec<Diagnostic>),
}

fn render_all(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl PddlError {
    /// Diagnostics suitable for feeding back to a model in a repair prompt.
    pub fn feedback(&self) -> String {
        match self {
            PddlError::Invalid(diags) => diags
                .iter()
                .map(|d| format!("- {d}"))
                .collect::<Vec<_>>()
                .join("\n"),
            other => format!("- error: {other}"),
        }
    }
}
