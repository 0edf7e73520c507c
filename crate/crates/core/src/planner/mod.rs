//! Grounding, heuristic search and plan validation.
//!
//! Optimal mode runs A* with h_max and returns shortest plans (unit costs).
//! Satisficing mode runs greedy best-first search with h_add.

mod ground;
mod heuristic;
mod plan_text;
mod search;
mod simulate;
mod state;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pddl::{Domain, Plan, Problem};

pub use ground::{ground, GroundAction, GroundLimit, GroundedTask};
pub use heuristic::{Heuristic, RelaxedCosts};
pub use plan_text::parse_plan;
pub use search::{astar, gbfs};
pub use simulate::{validate_plan, Validation};
pub use state::State;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlannerError {
    #[error("grounding would enumerate {count} actions (limit {limit})")]
    GroundingExplosion { count: u128, limit: usize },
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),
    #[error("`{operator}` takes {expected} argument(s), got {got}")]
    ArityMismatch {
        operator: String,
        expected: usize,
        got: usize,
    },
    #[error("unknown object `{0}`")]
    UnknownObject(String),
    #[error("object `{object}` is not of type `{expected}`")]
    TypeMismatch { object: String, expected: String },
    #[error("line {line}: cannot read plan step `{text}`")]
    PlanSyntax { line: usize, text: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Optimal,
    Satisficing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchLimit {
    pub max_expansions: u64,
    #[serde(with = "secs")]
    pub time_limit: Duration,
}

impl Default for SearchLimit {
    fn default() -> Self {
        Self {
            max_expansions: 1_000_000,
            time_limit: Duration::from_secs(60),
        }
    }
}

mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_secs_f64(f64::deserialize(d)?))
    }
}

/// Grounding and search budgets together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Limits {
    pub ground: GroundLimit,
    pub search: SearchLimit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "plan", rename_all = "snake_case")]
pub enum Outcome {
    Solved(Plan),
    Unsolvable,
    ResourceLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub outcome: Outcome,
    pub expanded: u64,
    /// Wall-clock seconds.
    pub elapsed: f64,
}

impl SolveResult {
    pub fn plan(&self) -> Option<&Plan> {
        match &self.outcome {
            Outcome::Solved(p) => Some(p),
            _ => None,
        }
    }
}

pub fn solve(task: &GroundedTask, mode: Mode, limits: SearchLimit) -> SolveResult {
    match mode {
        Mode::Optimal => astar(task, Heuristic::Max, limits),
        Mode::Satisficing => gbfs(task, Heuristic::Add, limits),
    }
}

/// Grounds and solves in one call.
pub fn plan(
    dom: &Domain,
    prob: &Problem,
    mode: Mode,
    ground_limit: GroundLimit,
    limits: SearchLimit,
) -> Result<SolveResult, PlannerError> {
    let task = ground(dom, prob, ground_limit)?;
    Ok(solve(&task, mode, limits))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimalCost {
    Cost(u32),
    Unsolvable,
    /// The search budget ran out before optimality could be certified.
    Unknown,
}

impl OptimalCost {
    pub fn known(self) -> Option<u32> {
        match self {
            OptimalCost::Cost(c) => Some(c),
            _ => None,
        }
    }
}

pub fn optimal_cost(
    dom: &Domain,
    prob: &Problem,
    ground_limit: GroundLimit,
    limits: SearchLimit,
) -> Result<OptimalCost, PlannerError> {
    let result = plan(dom, prob, Mode::Optimal, ground_limit, limits)?;
    Ok(match result.outcome {
        Outcome::Solved(p) => OptimalCost::Cost(p.cost()),
        Outcome::Unsolvable => OptimalCost::Unsolvable,
        Outcome::ResourceLimit => OptimalCost::Unknown,
    })
}
