//! Step-by-step plan simulation on the lifted domain.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::PlannerError;
use crate::pddl::{Atom, Domain, GroundLiteral, Literal, Plan, Problem, Term};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Validation {
    Valid,
    /// First violated literal. A goal failure uses `step == plan.len()`.
    FailureAt { step: usize, unmet: GroundLiteral },
}

impl Validation {
    pub fn is_valid(&self) -> bool {
        matches!(self, Validation::Valid)
    }
}

fn ground(lit: &Literal, binding: &HashMap<&str, &str>) -> GroundLiteral {
    let args = lit
        .args
        .iter()
        .map(|t| match t {
            Term::Var(v) => binding.get(v.as_str()).copied().unwrap_or(v).to_string(),
            Term::Obj(o) => o.clone(),
        })
        .collect();
    GroundLiteral {
        atom: Atom {
            predicate: lit.predicate.clone(),
            args,
        },
        positive: lit.positive,
    }
}

/// Applies the plan to the initial state and reports the first violation.
pub fn validate_plan(dom: &Domain, prob: &Problem, plan: &Plan) -> Result<Validation, PlannerError> {
    let mut state: BTreeSet<Atom> = prob.init.clone();
    for (i, step) in plan.steps.iter().enumerate() {
        let op = dom
            .operators
            .get(&step.operator)
            .ok_or_else(|| PlannerError::UnknownOperator(step.operator.clone()))?;
        if op.arity() != step.args.len() {
            return Err(PlannerError::ArityMismatch {
                operator: op.name.clone(),
                expected: op.arity(),
                got: step.args.len(),
            });
        }
        for (arg, param) in step.args.iter().zip(&op.params) {
            let ty = prob
                .objects
                .get(arg)
                .ok_or_else(|| PlannerError::UnknownObject(arg.clone()))?;
            if !dom.is_subtype(ty, &param.ty) {
                return Err(PlannerError::TypeMismatch {
                    object: arg.clone(),
                    expected: param.ty.clone(),
                });
            }
        }
        let binding: HashMap<&str, &str> = op
            .params
            .iter()
            .zip(&step.args)
            .map(|(p, a)| (p.name.as_str(), a.as_str()))
            .collect();

        for lit in &op.preconditions {
            let g = ground(lit, &binding);
            if state.contains(&g.atom) != g.positive {
                return Ok(Validation::FailureAt { step: i, unmet: g });
            }
        }
        let effects: Vec<GroundLiteral> = op.effects.iter().map(|l| ground(l, &binding)).collect();
        for e in effects.iter().filter(|e| !e.positive) {
            state.remove(&e.atom);
        }
        for e in effects.into_iter().filter(|e| e.positive) {
            state.insert(e.atom);
        }
    }
    for g in &prob.goal {
        if state.contains(&g.atom) != g.positive {
            return Ok(Validation::FailureAt {
                step: plan.len(),
                unmet: g.clone(),
            });
        }
    }
    Ok(Validation::Valid)
}
