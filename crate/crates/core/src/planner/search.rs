use std::cmp::Reverse;
use std::collections::hash_map::Entry;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::time::Instant;

use super::ground::{GroundAction, GroundedTask};
use super::heuristic::{Heuristic, RelaxedCosts};
use super::state::State;
use super::{Outcome, SearchLimit, SolveResult};
use crate::pddl::Plan;

struct Node {
    state: State,
    parent: Option<usize>,
    action: usize,
    g: u32,
}

fn applicable(a: &GroundAction, s: &State) -> bool {
    a.pre.iter().all(|&p| s.contains(p)) && a.pre_neg.iter().all(|&p| !s.contains(p))
}

fn successor(a: &GroundAction, s: &State) -> State {
    let mut next = s.clone();
    for &d in &a.del {
        next.remove(d);
    }
    for &q in &a.add {
        next.insert(q);
    }
    next
}

pub(crate) fn is_goal(task: &GroundedTask, s: &State) -> bool {
    task.goal_pos.iter().all(|&g| s.contains(g)) && task.goal_neg.iter().all(|&g| !s.contains(g))
}

fn extract_plan(task: &GroundedTask, nodes: &[Node], mut i: usize) -> Plan {
    let mut steps = Vec::new();
    while let Some(parent) = nodes[i].parent {
        steps.push(task.actions[nodes[i].action].step.clone());
        i = parent;
    }
    steps.reverse();
    Plan::new(steps)
}

struct Budget {
    start: Instant,
    limits: SearchLimit,
}

impl Budget {
    fn exhausted(&self, expanded: u64) -> bool {
        expanded >= self.limits.max_expansions
            || (expanded.is_multiple_of(256) && self.start.elapsed() >= self.limits.time_limit)
    }

    fn result(&self, outcome: Outcome, expanded: u64) -> SolveResult {
        SolveResult {
            outcome,
            expanded,
            elapsed: self.start.elapsed().as_secs_f64(),
        }
    }
}

/// A* ordered by f, then lower g, then insertion order.
pub fn astar(task: &GroundedTask, heuristic: Heuristic, limits: SearchLimit) -> SolveResult {
    let budget = Budget {
        start: Instant::now(),
        limits,
    };
    let h = RelaxedCosts::new(task);
    let init = State::from_indices(task.n_atoms(), &task.init);
    let mut expanded = 0u64;
    let Some(h0) = h.estimate(&init, heuristic) else {
        return budget.result(Outcome::Unsolvable, 0);
    };

    let mut nodes = vec![Node {
        state: init.clone(),
        parent: None,
        action: usize::MAX,
        g: 0,
    }];
    let mut best_g: HashMap<State, u32> = HashMap::from([(init, 0)]);
    let mut open = BinaryHeap::new();
    let mut seq = 0u64;
    open.push(Reverse((h0, 0u32, seq, 0usize)));

    while let Some(Reverse((_, g, _, ni))) = open.pop() {
        if best_g.get(&nodes[ni].state).is_some_and(|&b| b < g) {
            continue;
        }
        if is_goal(task, &nodes[ni].state) {
            let plan = extract_plan(task, &nodes, ni);
            return budget.result(Outcome::Solved(plan), expanded);
        }
        if budget.exhausted(expanded) {
            return budget.result(Outcome::ResourceLimit, expanded);
        }
        expanded += 1;
        for (ai, a) in task.actions.iter().enumerate() {
            if !applicable(a, &nodes[ni].state) {
                continue;
            }
            let next = successor(a, &nodes[ni].state);
            let ng = g + 1;
            match best_g.entry(next.clone()) {
                Entry::Occupied(mut e) => {
                    if *e.get() <= ng {
                        continue;
                    }
                    e.insert(ng);
                }
                Entry::Vacant(e) => {
                    e.insert(ng);
                }
            }
            let Some(hv) = h.estimate(&next, heuristic) else {
                continue;
            };
            nodes.push(Node {
                state: next,
                parent: Some(ni),
                action: ai,
                g: ng,
            });
            seq += 1;
            open.push(Reverse((ng as u64 + hv, ng, seq, nodes.len() - 1)));
        }
    }
    budget.result(Outcome::Unsolvable, expanded)
}

/// Greedy best-first search on `heuristic` with eager duplicate detection.
pub fn gbfs(task: &GroundedTask, heuristic: Heuristic, limits: SearchLimit) -> SolveResult {
    let budget = Budget {
        start: Instant::now(),
        limits,
    };
    let h = RelaxedCosts::new(task);
    let init = State::from_indices(task.n_atoms(), &task.init);
    let Some(h0) = h.estimate(&init, heuristic) else {
        return budget.result(Outcome::Unsolvable, 0);
    };
    if is_goal(task, &init) {
        return budget.result(Outcome::Solved(Plan::default()), 0);
    }

    let mut nodes = vec![Node {
        state: init.clone(),
        parent: None,
        action: usize::MAX,
        g: 0,
    }];
    let mut seen: HashSet<State> = HashSet::from([init]);
    let mut open = BinaryHeap::new();
    let mut seq = 0u64;
    open.push(Reverse((h0, seq, 0usize)));
    let mut expanded = 0u64;

    while let Some(Reverse((_, _, ni))) = open.pop() {
        if budget.exhausted(expanded) {
            return budget.result(Outcome::ResourceLimit, expanded);
        }
        expanded += 1;
        for (ai, a) in task.actions.iter().enumerate() {
            if !applicable(a, &nodes[ni].state) {
                continue;
            }
            let next = successor(a, &nodes[ni].state);
            if !seen.insert(next.clone()) {
                continue;
            }
            let goal = is_goal(task, &next);
            let hv = match h.estimate(&next, heuristic) {
                Some(v) => v,
                None if goal => 0,
                None => continue,
            };
            nodes.push(Node {
                state: next,
                parent: Some(ni),
                action: ai,
                g: nodes[ni].g + 1,
            });
            if goal {
                let plan = extract_plan(task, &nodes, nodes.len() - 1);
                return budget.result(Outcome::Solved(plan), expanded);
            }
            seq += 1;
            open.push(Reverse((hv, seq, nodes.len() - 1)));
        }
    }
    budget.result(Outcome::Unsolvable, expanded)
}
