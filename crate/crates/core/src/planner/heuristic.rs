//! Delete-relaxation heuristics over a grounded task.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::ground::GroundedTask;
use super::state::State;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Heuristic {
    /// Always zero; turns A* into uniform-cost search.
    Blind,
    /// Max over precondition costs. Admissible.
    Max,
    /// Sum over precondition costs. Informative, not admissible.
    Add,
}

const INF: u64 = u64::MAX;

/// Precomputed indices for repeated relaxed-cost evaluation.
pub struct RelaxedCosts<'a> {
    task: &'a GroundedTask,
    by_pre: Vec<Vec<usize>>,
    no_pre: Vec<usize>,
}

impl<'a> RelaxedCosts<'a> {
    pub fn new(task: &'a GroundedTask) -> Self {
        let mut by_pre = vec![Vec::new(); task.n_atoms()];
        let mut no_pre = Vec::new();
        for (ai, a) in task.actions.iter().enumerate() {
            if a.pre.is_empty() {
                no_pre.push(ai);
            }
            for &p in &a.pre {
                by_pre[p].push(ai);
            }
        }
        Self {
            task,
            by_pre,
            no_pre,
        }
    }

    /// Estimated remaining cost from `state`, or `None` for a relaxed dead end.
    pub fn estimate(&self, state: &State, kind: Heuristic) -> Option<u64> {
        if kind == Heuristic::Blind {
            return Some(0);
        }
        let task = self.task;
        let goal = &task.goal_pos;
        if goal.iter().all(|&g| state.contains(g)) {
            return Some(0);
        }
        let combine = |acc: u64, c: u64| match kind {
            Heuristic::Max => acc.max(c),
            _ => acc + c,
        };

        let n = task.n_atoms();
        let mut cost = vec![INF; n];
        let mut missing: Vec<usize> = task.actions.iter().map(|a| a.pre.len()).collect();
        let mut acc = vec![0u64; task.actions.len()];
        let mut heap = BinaryHeap::new();

        for i in state.iter_ones() {
            if i < n {
                cost[i] = 0;
                heap.push(Reverse((0u64, i)));
            }
        }
        for &ai in &self.no_pre {
            for &q in &task.actions[ai].add {
                if 1 < cost[q] {
                    cost[q] = 1;
                    heap.push(Reverse((1, q)));
                }
            }
        }

        let mut goals_left = goal.iter().filter(|&&g| !state.contains(g)).count();
        let mut is_goal = vec![false; n];
        for &g in goal {
            is_goal[g] = true;
        }
        let mut settled = vec![false; n];

        while let Some(Reverse((c, p))) = heap.pop() {
            if settled[p] || c > cost[p] {
                continue;
            }
            settled[p] = true;
            if is_goal[p] && c > 0 {
                goals_left -= 1;
                if goals_left == 0 {
                    break;
                }
            }
            for &ai in &self.by_pre[p] {
                acc[ai] = combine(acc[ai], c);
                missing[ai] -= 1;
                if missing[ai] == 0 {
                    let ac = acc[ai] + 1;
                    for &q in &task.actions[ai].add {
                        if ac < cost[q] {
                            cost[q] = ac;
                            heap.push(Reverse((ac, q)));
                        }
                    }
                }
            }
        }

        let mut h = 0u64;
        for &g in goal {
            if cost[g] == INF {
                return None;
            }
            h = combine(h, cost[g]);
        }
        Some(h)
    }
}
