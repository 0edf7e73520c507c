use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::PlannerError;
use crate::pddl::{objects_by_type, Atom, Domain, Literal, OperatorSchema, Problem, Step, Term};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundLimit {
    /// Upper bound on enumerated (pre-pruning) ground actions.
    pub max_actions: usize,
    /// Drop atoms and actions outside the delete-relaxation reachable set.
    pub prune: bool,
}

impl Default for GroundLimit {
    fn default() -> Self {
        Self {
            max_actions: 200_000,
            prune: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundAction {
    pub step: Step,
    pub pre: Vec<usize>,
    pub pre_neg: Vec<usize>,
    pub add: Vec<usize>,
    pub del: Vec<usize>,
}

/// A propositional STRIPS task with atoms referenced by index.
#[derive(Debug, Clone)]
pub struct GroundedTask {
    pub atoms: Vec<Atom>,
    /// `reachable[i]` is false only for goal atoms the relaxed fixpoint never reaches.
    pub reachable: Vec<bool>,
    pub actions: Vec<GroundAction>,
    pub init: Vec<usize>,
    pub goal_pos: Vec<usize>,
    pub goal_neg: Vec<usize>,
    /// Ground actions enumerated before any pruning.
    pub enumerated: usize,
}

impl GroundedTask {
    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn atom_index(&self, atom: &Atom) -> Option<usize> {
        self.atoms.iter().position(|a| a == atom)
    }
}

#[derive(Default)]
struct Interner {
    atoms: Vec<Atom>,
    index: HashMap<Atom, usize>,
}

impl Interner {
    fn intern(&mut self, atom: Atom) -> usize {
        if let Some(&i) = self.index.get(&atom) {
            return i;
        }
        let i = self.atoms.len();
        self.index.insert(atom.clone(), i);
        self.atoms.push(atom);
        i
    }
}

fn instantiate(lit: &Literal, op: &OperatorSchema, binding: &[&str]) -> Atom {
    let args = lit
        .args
        .iter()
        .map(|t| match t {
            Term::Var(v) => op
                .params
                .iter()
                .position(|p| &p.name == v)
                .map(|i| binding[i].to_string())
                .unwrap_or_else(|| v.clone()),
            Term::Obj(o) => o.clone(),
        })
        .collect();
    Atom {
        predicate: lit.predicate.clone(),
        args,
    }
}

/// Instantiates every operator over type-respecting substitutions.
pub fn ground(dom: &Domain, prob: &Problem, limits: GroundLimit) -> Result<GroundedTask, PlannerError> {
    let by_type = objects_by_type(dom, prob);
    let empty = Vec::new();
    let candidates: Vec<Vec<&Vec<String>>> = dom
        .operators
        .values()
        .map(|op| {
            op.params
                .iter()
                .map(|p| by_type.get(&p.ty).unwrap_or(&empty))
                .collect()
        })
        .collect();

    let count: u128 = candidates
        .iter()
        .map(|c| c.iter().map(|v| v.len() as u128).product::<u128>())
        .sum();
    if count > limits.max_actions as u128 {
        return Err(PlannerError::GroundingExplosion {
            count,
            limit: limits.max_actions,
        });
    }

    let mut interner = Interner::default();
    let init: Vec<usize> = prob.init.iter().map(|a| interner.intern(a.clone())).collect();
    let mut actions = Vec::with_capacity(count as usize);

    for (op, cands) in dom.operators.values().zip(&candidates) {
        if cands.iter().any(|c| c.is_empty()) {
            continue;
        }
        let mut odometer = vec![0usize; cands.len()];
        loop {
            let binding: Vec<&str> = odometer
                .iter()
                .zip(cands)
                .map(|(&i, c)| c[i].as_str())
                .collect();
            let mut intern_all = |pos: bool, lits: &std::collections::BTreeSet<Literal>| {
                let mut v: Vec<usize> = lits
                    .iter()
                    .filter(|l| l.positive == pos)
                    .map(|l| interner.intern(instantiate(l, op, &binding)))
                    .collect();
                v.sort_unstable();
                v.dedup();
                v
            };
            let pre = intern_all(true, &op.preconditions);
            let pre_neg = intern_all(false, &op.preconditions);
            let add = intern_all(true, &op.effects);
            let mut del = intern_all(false, &op.effects);
            // Delete-then-add semantics: an atom both added and deleted stays true.
            del.retain(|d| add.binary_search(d).is_err());
            actions.push(GroundAction {
                step: Step {
                    operator: op.name.clone(),
                    args: binding.iter().map(|s| s.to_string()).collect(),
                },
                pre,
                pre_neg,
                add,
                del,
            });

            // Advance the odometer; the last parameter varies fastest.
            let mut exhausted = true;
            for k in (0..cands.len()).rev() {
                odometer[k] += 1;
                if odometer[k] < cands[k].len() {
                    exhausted = false;
                    break;
                }
                odometer[k] = 0;
            }
            if exhausted {
                break;
            }
        }
    }
    let enumerated = actions.len();

    // An action requiring an atom both true and false never applies.
    actions.retain(|a| a.pre.iter().all(|p| a.pre_neg.binary_search(p).is_err()));

    let goal_pos_raw: Vec<usize> = prob
        .goal
        .iter()
        .filter(|g| g.positive)
        .map(|g| interner.intern(g.atom.clone()))
        .collect();
    let goal_neg_raw: Vec<usize> = prob
        .goal
        .iter()
        .filter(|g| !g.positive)
        .map(|g| interner.intern(g.atom.clone()))
        .collect();

    let n = interner.atoms.len();
    let (keep_atom, keep_action) = if limits.prune {
        relaxed_fixpoint(n, &init, &actions)
    } else {
        (vec![true; n], vec![true; actions.len()])
    };

    // Renumber: reachable atoms, plus goal atoms so an unreachable goal stays visible.
    let mut remap = vec![usize::MAX; n];
    let mut atoms = Vec::new();
    let mut reachable = Vec::new();
    for i in 0..n {
        if keep_atom[i] || goal_pos_raw.contains(&i) {
            remap[i] = atoms.len();
            atoms.push(interner.atoms[i].clone());
            reachable.push(keep_atom[i]);
        }
    }
    let map = |v: &[usize]| -> Vec<usize> {
        v.iter().filter(|&&i| remap[i] != usize::MAX).map(|&i| remap[i]).collect()
    };

    let actions = actions
        .into_iter()
        .zip(keep_action)
        .filter(|(_, keep)| *keep)
        .map(|(a, _)| GroundAction {
            pre: map(&a.pre),
            // A negated atom that can never become true is always satisfied.
            pre_neg: map(&a.pre_neg),
            add: map(&a.add),
            del: map(&a.del),
            step: a.step,
        })
        .collect();

    Ok(GroundedTask {
        init: map(&init),
        goal_pos: map(&goal_pos_raw),
        goal_neg: map(&goal_neg_raw),
        atoms,
        reachable,
        actions,
        enumerated,
    })
}

/// Delete-relaxed reachability from the initial atoms. Negative
/// preconditions are ignored, which over-approximates and keeps pruning sound.
fn relaxed_fixpoint(n_atoms: usize, init: &[usize], actions: &[GroundAction]) -> (Vec<bool>, Vec<bool>) {
    let mut reached = vec![false; n_atoms];
    let mut fired = vec![false; actions.len()];
    let mut missing: Vec<usize> = actions.iter().map(|a| a.pre.len()).collect();
    let mut waiting: Vec<Vec<usize>> = vec![Vec::new(); n_atoms];
    for (ai, a) in actions.iter().enumerate() {
        for &p in &a.pre {
            waiting[p].push(ai);
        }
    }
    let mut queue: Vec<usize> = Vec::new();
    for &i in init {
        if !reached[i] {
            reached[i] = true;
            queue.push(i);
        }
    }
    let mut ready: Vec<usize> = (0..actions.len()).filter(|&a| missing[a] == 0).collect();
    loop {
        while let Some(ai) = ready.pop() {
            if fired[ai] {
                continue;
            }
            fired[ai] = true;
            for &q in &actions[ai].add {
                if !reached[q] {
                    reached[q] = true;
                    queue.push(q);
                }
            }
        }
        let Some(p) = queue.pop() else { break };
        for &ai in &waiting[p] {
            missing[ai] -= 1;
            if missing[ai] == 0 {
                ready.push(ai);
            }
        }
    }
    (reached, fired)
}
