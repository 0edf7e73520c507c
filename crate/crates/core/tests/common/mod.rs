//! Test-only oracles. Nothing here calls into the planner; the search and
//! simulation below work directly on the lifted PDDL values.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::path::PathBuf;

use demoplan::pddl::{
    parse_domain, parse_problem, Atom, Domain, GroundLiteral, Plan, Problem, Step, Term,
};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn read_fixture(rel: &str) -> String {
    std::fs::read_to_string(fixtures().join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn blocksworld() -> Domain {
    parse_domain(&read_fixture("pddl/blocksworld/domain.pddl")).unwrap()
}

pub fn problem(dom: &Domain, rel: &str) -> Problem {
    parse_problem(&read_fixture(rel), dom).unwrap()
}

type OracleState = BTreeSet<Atom>;

fn subtype<'a>(dom: &'a Domain, mut ty: &'a str, target: &str) -> bool {
    if target == "object" {
        return true;
    }
    for _ in 0..=dom.types.len() {
        if ty == target {
            return true;
        }
        match dom.types.get(ty) {
            Some(p) => ty = p,
            None => return false,
        }
    }
    false
}

/// Every type-respecting ground step, by brute-force recursion.
pub fn all_steps(dom: &Domain, prob: &Problem) -> Vec<Step> {
    let mut out = Vec::new();
    for op in dom.operators.values() {
        let mut partial: Vec<Vec<String>> = vec![vec![]];
        for p in &op.params {
            let objs: Vec<&String> = prob
                .objects
                .iter()
                .filter(|(_, t)| subtype(dom, t, &p.ty))
                .map(|(o, _)| o)
                .collect();
            partial = partial
                .into_iter()
                .flat_map(|prefix| {
                    objs.iter().map(move |o| {
                        let mut v = prefix.clone();
                        v.push((*o).clone());
                        v
                    })
                })
                .collect();
        }
        for args in partial {
            out.push(Step {
                operator: op.name.clone(),
                args,
            });
        }
    }
    out
}

fn bind(dom: &Domain, step: &Step) -> Option<(Vec<GroundLiteral>, Vec<GroundLiteral>)> {
    let op = dom.operators.get(&step.operator)?;
    if op.params.len() != step.args.len() {
        return None;
    }
    let env: HashMap<&str, &str> = op
        .params
        .iter()
        .zip(&step.args)
        .map(|(p, a)| (p.name.as_str(), a.as_str()))
        .collect();
    let g = |l: &demoplan::pddl::Literal| GroundLiteral {
        atom: Atom {
            predicate: l.predicate.clone(),
            args: l
                .args
                .iter()
                .map(|t| match t {
                    Term::Var(v) => env[v.as_str()].to_string(),
                    Term::Obj(o) => o.clone(),
                })
                .collect(),
        },
        positive: l.positive,
    };
    Some((
        op.preconditions.iter().map(g).collect(),
        op.effects.iter().map(g).collect(),
    ))
}

/// Applies `step` if its preconditions hold (delete-then-add).
pub fn apply(dom: &Domain, state: &OracleState, step: &Step) -> Option<OracleState> {
    let (pre, eff) = bind(dom, step)?;
    if !pre.iter().all(|l| state.contains(&l.atom) == l.positive) {
        return None;
    }
    let mut next = state.clone();
    for l in eff.iter().filter(|l| !l.positive) {
        next.remove(&l.atom);
    }
    for l in eff.iter().filter(|l| l.positive) {
        next.insert(l.atom.clone());
    }
    Some(next)
}

pub fn goal_holds(prob: &Problem, state: &OracleState) -> bool {
    prob.goal.iter().all(|g| state.contains(&g.atom) == g.positive)
}

/// True iff the plan executes and reaches the goal.
pub fn simulate(dom: &Domain, prob: &Problem, plan: &Plan) -> bool {
    let mut state = prob.init.clone();
    for step in &plan.steps {
        match apply(dom, &state, step) {
            Some(next) => state = next,
            None => return false,
        }
    }
    goal_holds(prob, &state)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Bfs {
    Shortest(usize),
    Unsolvable,
}

/// Breadth-first search over the full state space.
pub fn bfs(dom: &Domain, prob: &Problem) -> Bfs {
    bfs_with_states(dom, prob).0
}

/// BFS outcome plus every reachable state with its exact goal distance
/// (`None` when the goal is unreachable from it).
pub fn bfs_with_states(dom: &Domain, prob: &Problem) -> (Bfs, Vec<OracleState>) {
    let steps = all_steps(dom, prob);
    let start = prob.init.clone();
    let mut seen: HashMap<OracleState, usize> = HashMap::from([(start.clone(), 0)]);
    let mut order = vec![start.clone()];
    let mut queue = VecDeque::from([start]);
    let mut found = None;
    while let Some(s) = queue.pop_front() {
        let d = seen[&s];
        if found.is_none() && goal_holds(prob, &s) {
            found = Some(d);
        }
        for st in &steps {
            if let Some(n) = apply(dom, &s, st) {
                if !seen.contains_key(&n) {
                    seen.insert(n.clone(), d + 1);
                    order.push(n.clone());
                    queue.push_back(n);
                }
            }
        }
    }
    let outcome = found.map_or(Bfs::Unsolvable, Bfs::Shortest);
    (outcome, order)
}

/// Exact goal distance from `state` by BFS.
pub fn distance_from(dom: &Domain, prob: &Problem, state: &OracleState) -> Option<usize> {
    let mut p = prob.clone();
    p.init = state.clone();
    match bfs(dom, &p) {
        Bfs::Shortest(d) => Some(d),
        Bfs::Unsolvable => None,
    }
}

/// A random blocksworld problem: random towers to random towers.
pub fn random_blocksworld(rng: &mut impl Rng, n: usize, name: &str) -> Problem {
    let blocks: Vec<String> = (0..n).map(|i| format!("b{i}")).collect();
    let towers = |rng: &mut dyn rand::RngCore| -> Vec<Vec<String>> {
        let mut order = blocks.clone();
        order.shuffle(rng);
        let mut towers: Vec<Vec<String>> = Vec::new();
        for b in order {
            if towers.is_empty() || rng.gen_bool(0.4) {
                towers.push(vec![b]);
            } else {
                let i = rng.gen_range(0..towers.len());
                towers[i].push(b);
            }
        }
        towers
    };
    let mut init = BTreeSet::new();
    init.insert(Atom::new("handempty", &[]));
    for t in towers(rng) {
        init.insert(Atom::new("ontable", &[&t[0]]));
        init.insert(Atom::new("clear", &[t.last().unwrap()]));
        for w in t.windows(2) {
            init.insert(Atom::new("on", &[&w[1], &w[0]]));
        }
    }
    let mut goal = BTreeSet::new();
    for t in towers(rng) {
        for w in t.windows(2) {
            goal.insert(GroundLiteral::pos(Atom::new("on", &[&w[1], &w[0]])));
        }
        if rng.gen_bool(0.3) {
            goal.insert(GroundLiteral::pos(Atom::new("ontable", &[&t[0]])));
        }
    }
    if goal.is_empty() {
        goal.insert(GroundLiteral::pos(Atom::new("clear", &[&blocks[0]])));
    }
    Problem {
        name: name.to_string(),
        domain: "blocksworld".to_string(),
        objects: blocks.iter().map(|b| (b.clone(), "block".to_string())).collect(),
        init,
        goal,
    }
}

/// Ground steps whose positive preconditions are reachable under delete
/// relaxation, by naive fixpoint iteration.
pub fn relaxed_reachable_steps(dom: &Domain, prob: &Problem) -> BTreeSet<Step> {
    let steps = all_steps(dom, prob);
    let mut reached: BTreeSet<Atom> = prob.init.clone();
    let mut fired = BTreeSet::new();
    loop {
        let mut changed = false;
        for st in &steps {
            if fired.contains(st) {
                continue;
            }
            let (pre, eff) = bind(dom, st).unwrap();
            if pre.iter().filter(|l| l.positive).all(|l| reached.contains(&l.atom)) {
                // Contradictory preconditions can never hold together.
                if pre.iter().any(|l| !l.positive && pre.contains(&GroundLiteral::pos(l.atom.clone()))) {
                    continue;
                }
                fired.insert(st.clone());
                for e in eff.into_iter().filter(|e| e.positive) {
                    reached.insert(e.atom);
                }
                changed = true;
            }
        }
        if !changed {
            return fired;
        }
    }
}
