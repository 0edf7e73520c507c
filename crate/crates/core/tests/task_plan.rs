use std::collections::BTreeSet;
use std::path::Path;
use std::sync::{Arc, Mutex};

use demoplan::oracle::*;
use demoplan::pddl::*;
use demoplan::planner::{Limits, Mode, Outcome, SearchLimit};
use demoplan::task_plan::*;
use proptest::prelude::*;

const MINI: &str = "(define (domain mini)
  (:types item)
  (:predicates (in_pot ?o - item) (covered) (holding ?o - item) (hand_empty) (in_bowl ?o - item)
    (drawer_open) (in_drawer ?o - item) (lamp_on))
  (:action remove_lid :parameters () :precondition (and (covered) (hand_empty)) :effect (not (covered)))
  (:action pick_from_pot :parameters (?o - item) :precondition (and (in_pot ?o) (not (covered)) (hand_empty))
    :effect (and (holding ?o) (not (in_pot ?o)) (not (hand_empty))))
  (:action put_in_bowl :parameters (?o - item) :precondition (holding ?o)
    :effect (and (in_bowl ?o) (hand_empty) (not (holding ?o))))
  (:action open_drawer :parameters () :precondition (and (not (drawer_open)) (hand_empty)) :effect (drawer_open))
  (:action pick_from_drawer :parameters (?o - item) :precondition (and (drawer_open) (in_drawer ?o) (hand_empty))
    :effect (and (holding ?o) (not (in_drawer ?o)) (not (hand_empty))))
  (:action switch_lamp :parameters () :precondition (not (lamp_on)) :effect (lamp_on)))";

const CORN: &str = "(define (problem corn) (:domain mini) (:objects corn - item)
  (:init (in_pot corn) (covered) (hand_empty)) (:goal (in_bowl corn)))";

fn mini() -> Domain {
    parse_domain(MINI).unwrap()
}

fn task(dir: &Path) -> TaskSpec {
    let image = dir.join("scene.png");
    std::fs::write(&image, b"\x89PNG\r\n\x1a\nscene").unwrap();
    TaskSpec {
        id: "corn".into(),
        instruction: "put the corn from the pot into the bowl".into(),
        image,
        gt_problem: None,
        domain: None,
    }
}

type Reply = Arc<dyn Fn(&ChatRequest) -> String + Send + Sync>;

/// Replies by prompt kind; every prompt is logged.
fn scripted(groups: &str, initial: &str, refined: &str) -> (Oracle, Arc<Mutex<Vec<ChatRequest>>>) {
    let (g, i, r) = (groups.to_string(), initial.to_string(), refined.to_string());
    let reply: Reply = Arc::new(move |req: &ChatRequest| {
        let first = req.messages.iter().find(|m| m.role == Role::User).unwrap();
        let text = first.content.iter().find_map(|p| match p {
            Part::Text { text } => Some(text.clone()),
            _ => None,
        });
        let text = text.unwrap();
        if text.starts_with("Sort every predicate") {
            g.clone()
        } else if text.contains("task-specific domain below") {
            r.clone()
        } else if text.contains("Write a PDDL problem for this instruction using the domain") {
            i.clone()
        } else {
            panic!("unexpected prompt: {text}")
        }
    });
    let log = Arc::new(Mutex::new(Vec::new()));
    let seen = log.clone();
    let cfg = OracleConfig {
        mode: OracleMode::Live,
        ..OracleConfig::default()
    };
    let oracle = Oracle::with_backend(
        &cfg,
        Box::new(ScriptedBackend(move |req: &ChatRequest| {
            seen.lock().unwrap().push(req.clone());
            Ok(reply(req))
        })),
    )
    .unwrap();
    (oracle, log)
}

/// The brute-force reduced operator set: scan every literal of every operator.
fn brute_force(dom: &Domain, p0: &BTreeSet<String>) -> (BTreeSet<String>, BTreeSet<String>) {
    let mut pre = BTreeSet::new();
    let mut eff = BTreeSet::new();
    for op in dom.operators.values() {
        if op.preconditions.iter().any(|l| p0.contains(&l.predicate)) {
            pre.insert(op.name.clone());
        }
        if op.effects.iter().any(|l| p0.contains(&l.predicate)) {
            eff.insert(op.name.clone());
        }
    }
    (pre, eff)
}

fn names(v: &[&str]) -> BTreeSet<String> {
    v.iter().map(|s| s.to_string()).collect()
}

#[test]
fn holding_touches_three_operators() {
    let dom = mini();
    let prob = parse_problem(
        "(define (problem h) (:domain mini) (:objects corn - item) (:init (holding corn)) (:goal (holding corn)))",
        &dom,
    )
    .unwrap();
    let f = filter_domain(&dom, &prob).unwrap();
    assert_eq!(f.p0, names(&["holding"]));
    assert_eq!(f.o_reduced, names(&["pick_from_drawer", "pick_from_pot", "put_in_bowl"]));
    let (pre, eff) = brute_force(&dom, &f.p0);
    assert_eq!((f.o_pre.clone(), f.o_eff.clone()), (pre, eff));
    // Closure: the compact domain keeps what its operators mention.
    assert!(f.compact.predicates.contains_key("drawer_open"));
    assert!(!f.compact.predicates.contains_key("lamp_on"));
    assert!(validate_domain(&f.compact).iter().all(|d| !d.is_error()));
}

#[test]
fn every_predicate_keeps_every_operator() {
    let dom = mini();
    let prob = parse_problem(
        "(define (problem all) (:domain mini) (:objects c - item)
          (:init (in_pot c) (covered) (holding c) (hand_empty) (in_bowl c) (drawer_open) (in_drawer c) (lamp_on))
          (:goal (in_bowl c)))",
        &dom,
    )
    .unwrap();
    let f = filter_domain(&dom, &prob).unwrap();
    assert_eq!(f.o_reduced.len(), dom.operators.len());
    assert_eq!(f.compact, dom);
}

#[test]
fn goal_predicates_count_toward_p0() {
    let dom = mini();
    let prob = parse_problem(
        "(define (problem l) (:domain mini) (:objects) (:init (covered)) (:goal (lamp_on)))",
        &dom,
    )
    .unwrap();
    let f = filter_domain(&dom, &prob).unwrap();
    assert_eq!(f.p0, names(&["covered", "lamp_on"]));
    assert_eq!(f.o_reduced, names(&["pick_from_pot", "remove_lid", "switch_lamp"]));
}

#[test]
fn grouping_is_repaired_into_a_partition() {
    let dom = mini();
    let reply = r#"Here you go: {"object": ["in_pot"], "state": ["covered", "lamp_on", "covered"],
        "spatial": ["in_bowl", "in_drawer", "(holding ?o)"], "affordance": ["teleport"]}"#;
    let (oracle, _) = scripted(reply, "", "");
    let (g, warnings) = group_predicates(&oracle, &dom, 1).unwrap();
    assert_eq!(oracle.usage().n_chat, 1);
    let all: Vec<&String> = g.groups().iter().flat_map(|(_, v)| v.iter()).collect();
    let set: BTreeSet<&String> = all.iter().copied().collect();
    assert_eq!(all.len(), set.len());
    assert_eq!(set.len(), dom.predicates.len());
    assert!(g.spatial.contains(&"holding".to_string()));
    // hand_empty and drawer_open were omitted.
    assert!(g.state.contains(&"hand_empty".to_string()) && g.state.contains(&"drawer_open".to_string()));
    assert_eq!(warnings.len(), 4, "{warnings:?}");
}

#[test]
fn empty_domain_groups_without_a_call() {
    let (oracle, _) = scripted("", "", "");
    let (g, w) = group_predicates(&oracle, &Domain::new("empty"), 1).unwrap();
    assert!(g.is_empty() && w.is_empty());
    assert_eq!(oracle.usage().n_calls, 0);
}

#[test]
fn missing_groups_default_to_empty() {
    let dom = mini();
    let (oracle, _) = scripted(r#"{"object": []}"#, "", "");
    let (g, _) = group_predicates(&oracle, &dom, 0).unwrap();
    assert_eq!(g.state.len(), dom.predicates.len());
}

#[test]
fn initial_problem_is_repaired_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let calls = Arc::new(Mutex::new(0usize));
    let n = calls.clone();
    let cfg = OracleConfig {
        mode: OracleMode::Live,
        ..OracleConfig::default()
    };
    let oracle = Oracle::with_backend(
        &cfg,
        Box::new(ScriptedBackend(move |_: &ChatRequest| {
            let mut n = n.lock().unwrap();
            *n += 1;
            Ok(match *n {
                1 => "(define (problem corn) (:domain mini) (:objects corn - item) (:init (in_pot corn) (steaming corn)) (:goal (in_bowl corn)))".to_string(),
                2 => "(define (problem corn) (:domain mini) (:objects corn - item) (:init (in_pot corn)) (:goal (and)))".to_string(),
                _ => CORN.to_string(),
            })
        })),
    )
    .unwrap();
    let t = task(dir.path());
    let p = gen_initial_problem(&oracle, &mini(), None, &t, 3).unwrap();
    assert!(p.goal.iter().any(|l| l.atom == Atom::new("in_bowl", &["corn"])));
    let log = oracle.calls();
    assert_eq!(log.len(), 3);
    assert!(log.iter().all(|c| c.stage == "initial_problem"));
}

#[test]
fn undeclared_predicate_reaches_the_repair_prompt() {
    let dir = tempfile::tempdir().unwrap();
    let bad = "(define (problem corn) (:domain mini) (:objects corn - item) (:init (steaming corn)) (:goal (in_bowl corn)))";
    let (oracle, log) = scripted("", bad, "");
    let err = gen_initial_problem(&oracle, &mini(), None, &task(dir.path()), 1).unwrap_err();
    assert_eq!(err.stage(), Some("initial_problem"));
    let log = log.lock().unwrap();
    assert_eq!(log.len(), 2);
    assert!(log[1].last_user_text().contains("steaming"));
    assert_eq!(log[0].n_images(), 1);
}

#[test]
fn refined_problem_must_fit_the_full_domain() {
    let dir = tempfile::tempdir().unwrap();
    let dom = mini();
    let f = filter_domain(&dom, &parse_problem(CORN, &dom).unwrap()).unwrap();
    let (oracle, _) = scripted("", "", CORN);
    let p = gen_refined_problem(&oracle, &f.compact, &dom, &task(dir.path()), 0).unwrap();
    assert_eq!(p, parse_problem(CORN, &dom).unwrap());
    // A predicate the filter removed is still declared in the full domain but not the compact one.
    let lamp = "(define (problem corn) (:domain mini) (:objects) (:init (lamp_on)) (:goal (lamp_on)))";
    let (oracle, _) = scripted("", "", lamp);
    assert!(gen_refined_problem(&oracle, &f.compact, &dom, &task(dir.path()), 0).is_err());
}

#[test]
fn pipeline_solves_with_the_full_domain() {
    let dir = tempfile::tempdir().unwrap();
    let dom = mini();
    let groups = r#"{"object": [], "state": ["covered", "hand_empty", "lamp_on", "drawer_open"],
        "spatial": ["in_pot", "in_bowl", "in_drawer"], "affordance": ["holding"]}"#;
    let (oracle, log) = scripted(groups, CORN, CORN);
    let (g, w) = group_predicates(&oracle, &dom, 0).unwrap();
    assert!(w.is_empty());
    let trace = plan_task(&oracle, &dom, Some(&g), &task(dir.path()), &PlanConfig::default()).unwrap();
    let plan = trace.plan().unwrap();
    let steps: Vec<String> = plan.steps.iter().map(|s| s.to_string()).collect();
    assert_eq!(steps, ["(remove_lid)", "(pick_from_pot corn)", "(put_in_bowl corn)"]);
    assert_eq!(trace.mode, Mode::Optimal);
    assert!(!trace.fallback);
    let stages: Vec<&str> = trace.calls.iter().map(|c| c.stage.as_str()).collect();
    assert_eq!(stages, ["initial_problem", "refined_problem"]);
    assert_eq!(trace.usage.n_chat, 2);
    assert!(log.lock().unwrap()[1].last_user_text().contains("spatial:"));
    assert!(trace.filter.as_ref().unwrap().o_reduced.len() < dom.operators.len());
    // Apart from live call latencies, traces carry no wall-clock time.
    let again = plan_task(&oracle, &dom, Some(&g), &task(dir.path()), &PlanConfig::default()).unwrap();
    let timeless = |mut t: Trace| {
        t.usage.thinking_time = 0.0;
        t.calls.iter_mut().for_each(|c| c.latency_s = 0.0);
        serde_json::to_string(&t).unwrap()
    };
    assert_eq!(timeless(trace), timeless(again));
}

#[test]
fn goal_already_true_gives_an_empty_plan() {
    let dir = tempfile::tempdir().unwrap();
    let done = "(define (problem corn) (:domain mini) (:objects corn - item) (:init (in_bowl corn)) (:goal (in_bowl corn)))";
    let (oracle, _) = scripted("", done, done);
    let trace = plan_task(&oracle, &mini(), None, &task(dir.path()), &PlanConfig::default()).unwrap();
    assert_eq!(trace.plan().unwrap().steps.len(), 0);
}

#[test]
fn without_filtering_there_is_one_generation_pass() {
    let dir = tempfile::tempdir().unwrap();
    let (oracle, log) = scripted("", CORN, "");
    let cfg = PlanConfig {
        ablation: PlanAblation {
            no_grouping: true,
            no_filtering: true,
        },
        ..PlanConfig::default()
    };
    let g = PredicateGroups::default();
    let trace = plan_task(&oracle, &mini(), Some(&g), &task(dir.path()), &cfg).unwrap();
    assert_eq!(trace.usage.n_chat, 1);
    assert!(trace.filter.is_none() && trace.refined_problem.is_none());
    assert_eq!(trace.plan().unwrap().steps.len(), 3);
    // Grouping ablated: the flat listing is used even though groups were passed.
    assert!(!log.lock().unwrap()[0].last_user_text().contains("spatial:"));
}

#[test]
fn exhausted_optimal_search_falls_back() {
    let dir = tempfile::tempdir().unwrap();
    let (oracle, _) = scripted("", CORN, CORN);
    let cfg = PlanConfig {
        limits: Limits {
            search: SearchLimit {
                max_expansions: 4,
                ..SearchLimit::default()
            },
            ..Limits::default()
        },
        ..PlanConfig::default()
    };
    let trace = plan_task(&oracle, &mini(), None, &task(dir.path()), &cfg).unwrap();
    assert!(trace.fallback);
    assert_eq!(trace.mode, Mode::Satisficing);
    assert!(matches!(trace.outcome, Outcome::Solved(_)));
}

#[test]
fn task_files_resolve_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("suite.json"),
        r#"[{"id": "a", "instruction": "do it", "image": "img/a.png", "gt_problem": "gt/a.pddl"}]"#,
    )
    .unwrap();
    let suite = TaskSpec::load_suite(&dir.path().join("suite.json")).unwrap();
    assert_eq!(suite[0].image, dir.path().join("img/a.png"));
    assert_eq!(suite[0].gt_problem.as_deref(), Some(dir.path().join("gt/a.pddl").as_path()));
    std::fs::write(dir.path().join("t.json"), r#"{"id": "b", "instruction": " ", "image": "x.png"}"#).unwrap();
    assert!(matches!(TaskSpec::load(&dir.path().join("t.json")), Err(TaskError::Spec(_))));
}

/// Random domain: operators over a pool of predicates with random polarity.
fn arb_domain() -> impl Strategy<Value = Domain> {
    (1..15usize, 1..20usize)
        .prop_flat_map(|(np, no)| {
            let lit = (0..np, any::<bool>());
            (
                Just(np),
                prop::collection::vec((prop::collection::vec(lit.clone(), 0..4), prop::collection::vec(lit, 1..4)), no),
            )
        })
        .prop_map(|(np, ops)| {
            let mut d = Domain::new("rand");
            for i in 0..np {
                d.add_predicate(PredicateSchema::new(format!("p{i}"), vec![]));
            }
            for (k, (pre, eff)) in ops.into_iter().enumerate() {
                let mut op = OperatorSchema::new(format!("o{k}"), vec![]);
                for (i, pos) in pre {
                    op = op.with_pre(if pos { Literal::pos(format!("p{i}"), &[]) } else { Literal::neg(format!("p{i}"), &[]) });
                }
                let mut seen = BTreeSet::new();
                for (i, pos) in eff {
                    if seen.insert(i) {
                        op = op.with_eff(if pos { Literal::pos(format!("p{i}"), &[]) } else { Literal::neg(format!("p{i}"), &[]) });
                    }
                }
                d.add_operator(op);
            }
            d
        })
}

proptest! {
    #[test]
    fn filter_matches_brute_force(dom in arb_domain(), init in prop::collection::btree_set(0..15usize, 0..4), goal in 0..15usize) {
        let np = dom.predicates.len();
        let prob = Problem {
            name: "p".into(),
            domain: dom.name.clone(),
            objects: Default::default(),
            init: init.iter().filter(|&&i| i < np).map(|i| Atom::new(format!("p{i}"), &[])).collect(),
            goal: [GroundLiteral::pos(Atom::new(format!("p{}", goal % np), &[]))].into(),
        };
        let f = filter_domain(&dom, &prob).unwrap();
        let (pre, eff) = brute_force(&dom, &f.p0);
        prop_assert_eq!(&f.o_pre, &pre);
        prop_assert_eq!(&f.o_eff, &eff);
        let union: BTreeSet<String> = pre.union(&eff).cloned().collect();
        prop_assert_eq!(&f.o_reduced, &union);
        prop_assert!(f.o_reduced.iter().all(|o| dom.operators.contains_key(o)));
    }
}

/// 78 predicates, one operator per predicate.
fn wide_domain() -> (Domain, Vec<String>) {
    let names: Vec<String> = (0..78).map(|i| format!("p{i:02}")).collect();
    let mut text = String::from("(define (domain wide) (:types thing) (:predicates");
    for n in &names {
        text += &format!(" ({n} ?x - thing)");
    }
    text += ")";
    for n in &names {
        text += &format!(" (:action set_{n} :parameters (?x - thing) :precondition (not ({n} ?x)) :effect ({n} ?x))");
    }
    (parse_domain(&(text + ")")).unwrap(), names)
}

#[test]
fn wide_domain_partition_round_trips() {
    let (dom, names) = wide_domain();
    let keys = ["object", "spatial", "state", "affordance"];
    let mut parts: Vec<Vec<&str>> = vec![Vec::new(); 4];
    for (i, n) in names.iter().enumerate() {
        parts[i % 4].push(n);
    }
    let reply = serde_json::to_string(&keys.iter().zip(&parts).collect::<std::collections::BTreeMap<_, _>>()).unwrap();
    let (oracle, _) = scripted(&reply, "", "");
    let (g, warnings) = group_predicates(&oracle, &dom, 0).unwrap();
    assert!(warnings.is_empty(), "{warnings:?}");
    assert_eq!(g.len(), 78);
    for (key, part) in keys.iter().zip(&parts) {
        let (_, got) = g.groups().into_iter().find(|(k, _)| k == key).unwrap();
        let got: BTreeSet<&str> = got.iter().map(String::as_str).collect();
        assert_eq!(got, part.iter().copied().collect::<BTreeSet<_>>(), "{key}");
    }
    let listing = g.render(&dom);
    assert!(names.iter().all(|n| listing.contains(&format!("({n} "))));
}
