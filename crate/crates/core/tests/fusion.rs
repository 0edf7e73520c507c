use std::collections::BTreeSet;
use std::sync::{Arc, Mutex};

use demoplan::fusion::*;
use demoplan::oracle::*;
use demoplan::pddl::*;
use proptest::prelude::*;

/// The symbol name at the start of a rendered schema.
fn head(s: &str) -> String {
    let s = s.trim().trim_start_matches("(:action ");
    s.chars().take_while(|c| c.is_alphanumeric() || *c == '_' || *c == '-').collect()
}

/// Pulls the two compared names out of an equivalence prompt.
fn compared(prompt: &str) -> (String, String) {
    let first = prompt.split("First:\n").nth(1).unwrap();
    let second = prompt.split("Second:\n").nth(1).unwrap();
    (head(first), head(second))
}

/// Answers YES exactly for the listed pairs and records every question.
fn judge(yes: &[(&str, &str)]) -> (Oracle, Arc<Mutex<Vec<(String, String)>>>) {
    let yes: BTreeSet<(String, String)> = yes.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
    let asked = Arc::new(Mutex::new(Vec::new()));
    let log = asked.clone();
    let cfg = OracleConfig {
        mode: OracleMode::Live,
        ..OracleConfig::default()
    };
    let oracle = Oracle::with_backend(
        &cfg,
        Box::new(ScriptedBackend(move |r: &ChatRequest| {
            let pair = compared(&r.last_user_text());
            let answer = if yes.contains(&pair) { "YES" } else { "NO" };
            log.lock().unwrap().push(pair);
            Ok(answer.to_string())
        })),
    )
    .unwrap();
    (oracle, asked)
}

fn mute() -> Oracle {
    judge(&[]).0
}

fn dom(text: &str) -> Domain {
    parse_domain(text).unwrap()
}

const TABLE: &str = "(define (domain table) (:predicates (on_table ?o) (hand_empty) (holding ?o))
  (:action pick_from_table :parameters (?o) :precondition (and (on_table ?o) (hand_empty))
   :effect (and (holding ?o) (not (on_table ?o)) (not (hand_empty)))))";

const TOWER: &str = "(define (domain tower) (:predicates (clear ?x) (hand_empty) (holding ?x))
  (:action pick_up :parameters (?x) :precondition (and (clear ?x) (hand_empty))
   :effect (and (holding ?x) (not (hand_empty)))))";

#[test]
fn fusing_a_domain_with_itself_changes_nothing() {
    let d = dom(TABLE);
    let (oracle, asked) = judge(&[]);
    let (fused, record) = fuse(&oracle, &d, &d, &FusionConfig::default()).unwrap();
    assert_eq!(fused, d);
    assert!(asked.lock().unwrap().is_empty());
    assert_eq!(record.predicate_merges.len(), 3);
    assert_eq!(record.operator_merges.len(), 1);
    assert_eq!(oracle.usage().n_chat, 0);
}

#[test]
fn disjoint_vocabularies_add_up() {
    let a = dom("(define (domain a) (:predicates (lit ?l)) (:action switch_on :parameters (?l) :precondition (not (lit ?l)) :effect (lit ?l)))");
    let b = dom("(define (domain b) (:predicates (open ?d)) (:action open_door :parameters (?d) :precondition (not (open ?d)) :effect (open ?d)))");
    let (fused, record) = fuse(&mute(), &a, &b, &FusionConfig::default()).unwrap();
    assert_eq!(fused.predicates.len(), 2);
    assert_eq!(fused.operators.len(), 2);
    assert_eq!(record.n_merges(), 0);
    assert!(validate_domain(&fused).iter().all(|d| !d.is_error()));
}

#[test]
fn confirmed_operators_take_the_union_of_conditions() {
    let (oracle, asked) = judge(&[("pick_from_table", "pick_up")]);
    let (fused, record) = fuse(&oracle, &dom(TABLE), &dom(TOWER), &FusionConfig::default()).unwrap();
    assert!(asked.lock().unwrap().contains(&("pick_from_table".into(), "pick_up".into())));
    assert_eq!(fused.operators.len(), 1);
    let op = &fused.operators["pick_from_table"];
    let pre: BTreeSet<String> = op.preconditions.iter().map(ToString::to_string).collect();
    let want: BTreeSet<String> = ["(on_table ?o)", "(clear ?o)", "(hand_empty)"].iter().map(|s| s.to_string()).collect();
    assert_eq!(pre, want);
    assert_eq!(op.effects.len(), 3);
    assert_eq!(record.operator_renames["pick_up"], "pick_from_table");
    assert_eq!(fused.predicates.len(), 4);
}

#[test]
fn declined_operators_stay_apart() {
    let (fused, record) = fuse(&mute(), &dom(TABLE), &dom(TOWER), &FusionConfig::default()).unwrap();
    assert_eq!(fused.operators.len(), 2);
    assert!(record.operator_merges.is_empty());
}

#[test]
fn confirmed_predicates_are_renamed_in_the_second_domain() {
    let a = dom("(define (domain a) (:predicates (holding ?o) (on_table ?o))
      (:action drop :parameters (?o) :precondition (holding ?o) :effect (and (on_table ?o) (not (holding ?o)))))");
    let b = dom("(define (domain b) (:predicates (grasped ?o) (in_bowl ?o))
      (:action put_in_bowl :parameters (?o) :precondition (grasped ?o) :effect (and (in_bowl ?o) (not (grasped ?o)))))");
    let cfg = FusionConfig {
        tau_p: 0.0,
        ..FusionConfig::default()
    };
    let (oracle, asked) = judge(&[("holding", "grasped")]);
    let (fused, record) = fuse(&oracle, &a, &b, &cfg).unwrap();
    assert!(asked.lock().unwrap().contains(&("holding".into(), "grasped".into())));
    assert!(!fused.predicates.contains_key("grasped"));
    assert_eq!(record.predicate_renames["grasped"], "holding");
    let put = &fused.operators["put_in_bowl"];
    assert!(put.preconditions.contains(&Literal::pos("holding", &["o"])));
    assert_eq!(fused.predicates.len(), 3);
}

#[test]
fn conflicting_effects_reject_the_merge() {
    let a = dom("(define (domain a) (:predicates (on_table ?o)) (:action place :parameters (?o) :effect (on_table ?o)))");
    let b = dom("(define (domain b) (:predicates (on_table ?o)) (:action place :parameters (?o) :effect (not (on_table ?o))))");
    let (fused, record) = fuse(&mute(), &a, &b, &FusionConfig::default()).unwrap();
    assert_eq!(record.rejected.len(), 1);
    assert!(record.rejected[0].reason.contains("both"));
    assert!(fused.operators.contains_key("place"));
    assert!(fused.operators.contains_key("place_2"));
    assert_eq!(record.operator_renames["place"], "place_2");
}

#[test]
fn predicate_merge_that_contradicts_an_operator_is_rejected() {
    let a = dom("(define (domain a) (:predicates (open ?d)) (:action open_it :parameters (?d) :effect (open ?d)))");
    let b = dom("(define (domain b) (:predicates (opened ?d) (shut ?d))
      (:action flip :parameters (?d) :effect (and (opened ?d) (not (shut ?d)))))");
    let cfg = FusionConfig {
        tau_p: 0.0,
        ..FusionConfig::default()
    };
    let (oracle, _) = judge(&[("open", "shut"), ("open", "opened")]);
    let (fused, record) = fuse(&oracle, &a, &b, &cfg).unwrap();
    // "opened" ranks first and merges; "shut" would then contradict `flip`.
    assert_eq!(record.predicate_renames["opened"], "open");
    assert!(fused.predicates.contains_key("shut"));
    assert!(validate_domain(&fused).iter().all(|d| !d.is_error()));
}

#[test]
fn same_name_different_arity_is_suffixed() {
    let a = dom("(define (domain a) (:predicates (at ?x)) (:action go :parameters (?x) :effect (at ?x)))");
    let b = dom("(define (domain b) (:predicates (at ?x ?y)) (:action put :parameters (?x ?y) :effect (at ?x ?y)))");
    let (fused, record) = fuse(&mute(), &a, &b, &FusionConfig::default()).unwrap();
    assert_eq!(record.predicate_renames["at"], "at_2");
    assert_eq!(fused.predicates["at_2"].arity(), 2);
    assert!(fused.operators["put"].effects.contains(&Literal::pos("at_2", &["x", "y"])));
}

#[test]
fn verdicts_only_for_pairs_above_threshold() {
    let a = dom("(define (domain a) (:predicates (holding ?o) (on_table ?o) (door_open ?d))
      (:action pick :parameters (?o) :precondition (on_table ?o) :effect (and (holding ?o) (not (on_table ?o))))
      (:action open_door :parameters (?d) :effect (door_open ?d)))");
    let b = dom("(define (domain b) (:predicates (grasped ?o) (on_counter ?o) (drawer_open ?d))
      (:action pick_up :parameters (?o) :precondition (on_counter ?o) :effect (and (grasped ?o) (not (on_counter ?o))))
      (:action open_drawer :parameters (?d) :effect (drawer_open ?d)))");
    let cfg = FusionConfig::default();
    let (oracle, asked) = judge(&[]);
    let (_, record) = fuse(&oracle, &a, &b, &cfg).unwrap();
    let asked = asked.lock().unwrap();
    assert_eq!(asked.len(), record.verdicts_requested);
    assert!(!asked.is_empty());
    let text = |d: &Domain, n: &str| match d.predicates.get(n) {
        Some(p) => (predicate_text(p), cfg.tau_p),
        None => (n.to_string(), cfg.tau_o),
    };
    for (x, y) in asked.iter() {
        let ((tx, tau), (ty, _)) = (text(&a, x), text(&b, y));
        let phi = cosine(&stub_embed(&tx), &stub_embed(&ty));
        assert!(phi >= tau, "{x} vs {y}: {phi}");
    }
}

#[test]
fn exact_name_mode_never_calls_the_model() {
    let cfg = FusionConfig {
        equivalence: Equivalence::ExactName,
        ..FusionConfig::default()
    };
    let oracle = mute();
    let f = fuse_all(&oracle, &[dom(TABLE), dom(TOWER)], &cfg).unwrap();
    assert_eq!(oracle.total_usage().n_calls, 0);
    assert_eq!(f.domain.operators.len(), 2);
    assert_eq!(f.domain.predicates.len(), 4);
}

#[test]
fn empty_input_is_an_error() {
    assert_eq!(fuse_all(&mute(), &[], &FusionConfig::default()), Err(FusionError::Empty));
}

#[test]
fn single_domain_passes_through() {
    let f = fuse_all(&mute(), &[dom(TABLE)], &FusionConfig::default()).unwrap();
    assert_eq!(f.domain, dom(TABLE));
    assert!(f.log.levels.is_empty());
    assert!(f.log.is_empty());
}

#[test]
fn writes_fused_domain_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let (oracle, _) = judge(&[("pick_from_table", "pick_up")]);
    let f = fuse_all(&oracle, &[dom(TABLE), dom(TOWER), dom(TABLE)], &FusionConfig::default()).unwrap();
    f.write(dir.path(), true).unwrap();
    let back = parse_domain(&std::fs::read_to_string(dir.path().join("fused.pddl")).unwrap()).unwrap();
    assert_eq!(back, f.domain);
    let log: MergeLog = serde_json::from_str(&std::fs::read_to_string(dir.path().join("merge_log.json")).unwrap()).unwrap();
    assert_eq!(log, f.log);
    assert!(dir.path().join("levels/level_2/node_0.pddl").exists());
    assert_eq!(f.log.leaves[1].operators["pick_up"], "pick_from_table");
}

/// A small domain over a shared pool of names so merges and collisions both occur.
fn arb_domain(tag: usize) -> impl Strategy<Value = Domain> {
    let preds = ["p", "q", "r", "s", "t"];
    let ops = ["a", "b", "c", "d"];
    (
        prop::collection::btree_map(0..preds.len(), 1..3usize, 1..4),
        prop::collection::vec((0..ops.len(), any::<bool>(), any::<bool>()), 1..4),
    )
        .prop_map(move |(ps, os)| {
            let mut d = Domain::new(format!("d{tag}"));
            for (&i, &arity) in &ps {
                let params = (0..arity).map(|k| Param::new(format!("v{k}"), "object")).collect();
                d.add_predicate(PredicateSchema::new(preds[i], params));
            }
            let names: Vec<(&str, usize)> = ps.iter().map(|(&i, &a)| (preds[i], a)).collect();
            for (n, (o, pos_pre, pos_eff)) in os.into_iter().enumerate() {
                let (p, ar) = names[n % names.len()];
                let (q, aq) = names[(n + 1) % names.len()];
                let vars: Vec<String> = (0..ar.max(aq)).map(|k| format!("x{k}")).collect();
                let params = vars.iter().map(|v| Param::new(v.clone(), "object")).collect();
                let v: Vec<&str> = vars.iter().map(String::as_str).collect();
                let pre = if pos_pre { Literal::pos(p, &v[..ar]) } else { Literal::neg(p, &v[..ar]) };
                let eff = if pos_eff { Literal::pos(q, &v[..aq]) } else { Literal::neg(q, &v[..aq]) };
                d.add_operator(OperatorSchema::new(ops[o], params).with_pre(pre).with_eff(eff));
            }
            d
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fusion_compresses_and_stays_valid(ds in prop::collection::vec((0..1usize).prop_flat_map(arb_domain), 1..6)) {
        let ds: Vec<Domain> = ds.into_iter().enumerate().map(|(i, mut d)| { d.name = format!("d{i}"); d }).collect();
        let cfg = FusionConfig { equivalence: Equivalence::ExactName, ..FusionConfig::default() };
        let f = fuse_all(&mute(), &ds, &cfg).unwrap();
        for level in &f.levels {
            for d in level {
                prop_assert!(validate_domain(d).iter().all(|x| !x.is_error()));
            }
        }
        let total_p: usize = ds.iter().map(|d| d.predicates.len()).sum();
        let total_o: usize = ds.iter().map(|d| d.operators.len()).sum();
        prop_assert!(f.domain.predicates.len() <= total_p);
        prop_assert!(f.domain.operators.len() <= total_o);
        let merged_p: usize = f.log.levels.iter().flatten().map(|r| r.predicate_merges.len()).sum();
        let merged_o: usize = f.log.levels.iter().flatten().map(|r| r.operator_merges.len()).sum();
        prop_assert_eq!(f.domain.predicates.len() + merged_p, total_p);
        prop_assert_eq!(f.domain.operators.len() + merged_o, total_o);
        // Every leaf symbol lands on a declared symbol of the root.
        prop_assert_eq!(f.log.leaves.len(), ds.len());
        for (d, leaf) in ds.iter().zip(&f.log.leaves) {
            for p in d.predicates.keys() {
                let name = leaf.predicates.get(p).unwrap_or(p);
                prop_assert!(f.domain.predicates.contains_key(name), "{} -> {}", p, name);
            }
            for o in d.operators.keys() {
                let name = leaf.operators.get(o).unwrap_or(o);
                prop_assert!(f.domain.operators.contains_key(name), "{} -> {}", o, name);
            }
        }
    }
}
