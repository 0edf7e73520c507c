//! Regenerates the kitchen and demo fixtures from the hand-written
//! meta-domain and the ground-truth problems under `fixtures/kitchen/tasks`.
//!
//!     cargo run -p demoplan --example author_fixtures
//!
//! Every oracle reply is scripted here and recorded into replay transcripts;
//! the checks at the end of each step are what the acceptance suite relies
//! on, so a fixture that fails them is never written silently.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use demoplan::eval::{run_suite, SuiteConfig};
use demoplan::fusion::{fuse_all, predicate_text, FusionConfig};
use demoplan::learn::{learn_atomic_domain, DemoManifest, LearnConfig};
use demoplan::oracle::{cosine, stub_embed, ChatRequest, Oracle, OracleConfig, OracleError, OracleMode, Record, ScriptedBackend, Transcript};
use demoplan::pddl::{parse_domain, parse_problem, print_domain, print_problem, Domain, Literal, OperatorSchema, Problem};
use demoplan::planner::{optimal_cost, Limits, OptimalCost};
use demoplan::task_plan::{group_predicates, PlanAblation, PlanConfig, TaskSpec};
use image::{GrayImage, Luma, Rgb, RgbImage};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

/// Demonstrations the atomic domains stand for: id, operators.
const DEMOS: [(&str, &[&str]); 40] = [
    ("uncover_pot", &["remove_lid", "pick_from_pot", "put_in_pot"]),
    ("cover_pot", &["pick_from_table", "cover_pot"]),
    ("rack_to_table", &["pick_from_rack", "place_on_table"]),
    ("rack_plate", &["pick_from_rack", "place_on_rack"]),
    ("corn_to_bowl", &["pick_from_pot", "put_in_bowl"]),
    ("bowl_to_pot", &["pick_from_bowl", "put_in_pot"]),
    ("plate_food", &["pick_from_bowl", "put_on_plate", "slice_food"]),
    ("slice_on_plate", &["put_on_plate", "slice_food"]),
    ("stir_soup", &["pick_from_table", "stir_bowl", "put_down"]),
    ("spoon_to_cup", &["pick_from_table", "put_in_cup"]),
    ("dry_bowl", &["pick_from_table", "wipe_bowl", "put_down"]),
    ("wash_cup", &["put_in_sink", "turn_on_tap", "wash_vessel"]),
    ("finish_washing", &["wash_vessel", "turn_off_tap", "pick_from_sink"]),
    ("empty_cup", &["pick_from_sink", "pour_out", "place_on_rack"]),
    ("fetch_from_drawer", &["open_drawer", "pick_from_drawer", "place_in_drawer"]),
    ("store_in_drawer", &["open_drawer", "place_in_drawer", "close_drawer"]),
    ("wipe_with_towel", &["pick_from_drawer", "wipe_table", "place_in_drawer"]),
    ("take_and_close", &["open_drawer", "pick_from_drawer", "close_drawer"]),
    ("fold_towel", &["pick_from_table", "put_down", "fold_cloth"]),
    ("bin_tissue", &["pick_from_table", "scrunch_tissue", "put_in_basket"]),
    ("unpack_basket", &["pick_from_basket", "put_down"]),
    ("pack_basket", &["pick_from_table", "put_in_basket"]),
    ("stack_blocks", &["pick_from_table", "stack"]),
    ("unstack_blocks", &["unstack", "put_down"]),
    ("push_block", &["push_block", "pick_from_table"]),
    ("rebuild_tower", &["unstack", "stack"]),
    ("restack_books", &["take_book_off", "put_book_on"]),
    ("shelve_book", &["take_book_off", "put_down"]),
    ("pile_books", &["pick_from_table", "put_book_on"]),
    ("lamp_on", &["switch_on_lamp", "pick_from_table"]),
    ("lamp_off", &["switch_off_lamp", "put_down"]),
    ("toggle_lamp", &["switch_on_lamp", "switch_off_lamp"]),
    ("wipe_desk", &["pick_from_table", "wipe_table", "put_down"]),
    ("tidy_desk", &["pick_from_table", "put_in_basket", "wipe_table"]),
    ("move_object", &["pick_from_table", "put_down"]),
    ("bin_object", &["pick_from_table", "put_in_basket"]),
    ("dishes_away", &["place_on_rack", "pick_from_rack", "put_in_sink"]),
    ("serve_from_pot", &["pick_from_pot", "put_on_plate"]),
    ("set_table", &["pick_from_rack", "place_on_table", "put_down"]),
    ("drawer_away", &["pick_from_table", "open_drawer", "place_in_drawer"]),
];

/// Names a leaf learned differently from its left neighbour, which uses
/// the canonical name: (leaf, canonical, alias).
const PRED_ALIASES: [(usize, &str, &str); 2] = [(17, "in_drawer", "inside_drawer"), (35, "holding", "robot_holding")];
const OP_ALIASES: [(usize, &str, &str); 2] = [(3, "pick_from_rack", "pick_up_from_rack"), (15, "place_in_drawer", "put_in_drawer")];

/// Static facts the scene does not show; the first-pass problem misses them.
const AFFORDANCES: [&str; 3] = ["openable", "edible", "foldable"];

struct TaskDef {
    id: &'static str,
    category: &'static str,
    instruction: &'static str,
    /// Objects left out of the first-pass problem besides the unused ones.
    unseen: &'static [&'static str],
}

const TASKS: [TaskDef; 14] = [
    TaskDef {
        id: "a1",
        category: "kitchen",
        instruction: "Move the corn from the pot to the bowl, then wipe the table with the towel from the yellow drawer and put the towel back.",
        unseen: &["drawer_green"],
    },
    TaskDef { id: "k2", category: "kitchen", instruction: "Take the bowl off the rack and set it on the table.", unseen: &[] },
    TaskDef { id: "k3", category: "kitchen", instruction: "Wash the cup.", unseen: &["plate"] },
    TaskDef { id: "k4", category: "kitchen", instruction: "Serve the carrot from the pot on a plate and slice it.", unseen: &[] },
    TaskDef { id: "k5", category: "kitchen", instruction: "Stir the bowl with the spoon, then leave the spoon in the cup.", unseen: &[] },
    TaskDef { id: "d1", category: "desktop", instruction: "Turn on the desk lamp.", unseen: &["notebook"] },
    TaskDef { id: "d2", category: "desktop", instruction: "Scrunch up the tissue and throw it in the basket.", unseen: &["pen"] },
    TaskDef { id: "d3", category: "desktop", instruction: "Put the red book on top of the blue book.", unseen: &[] },
    TaskDef { id: "d4", category: "desktop", instruction: "Fold the towel and put the pen away in the drawer.", unseen: &[] },
    TaskDef { id: "b1", category: "blockworld", instruction: "Stack the red block on the blue block.", unseen: &[] },
    TaskDef { id: "b2", category: "blockworld", instruction: "Swap the two blocks so that b ends up on a.", unseen: &[] },
    TaskDef { id: "b3", category: "blockworld", instruction: "Build a tower with c on top of b on top of a.", unseen: &[] },
    TaskDef { id: "c1", category: "combination", instruction: "Put the apple in a bowl and switch off the lamp.", unseen: &[] },
    TaskDef {
        id: "c2",
        category: "combination",
        instruction: "Clean the table with the towel from the drawer, then stack the green block on the red one.",
        unseen: &[],
    },
];

const A1_PLAN: [&str; 10] = [
    "remove_lid lid",
    "pick_from_rack bowl",
    "place_on_table bowl",
    "pick_from_pot corn",
    "put_in_bowl corn",
    "open_drawer drawer_yellow",
    "pick_from_drawer towel",
    "wipe_table towel",
    "place_in_drawer towel",
    "close_drawer drawer_yellow",
];

type Script = Box<dyn Fn(&ChatRequest) -> Result<String, OracleError> + Send + Sync>;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn write(path: &Path, text: &str) {
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(path, text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
}

fn recorder(path: &Path, script: Script) -> Oracle {
    let _ = std::fs::remove_file(path);
    let cfg = OracleConfig {
        mode: OracleMode::Record,
        transcript: Some(path.to_path_buf()),
        ..OracleConfig::default()
    };
    Oracle::with_backend(&cfg, Box::new(ScriptedBackend(script))).unwrap()
}

/// Rewrites a recorded transcript sorted by digest, with latencies that
/// depend only on the reply length.
fn normalize_transcript(path: &Path) {
    let t = Transcript::load(path).unwrap();
    let mut recs: Vec<Record> = t.records().to_vec();
    recs.sort_by(|a, b| a.digest.cmp(&b.digest));
    let mut out = String::new();
    for mut r in recs {
        let chars = r.response.as_str().map_or(0, str::len);
        r.latency_s = ((0.35 + 0.0008 * chars as f64) * 1000.0).round() / 1000.0;
        out.push_str(&serde_json::to_string(&r).unwrap());
        out.push('\n');
    }
    write(path, &out);
}

fn fenced(text: &str) -> String {
    format!("Here is the result.\n\n```pddl\n{}```\n", text)
}

// ---------------------------------------------------------------- domains

fn rename_lit(l: &Literal, from: &str, to: &str) -> Literal {
    let mut l = l.clone();
    if l.predicate == from {
        l.predicate = to.to_string();
    }
    l
}

/// The sub-domain of `meta` with `ops`, the predicates they mention and
/// the types (with ancestors) their signatures use.
fn slice(meta: &Domain, name: &str, ops: &[&str]) -> Domain {
    let mut d = Domain::new(name);
    let mut types = BTreeSet::new();
    for &o in ops {
        let op = meta.operators.get(o).unwrap_or_else(|| panic!("no operator {o}"));
        for p in op.mentioned_predicates() {
            let schema = meta.predicates[p].clone();
            types.extend(schema.params.iter().map(|p| p.ty.clone()));
            d.add_predicate(schema);
        }
        types.extend(op.params.iter().map(|p| p.ty.clone()));
        d.add_operator(op.clone());
    }
    // A demo that handles vessels shows which kinds it handled.
    let kinds: Vec<String> = meta
        .types
        .iter()
        .filter(|(_, parent)| *parent != "item" && types.contains(*parent))
        .map(|(t, _)| t.clone())
        .collect();
    types.extend(kinds);
    let mut stack: Vec<String> = types.into_iter().collect();
    while let Some(t) = stack.pop() {
        if let Some(parent) = meta.types.get(&t) {
            if d.types.insert(t, parent.clone()).is_none() {
                stack.push(parent.clone());
            }
        }
    }
    d
}

fn alias_predicate(d: &mut Domain, from: &str, to: &str) {
    let mut schema = d.predicates.remove(from).unwrap_or_else(|| panic!("{} lacks {from}", d.name));
    schema.name = to.to_string();
    d.add_predicate(schema);
    for op in d.operators.values_mut() {
        op.preconditions = op.preconditions.iter().map(|l| rename_lit(l, from, to)).collect();
        op.effects = op.effects.iter().map(|l| rename_lit(l, from, to)).collect();
    }
}

fn alias_operator(d: &mut Domain, from: &str, to: &str) {
    let op = d.operators.remove(from).unwrap_or_else(|| panic!("{} lacks {from}", d.name));
    d.add_operator(OperatorSchema { name: to.to_string(), ..op });
}

fn atomic_domains(meta: &Domain) -> Vec<Domain> {
    let mut covered = BTreeSet::new();
    let mut out: Vec<Domain> = DEMOS
        .iter()
        .map(|(name, ops)| {
            covered.extend(ops.iter().copied());
            slice(meta, name, ops)
        })
        .collect();
    assert_eq!(covered.len(), meta.operators.len(), "every meta operator appears in some demo");
    for (leaf, canon, alias) in PRED_ALIASES {
        assert!(out[leaf - 1].predicates.contains_key(canon), "left neighbour of {leaf} lacks {canon}");
        let p = &out[leaf].predicates[canon];
        let phi = cosine(&stub_embed(&predicate_text(p)), &stub_embed(&predicate_text(&demoplan::pddl::PredicateSchema {
            name: alias.into(),
            ..p.clone()
        })));
        assert!(phi >= 0.3, "{canon}/{alias} similarity {phi} is below tau");
        alias_predicate(&mut out[leaf], canon, alias);
    }
    for (leaf, canon, alias) in OP_ALIASES {
        assert!(out[leaf - 1].operators.contains_key(canon), "left neighbour of {leaf} lacks {canon}");
        let phi = cosine(&stub_embed(canon), &stub_embed(alias));
        assert!(phi >= 0.3, "{canon}/{alias} similarity {phi} is below tau");
        alias_operator(&mut out[leaf], canon, alias);
    }
    out
}

fn canonical(name: &str) -> &str {
    PRED_ALIASES
        .iter()
        .chain(&OP_ALIASES)
        .find(|(_, _, a)| *a == name)
        .map_or(name, |(_, c, _)| c)
}

/// The symbol name at the start of the block following `label`.
fn symbol_after<'a>(text: &'a str, label: &str) -> &'a str {
    let rest = &text[text.find(label).expect("label") + label.len()..];
    let rest = rest.trim_start().trim_start_matches("(:action").trim_start();
    let end = rest.find(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '-')).unwrap_or(rest.len());
    &rest[..end]
}

// ----------------------------------------------------------------- scenes

fn color(name: &str) -> Rgb<u8> {
    let h = demoplan::oracle::fnv1a64(name.as_bytes());
    Rgb([64 + (h & 0x7f) as u8, 64 + ((h >> 8) & 0x7f) as u8, 64 + ((h >> 16) & 0x7f) as u8])
}

/// A flat tabletop with one block of colour per object, laid out in a row.
fn scene(objects: &[String], path: &Path) {
    let mut img = RgbImage::from_pixel(96, 64, Rgb([222, 214, 196]));
    for (i, o) in objects.iter().enumerate() {
        let (x0, y0) = (4 + (i as u32 % 6) * 15, 8 + (i as u32 / 6) * 24);
        for x in x0..x0 + 12 {
            for y in y0..y0 + 18 {
                img.put_pixel(x, y, color(o));
            }
        }
    }
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    img.save(path).unwrap();
}

// ------------------------------------------------------------------ tasks

/// The first-pass problem a model would write from the scene: objects the
/// facts do not mention and static affordances are missing.
fn first_pass(gt: &Problem, def: &TaskDef) -> Problem {
    let mentioned: BTreeSet<&str> = gt
        .init
        .iter()
        .flat_map(|a| a.args.iter())
        .chain(gt.goal.iter().flat_map(|g| g.atom.args.iter()))
        .map(String::as_str)
        .collect();
    let keep = |o: &str| mentioned.contains(o) && !def.unseen.contains(&o);
    Problem {
        objects: gt.objects.iter().filter(|(o, _)| keep(o)).map(|(o, t)| (o.clone(), t.clone())).collect(),
        init: gt
            .init
            .iter()
            .filter(|a| !AFFORDANCES.contains(&a.predicate.as_str()) && a.args.iter().all(|o| keep(o)))
            .cloned()
            .collect(),
        ..gt.clone()
    }
}

fn groups_reply(meta: &Domain) -> String {
    let mut groups: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for p in meta.predicates.values() {
        let g = if AFFORDANCES.contains(&p.name.as_str()) {
            "affordance"
        } else if p.arity() == 2 || p.name.starts_with("in_") || p.name.starts_with("on_") || p.name == "container_on_table" {
            "spatial"
        } else {
            "state"
        };
        groups.entry(g).or_default().push(&p.name);
    }
    groups.entry("object").or_default();
    format!("```json\n{}\n```", serde_json::to_string_pretty(&groups).unwrap())
}

struct Authored {
    spec: TaskSpec,
    gt: Problem,
    p0: Problem,
}

fn author_tasks(meta: &Domain, dir: &Path) -> Vec<Authored> {
    let mut suite = Vec::new();
    let mut out = Vec::new();
    for def in &TASKS {
        let tdir = dir.join("tasks").join(def.id);
        let gt = parse_problem(&std::fs::read_to_string(tdir.join("gt.pddl")).unwrap(), meta)
            .unwrap_or_else(|e| panic!("{}: {e}", def.id));
        assert_eq!(gt.name, def.id);
        let p0 = first_pass(&gt, def);
        let objects: Vec<String> = gt.objects.keys().cloned().collect();
        scene(&objects, &tdir.join("scene.png"));
        let local = serde_json::json!({
            "id": def.id,
            "instruction": def.instruction,
            "image": "scene.png",
            "gt_problem": "gt.pddl",
            "domain": def.category,
        });
        write(&tdir.join("task.json"), &(serde_json::to_string_pretty(&local).unwrap() + "\n"));
        suite.push(serde_json::json!({
            "id": def.id,
            "instruction": def.instruction,
            "image": format!("tasks/{}/scene.png", def.id),
            "gt_problem": format!("tasks/{}/gt.pddl", def.id),
            "domain": def.category,
        }));
        out.push(Authored {
            spec: TaskSpec::load(&tdir.join("task.json")).unwrap(),
            gt,
            p0,
        });
    }
    write(&dir.join("suite.json"), &(serde_json::to_string_pretty(&suite).unwrap() + "\n"));
    out
}

fn problem_name(prompt: &str) -> &str {
    let i = prompt.find("Name the problem `").expect("problem name") + "Name the problem `".len();
    &prompt[i..i + prompt[i..].find('`').unwrap()]
}

fn kitchen_script(meta: &Domain, tasks: &[Authored]) -> Script {
    let groups = groups_reply(meta);
    let p0: BTreeMap<String, String> = tasks.iter().map(|t| (t.spec.id.clone(), print_problem(&t.p0))).collect();
    let gt: BTreeMap<String, String> = tasks.iter().map(|t| (t.spec.id.clone(), print_problem(&t.gt))).collect();
    Box::new(move |req: &ChatRequest| {
        let text = req.last_user_text();
        let reply = if text.contains("Decide whether these two") {
            let (a, b) = (symbol_after(text, "First:"), symbol_after(text, "Second:"));
            if canonical(a) == canonical(b) { "YES" } else { "NO" }.to_string()
        } else if text.contains("Sort every predicate") {
            groups.clone()
        } else if text.contains("task-specific domain below") {
            fenced(&gt[problem_name(text)])
        } else if text.contains("Write a PDDL problem for this instruction") {
            fenced(&p0[problem_name(text)])
        } else {
            panic!("unscripted prompt:\n{text}")
        };
        Ok(reply)
    })
}

fn author_kitchen(root: &Path) {
    let dir = root.join("kitchen");
    let meta = parse_domain(&std::fs::read_to_string(dir.join("meta_domain.pddl")).unwrap()).unwrap();
    let atomic = atomic_domains(&meta);
    let mut list = String::new();
    for (i, d) in atomic.iter().enumerate() {
        let rel = format!("atomic/{i:02}_{}.pddl", d.name);
        write(&dir.join(&rel), &print_domain(d));
        list.push_str(&rel);
        list.push('\n');
    }
    write(&dir.join("domains.txt"), &list);

    let tasks = author_tasks(&meta, &dir);
    let transcript = dir.join("transcript.jsonl");
    let oracle = recorder(&transcript, kitchen_script(&meta, &tasks));

    let fusion = fuse_all(&oracle, &atomic, &FusionConfig::default()).unwrap();
    let mut fused = fusion.domain.clone();
    fused.name = meta.name.clone();
    if fused != meta {
        for (k, v) in &meta.types {
            if fused.types.get(k) != Some(v) {
                eprintln!("type {k}: {v} vs {:?}", fused.types.get(k));
            }
        }
        for (k, v) in &meta.predicates {
            if fused.predicates.get(k) != Some(v) {
                eprintln!("predicate {k}: {v} vs {:?}", fused.predicates.get(k).map(ToString::to_string));
            }
        }
        for k in fused.predicates.keys().filter(|k| !meta.predicates.contains_key(*k)) {
            eprintln!("extra predicate {k}");
        }
        for (k, v) in &meta.operators {
            if fused.operators.get(k) != Some(v) {
                eprintln!("operator {k}: {v:?}\n   vs {:?}", fused.operators.get(k));
            }
        }
        for k in fused.operators.keys().filter(|k| !meta.operators.contains_key(*k)) {
            eprintln!("extra operator {k}");
        }
        panic!("fusing the atomic domains must give the meta-domain back");
    }
    for leaf in &fusion.log.leaves {
        for (from, to) in leaf.predicates.iter().chain(&leaf.operators) {
            assert_eq!(canonical(from), to, "leaf {} maps {from} to {to}", leaf.domain);
        }
    }
    println!(
        "fusion: {} leaves -> |P|={} |O|={}, {} merges, {} verdicts",
        atomic.len(),
        fused.predicates.len(),
        fused.operators.len(),
        fusion.log.n_merges(),
        fusion.log.verdicts_requested()
    );

    let (groups, warnings) = group_predicates(&oracle, &meta, 3).unwrap();
    assert!(warnings.is_empty(), "{warnings:?}");
    let specs: Vec<TaskSpec> = tasks.iter().map(|t| t.spec.clone()).collect();
    for ablation in [
        PlanAblation::default(),
        PlanAblation { no_grouping: true, ..PlanAblation::default() },
        PlanAblation { no_filtering: true, ..PlanAblation::default() },
    ] {
        let cfg = SuiteConfig {
            plan: PlanConfig { ablation, ..PlanConfig::default() },
            ..SuiteConfig::default()
        };
        let run = run_suite(&oracle, &meta, Some(&groups), &specs, &cfg, None).unwrap();
        let r = &run.report.overall;
        println!("{:>13}: SR={:.3} SPL={:.3} OR(0)={:.3}", cfg.label(), r.sr, r.spl, r.or0);
        if ablation.no_filtering {
            continue;
        }
        for (t, res) in tasks.iter().zip(&run.results) {
            let ep = &res.episode;
            assert!(ep.success, "{}: {:?}", t.spec.id, ep.error);
            assert_eq!(Some(ep.cost), ep.optimal, "{} is not optimal", t.spec.id);
            let trace = res.trace.as_ref().unwrap();
            let f = trace.filter.as_ref().unwrap();
            parse_problem(trace.refined_problem.as_ref().unwrap(), &f.compact).unwrap();
            if t.spec.id == "a1" {
                let steps: Vec<String> = trace.plan().unwrap().steps.iter().map(ToString::to_string).collect();
                let want: Vec<String> = A1_PLAN.iter().map(|s| format!("({s})")).collect();
                assert_eq!(steps, want);
            }
        }
    }

    let a1 = &tasks[0];
    let limits = Limits::default();
    let cost = optimal_cost(&meta, &a1.gt, limits.ground, limits.search).unwrap();
    assert_eq!(cost, OptimalCost::Cost(10));
    assert_eq!(a1.gt.objects.len(), 10);
    drop(oracle);
    normalize_transcript(&transcript);
}

// ------------------------------------------------------------------ demos

fn learn_script(leaf: Domain) -> Script {
    let frag = |op: &str| {
        let mut d = slice(&leaf, &leaf.name, &[op]);
        d.types = leaf.types.clone();
        fenced(&print_domain(&d))
    };
    let first = frag("pick_from_pot");
    let second = frag("put_in_bowl");
    let whole = fenced(&print_domain(&leaf));
    let problems = [
        "(:objects corn - food) (:init (in_pot corn) (pot_open) (hand_empty)) (:goal (holding corn))",
        "(:objects corn - food) (:init (holding corn) (container_on_table)) (:goal (in_bowl corn))",
        "(:objects corn - food) (:init (in_pot corn) (pot_open) (hand_empty) (container_on_table)) (:goal (in_bowl corn))",
        "(:objects corn carrot - food) (:init (in_pot corn) (in_pot carrot) (pot_open) (hand_empty) (container_on_table)) (:goal (and (in_bowl corn) (in_bowl carrot)))",
        "(:objects corn carrot pea - food) (:init (in_pot corn) (in_pot carrot) (in_pot pea) (pot_open) (hand_empty) (container_on_table) (table_clean)) (:goal (and (in_bowl corn) (in_bowl carrot) (in_bowl pea)))",
    ];
    Box::new(move |req: &ChatRequest| {
        let text = req.last_user_text();
        let reply = if text.contains("(transition 1 of 2)") {
            first.clone()
        } else if text.contains("(transition 2 of 2)") {
            second.clone()
        } else if text.contains("Revise it as a whole") {
            whole.clone()
        } else if let Some(i) = text.find("Write test problem ") {
            let k: usize = text[i + 19..].split(' ').next().unwrap().parse().unwrap();
            format!("(define (problem test_{k}) (:domain corn_to_bowl)\n  {})", problems[k - 1])
        } else if text.contains("Judge whether the plan") {
            "PASS\nThe corn is picked from the open pot and placed into the bowl on the table.".into()
        } else {
            panic!("unscripted prompt:\n{text}")
        };
        Ok(reply)
    })
}

fn author_demos(root: &Path) {
    let dir = root.join("demos");
    let frames = dir.join("demo1");
    let _ = std::fs::remove_dir_all(&frames);
    std::fs::create_dir_all(&frames).unwrap();
    for (i, v) in [0u8, 1, 2, 3, 2, 1, 0].into_iter().enumerate() {
        GrayImage::from_pixel(1, 1, Luma([v])).save(frames.join(format!("frame_{i:03}.pgm"))).unwrap();
    }

    let demo = dir.join("corn_to_bowl");
    let stages: [&[&str]; 3] = [&["pot", "corn", "bowl"], &["pot", "gripper_corn", "bowl"], &["pot", "bowl_corn"]];
    let mut keyframes = Vec::new();
    for (i, objs) in stages.iter().enumerate() {
        let rel = format!("keyframes/kf_{i}.png");
        scene(&objs.iter().map(|s| s.to_string()).collect::<Vec<_>>(), &demo.join(&rel));
        keyframes.push(rel);
    }
    let manifest = serde_json::json!({
        "id": "corn_to_bowl",
        "instruction": "Pick the corn out of the pot and put it in the bowl.",
        "keyframes": keyframes,
    });
    write(&demo.join("manifest.json"), &(serde_json::to_string_pretty(&manifest).unwrap() + "\n"));

    let meta = parse_domain(&std::fs::read_to_string(root.join("kitchen/meta_domain.pddl")).unwrap()).unwrap();
    let leaf = slice(&meta, "corn_to_bowl", DEMOS[4].1);
    let transcript = demo.join("transcript.jsonl");
    let oracle = recorder(&transcript, learn_script(leaf.clone()));
    let m = DemoManifest::load(&demo.join("manifest.json")).unwrap();
    let rec = learn_atomic_domain(&oracle, &m, &LearnConfig::default()).unwrap();
    assert!(rec.verified && rec.iterations_used == 0 && rec.solvability_score == 1.0);
    assert_eq!(rec.domain, leaf);
    println!("learn: corn_to_bowl verified with {} chat calls", rec.usage.n_chat);
    drop(oracle);
    normalize_transcript(&transcript);
}

// ----------------------------------------------------------------- corpus

/// Random blocksworld problems for the round-trip corpus.
fn author_blocksworld(root: &Path) {
    let dir = root.join("pddl/blocksworld");
    let dom = parse_domain(&std::fs::read_to_string(dir.join("domain.pddl")).unwrap()).unwrap();
    let mut rng = StdRng::seed_from_u64(7);
    let names = ["a", "b", "c", "d", "e"];
    let towers = |rng: &mut StdRng, n: usize| -> Vec<Vec<&str>> {
        let mut blocks = names[..n].to_vec();
        blocks.shuffle(rng);
        let mut out: Vec<Vec<&str>> = Vec::new();
        for b in blocks {
            match out.last_mut() {
                Some(t) if rng.gen_bool(0.6) => t.push(b),
                _ => out.push(vec![b]),
            }
        }
        out
    };
    for k in 0..18 {
        let n = rng.gen_range(3..=5);
        let mut init = Vec::new();
        for t in towers(&mut rng, n) {
            init.push(format!("(ontable {})", t[0]));
            init.extend(t.windows(2).map(|w| format!("(on {} {})", w[1], w[0])));
            init.push(format!("(clear {})", t[t.len() - 1]));
        }
        init.push("(handempty)".into());
        let mut goal: Vec<String> = towers(&mut rng, n)
            .iter()
            .flat_map(|t| t.windows(2).map(|w| format!("(on {} {})", w[1], w[0])).collect::<Vec<_>>())
            .collect();
        if goal.is_empty() {
            goal.push(format!("(on {} {})", names[0], names[1]));
        }
        let text = format!(
            "(define (problem random_{k:02})\n  (:domain blocksworld)\n  (:objects {} - block)\n  (:init {})\n  (:goal (and {})))\n",
            names[..n].join(" "),
            init.join(" "),
            goal.join(" ")
        );
        parse_problem(&text, &dom).unwrap();
        write(&dir.join(format!("random_{k:02}.pddl")), &text);
    }
}

fn main() {
    let root = root();
    author_blocksworld(&root);
    author_kitchen(&root);
    author_demos(&root);
    println!("fixtures written under {}", root.display());
}
