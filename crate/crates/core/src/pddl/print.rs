use std::fmt::Write;

use super::parse::objects_grouped;
use super::types::{Domain, Literal, Param, Problem};

fn params(ps: &[Param]) -> String {
    ps.iter()
        .map(|p| format!("?{} - {}", p.name, p.ty))
        .collect::<Vec<_>>()
        .join(" ")
}

fn conjunction<'a>(lits: impl IntoIterator<Item = &'a Literal>) -> String {
    let parts: Vec<String> = lits.into_iter().map(ToString::to_string).collect();
    if parts.is_empty() {
        "(and)".to_string()
    } else {
        format!("(and {})", parts.join(" "))
    }
}

/// Canonical text: sorted declarations, two-space indentation, lowercase.
/// The requirements line is derived from the content.
pub fn print_domain(dom: &Domain) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "(define (domain {})", dom.name);
    let mut reqs = vec![":strips"];
    if dom.uses_typing() {
        reqs.push(":typing");
    }
    if dom.uses_negative_preconditions() {
        reqs.push(":negative-preconditions");
    }
    let _ = writeln!(out, "  (:requirements {})", reqs.join(" "));

    if !dom.types.is_empty() {
        out.push_str("  (:types\n");
        for (ty, parent) in &dom.types {
            let _ = writeln!(out, "    {ty} - {parent}");
        }
        out.push_str("  )\n");
    }

    if dom.predicates.is_empty() {
        out.push_str("  (:predicates)\n");
    } else {
        out.push_str("  (:predicates\n");
        for p in dom.predicates.values() {
            let _ = writeln!(out, "    {p}");
        }
        out.push_str("  )\n");
    }

    for op in dom.operators.values() {
        let _ = writeln!(out, "  (:action {}", op.name);
        let _ = writeln!(out, "    :parameters ({})", params(&op.params));
        let _ = writeln!(out, "    :precondition {}", conjunction(&op.preconditions));
        let _ = writeln!(out, "    :effect {}", conjunction(&op.effects));
        out.push_str("  )\n");
    }
    out.push_str(")\n");
    out
}

pub fn print_problem(prob: &Problem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "(define (problem {})", prob.name);
    let _ = writeln!(out, "  (:domain {})", prob.domain);
    if prob.objects.is_empty() {
        out.push_str("  (:objects)\n");
    } else {
        out.push_str("  (:objects\n");
        for (ty, objs) in objects_grouped(&prob.objects) {
            let _ = writeln!(out, "    {} - {ty}", objs.join(" "));
        }
        out.push_str("  )\n");
    }
    if prob.init.is_empty() {
        out.push_str("  (:init)\n");
    } else {
        out.push_str("  (:init\n");
        for a in &prob.init {
            let _ = writeln!(out, "    {a}");
        }
        out.push_str("  )\n");
    }
    out.push_str("  (:goal (and\n");
    for g in &prob.goal {
        let _ = writeln!(out, "    {g}");
    }
    out.push_str("  ))\n");
    out.push_str(")\n");
    out
}
