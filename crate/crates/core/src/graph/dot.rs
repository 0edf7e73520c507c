use std::collections::BTreeSet;
use std::fmt::Write;

use super::{DomainGraph, EdgeKind};

fn pred_id(name: &str, arity: usize) -> String {
    format!("\"p:{name}/{arity}\"")
}

fn op_id(name: &str) -> String {
    format!("\"o:{name}\"")
}

/// Graphviz rendering. Predicates are ellipses, operators boxes; negative
/// literals are drawn dashed. Parallel edges that differ only in their
/// arguments collapse to one line.
pub fn export_dot(g: &DomainGraph) -> String {
    let mut out = String::from("digraph domain {\n");
    for k in g.predicates.keys() {
        let _ = writeln!(out, "  {} [label=\"{k}\", shape=ellipse];", pred_id(&k.name, k.arity));
    }
    for name in g.operators.keys() {
        let _ = writeln!(out, "  {} [label=\"{name}\", shape=box];", op_id(name));
    }
    let lines: BTreeSet<(String, String, EdgeKind, bool)> = g
        .edges
        .iter()
        .map(|e| {
            let p = pred_id(&e.predicate.name, e.predicate.arity);
            let o = op_id(&e.operator);
            match e.kind {
                EdgeKind::Pre => (p, o, e.kind, e.positive),
                EdgeKind::Eff => (o, p, e.kind, e.positive),
            }
        })
        .collect();
    for (src, dst, kind, positive) in lines {
        let label = match kind {
            EdgeKind::Pre => "pre",
            EdgeKind::Eff => "eff",
        };
        let style = if positive { "solid" } else { "dashed" };
        let _ = writeln!(out, "  {src} -> {dst} [label=\"{label}\", style={style}];");
    }
    out.push('}');
    out
}
