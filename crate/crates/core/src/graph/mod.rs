//! Domains as knowledge graphs: predicate and operator nodes joined by
//! precondition edges (predicate -> operator) and effect edges
//! (operator -> predicate).
//!
//! Edges keep their argument terms and polarity, so a graph converts back to
//! the exact operator schemas it came from.

mod dot;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pddl::{Domain, Literal, OperatorSchema, Param, PredicateSchema, Term};

pub use dot::export_dot;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("predicate `{0}` appears with more than one arity")]
    AmbiguousPredicate(String),
    #[error("edge references missing node `{0}`")]
    DanglingEdge(String),
}

/// Predicates are identified by name and arity.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PredKey {
    pub name: String,
    pub arity: usize,
}

impl std::fmt::Display for PredKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.name, self.arity)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredNode {
    pub params: Vec<Param>,
    pub sources: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpNode {
    pub params: Vec<Param>,
    pub sources: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    /// predicate -> operator
    Pre,
    /// operator -> predicate
    Eff,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub operator: String,
    pub kind: EdgeKind,
    pub predicate: PredKey,
    pub args: Vec<Term>,
    pub positive: bool,
}

impl Edge {
    fn literal(&self) -> Literal {
        Literal {
            predicate: self.predicate.name.clone(),
            args: self.args.clone(),
            positive: self.positive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(into = "GraphDoc", try_from = "GraphDoc")]
pub struct DomainGraph {
    pub types: BTreeMap<String, String>,
    pub predicates: BTreeMap<PredKey, PredNode>,
    pub operators: BTreeMap<String, OpNode>,
    pub edges: BTreeSet<Edge>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GraphStats {
    pub n_operators: usize,
    pub n_predicates: usize,
    pub n_edges: usize,
    pub n_categories: usize,
}

pub fn to_graph(dom: &Domain, source: &str) -> DomainGraph {
    let src = BTreeSet::from([source.to_string()]);
    let mut g = DomainGraph {
        types: dom.types.clone(),
        ..DomainGraph::default()
    };
    for p in dom.predicates.values() {
        g.predicates.insert(
            key_of(p),
            PredNode {
                params: p.params.clone(),
                sources: src.clone(),
            },
        );
    }
    for op in dom.operators.values() {
        g.operators.insert(
            op.name.clone(),
            OpNode {
                params: op.params.clone(),
                sources: src.clone(),
            },
        );
        g.edges.extend(op_edges(&op.name, op));
    }
    g
}

fn key_of(p: &PredicateSchema) -> PredKey {
    PredKey {
        name: p.name.clone(),
        arity: p.arity(),
    }
}

fn op_edges<'a>(name: &'a str, op: &'a OperatorSchema) -> impl Iterator<Item = Edge> + 'a {
    let mk = move |kind, l: &Literal| Edge {
        operator: name.to_string(),
        kind,
        predicate: PredKey {
            name: l.predicate.clone(),
            arity: l.args.len(),
        },
        args: l.args.clone(),
        positive: l.positive,
    };
    op.preconditions
        .iter()
        .map(move |l| mk(EdgeKind::Pre, l))
        .chain(op.effects.iter().map(move |l| mk(EdgeKind::Eff, l)))
}

impl DomainGraph {
    /// Rebuilds the operator schema stored under `name`.
    pub fn operator(&self, name: &str) -> Option<OperatorSchema> {
        let node = self.operators.get(name)?;
        let mut op = OperatorSchema::new(name, node.params.clone());
        for e in self.edges_of(name) {
            match e.kind {
                EdgeKind::Pre => op.preconditions.insert(e.literal()),
                EdgeKind::Eff => op.effects.insert(e.literal()),
            };
        }
        Some(op)
    }

    fn edges_of<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Edge> + 'a {
        let lo = Edge {
            operator: name.to_string(),
            kind: EdgeKind::Pre,
            predicate: PredKey {
                name: String::new(),
                arity: 0,
            },
            args: vec![],
            positive: false,
        };
        self.edges.range(lo..).take_while(move |e| e.operator == name)
    }

    /// Operators with a precondition edge from one of `preds`.
    pub fn consumers(&self, preds: &BTreeSet<&str>) -> BTreeSet<&str> {
        self.touching(preds, EdgeKind::Pre)
    }

    /// Operators with an effect edge into one of `preds`.
    pub fn producers(&self, preds: &BTreeSet<&str>) -> BTreeSet<&str> {
        self.touching(preds, EdgeKind::Eff)
    }

    fn touching(&self, preds: &BTreeSet<&str>, kind: EdgeKind) -> BTreeSet<&str> {
        self.edges
            .iter()
            .filter(|e| e.kind == kind && preds.contains(e.predicate.name.as_str()))
            .map(|e| e.operator.as_str())
            .collect()
    }

    /// Converts back to a domain. Fails if a predicate name occurs with two
    /// arities (possible after a union), since PDDL keys predicates by name.
    pub fn to_domain(&self, name: &str) -> Result<Domain, GraphError> {
        let mut dom = Domain::new(name);
        dom.types = self.types.clone();
        for (k, node) in &self.predicates {
            if dom.predicates.contains_key(&k.name) {
                return Err(GraphError::AmbiguousPredicate(k.name.clone()));
            }
            dom.add_predicate(PredicateSchema::new(k.name.clone(), node.params.clone()));
        }
        for name in self.operators.keys() {
            dom.add_operator(self.operator(name).expect("operator node exists"));
        }
        Ok(dom)
    }

    pub fn stats(&self) -> GraphStats {
        let categories: BTreeSet<String> = self.operators.keys().map(|n| category(n)).collect();
        GraphStats {
            n_operators: self.operators.len(),
            n_predicates: self.predicates.len(),
            n_edges: self.edges.len(),
            n_categories: categories.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.predicates.is_empty() && self.operators.is_empty()
    }

    fn check(&self) -> Result<(), GraphError> {
        for e in &self.edges {
            if !self.operators.contains_key(&e.operator) {
                return Err(GraphError::DanglingEdge(e.operator.clone()));
            }
            if !self.predicates.contains_key(&e.predicate) {
                return Err(GraphError::DanglingEdge(e.predicate.to_string()));
            }
        }
        Ok(())
    }
}

/// Lexical operator category: drop a `#k` suffix, then trailing digits and
/// separators, then lowercase.
pub fn category(name: &str) -> String {
    let base = name.split('#').next().unwrap_or(name);
    base.trim_end_matches(|c: char| c.is_ascii_digit() || c == '_' || c == '-')
        .to_lowercase()
}

/// Union of graphs. Nodes with the same key merge and pool their sources.
/// An operator name reused with a different body is kept under `name#2`,
/// `name#3`, ... instead of being merged.
pub fn union<'a>(graphs: impl IntoIterator<Item = &'a DomainGraph>) -> DomainGraph {
    let mut out = DomainGraph::default();
    for g in graphs {
        for (t, parent) in &g.types {
            out.types.entry(t.clone()).or_insert_with(|| parent.clone());
        }
        for (k, node) in &g.predicates {
            out.predicates
                .entry(k.clone())
                .and_modify(|n| n.sources.extend(node.sources.iter().cloned()))
                .or_insert_with(|| node.clone());
        }
        for (name, node) in &g.operators {
            let body = g.operator(name).expect("operator node exists");
            let base = name.split('#').next().unwrap_or(name);
            let slot = (1..)
                .map(|k| if k == 1 { base.to_string() } else { format!("{base}#{k}") })
                .find(|cand| match out.operator(cand) {
                    None => true,
                    Some(existing) => same_body(&existing, &body),
                })
                .expect("unbounded search");
            match out.operators.get_mut(&slot) {
                Some(existing) => existing.sources.extend(node.sources.iter().cloned()),
                None => {
                    out.operators.insert(slot.clone(), node.clone());
                    out.edges.extend(op_edges(&slot, &body));
                }
            }
        }
    }
    out
}

fn same_body(a: &OperatorSchema, b: &OperatorSchema) -> bool {
    a.params == b.params && a.preconditions == b.preconditions && a.effects == b.effects
}

/// On-disk form: lists instead of maps with structured keys.
#[derive(Serialize, Deserialize)]
struct GraphDoc {
    #[serde(default)]
    types: BTreeMap<String, String>,
    predicates: Vec<PredDoc>,
    operators: Vec<OpDoc>,
    edges: Vec<Edge>,
}

#[derive(Serialize, Deserialize)]
struct PredDoc {
    name: String,
    params: Vec<Param>,
    sources: BTreeSet<String>,
}

#[derive(Serialize, Deserialize)]
struct OpDoc {
    name: String,
    params: Vec<Param>,
    sources: BTreeSet<String>,
}

impl From<DomainGraph> for GraphDoc {
    fn from(g: DomainGraph) -> Self {
        GraphDoc {
            types: g.types,
            predicates: g
                .predicates
                .into_iter()
                .map(|(k, n)| PredDoc {
                    name: k.name,
                    params: n.params,
                    sources: n.sources,
                })
                .collect(),
            operators: g
                .operators
                .into_iter()
                .map(|(name, n)| OpDoc {
                    name,
                    params: n.params,
                    sources: n.sources,
                })
                .collect(),
            edges: g.edges.into_iter().collect(),
        }
    }
}

impl TryFrom<GraphDoc> for DomainGraph {
    type Error = GraphError;

    fn try_from(doc: GraphDoc) -> Result<Self, GraphError> {
        let g = DomainGraph {
            types: doc.types,
            predicates: doc
                .predicates
                .into_iter()
                .map(|p| {
                    let key = PredKey {
                        name: p.name,
                        arity: p.params.len(),
                    };
                    (key, PredNode { params: p.params, sources: p.sources })
                })
                .collect(),
            operators: doc
                .operators
                .into_iter()
                .map(|o| (o.name, OpNode { params: o.params, sources: o.sources }))
                .collect(),
            edges: doc.edges.into_iter().collect(),
        };
        g.check()?;
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categories() {
        assert_eq!(category("pick_from_table#2"), "pick_from_table");
        assert_eq!(category("Open_Drawer_2"), "open_drawer");
        assert_eq!(category("stack"), "stack");
    }
}
