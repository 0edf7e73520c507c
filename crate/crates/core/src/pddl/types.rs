use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Root of every type hierarchy. Untyped parameters and objects get this type.
pub const OBJECT: &str = "object";

/// A typed variable in a parameter list. The leading `?` is not stored.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: String,
}

impl Param {
    pub fn new(name: impl Into<String>, ty: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ty: ty.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Term {
    Var(String),
    Obj(String),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Self {
        Term::Var(name.into())
    }

    pub fn name(&self) -> &str {
        match self {
            Term::Var(n) | Term::Obj(n) => n,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "?{v}"),
            Term::Obj(o) => f.write_str(o),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PredicateSchema {
    pub name: String,
    pub params: Vec<Param>,
}

impl PredicateSchema {
    pub fn new(name: impl Into<String>, params: Vec<Param>) -> Self {
        Self {
            name: name.into(),
            params,
        }
    }

    pub fn arity(&self) -> usize {
        self.params.len()
    }
}

impl fmt::Display for PredicateSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.name)?;
        for p in &self.params {
            write!(f, " ?{} - {}", p.name, p.ty)?;
        }
        f.write_str(")")
    }
}

/// A (possibly negated) predicate application inside an operator schema.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Literal {
    pub predicate: String,
    pub args: Vec<Term>,
    pub positive: bool,
}

impl Literal {
    pub fn pos(predicate: impl Into<String>, vars: &[&str]) -> Self {
        Self {
            predicate: predicate.into(),
            args: vars.iter().map(|v| Term::var(*v)).collect(),
            positive: true,
        }
    }

    pub fn neg(predicate: impl Into<String>, vars: &[&str]) -> Self {
        Self {
            positive: false,
            ..Self::pos(predicate, vars)
        }
    }

    pub fn negated(&self) -> Self {
        Self {
            positive: !self.positive,
            ..self.clone()
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.positive {
            f.write_str("(not ")?;
        }
        write!(f, "({}", self.predicate)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        f.write_str(")")?;
        if !self.positive {
            f.write_str(")")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OperatorSchema {
    pub name: String,
    pub params: Vec<Param>,
    pub preconditions: BTreeSet<Literal>,
    pub effects: BTreeSet<Literal>,
}

impl OperatorSchema {
    pub fn new(name: impl Into<String>, params: Vec<Param>) -> Self {
        Self {
            name: name.into(),
            params,
            preconditions: BTreeSet::new(),
            effects: BTreeSet::new(),
        }
    }

    pub fn with_pre(mut self, lit: Literal) -> Self {
        self.preconditions.insert(lit);
        self
    }

    pub fn with_eff(mut self, lit: Literal) -> Self {
        self.effects.insert(lit);
        self
    }

    pub fn arity(&self) -> usize {
        self.params.len()
    }

    /// Predicate names mentioned anywhere in the schema, polarity ignored.
    pub fn mentioned_predicates(&self) -> BTreeSet<&str> {
        self.preconditions
            .iter()
            .chain(&self.effects)
            .map(|l| l.predicate.as_str())
            .collect()
    }
}

/// A planning domain: type hierarchy, predicate schemas and operator schemas.
///
/// Collections are keyed by name, so two domains that differ only in
/// declaration order compare equal and print identically.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Domain {
    pub name: String,
    /// Declared type -> parent type. `object` is implicit and never stored.
    pub types: BTreeMap<String, String>,
    pub predicates: BTreeMap<String, PredicateSchema>,
    pub operators: BTreeMap<String, OperatorSchema>,
}

impl Domain {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn add_type(&mut self, ty: impl Into<String>, parent: impl Into<String>) {
        self.types.insert(ty.into(), parent.into());
    }

    pub fn add_predicate(&mut self, p: PredicateSchema) {
        self.predicates.insert(p.name.clone(), p);
    }

    pub fn add_operator(&mut self, o: OperatorSchema) {
        self.operators.insert(o.name.clone(), o);
    }

    pub fn has_type(&self, ty: &str) -> bool {
        ty == OBJECT || self.types.contains_key(ty)
    }

    /// True when `ty` equals `ancestor` or inherits from it. Cycles terminate.
    pub fn is_subtype(&self, ty: &str, ancestor: &str) -> bool {
        if ancestor == OBJECT || ty == ancestor {
            return true;
        }
        let mut cur = ty;
        for _ in 0..=self.types.len() {
            match self.types.get(cur) {
                Some(parent) if parent == ancestor => return true,
                Some(parent) => cur = parent,
                None => return false,
            }
        }
        false
    }

    pub fn uses_typing(&self) -> bool {
        !self.types.is_empty()
            || self
                .predicates
                .values()
                .flat_map(|p| &p.params)
                .chain(self.operators.values().flat_map(|o| &o.params))
                .any(|p| p.ty != OBJECT)
    }

    pub fn uses_negative_preconditions(&self) -> bool {
        self.operators
            .values()
            .flat_map(|o| &o.preconditions)
            .any(|l| !l.positive)
    }
}

/// A ground atom such as `(on a b)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<String>,
}

impl Atom {
    pub fn new(predicate: impl Into<String>, args: &[&str]) -> Self {
        Self {
            predicate: predicate.into(),
            args: args.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.predicate)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroundLiteral {
    pub atom: Atom,
    pub positive: bool,
}

impl GroundLiteral {
    pub fn pos(atom: Atom) -> Self {
        Self {
            atom,
            positive: true,
        }
    }

    pub fn neg(atom: Atom) -> Self {
        Self {
            atom,
            positive: false,
        }
    }
}

impl fmt::Display for GroundLiteral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.positive {
            write!(f, "{}", self.atom)
        } else {
            write!(f, "(not {})", self.atom)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Problem {
    pub name: String,
    pub domain: String,
    /// Object name -> type name.
    pub objects: BTreeMap<String, String>,
    pub init: BTreeSet<Atom>,
    pub goal: BTreeSet<GroundLiteral>,
}

impl Problem {
    /// Predicate names used in init or goal, polarity ignored.
    pub fn used_predicates(&self) -> BTreeSet<&str> {
        self.init
            .iter()
            .map(|a| a.predicate.as_str())
            .chain(self.goal.iter().map(|g| g.atom.predicate.as_str()))
            .collect()
    }

    /// True when every goal literal holds in the initial state (closed world).
    pub fn goal_holds_initially(&self) -> bool {
        self.goal
            .iter()
            .all(|g| self.init.contains(&g.atom) == g.positive)
    }
}

/// A ground action: operator name plus object arguments.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Step {
    pub operator: String,
    pub args: Vec<String>,
}

impl Step {
    pub fn new(operator: impl Into<String>, args: &[&str]) -> Self {
        Self {
            operator: operator.into(),
            args: args.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.operator)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        f.write_str(")")
    }
}

/// A sequential plan. Costs are unit, so cost is the step count.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Plan {
    pub steps: Vec<Step>,
}

impl Plan {
    pub fn new(steps: Vec<Step>) -> Self {
        Self { steps }
    }

    pub fn cost(&self) -> u32 {
        self.steps.len() as u32
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

impl fmt::Display for Plan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.steps {
            writeln!(f, "{s}")?;
        }
        Ok(())
    }
}
