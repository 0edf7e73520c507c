use std::collections::BTreeMap;

use super::sexpr::{read, syntax, Pos, SExpr};
use super::types::{
    Atom, Domain, GroundLiteral, Literal, OperatorSchema, Param, PredicateSchema, Problem, Term,
    OBJECT,
};
use super::validate::{validate_domain, validate_problem, Diagnostic, Issue, Location, SourceMap};
use super::PddlError;

const SUPPORTED_REQUIREMENTS: [&str; 3] = [":strips", ":typing", ":negative-preconditions"];

/// Output of the syntactic reader: a value plus source positions and any
/// structural problems found before semantic validation.
#[derive(Debug, Clone)]
pub struct Parsed<T> {
    pub value: T,
    pub sources: SourceMap,
    pub diagnostics: Vec<Diagnostic>,
}

fn atom_of<'a>(e: &'a SExpr, expected: &str) -> Result<&'a str, PddlError> {
    e.as_atom().ok_or_else(|| syntax(e.pos(), expected))
}

fn list_of<'a>(e: &'a SExpr, expected: &str) -> Result<&'a [SExpr], PddlError> {
    e.as_list().ok_or_else(|| syntax(e.pos(), expected))
}

fn expect_header<'a>(root: &'a SExpr, kind: &str) -> Result<(String, &'a [SExpr]), PddlError> {
    let items = list_of(root, "`(define`")?;
    match items.first().and_then(SExpr::as_atom) {
        Some("define") => {}
        _ => return Err(syntax(root.pos(), "`define`")),
    }
    let header = items
        .get(1)
        .ok_or_else(|| syntax(root.pos(), format!("`({kind} <name>)`")))?;
    let h = list_of(header, &format!("`({kind} <name>)`"))?;
    if h.len() != 2 || h[0].as_atom() != Some(kind) {
        return Err(syntax(header.pos(), format!("`({kind} <name>)`")));
    }
    let name = atom_of(&h[1], "a name")?.to_string();
    Ok((name, &items[2..]))
}

/// Parses `a b - t c` style lists. Untyped entries get `object`.
fn typed_list(items: &[SExpr], vars: bool) -> Result<Vec<(String, String, Pos)>, PddlError> {
    let mut out = Vec::new();
    let mut pending: Vec<(String, Pos)> = Vec::new();
    let mut i = 0;
    while i < items.len() {
        let item = &items[i];
        let word = match item {
            SExpr::Atom(w, _) => w.as_str(),
            SExpr::List(..) if item.head() == Some("either") => {
                return Err(PddlError::UnsupportedFeature("either".into()))
            }
            SExpr::List(..) => return Err(syntax(item.pos(), "a name")),
        };
        if word == "-" {
            let ty_expr = items
                .get(i + 1)
                .ok_or_else(|| syntax(item.pos(), "a type name after `-`"))?;
            if ty_expr.head() == Some("either") {
                return Err(PddlError::UnsupportedFeature("either".into()));
            }
            let ty = atom_of(ty_expr, "a type name")?;
            if pending.is_empty() {
                return Err(syntax(item.pos(), "a name before `-`"));
            }
            for (name, pos) in pending.drain(..) {
                out.push((name, ty.to_string(), pos));
            }
            i += 2;
            continue;
        }
        let name = if vars {
            word.strip_prefix('?')
                .filter(|v| !v.is_empty())
                .ok_or_else(|| syntax(item.pos(), "a `?variable`"))?
        } else {
            word
        };
        pending.push((name.to_string(), item.pos()));
        i += 1;
    }
    for (name, pos) in pending {
        out.push((name, OBJECT.to_string(), pos));
    }
    Ok(out)
}

fn unsupported_formula(head: &str) -> Option<&'static str> {
    Some(match head {
        "or" | "imply" => ":disjunctive-preconditions",
        "exists" => ":existential-preconditions",
        "forall" => ":universal-preconditions",
        "when" => ":conditional-effects",
        "=" => ":equality",
        "increase" | "decrease" | "assign" | "scale-up" | "scale-down" | "<" | ">" | "<=" | ">=" => {
            ":numeric-fluents"
        }
        _ => return None,
    })
}

fn parse_term(e: &SExpr) -> Result<Term, PddlError> {
    let w = atom_of(e, "a term")?;
    Ok(match w.strip_prefix('?') {
        Some(v) if !v.is_empty() => Term::Var(v.to_string()),
        Some(_) => return Err(syntax(e.pos(), "a variable name")),
        None => Term::Obj(w.to_string()),
    })
}

fn parse_literal(e: &SExpr) -> Result<Literal, PddlError> {
    let items = list_of(e, "a literal")?;
    let head = items
        .first()
        .ok_or_else(|| syntax(e.pos(), "a predicate name"))?;
    let head = atom_of(head, "a predicate name")?;
    if let Some(flag) = unsupported_formula(head) {
        return Err(PddlError::UnsupportedFeature(flag.into()));
    }
    if head == "not" {
        if items.len() != 2 {
            return Err(syntax(e.pos(), "`(not (<atom>))`"));
        }
        let inner = parse_literal(&items[1])?;
        if !inner.positive {
            return Err(syntax(items[1].pos(), "an atom inside `not`"));
        }
        return Ok(inner.negated());
    }
    if head == "and" {
        return Err(syntax(e.pos(), "a literal, not a nested `and`"));
    }
    Ok(Literal {
        predicate: head.to_string(),
        args: items[1..].iter().map(parse_term).collect::<Result<_, _>>()?,
        positive: true,
    })
}

/// A conjunction `(and l1 l2 ...)`, a single literal, or `()`.
fn parse_conjunction(e: &SExpr) -> Result<Vec<Literal>, PddlError> {
    let items = list_of(e, "a formula")?;
    if items.is_empty() {
        return Ok(Vec::new());
    }
    if e.head() == Some("and") {
        items[1..].iter().map(parse_literal).collect()
    } else {
        Ok(vec![parse_literal(e)?])
    }
}

fn parse_action(
    items: &[SExpr],
    at: Pos,
) -> Result<OperatorSchema, PddlError> {
    let name = items
        .get(1)
        .ok_or_else(|| syntax(at, "an action name"))
        .and_then(|e| atom_of(e, "an action name"))?;
    let mut op = OperatorSchema::new(name, Vec::new());
    let mut i = 2;
    while i < items.len() {
        let key = atom_of(&items[i], "`:parameters`, `:precondition` or `:effect`")?;
        let value = items
            .get(i + 1)
            .ok_or_else(|| syntax(items[i].pos(), format!("a value after `{key}`")))?;
        match key {
            ":parameters" => {
                op.params = typed_list(list_of(value, "a parameter list")?, true)?
                    .into_iter()
                    .map(|(n, t, _)| Param::new(n, t))
                    .collect();
            }
            ":precondition" => op.preconditions = parse_conjunction(value)?.into_iter().collect(),
            ":effect" => op.effects = parse_conjunction(value)?.into_iter().collect(),
            _ => {
                return Err(syntax(
                    items[i].pos(),
                    "`:parameters`, `:precondition` or `:effect`",
                ))
            }
        }
        i += 2;
    }
    Ok(op)
}

/// Reads domain text without semantic checks. Syntax errors and
/// unsupported features fail; duplicate declarations become diagnostics.
pub fn read_domain(text: &str) -> Result<Parsed<Domain>, PddlError> {
    let root = read(text)?;
    let (name, sections) = expect_header(&root, "domain")?;
    let mut dom = Domain::new(name);
    let mut sources = SourceMap::new();
    let mut diagnostics = Vec::new();
    sources.insert(Location::Domain, root.pos());

    for section in sections {
        let items = list_of(section, "a domain section")?;
        let head = section
            .head()
            .ok_or_else(|| syntax(section.pos(), "a domain section"))?;
        match head {
            ":requirements" => {
                for flag in &items[1..] {
                    let f = atom_of(flag, "a requirement flag")?;
                    if !SUPPORTED_REQUIREMENTS.contains(&f) {
                        return Err(PddlError::UnsupportedFeature(f.to_string()));
                    }
                }
            }
            ":types" => {
                for (ty, parent, pos) in typed_list(&items[1..], false)? {
                    if ty == OBJECT {
                        continue;
                    }
                    sources.insert(Location::Type(ty.clone()), pos);
                    if dom.types.insert(ty.clone(), parent).is_some() {
                        diagnostics.push(Diagnostic::error(
                            Location::Type(ty.clone()),
                            Issue::DuplicateName(ty),
                        ));
                    }
                }
            }
            ":predicates" => {
                for decl in &items[1..] {
                    let parts = list_of(decl, "a predicate declaration")?;
                    let name = parts
                        .first()
                        .ok_or_else(|| syntax(decl.pos(), "a predicate name"))
                        .and_then(|e| atom_of(e, "a predicate name"))?
                        .to_string();
                    let params = typed_list(&parts[1..], true)?
                        .into_iter()
                        .map(|(n, t, _)| Param::new(n, t))
                        .collect();
                    let loc = Location::Predicate(name.clone());
                    sources.insert(loc.clone(), decl.pos());
                    if dom.predicates.contains_key(&name) {
                        diagnostics.push(Diagnostic::error(loc, Issue::DuplicateName(name.clone())));
                    }
                    dom.add_predicate(PredicateSchema::new(name, params));
                }
            }
            ":action" => {
                let op = parse_action(items, section.pos())?;
                let loc = Location::Operator(op.name.clone());
                sources.insert(loc.clone(), section.pos());
                if dom.operators.contains_key(&op.name) {
                    diagnostics.push(Diagnostic::error(loc, Issue::DuplicateName(op.name.clone())));
                }
                dom.add_operator(op);
            }
            ":constants" => return Err(PddlError::UnsupportedFeature(":constants".into())),
            ":functions" => return Err(PddlError::UnsupportedFeature(":numeric-fluents".into())),
            ":derived" => return Err(PddlError::UnsupportedFeature(":derived-predicates".into())),
            ":durative-action" => {
                return Err(PddlError::UnsupportedFeature(":durative-actions".into()))
            }
            _ => return Err(syntax(section.pos(), "a domain section")),
        }
    }
    Ok(Parsed {
        value: dom,
        sources,
        diagnostics,
    })
}

fn ground_atom(e: &SExpr) -> Result<Atom, PddlError> {
    let lit = parse_literal(e)?;
    if !lit.positive {
        return Err(syntax(e.pos(), "a positive atom"));
    }
    let args = lit
        .args
        .iter()
        .map(|t| match t {
            Term::Obj(o) => Ok(o.clone()),
            Term::Var(_) => Err(syntax(e.pos(), "an object name, not a variable")),
        })
        .collect::<Result<_, _>>()?;
    Ok(Atom {
        predicate: lit.predicate,
        args,
    })
}

fn ground_literal(e: &SExpr) -> Result<GroundLiteral, PddlError> {
    if e.head() == Some("not") {
        let items = list_of(e, "`(not (<atom>))`")?;
        if items.len() != 2 {
            return Err(syntax(e.pos(), "`(not (<atom>))`"));
        }
        Ok(GroundLiteral::neg(ground_atom(&items[1])?))
    } else {
        Ok(GroundLiteral::pos(ground_atom(e)?))
    }
}

/// Reads problem text without checking it against a domain.
pub fn read_problem(text: &str) -> Result<Parsed<Problem>, PddlError> {
    let root = read(text)?;
    let (name, sections) = expect_header(&root, "problem")?;
    let mut prob = Problem {
        name,
        ..Problem::default()
    };
    let mut sources = SourceMap::new();
    let mut diagnostics = Vec::new();
    sources.insert(Location::Problem, root.pos());

    for section in sections {
        let items = list_of(section, "a problem section")?;
        let head = section
            .head()
            .ok_or_else(|| syntax(section.pos(), "a problem section"))?;
        match head {
            ":domain" => {
                let d = items
                    .get(1)
                    .ok_or_else(|| syntax(section.pos(), "a domain name"))?;
                prob.domain = atom_of(d, "a domain name")?.to_string();
            }
            ":requirements" => {
                for flag in &items[1..] {
                    let f = atom_of(flag, "a requirement flag")?;
                    if !SUPPORTED_REQUIREMENTS.contains(&f) {
                        return Err(PddlError::UnsupportedFeature(f.to_string()));
                    }
                }
            }
            ":objects" => {
                for (obj, ty, pos) in typed_list(&items[1..], false)? {
                    let loc = Location::Object(obj.clone());
                    sources.insert(loc.clone(), pos);
                    if prob.objects.insert(obj.clone(), ty).is_some() {
                        diagnostics.push(Diagnostic::error(loc, Issue::DuplicateName(obj)));
                    }
                }
            }
            ":init" => {
                sources.insert(Location::Init, section.pos());
                for a in &items[1..] {
                    prob.init.insert(ground_atom(a)?);
                }
            }
            ":goal" => {
                sources.insert(Location::Goal, section.pos());
                let g = items
                    .get(1)
                    .ok_or_else(|| syntax(section.pos(), "a goal formula"))?;
                if items.len() > 2 {
                    return Err(syntax(items[2].pos(), "`)` after the goal formula"));
                }
                let lits = list_of(g, "a goal formula")?;
                if g.head() == Some("and") {
                    for l in &lits[1..] {
                        if let Some(flag) = l.head().and_then(unsupported_formula) {
                            return Err(PddlError::UnsupportedFeature(flag.into()));
                        }
                        prob.goal.insert(ground_literal(l)?);
                    }
                } else if !lits.is_empty() {
                    if let Some(flag) = g.head().and_then(unsupported_formula) {
                        return Err(PddlError::UnsupportedFeature(flag.into()));
                    }
                    prob.goal.insert(ground_literal(g)?);
                }
            }
            ":metric" => return Err(PddlError::UnsupportedFeature(":action-costs".into())),
            _ => return Err(syntax(section.pos(), "a problem section")),
        }
    }
    Ok(Parsed {
        value: prob,
        sources,
        diagnostics,
    })
}

fn first_error(diags: Vec<Diagnostic>) -> Result<(), PddlError> {
    let errors: Vec<Diagnostic> = diags.into_iter().filter(Diagnostic::is_error).collect();
    let Some(first) = errors.first() else {
        return Ok(());
    };
    Err(match &first.issue {
        Issue::Arity {
            predicate,
            expected,
            got,
        } => PddlError::Arity {
            predicate: predicate.clone(),
            expected: *expected,
            got: *got,
        },
        Issue::Undeclared(s) => PddlError::UndeclaredSymbol(s.clone()),
        Issue::DomainMismatch(d) => PddlError::DomainMismatch(d.clone()),
        _ => PddlError::Invalid(errors),
    })
}

/// Parses and validates a domain.
pub fn parse_domain(text: &str) -> Result<Domain, PddlError> {
    let parsed = read_domain(text)?;
    let mut diags = parsed.diagnostics;
    diags.extend(validate_domain(&parsed.value));
    first_error(diags)?;
    Ok(parsed.value)
}

/// Parses a problem and checks it against `dom`.
pub fn parse_problem(text: &str, dom: &Domain) -> Result<Problem, PddlError> {
    let parsed = read_problem(text)?;
    let mut diags = parsed.diagnostics;
    diags.extend(validate_problem(dom, &parsed.value));
    first_error(diags)?;
    Ok(parsed.value)
}

/// Like [`parse_problem`], but binds the problem to `dom` whatever domain
/// name it declares. Model-written problems often get the name wrong.
pub fn parse_problem_as(text: &str, dom: &Domain) -> Result<Problem, PddlError> {
    let mut parsed = read_problem(text)?;
    parsed.value.domain = dom.name.clone();
    let mut diags = parsed.diagnostics;
    diags.extend(validate_problem(dom, &parsed.value));
    first_error(diags)?;
    Ok(parsed.value)
}

/// Strips markdown fences and chatter around the first `(define` form.
pub fn extract_define(text: &str) -> Option<&str> {
    let lower = text.to_ascii_lowercase();
    let start = lower.find("(define")?;
    let bytes = text.as_bytes();
    let mut depth = 0i32;
    let mut in_comment = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        match b {
            b'\n' => in_comment = false,
            _ if in_comment => {}
            b';' => in_comment = true,
            b'(' => depth += 1,
            b')' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..=i]);
                }
            }
            _ => {}
        }
    }
    Some(&text[start..])
}

/// Every `(define ...)` block in `text`, in order.
pub fn extract_all_defines(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(block) = extract_define(rest) {
        out.push(block);
        let end = block.as_ptr() as usize - rest.as_ptr() as usize + block.len();
        rest = &rest[end..];
    }
    out
}

/// Groups objects by declared type for printing.
pub(crate) fn objects_grouped(objects: &BTreeMap<String, String>) -> BTreeMap<&str, Vec<&str>> {
    let mut by_type: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (o, t) in objects {
        by_type.entry(t.as_str()).or_default().push(o.as_str());
    }
    by_type
}
