//! Core terms and patterns of the strategy calculus.
//!
//! Terms cover rewrite rules, the primitive combinators `seq` and `choice`,
//! user combinator abstraction/application, strategy execution, execution
//! results, the nondeterministic result choice, and `let` bindings.
//!
//! Spans are carried for diagnostics only: term equality and hashing ignore
//! them, so the evaluator can deduplicate states structurally.

use std::collections::HashMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::rc::Rc;

use crate::span::Span;

/// A rewrite pattern: the left-hand side of a `rule`.
#[derive(Debug, Clone)]
pub struct Pattern {
    pub kind: PatKind,
    pub span: Option<Span>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PatKind {
    /// Pattern variable.
    Var(String),
    /// Unit pattern `()`.
    Unit,
    /// Pair pattern `(p, q)`.
    Pair(Rc<Pattern>, Rc<Pattern>),
    /// Variant pattern `L p`, matching the label `L`.
    Label(String, Rc<Pattern>),
}

impl PartialEq for Pattern {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}
impl Eq for Pattern {}
impl Hash for Pattern {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.kind.hash(state);
    }
}

impl Pattern {
    pub fn new(kind: PatKind) -> Self {
        Pattern { kind, span: None }
    }

    pub fn with_span(kind: PatKind, span: Span) -> Self {
        Pattern {
            kind,
            span: Some(span),
        }
    }

    /// Variables bound by this pattern, in left-to-right order.
    pub fn vars(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match &self.kind {
            PatKind::Var(x) => out.push(x),
            PatKind::Unit => {}
            PatKind::Pair(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            PatKind::Label(_, p) => p.collect_vars(out),
        }
    }

    /// A pattern is linear when no variable occurs twice.
    pub fn is_linear(&self) -> bool {
        let vars = self.vars();
        let mut seen = std::collections::HashSet::new();
        vars.iter().all(|v| seen.insert(*v))
    }
}

/// A core term.
#[derive(Debug, Clone)]
pub struct CoreTerm {
    pub kind: CoreKind,
    pub span: Option<Span>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CoreKind {
    /// Term variable (let-bound or combinator-bound or pattern-bound).
    Var(String),
    /// Rewrite rule `rule p -> e`.
    Rule(Rc<Pattern>, Rc<CoreTerm>),
    /// Unit constructor `()`.
    Unit,
    /// Pair constructor `(e, e)`.
    Pair(Rc<CoreTerm>, Rc<CoreTerm>),
    /// Variant constructor / label application `L e`.
    Label(String, Rc<CoreTerm>),
    /// Primitive sequential composition combinator.
    Seq,
    /// Primitive nondeterministic choice combinator.
    Choice,
    /// Strategy combinator abstraction `st x => e`.
    StLam(String, Rc<CoreTerm>),
    /// Strategy combinator application `f <= e`.
    CombApp(Rc<CoreTerm>, Rc<CoreTerm>),
    /// Strategy execution `s <- i`.
    Exec(Rc<CoreTerm>, Rc<CoreTerm>),
    /// Successful execution result `succ e`.
    Succ(Rc<CoreTerm>),
    /// Failed execution result.
    Fail,
    /// Nondeterministic choice between two results `a <> b`.
    Alt(Rc<CoreTerm>, Rc<CoreTerm>),
    /// Polymorphic binding `let x = e in b`.
    Let(String, Rc<CoreTerm>, Rc<CoreTerm>),
}

impl PartialEq for CoreTerm {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}
impl Eq for CoreTerm {}
impl Hash for CoreTerm {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.kind.hash(state);
    }
}

impl CoreTerm {
    pub fn new(kind: CoreKind) -> Self {
        CoreTerm { kind, span: None }
    }

    pub fn with_span(kind: CoreKind, span: Span) -> Self {
        CoreTerm {
            kind,
            span: Some(span),
        }
    }

    /// Number of nodes, counting patterns.
    pub fn size(&self) -> usize {
        match &self.kind {
            CoreKind::Var(_) | CoreKind::Unit | CoreKind::Seq | CoreKind::Choice | CoreKind::Fail => 1,
            CoreKind::Rule(p, e) => 1 + pattern_size(p) + e.size(),
            CoreKind::Pair(a, b)
            | CoreKind::CombApp(a, b)
            | CoreKind::Exec(a, b)
            | CoreKind::Alt(a, b) => 1 + a.size() + b.size(),
            CoreKind::Label(_, e) | CoreKind::StLam(_, e) | CoreKind::Succ(e) => 1 + e.size(),
            CoreKind::Let(_, a, b) => 1 + a.size() + b.size(),
        }
    }

    /// Free term variables (rule patterns, `st` and `let` bind).
    pub fn free_vars(&self) -> std::collections::HashSet<String> {
        let mut out = std::collections::HashSet::new();
        self.free_vars_into(&mut Vec::new(), &mut out);
        out
    }

    fn free_vars_into(&self, bound: &mut Vec<String>, out: &mut std::collections::HashSet<String>) {
        match &self.kind {
            CoreKind::Var(x) => {
                if !bound.iter().any(|b| b == x) {
                    out.insert(x.clone());
                }
            }
            CoreKind::Rule(p, e) => {
                let n = bound.len();
                for v in p.vars() {
                    bound.push(v.to_string());
                }
                e.free_vars_into(bound, out);
                bound.truncate(n);
            }
            CoreKind::StLam(x, e) => {
                bound.push(x.clone());
                e.free_vars_into(bound, out);
                bound.pop();
            }
            CoreKind::Let(x, a, b) => {
                a.free_vars_into(bound, out);
                bound.push(x.clone());
                b.free_vars_into(bound, out);
                bound.pop();
            }
            CoreKind::Unit | CoreKind::Seq | CoreKind::Choice | CoreKind::Fail => {}
            CoreKind::Pair(a, b)
            | CoreKind::CombApp(a, b)
            | CoreKind::Exec(a, b)
            | CoreKind::Alt(a, b) => {
                a.free_vars_into(bound, out);
                b.free_vars_into(bound, out);
            }
            CoreKind::Label(_, e) | CoreKind::Succ(e) => e.free_vars_into(bound, out),
        }
    }

    pub fn is_closed(&self) -> bool {
        self.free_vars().is_empty()
    }

    /// Combinator values: `seq`, `choice`, or a combinator value applied to a
    /// value. Partial applications are irreducible.
    pub fn is_combinator_value(&self) -> bool {
        match &self.kind {
            CoreKind::Seq | CoreKind::Choice => true,
            CoreKind::CombApp(f, a) => f.is_combinator_value() && a.is_value(),
            _ => false,
        }
    }

    /// The value predicate.
    pub fn is_value(&self) -> bool {
        match &self.kind {
            CoreKind::StLam(_, _) | CoreKind::Rule(_, _) | CoreKind::Unit | CoreKind::Fail => true,
            CoreKind::Seq | CoreKind::Choice => true,
            CoreKind::CombApp(_, _) => self.is_combinator_value(),
            CoreKind::Label(_, e) | CoreKind::Succ(e) => e.is_value(),
            CoreKind::Pair(a, b) => a.is_value() && b.is_value(),
            _ => false,
        }
    }

    /// Capture-avoiding substitution of term variables. The replacements are
    /// expected to be closed (values during evaluation), so capture cannot
    /// occur; binders still shadow.
    pub fn subst(&self, map: &HashMap<String, CoreTerm>) -> CoreTerm {
        if map.is_empty() {
            return self.clone();
        }
        let kind = match &self.kind {
            CoreKind::Var(x) => match map.get(x) {
                Some(t) => return t.clone(),
                None => CoreKind::Var(x.clone()),
            },
            CoreKind::Rule(p, e) => {
                let shadowed: Vec<&str> = p.vars();
                let inner: HashMap<String, CoreTerm> = map
                    .iter()
                    .filter(|(k, _)| !shadowed.contains(&k.as_str()))
                    .map(|(k, v)| (k.clone(), v.clone()))
                    .collect();
                CoreKind::Rule(p.clone(), Rc::new(e.subst(&inner)))
            }
            CoreKind::StLam(x, e) => {
                let mut inner = map.clone();
                inner.remove(x);
                CoreKind::StLam(x.clone(), Rc::new(e.subst(&inner)))
            }
            CoreKind::Let(x, a, b) => {
                let mut inner = map.clone();
                inner.remove(x);
                CoreKind::Let(x.clone(), Rc::new(a.subst(map)), Rc::new(b.subst(&inner)))
            }
            CoreKind::Unit => CoreKind::Unit,
            CoreKind::Seq => CoreKind::Seq,
            CoreKind::Choice => CoreKind::Choice,
            CoreKind::Fail => CoreKind::Fail,
            CoreKind::Pair(a, b) => CoreKind::Pair(Rc::new(a.subst(map)), Rc::new(b.subst(map))),
            CoreKind::CombApp(a, b) => {
                CoreKind::CombApp(Rc::new(a.subst(map)), Rc::new(b.subst(map)))
            }
            CoreKind::Exec(a, b) => CoreKind::Exec(Rc::new(a.subst(map)), Rc::new(b.subst(map))),
            CoreKind::Alt(a, b) => CoreKind::Alt(Rc::new(a.subst(map)), Rc::new(b.subst(map))),
            CoreKind::Label(l, e) => CoreKind::Label(l.clone(), Rc::new(e.subst(map))),
            CoreKind::Succ(e) => CoreKind::Succ(Rc::new(e.subst(map))),
        };
        CoreTerm { kind, span: self.span }
    }

    /// Canonical JSON form: node-kind tag plus children.
    pub fn to_json(&self) -> serde_json::Value {
        use serde_json::json;
        match &self.kind {
            CoreKind::Var(x) => json!({"kind": "var", "name": x}),
            CoreKind::Rule(p, e) => {
                json!({"kind": "rule", "pattern": pattern_to_json(p), "body": e.to_json()})
            }
            CoreKind::Unit => json!({"kind": "unit"}),
            CoreKind::Pair(a, b) => json!({"kind": "pair", "fst": a.to_json(), "snd": b.to_json()}),
            CoreKind::Label(l, e) => json!({"kind": "label", "label": l, "arg": e.to_json()}),
            CoreKind::Seq => json!({"kind": "seq"}),
            CoreKind::Choice => json!({"kind": "choice"}),
            CoreKind::StLam(x, e) => json!({"kind": "st", "var": x, "body": e.to_json()}),
            CoreKind::CombApp(f, a) => {
                json!({"kind": "combApp", "fun": f.to_json(), "arg": a.to_json()})
            }
            CoreKind::Exec(s, i) => {
                json!({"kind": "exec", "strategy": s.to_json(), "input": i.to_json()})
            }
            CoreKind::Succ(e) => json!({"kind": "succ", "arg": e.to_json()}),
            CoreKind::Fail => json!({"kind": "fail"}),
            CoreKind::Alt(a, b) => json!({"kind": "alt", "left": a.to_json(), "right": b.to_json()}),
            CoreKind::Let(x, a, b) => {
                json!({"kind": "let", "var": x, "bound": a.to_json(), "body": b.to_json()})
            }
        }
    }
}

fn pattern_size(p: &Pattern) -> usize {
    match &p.kind {
        PatKind::Var(_) | PatKind::Unit => 1,
        PatKind::Pair(a, b) => 1 + pattern_size(a) + pattern_size(b),
        PatKind::Label(_, q) => 1 + pattern_size(q),
    }
}

pub fn pattern_to_json(p: &Pattern) -> serde_json::Value {
    use serde_json::json;
    match &p.kind {
        PatKind::Var(x) => json!({"kind": "var", "name": x}),
        PatKind::Unit => json!({"kind": "unit"}),
        PatKind::Pair(a, b) => {
            json!({"kind": "pair", "fst": pattern_to_json(a), "snd": pattern_to_json(b)})
        }
        PatKind::Label(l, q) => json!({"kind": "label", "label": l, "arg": pattern_to_json(q)}),
    }
}

/// Pattern-to-term conversion: patterns embed into terms structurally.
pub fn p2e(p: &Pattern) -> CoreTerm {
    let kind = match &p.kind {
        PatKind::Var(x) => CoreKind::Var(x.clone()),
        PatKind::Unit => CoreKind::Unit,
        PatKind::Pair(a, b) => CoreKind::Pair(Rc::new(p2e(a)), Rc::new(p2e(b))),
        PatKind::Label(l, q) => CoreKind::Label(l.clone(), Rc::new(p2e(q))),
    };
    CoreTerm { kind, span: p.span }
}

/// Construction helpers used by the desugarer, the generators and tests.
pub mod mk {
    use super::*;

    pub fn var(x: &str) -> CoreTerm {
        CoreTerm::new(CoreKind::Var(x.to_string()))
    }
    pub fn unit() -> CoreTerm {
        CoreTerm::new(CoreKind::Unit)
    }
    pub fn pair(a: CoreTerm, b: CoreTerm) -> CoreTerm {
        CoreTerm::new(CoreKind::Pair(Rc::new(a), Rc::new(b)))
    }
    pub fn label(l: &str, e: CoreTerm) -> CoreTerm {
        CoreTerm::new(CoreKind::Label(l.to_string(), Rc::new(e)))
    }
    /// A number literal: the numeral applied to unit.
    pub fn num(n: u64) -> CoreTerm {
        label(&n.to_string(), unit())
    }
    /// Binary operator expression `l OP r`, encoded as
    /// `Op (OPLABEL (), (l, r))`.
    pub fn binop(op: &str, l: CoreTerm, r: CoreTerm) -> CoreTerm {
        label("Op", pair(label(op, unit()), pair(l, r)))
    }
    /// Binary expression with an operator term in the operator slot.
    pub fn binop_term(op: CoreTerm, l: CoreTerm, r: CoreTerm) -> CoreTerm {
        label("Op", pair(op, pair(l, r)))
    }
    pub fn rule(p: Pattern, e: CoreTerm) -> CoreTerm {
        CoreTerm::new(CoreKind::Rule(Rc::new(p), Rc::new(e)))
    }
    pub fn st(x: &str, e: CoreTerm) -> CoreTerm {
        CoreTerm::new(CoreKind::StLam(x.to_string(), Rc::new(e)))
    }
    pub fn comb_app(f: CoreTerm, a: CoreTerm) -> CoreTerm {
        CoreTerm::new(CoreKind::CombApp(Rc::new(f), Rc::new(a)))
    }
    pub fn seq(a: CoreTerm, b: CoreTerm) -> CoreTerm {
        comb_app(comb_app(CoreTerm::new(CoreKind::Seq), a), b)
    }
    pub fn choice(a: CoreTerm, b: CoreTerm) -> CoreTerm {
        comb_app(comb_app(CoreTerm::new(CoreKind::Choice), a), b)
    }
    pub fn exec(s: CoreTerm, i: CoreTerm) -> CoreTerm {
        CoreTerm::new(CoreKind::Exec(Rc::new(s), Rc::new(i)))
    }
    pub fn succ(e: CoreTerm) -> CoreTerm {
        CoreTerm::new(CoreKind::Succ(Rc::new(e)))
    }
    pub fn fail() -> CoreTerm {
        CoreTerm::new(CoreKind::Fail)
    }
    pub fn alt(a: CoreTerm, b: CoreTerm) -> CoreTerm {
        CoreTerm::new(CoreKind::Alt(Rc::new(a), Rc::new(b)))
    }
    pub fn let_in(x: &str, a: CoreTerm, b: CoreTerm) -> CoreTerm {
        CoreTerm::new(CoreKind::Let(x.to_string(), Rc::new(a), Rc::new(b)))
    }

    pub fn pvar(x: &str) -> Pattern {
        Pattern::new(PatKind::Var(x.to_string()))
    }
    pub fn punit() -> Pattern {
        Pattern::new(PatKind::Unit)
    }
    pub fn ppair(a: Pattern, b: Pattern) -> Pattern {
        Pattern::new(PatKind::Pair(Rc::new(a), Rc::new(b)))
    }
    pub fn plabel(l: &str, p: Pattern) -> Pattern {
        Pattern::new(PatKind::Label(l.to_string(), Rc::new(p)))
    }
    pub fn pnum(n: u64) -> Pattern {
        plabel(&n.to_string(), punit())
    }
    pub fn pbinop(op: &str, l: Pattern, r: Pattern) -> Pattern {
        plabel("Op", ppair(plabel(op, punit()), ppair(l, r)))
    }
    /// Binary pattern with an operator variable in the operator slot.
    pub fn pbinop_var(op: &str, l: Pattern, r: Pattern) -> Pattern {
        plabel("Op", ppair(pvar(op), ppair(l, r)))
    }
}

/// Operator label for an operator token, `*` -> `Mul` and so on.
pub fn op_label(tok: char) -> Option<&'static str> {
    match tok {
        '*' => Some("Mul"),
        '+' => Some("Add"),
        '-' => Some("Sub"),
        '/' => Some("Div"),
        _ => None,
    }
}

/// Operator token for an operator label, the inverse of [`op_label`].
pub fn op_token(label: &str) -> Option<char> {
    match label {
        "Mul" => Some('*'),
        "Add" => Some('+'),
        "Sub" => Some('-'),
        "Div" => Some('/'),
        _ => None,
    }
}

impl fmt::Display for CoreTerm {
    /// Debug-ish display in the core syntax (not the surface sugar; see
    /// `surface::print_term` for that).
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            CoreKind::Var(x) => write!(f, "{x}"),
            CoreKind::Rule(p, e) => write!(f, "rule {p} -> {e}"),
            CoreKind::Unit => write!(f, "()"),
            CoreKind::Pair(a, b) => write!(f, "({a}, {b})"),
            CoreKind::Label(l, e) => write!(f, "{l} {}", Paren(e)),
            CoreKind::Seq => write!(f, "seq"),
            CoreKind::Choice => write!(f, "choice"),
            CoreKind::StLam(x, e) => write!(f, "st {x} => {e}"),
            CoreKind::CombApp(g, a) => write!(f, "{} <= {}", Paren(g), Paren(a)),
            CoreKind::Exec(s, i) => write!(f, "{} <- {}", Paren(s), Paren(i)),
            CoreKind::Succ(e) => write!(f, "succ {}", Paren(e)),
            CoreKind::Fail => write!(f, "fail"),
            CoreKind::Alt(a, b) => write!(f, "{} <> {}", Paren(a), Paren(b)),
            CoreKind::Let(x, a, b) => write!(f, "let {x} = {a} in {b}"),
        }
    }
}

struct Paren<'a>(&'a CoreTerm);

impl fmt::Display for Paren<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0.kind {
            CoreKind::Var(_) | CoreKind::Unit | CoreKind::Seq | CoreKind::Choice | CoreKind::Fail => {
                write!(f, "{}", self.0)
            }
            CoreKind::Pair(_, _) => write!(f, "{}", self.0),
            _ => write!(f, "({})", self.0),
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            PatKind::Var(x) => write!(f, "{x}"),
            PatKind::Unit => write!(f, "()"),
            PatKind::Pair(a, b) => write!(f, "({a}, {b})"),
            PatKind::Label(l, p) => match &p.kind {
                PatKind::Var(_) | PatKind::Unit | PatKind::Pair(_, _) => write!(f, "{l} {p}"),
                _ => write!(f, "{l} ({p})"),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::mk::*;
    use super::*;

    /// Independent oracle for p2e: structural induction comparing node by
    /// node, written without consulting `p2e` itself.
    fn p2e_matches(p: &Pattern, e: &CoreTerm) -> bool {
        match (&p.kind, &e.kind) {
            (PatKind::Var(x), CoreKind::Var(y)) => x == y,
            (PatKind::Unit, CoreKind::Unit) => true,
            (PatKind::Pair(pa, pb), CoreKind::Pair(ea, eb)) => {
                p2e_matches(pa, ea) && p2e_matches(pb, eb)
            }
            (PatKind::Label(pl, pq), CoreKind::Label(el, eq)) => pl == el && p2e_matches(pq, eq),
            _ => false,
        }
    }

    #[test]
    fn p2e_on_variable() {
        assert_eq!(p2e(&pvar("x")), var("x"));
    }

    #[test]
    fn p2e_on_unit() {
        assert_eq!(p2e(&punit()), unit());
    }

    #[test]
    fn p2e_preserves_structure() {
        let p = pbinop_var("op", pvar("m"), pvar("n"));
        let e = p2e(&p);
        assert!(p2e_matches(&p, &e));
        assert_eq!(e, binop_term(var("op"), var("m"), var("n")));
    }

    #[test]
    fn value_predicate_matches_grammar() {
        assert!(fail().is_value());
        assert!(succ(num(10)).is_value());
        assert!(seq(rule(punit(), unit()), rule(punit(), unit())).is_value());
        // Partial application of a primitive combinator is a combinator value.
        assert!(comb_app(CoreTerm::new(CoreKind::Seq), rule(punit(), unit())).is_value());
        // Applying an `st` abstraction is a redex, not a value.
        assert!(!comb_app(st("x", var("x")), rule(punit(), unit())).is_value());
        assert!(!exec(rule(punit(), unit()), succ(unit())).is_value());
        assert!(!alt(fail(), fail()).is_value());
        assert!(!let_in("x", fail(), var("x")).is_value());
    }

    #[test]
    fn subst_shadows_binders() {
        let mut map = HashMap::new();
        map.insert("x".to_string(), num(1));
        // rule x -> x keeps its own x
        let r = rule(pvar("x"), var("x"));
        assert_eq!(r.subst(&map), r);
        // st shadows
        let s = st("x", var("x"));
        assert_eq!(s.subst(&map), s);
        // free occurrence is replaced
        assert_eq!(var("x").subst(&map), num(1));
    }

    #[test]
    fn equality_ignores_spans() {
        let a = CoreTerm::with_span(CoreKind::Unit, Span::new(0, 2));
        let b = CoreTerm::new(CoreKind::Unit);
        assert_eq!(a, b);
    }

    #[test]
    fn size_counts_nodes() {
        assert_eq!(unit().size(), 1);
        assert_eq!(pair(unit(), unit()).size(), 3);
        assert_eq!(rule(pvar("x"), var("x")).size(), 3);
    }
}
