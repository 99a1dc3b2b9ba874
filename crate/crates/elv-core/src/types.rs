//! Types, traces, kinds, schemes and environments.
//!
//! The type universe has three layers: traceable types ([`Ty`], the shapes of
//! rewritten expressions), row types ([`Row`], the basis of variants), and
//! traced types ([`Traced`]: execution results, strategies, strategy
//! combinators). Traces are an extra layer of information overlaid on the
//! traceable types: every traceable position may carry a set of trace
//! variables, and a trace (identifier plus member set) stands for one
//! possible rewrite path.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::rc::Rc;

/// A type or row variable. Kinds tell the two apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TyVar(pub u32);

/// A trace identifier, the root variable naming one trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TraceId(pub u32);

/// A trace member, marking one pattern-variable position within a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TraceMem(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TraceVar {
    Id(TraceId),
    Mem(TraceMem),
}

/// A trace-variable annotation set attached to a traceable type position.
pub type Ann = BTreeSet<TraceVar>;

/// One trace: its identifier and the member variables belonging to it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub id: TraceId,
    pub members: BTreeSet<TraceMem>,
}

/// The tracing environment: an ordered collection of traces with pairwise
/// distinct identifiers (no contraction).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TracingEnv(pub Vec<Trace>);

impl TracingEnv {
    pub fn empty() -> Self {
        TracingEnv(Vec::new())
    }

    pub fn single(id: TraceId, members: BTreeSet<TraceMem>) -> Self {
        TracingEnv(vec![Trace { id, members }])
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ids(&self) -> Vec<TraceId> {
        self.0.iter().map(|t| t.id).collect()
    }

    pub fn lookup(&self, id: TraceId) -> Option<&Trace> {
        self.0.iter().find(|t| t.id == id)
    }

    /// Trace owning a member, if any.
    pub fn owner_of(&self, m: TraceMem) -> Option<TraceId> {
        self.0
            .iter()
            .find(|t| t.members.contains(&m))
            .map(|t| t.id)
    }

    /// Concatenation; identifiers must stay distinct.
    pub fn concat(&self, other: &TracingEnv) -> TracingEnv {
        let mut out = self.0.clone();
        for tr in &other.0 {
            debug_assert!(
                !out.iter().any(|t| t.id == tr.id),
                "tracing environments must have disjoint identifiers"
            );
            out.push(tr.clone());
        }
        TracingEnv(out)
    }

    pub fn push(&mut self, trace: Trace) {
        debug_assert!(!self.0.iter().any(|t| t.id == trace.id));
        self.0.push(trace);
    }
}

/// Kinds: row kinds carry the labels an instantiation must not contain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Kind {
    /// Row kind with its lacks set.
    Row(BTreeSet<String>),
    /// Kind of traceable types.
    Traceable,
    /// The super kind of traceable and traced types.
    General,
}

/// Traceable types.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Ty {
    /// Type variable.
    Var(TyVar, Ann),
    /// Unit; the only type that may carry trace identifiers directly.
    Unit(Ann),
    /// Pair.
    Pair(Rc<Ty>, Rc<Ty>, Ann),
    /// Variant type over a row.
    Variant(Row, Ann),
    /// Equi-recursive variant `v as <row>`; `v` is bound inside the row.
    Rec(TyVar, Row, Ann),
}

/// Row types: label/type sequences ending in a row variable or the empty row.
/// Construction keeps entries sorted by label; order is not significant.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Row {
    Var(TyVar),
    Empty,
    Ext(String, Rc<Ty>, Rc<Row>),
}

/// A strategy type: possible inputs and outputs, one trace per rewrite path.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StrategyTy {
    pub ids: BTreeSet<TraceId>,
    pub input: Ty,
    pub output: Ty,
}

/// Traced types.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Traced {
    /// Execution result type.
    Result { ids: BTreeSet<TraceId>, body: Ty },
    /// Strategy type.
    Strategy(StrategyTy),
    /// Strategy combinator type: parameter strategy and return traced type.
    Combinator(Box<StrategyTy>, Box<Traced>),
}

impl Traced {
    pub fn strategy(ids: BTreeSet<TraceId>, input: Ty, output: Ty) -> Traced {
        Traced::Strategy(StrategyTy { ids, input, output })
    }

    pub fn result(ids: BTreeSet<TraceId>, body: Ty) -> Traced {
        Traced::Result { ids, body }
    }

    pub fn as_strategy(&self) -> Option<&StrategyTy> {
        match self {
            Traced::Strategy(s) => Some(s),
            _ => None,
        }
    }

    /// The rightmost non-combinator component: what a full application of a
    /// combinator eventually returns.
    pub fn return_component(&self) -> &Traced {
        match self {
            Traced::Combinator(_, ret) => ret.return_component(),
            other => other,
        }
    }

    /// Identifier set of the return component (strategies and results).
    pub fn return_ids(&self) -> &BTreeSet<TraceId> {
        match self.return_component() {
            Traced::Result { ids, .. } => ids,
            Traced::Strategy(s) => &s.ids,
            Traced::Combinator(_, _) => unreachable!(),
        }
    }
}

/// A type scheme: a bound tracing environment plus universally quantified
/// type/row variables over a traced type.
#[derive(Debug, Clone)]
pub struct Scheme {
    pub phi: TracingEnv,
    pub foralls: Vec<(TyVar, Kind)>,
    pub body: Traced,
}

/// Rule environment: absent outside rules; inside a rule it is non-empty even
/// with no pattern variables (the nameless placeholder).
pub type RuleEnv = Option<Vec<(String, Ty)>>;

/// Strategy combinator environment: `st`-bound variables with strategy types.
/// Ordered, no duplicate names.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CombEnv(pub Vec<(String, StrategyTy)>);

impl CombEnv {
    pub fn empty() -> Self {
        CombEnv(Vec::new())
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
    pub fn lookup(&self, name: &str) -> Option<&StrategyTy> {
        self.0.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
    pub fn names(&self) -> Vec<&str> {
        self.0.iter().map(|(n, _)| n.as_str()).collect()
    }
}

/// Typing environment for let-bound variables.
pub type Gamma = HashMap<String, Scheme>;

// ---------------------------------------------------------------------------
// Annotation and construction helpers
// ---------------------------------------------------------------------------

impl Ty {
    pub fn unit() -> Ty {
        Ty::Unit(Ann::new())
    }

    pub fn var(v: TyVar) -> Ty {
        Ty::Var(v, Ann::new())
    }

    pub fn pair(a: Ty, b: Ty) -> Ty {
        Ty::Pair(Rc::new(a), Rc::new(b), Ann::new())
    }

    pub fn ann(&self) -> &Ann {
        match self {
            Ty::Var(_, a) | Ty::Unit(a) | Ty::Pair(_, _, a) | Ty::Variant(_, a) | Ty::Rec(_, _, a) => a,
        }
    }

    pub fn ann_mut(&mut self) -> &mut Ann {
        match self {
            Ty::Var(_, a) | Ty::Unit(a) | Ty::Pair(_, _, a) | Ty::Variant(_, a) | Ty::Rec(_, _, a) => a,
        }
    }

    pub fn with_ann(mut self, ann: Ann) -> Ty {
        *self.ann_mut() = ann;
        self
    }

    /// Add trace variables to the existing annotation.
    pub fn add_ann(mut self, extra: &Ann) -> Ty {
        self.ann_mut().extend(extra.iter().cloned());
        self
    }

    pub fn strip_ann(&self) -> Ty {
        self.clone().with_ann(Ann::new())
    }

    /// First member variable in the annotation, if any.
    pub fn member_ann(&self) -> Option<TraceMem> {
        self.ann().iter().find_map(|v| match v {
            TraceVar::Mem(m) => Some(*m),
            TraceVar::Id(_) => None,
        })
    }
}

/// Build a row from entries and a tail, sorting entries by label.
pub fn row_from(mut entries: Vec<(String, Ty)>, tail: Row) -> Row {
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    let mut row = tail;
    for (l, t) in entries.into_iter().rev() {
        row = Row::Ext(l, Rc::new(t), Rc::new(row));
    }
    row
}

impl Row {
    /// Entries (in stored order) and the tail.
    pub fn entries(&self) -> (Vec<(&str, &Ty)>, &Row) {
        let mut out = Vec::new();
        let mut cur = self;
        loop {
            match cur {
                Row::Ext(l, t, rest) => {
                    out.push((l.as_str(), t.as_ref()));
                    cur = rest;
                }
                _ => return (out, cur),
            }
        }
    }

    pub fn labels(&self) -> Vec<&str> {
        self.entries().0.into_iter().map(|(l, _)| l).collect()
    }
}

// ---------------------------------------------------------------------------
// Erasure
// ---------------------------------------------------------------------------

/// Remove all trace information from a traceable type.
pub fn erase_ty(t: &Ty) -> Ty {
    match t {
        Ty::Var(v, _) => Ty::Var(*v, Ann::new()),
        Ty::Unit(_) => Ty::Unit(Ann::new()),
        Ty::Pair(a, b, _) => Ty::Pair(Rc::new(erase_ty(a)), Rc::new(erase_ty(b)), Ann::new()),
        Ty::Variant(r, _) => Ty::Variant(erase_row(r), Ann::new()),
        Ty::Rec(v, r, _) => Ty::Rec(*v, erase_row(r), Ann::new()),
    }
}

pub fn erase_row(r: &Row) -> Row {
    match r {
        Row::Var(v) => Row::Var(*v),
        Row::Empty => Row::Empty,
        Row::Ext(l, t, rest) => Row::Ext(l.clone(), Rc::new(erase_ty(t)), Rc::new(erase_row(rest))),
    }
}

pub fn erase_traced(t: &Traced) -> Traced {
    match t {
        Traced::Result { body, .. } => Traced::result(BTreeSet::new(), erase_ty(body)),
        Traced::Strategy(s) => Traced::strategy(BTreeSet::new(), erase_ty(&s.input), erase_ty(&s.output)),
        Traced::Combinator(p, ret) => Traced::Combinator(
            Box::new(StrategyTy {
                ids: BTreeSet::new(),
                input: erase_ty(&p.input),
                output: erase_ty(&p.output),
            }),
            Box::new(erase_traced(ret)),
        ),
    }
}

pub fn erase_comb_env(env: &CombEnv) -> CombEnv {
    CombEnv(
        env.0
            .iter()
            .map(|(n, s)| {
                (
                    n.clone(),
                    StrategyTy {
                        ids: BTreeSet::new(),
                        input: erase_ty(&s.input),
                        output: erase_ty(&s.output),
                    },
                )
            })
            .collect(),
    )
}

// ---------------------------------------------------------------------------
// Equi-recursive fold/unfold
// ---------------------------------------------------------------------------

/// Unfold one level of an equi-recursive variant: the bound variable is
/// replaced by the erased recursive type, so traces survive the conversion
/// unchanged on the outer row.
pub fn unfold_rec(t: &Ty) -> Option<Ty> {
    match t {
        Ty::Rec(v, row, ann) => {
            let erased = erase_ty(&Ty::Rec(*v, row.clone(), Ann::new()));
            let row = subst_tyvar_in_row(row, *v, &erased);
            Some(Ty::Variant(row, ann.clone()))
        }
        _ => None,
    }
}

/// Maximal refolding: when a variant is the unfolding of a recursive type
/// appearing inside it, collapse it back to the folded form. Self-copies are
/// only collapsed when they carry no interior trace annotations (the
/// conversion rule erases traces in substituted copies); annotations on the
/// row itself and on the roots of self-copies survive.
pub fn refold_variant(t: &Ty) -> Option<Ty> {
    let (row, ann) = match t {
        Ty::Variant(row, ann) => (row, ann),
        _ => return None,
    };
    let mut candidates = Vec::new();
    collect_recs_in_row(row, &mut candidates);
    for rec in candidates {
        let Ty::Rec(binder, _, _) = &rec else { continue };
        let erased_rec = erase_ty(&rec);
        let unfolded = unfold_rec(&erased_rec).expect("recs unfold");
        if !ty_shallow_erased_eq(&erase_ty(t), &unfolded) {
            continue;
        }
        let folded_row = match refold_row(row, &erased_rec, *binder) {
            Some(r) => r,
            None => continue,
        };
        let folded = Ty::Rec(*binder, folded_row, ann.clone());
        // the fold must reproduce the original erasure when unfolded
        if let Some(check) = unfold_rec(&erase_ty(&folded)) {
            if ty_shallow_erased_eq(&check, &erase_ty(t)) {
                return Some(folded);
            }
        }
    }
    None
}

/// Syntactic equality of erased types (rows already sorted by construction).
fn ty_shallow_erased_eq(a: &Ty, b: &Ty) -> bool {
    a == b
}

fn refold_row(row: &Row, target: &Ty, binder: TyVar) -> Option<Row> {
    match row {
        Row::Ext(l, t, rest) => {
            let t2 = refold_ty(t, target, binder)?;
            let rest2 = refold_row(rest, target, binder)?;
            Some(Row::Ext(l.clone(), Rc::new(t2), Rc::new(rest2)))
        }
        other => Some(other.clone()),
    }
}

fn refold_ty(t: &Ty, target: &Ty, binder: TyVar) -> Option<Ty> {
    if &erase_ty(t) == target {
        // a self-copy: collapsible only when its interior carries no traces
        let mut inner = BTreeSet::new();
        trace_vars_ty(&t.strip_ann(), &mut inner);
        if inner.is_empty() {
            return Some(Ty::Var(binder, t.ann().clone()));
        }
        return None;
    }
    match t {
        Ty::Var(_, _) | Ty::Unit(_) => Some(t.clone()),
        Ty::Pair(a, b, ann) => Some(Ty::Pair(
            Rc::new(refold_ty(a, target, binder)?),
            Rc::new(refold_ty(b, target, binder)?),
            ann.clone(),
        )),
        Ty::Variant(r, ann) => Some(Ty::Variant(refold_row(r, target, binder)?, ann.clone())),
        // nested recursive types stay as they are
        Ty::Rec(_, _, _) => Some(t.clone()),
    }
}

/// Attempt the inverse conversion: find a recursive subtree of `t` whose
/// unfolding matches `t` and rebuild the folded form, keeping outer traces.
pub fn fold_rec(t: &Ty) -> Option<Ty> {
    let (row, ann) = match t {
        Ty::Variant(row, ann) => (row, ann),
        _ => return None,
    };
    let mut candidates = Vec::new();
    collect_recs_in_row(row, &mut candidates);
    for rec in candidates {
        let erased_rec = erase_ty(&rec);
        if let Ty::Rec(v, _, _) = &rec {
            let folded_row = replace_erased_in_row(row, &erased_rec, *v);
            let folded = Ty::Rec(*v, folded_row, ann.clone());
            if let Some(unf) = unfold_rec(&erase_ty(&folded)) {
                if ty_eq(&unf, &erase_ty(t)) {
                    return Some(folded);
                }
            }
        }
    }
    None
}

fn collect_recs_in_row(row: &Row, out: &mut Vec<Ty>) {
    if let Row::Ext(_, t, rest) = row {
        collect_recs_in_ty(t, out);
        collect_recs_in_row(rest, out);
    }
}

fn collect_recs_in_ty(t: &Ty, out: &mut Vec<Ty>) {
    match t {
        Ty::Rec(v, r, _) => out.push(Ty::Rec(*v, r.clone(), Ann::new())),
        Ty::Pair(a, b, _) => {
            collect_recs_in_ty(a, out);
            collect_recs_in_ty(b, out);
        }
        Ty::Variant(r, _) => collect_recs_in_row(r, out),
        _ => {}
    }
}

fn replace_erased_in_ty(t: &Ty, target: &Ty, v: TyVar) -> Ty {
    if ty_eq(&erase_ty(t), target) {
        return Ty::Var(v, t.ann().clone());
    }
    match t {
        Ty::Pair(a, b, ann) => Ty::Pair(
            Rc::new(replace_erased_in_ty(a, target, v)),
            Rc::new(replace_erased_in_ty(b, target, v)),
            ann.clone(),
        ),
        Ty::Variant(r, ann) => Ty::Variant(replace_erased_in_row(r, target, v), ann.clone()),
        other => other.clone(),
    }
}

fn replace_erased_in_row(row: &Row, target: &Ty, v: TyVar) -> Row {
    match row {
        Row::Ext(l, t, rest) => Row::Ext(
            l.clone(),
            Rc::new(replace_erased_in_ty(t, target, v)),
            Rc::new(replace_erased_in_row(rest, target, v)),
        ),
        other => other.clone(),
    }
}

/// Substitute a traceable type for a type variable, keeping the annotation of
/// each replaced occurrence.
pub fn subst_tyvar_in_ty(t: &Ty, v: TyVar, replacement: &Ty) -> Ty {
    match t {
        Ty::Var(x, ann) if *x == v => replacement.clone().add_ann(ann),
        Ty::Var(_, _) | Ty::Unit(_) => t.clone(),
        Ty::Pair(a, b, ann) => Ty::Pair(
            Rc::new(subst_tyvar_in_ty(a, v, replacement)),
            Rc::new(subst_tyvar_in_ty(b, v, replacement)),
            ann.clone(),
        ),
        Ty::Variant(r, ann) => Ty::Variant(subst_tyvar_in_row(r, v, replacement), ann.clone()),
        Ty::Rec(b, r, ann) if *b != v => {
            Ty::Rec(*b, subst_tyvar_in_row(r, v, replacement), ann.clone())
        }
        Ty::Rec(_, _, _) => t.clone(),
    }
}

pub fn subst_tyvar_in_row(r: &Row, v: TyVar, replacement: &Ty) -> Row {
    match r {
        Row::Ext(l, t, rest) => Row::Ext(
            l.clone(),
            Rc::new(subst_tyvar_in_ty(t, v, replacement)),
            Rc::new(subst_tyvar_in_row(rest, v, replacement)),
        ),
        other => other.clone(),
    }
}

// ---------------------------------------------------------------------------
// Equality up to row reordering and equi-recursive conversion
// ---------------------------------------------------------------------------

/// Structural type equality: row entries are compared order-insensitively and
/// equi-recursive variants by coinductive unfolding. Free variables compare
/// by identity; bound recursion variables are eliminated by unfolding.
pub fn ty_eq(a: &Ty, b: &Ty) -> bool {
    ty_eq_inner(a, b, &mut HashSet::new())
}

fn ty_eq_inner(a: &Ty, b: &Ty, assumed: &mut HashSet<(Ty, Ty)>) -> bool {
    if a.ann() != b.ann() {
        return false;
    }
    match (a, b) {
        (Ty::Var(x, _), Ty::Var(y, _)) => x == y,
        (Ty::Unit(_), Ty::Unit(_)) => true,
        (Ty::Pair(a1, a2, _), Ty::Pair(b1, b2, _)) => {
            ty_eq_inner(a1, b1, assumed) && ty_eq_inner(a2, b2, assumed)
        }
        (Ty::Variant(ra, _), Ty::Variant(rb, _)) => row_eq(ra, rb, assumed),
        (Ty::Rec(_, _, _), _) | (_, Ty::Rec(_, _, _)) => {
            let key = (a.strip_ann(), b.strip_ann());
            if assumed.contains(&key) {
                return true;
            }
            assumed.insert(key);
            let ua = unfold_rec(a).unwrap_or_else(|| a.clone());
            let ub = unfold_rec(b).unwrap_or_else(|| b.clone());
            ty_eq_inner(&ua, &ub, assumed)
        }
        _ => false,
    }
}

fn row_eq(a: &Row, b: &Row, assumed: &mut HashSet<(Ty, Ty)>) -> bool {
    let (ea, ta) = a.entries();
    let (eb, tb) = b.entries();
    if ea.len() != eb.len() {
        return false;
    }
    let mut ma: BTreeMap<&str, &Ty> = BTreeMap::new();
    for (l, t) in ea {
        ma.insert(l, t);
    }
    for (l, t) in eb {
        match ma.get(l) {
            Some(t2) if ty_eq_inner(t2, t, assumed) => {}
            _ => return false,
        }
    }
    match (ta, tb) {
        (Row::Empty, Row::Empty) => true,
        (Row::Var(x), Row::Var(y)) => x == y,
        _ => false,
    }
}

/// Alpha-equivalence of trace-erased types: type and row variables compare
/// up to a consistent bijection, rows up to reordering, recursive variants
/// coinductively.
pub fn ty_alpha_eq(a: &Ty, b: &Ty) -> bool {
    let mut st = AlphaState::default();
    alpha_eq_inner(&erase_ty(a), &erase_ty(b), &mut st)
}

#[derive(Default)]
struct AlphaState {
    fwd: HashMap<TyVar, TyVar>,
    bwd: HashMap<TyVar, TyVar>,
    assumed: HashSet<(Ty, Ty)>,
}

impl AlphaState {
    fn vars_match(&mut self, x: TyVar, y: TyVar) -> bool {
        match (self.fwd.get(&x), self.bwd.get(&y)) {
            (Some(fy), Some(bx)) => *fy == y && *bx == x,
            (None, None) => {
                self.fwd.insert(x, y);
                self.bwd.insert(y, x);
                true
            }
            _ => false,
        }
    }
}

fn alpha_eq_inner(a: &Ty, b: &Ty, st: &mut AlphaState) -> bool {
    match (a, b) {
        (Ty::Var(x, _), Ty::Var(y, _)) => st.vars_match(*x, *y),
        (Ty::Unit(_), Ty::Unit(_)) => true,
        (Ty::Pair(a1, a2, _), Ty::Pair(b1, b2, _)) => {
            alpha_eq_inner(a1, b1, st) && alpha_eq_inner(a2, b2, st)
        }
        (Ty::Variant(ra, _), Ty::Variant(rb, _)) => alpha_eq_row(ra, rb, st),
        (Ty::Rec(_, _, _), _) | (_, Ty::Rec(_, _, _)) => {
            let key = (a.clone(), b.clone());
            if st.assumed.contains(&key) {
                return true;
            }
            st.assumed.insert(key);
            let ua = unfold_rec(a).unwrap_or_else(|| a.clone());
            let ub = unfold_rec(b).unwrap_or_else(|| b.clone());
            alpha_eq_inner(&ua, &ub, st)
        }
        _ => false,
    }
}

fn alpha_eq_row(a: &Row, b: &Row, st: &mut AlphaState) -> bool {
    let (ea, ta) = a.entries();
    let (eb, tb) = b.entries();
    if ea.len() != eb.len() {
        return false;
    }
    let mut mb: BTreeMap<&str, &Ty> = BTreeMap::new();
    for (l, t) in eb {
        mb.insert(l, t);
    }
    for (l, t) in ea {
        match mb.get(l) {
            Some(t2) if alpha_eq_inner(t, t2, st) => {}
            _ => return false,
        }
    }
    match (ta, tb) {
        (Row::Empty, Row::Empty) => true,
        (Row::Var(x), Row::Var(y)) => st.vars_match(*x, *y),
        _ => false,
    }
}

pub fn traced_alpha_eq_erased(a: &Traced, b: &Traced) -> bool {
    let mut st = AlphaState::default();
    traced_alpha_erased_inner(a, b, &mut st)
}

fn traced_alpha_erased_inner(a: &Traced, b: &Traced, st: &mut AlphaState) -> bool {
    match (a, b) {
        (Traced::Result { body: ba, .. }, Traced::Result { body: bb, .. }) => {
            alpha_eq_inner(&erase_ty(ba), &erase_ty(bb), st)
        }
        (Traced::Strategy(sa), Traced::Strategy(sb)) => {
            alpha_eq_inner(&erase_ty(&sa.input), &erase_ty(&sb.input), st)
                && alpha_eq_inner(&erase_ty(&sa.output), &erase_ty(&sb.output), st)
        }
        (Traced::Combinator(pa, ra), Traced::Combinator(pb, rb)) => {
            alpha_eq_inner(&erase_ty(&pa.input), &erase_ty(&pb.input), st)
                && alpha_eq_inner(&erase_ty(&pa.output), &erase_ty(&pb.output), st)
                && traced_alpha_erased_inner(ra, rb, st)
        }
        _ => false,
    }
}

/// Equality up to the equi-recursive conversion and row-variable progress:
/// like [`ty_eq`], but a row entry present on one side only is accepted when
/// it carries no trace information (it stands for structure the other side
/// keeps behind a row variable).
pub fn ty_progress_eq(a: &Ty, b: &Ty) -> bool {
    progress_eq_inner(a, b, &mut HashSet::new())
}

fn progress_eq_inner(a: &Ty, b: &Ty, assumed: &mut HashSet<(Ty, Ty)>) -> bool {
    if a.ann() != b.ann() {
        return false;
    }
    match (a, b) {
        (Ty::Var(x, _), Ty::Var(y, _)) => x == y,
        (Ty::Unit(_), Ty::Unit(_)) => true,
        (Ty::Pair(a1, a2, _), Ty::Pair(b1, b2, _)) => {
            progress_eq_inner(a1, b1, assumed) && progress_eq_inner(a2, b2, assumed)
        }
        (Ty::Variant(ra, _), Ty::Variant(rb, _)) => progress_row_eq(ra, rb, assumed),
        (Ty::Rec(_, _, _), _) | (_, Ty::Rec(_, _, _)) => {
            let key = (a.strip_ann(), b.strip_ann());
            if assumed.contains(&key) {
                return true;
            }
            assumed.insert(key);
            let ua = unfold_rec(a).unwrap_or_else(|| a.clone());
            let ub = unfold_rec(b).unwrap_or_else(|| b.clone());
            progress_eq_inner(&ua, &ub, assumed)
        }
        _ => false,
    }
}

fn progress_row_eq(a: &Row, b: &Row, assumed: &mut HashSet<(Ty, Ty)>) -> bool {
    let (ea, _) = a.entries();
    let (eb, _) = b.entries();
    let mut bmap: BTreeMap<&str, &Ty> = BTreeMap::new();
    for (l, t) in &eb {
        bmap.insert(l, t);
    }
    let mut seen: std::collections::BTreeSet<&str> = std::collections::BTreeSet::new();
    for (l, t) in &ea {
        seen.insert(l);
        match bmap.get(l) {
            Some(t2) => {
                if !progress_eq_inner(t, t2, assumed) {
                    return false;
                }
            }
            None => {
                let mut vars = BTreeSet::new();
                trace_vars_ty(t, &mut vars);
                if !vars.is_empty() {
                    return false;
                }
            }
        }
    }
    for (l, t) in &eb {
        if seen.contains(l) {
            continue;
        }
        let mut vars = BTreeSet::new();
        trace_vars_ty(t, &mut vars);
        if !vars.is_empty() {
            return false;
        }
    }
    true
}

pub fn traced_progress_eq(a: &Traced, b: &Traced) -> bool {
    match (a, b) {
        (Traced::Result { body: ba, .. }, Traced::Result { body: bb, .. }) => {
            ty_progress_eq(ba, bb)
        }
        (Traced::Strategy(sa), Traced::Strategy(sb)) => {
            ty_progress_eq(&sa.input, &sb.input) && ty_progress_eq(&sa.output, &sb.output)
        }
        (Traced::Combinator(pa, ra), Traced::Combinator(pb, rb)) => {
            ty_progress_eq(&pa.input, &pb.input)
                && ty_progress_eq(&pa.output, &pb.output)
                && traced_progress_eq(ra, rb)
        }
        _ => false,
    }
}

pub fn traced_eq(a: &Traced, b: &Traced) -> bool {
    match (a, b) {
        (Traced::Result { ids: ia, body: ba }, Traced::Result { ids: ib, body: bb }) => {
            ia == ib && ty_eq(ba, bb)
        }
        (Traced::Strategy(sa), Traced::Strategy(sb)) => {
            sa.ids == sb.ids && ty_eq(&sa.input, &sb.input) && ty_eq(&sa.output, &sb.output)
        }
        (Traced::Combinator(pa, ra), Traced::Combinator(pb, rb)) => {
            pa.ids == pb.ids
                && ty_eq(&pa.input, &pb.input)
                && ty_eq(&pa.output, &pb.output)
                && traced_eq(ra, rb)
        }
        _ => false,
    }
}

// ---------------------------------------------------------------------------
// Trace substitution
// ---------------------------------------------------------------------------

/// Trace substitution: maps member-traced types to traceable types.
/// The member variable alone keys each mapping. A distinguished bottom value
/// records failed trace unification, and composing anything with it stays
/// bottom.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceSubst {
    Fail,
    Map(BTreeMap<TraceMem, Ty>),
}

impl TraceSubst {
    pub fn empty() -> TraceSubst {
        TraceSubst::Map(BTreeMap::new())
    }

    pub fn single(m: TraceMem, t: Ty) -> TraceSubst {
        let mut map = BTreeMap::new();
        map.insert(m, t);
        TraceSubst::Map(map)
    }

    pub fn is_fail(&self) -> bool {
        matches!(self, TraceSubst::Fail)
    }

    /// Composition `self ∘ earlier`: apply `earlier` first, then `self`.
    pub fn compose(self, earlier: TraceSubst) -> TraceSubst {
        match (self, earlier) {
            (TraceSubst::Fail, _) | (_, TraceSubst::Fail) => TraceSubst::Fail,
            (TraceSubst::Map(later), TraceSubst::Map(first)) => {
                let mut out = BTreeMap::new();
                for (m, t) in first {
                    out.insert(m, apply_trace_subst_map(&t, &later));
                }
                for (m, t) in later {
                    out.entry(m).or_insert(t);
                }
                TraceSubst::Map(out)
            }
        }
    }
}

fn apply_trace_subst_map(t: &Ty, map: &BTreeMap<TraceMem, Ty>) -> Ty {
    if let Some(m) = t.member_ann() {
        if let Some(replacement) = map.get(&m) {
            debug_assert!(
                t.ann().len() == 1,
                "trace substitution applies to singleton member annotations"
            );
            return replacement.clone();
        }
    }
    match t {
        Ty::Var(_, _) | Ty::Unit(_) => t.clone(),
        Ty::Pair(a, b, ann) => Ty::Pair(
            Rc::new(apply_trace_subst_map(a, map)),
            Rc::new(apply_trace_subst_map(b, map)),
            ann.clone(),
        ),
        Ty::Variant(r, ann) => Ty::Variant(apply_trace_subst_row(r, map), ann.clone()),
        Ty::Rec(v, r, ann) => Ty::Rec(*v, apply_trace_subst_row(r, map), ann.clone()),
    }
}

fn apply_trace_subst_row(r: &Row, map: &BTreeMap<TraceMem, Ty>) -> Row {
    match r {
        Row::Ext(l, t, rest) => Row::Ext(
            l.clone(),
            Rc::new(apply_trace_subst_map(t, map)),
            Rc::new(apply_trace_subst_row(rest, map)),
        ),
        other => other.clone(),
    }
}

/// Apply a trace substitution to a traceable type.
pub fn apply_trace_subst(t: &Ty, s: &TraceSubst) -> Ty {
    match s {
        TraceSubst::Fail => panic!("cannot apply failTrace"),
        TraceSubst::Map(map) => apply_trace_subst_map(t, map),
    }
}

pub fn apply_trace_subst_traced(t: &Traced, s: &TraceSubst) -> Traced {
    let map = match s {
        TraceSubst::Fail => panic!("cannot apply failTrace"),
        TraceSubst::Map(m) => m,
    };
    match t {
        Traced::Result { ids, body } => Traced::result(ids.clone(), apply_trace_subst_map(body, map)),
        Traced::Strategy(st) => Traced::strategy(
            st.ids.clone(),
            apply_trace_subst_map(&st.input, map),
            apply_trace_subst_map(&st.output, map),
        ),
        Traced::Combinator(p, ret) => Traced::Combinator(
            Box::new(StrategyTy {
                ids: p.ids.clone(),
                input: apply_trace_subst_map(&p.input, map),
                output: apply_trace_subst_map(&p.output, map),
            }),
            Box::new(apply_trace_subst_traced(ret, s)),
        ),
    }
}

// ---------------------------------------------------------------------------
// mems: member-traced subterms of a single-traced type
// ---------------------------------------------------------------------------

/// The member-traced traceable types of a single-traced type.
pub fn mems_ty(env: &TracingEnv, t: &Ty, out: &mut Vec<Ty>) {
    if let Some(m) = t.member_ann() {
        if env.owner_of(m).is_some() {
            out.push(t.clone());
            return;
        }
    }
    match t {
        Ty::Var(_, _) | Ty::Unit(_) => {}
        Ty::Pair(a, b, _) => {
            mems_ty(env, a, out);
            mems_ty(env, b, out);
        }
        Ty::Variant(r, _) => mems_row(env, r, out),
        Ty::Rec(_, r, _) => mems_row(env, r, out),
    }
}

fn mems_row(env: &TracingEnv, r: &Row, out: &mut Vec<Ty>) {
    if let Row::Ext(_, t, rest) = r {
        mems_ty(env, t, out);
        mems_row(env, rest, out);
    }
}

pub fn mems_traced(env: &TracingEnv, t: &Traced) -> Vec<Ty> {
    let mut out = Vec::new();
    match t {
        Traced::Result { body, .. } => mems_ty(env, body, &mut out),
        Traced::Strategy(s) => {
            mems_ty(env, &s.input, &mut out);
            mems_ty(env, &s.output, &mut out);
        }
        Traced::Combinator(p, ret) => {
            mems_ty(env, &p.input, &mut out);
            mems_ty(env, &p.output, &mut out);
            out.extend(mems_traced(env, ret));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Trace-variable renaming and collection
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
pub struct TraceRename {
    pub ids: HashMap<TraceId, TraceId>,
    pub mems: HashMap<TraceMem, TraceMem>,
}

impl TraceRename {
    pub fn id(&self, a: TraceId) -> TraceId {
        *self.ids.get(&a).unwrap_or(&a)
    }
    pub fn mem(&self, m: TraceMem) -> TraceMem {
        *self.mems.get(&m).unwrap_or(&m)
    }
    fn ann(&self, ann: &Ann) -> Ann {
        ann.iter()
            .map(|v| match v {
                TraceVar::Id(a) => TraceVar::Id(self.id(*a)),
                TraceVar::Mem(m) => TraceVar::Mem(self.mem(*m)),
            })
            .collect()
    }
}

pub fn rename_traces_ty(t: &Ty, r: &TraceRename) -> Ty {
    match t {
        Ty::Var(v, ann) => Ty::Var(*v, r.ann(ann)),
        Ty::Unit(ann) => Ty::Unit(r.ann(ann)),
        Ty::Pair(a, b, ann) => Ty::Pair(
            Rc::new(rename_traces_ty(a, r)),
            Rc::new(rename_traces_ty(b, r)),
            r.ann(ann),
        ),
        Ty::Variant(row, ann) => Ty::Variant(rename_traces_row(row, r), r.ann(ann)),
        Ty::Rec(v, row, ann) => Ty::Rec(*v, rename_traces_row(row, r), r.ann(ann)),
    }
}

fn rename_traces_row(row: &Row, r: &TraceRename) -> Row {
    match row {
        Row::Ext(l, t, rest) => Row::Ext(
            l.clone(),
            Rc::new(rename_traces_ty(t, r)),
            Rc::new(rename_traces_row(rest, r)),
        ),
        other => other.clone(),
    }
}

pub fn rename_traces_traced(t: &Traced, r: &TraceRename) -> Traced {
    match t {
        Traced::Result { ids, body } => Traced::result(
            ids.iter().map(|a| r.id(*a)).collect(),
            rename_traces_ty(body, r),
        ),
        Traced::Strategy(s) => Traced::strategy(
            s.ids.iter().map(|a| r.id(*a)).collect(),
            rename_traces_ty(&s.input, r),
            rename_traces_ty(&s.output, r),
        ),
        Traced::Combinator(p, ret) => Traced::Combinator(
            Box::new(StrategyTy {
                ids: p.ids.iter().map(|a| r.id(*a)).collect(),
                input: rename_traces_ty(&p.input, r),
                output: rename_traces_ty(&p.output, r),
            }),
            Box::new(rename_traces_traced(ret, r)),
        ),
    }
}

pub fn rename_traces_comb_env(env: &CombEnv, r: &TraceRename) -> CombEnv {
    CombEnv(
        env.0
            .iter()
            .map(|(n, s)| {
                (
                    n.clone(),
                    StrategyTy {
                        ids: s.ids.iter().map(|a| r.id(*a)).collect(),
                        input: rename_traces_ty(&s.input, r),
                        output: rename_traces_ty(&s.output, r),
                    },
                )
            })
            .collect(),
    )
}

pub fn rename_traces_env(env: &TracingEnv, r: &TraceRename) -> TracingEnv {
    TracingEnv(
        env.0
            .iter()
            .map(|t| Trace {
                id: r.id(t.id),
                members: t.members.iter().map(|m| r.mem(*m)).collect(),
            })
            .collect(),
    )
}

/// Free type/row variables of a traceable type (recursion binders excluded).
pub fn free_tyvars_ty(t: &Ty, out: &mut BTreeSet<TyVar>) {
    free_tyvars_ty_bound(t, &mut Vec::new(), out)
}

fn free_tyvars_ty_bound(t: &Ty, bound: &mut Vec<TyVar>, out: &mut BTreeSet<TyVar>) {
    match t {
        Ty::Var(v, _) => {
            if !bound.contains(v) {
                out.insert(*v);
            }
        }
        Ty::Unit(_) => {}
        Ty::Pair(a, b, _) => {
            free_tyvars_ty_bound(a, bound, out);
            free_tyvars_ty_bound(b, bound, out);
        }
        Ty::Variant(r, _) => free_tyvars_row_bound(r, bound, out),
        Ty::Rec(v, r, _) => {
            bound.push(*v);
            free_tyvars_row_bound(r, bound, out);
            bound.pop();
        }
    }
}

fn free_tyvars_row_bound(r: &Row, bound: &mut Vec<TyVar>, out: &mut BTreeSet<TyVar>) {
    match r {
        Row::Var(v) => {
            if !bound.contains(v) {
                out.insert(*v);
            }
        }
        Row::Empty => {}
        Row::Ext(_, t, rest) => {
            free_tyvars_ty_bound(t, bound, out);
            free_tyvars_row_bound(rest, bound, out);
        }
    }
}

pub fn free_tyvars_traced(t: &Traced) -> BTreeSet<TyVar> {
    let mut out = BTreeSet::new();
    match t {
        Traced::Result { body, .. } => free_tyvars_ty(body, &mut out),
        Traced::Strategy(s) => {
            free_tyvars_ty(&s.input, &mut out);
            free_tyvars_ty(&s.output, &mut out);
        }
        Traced::Combinator(p, ret) => {
            free_tyvars_ty(&p.input, &mut out);
            free_tyvars_ty(&p.output, &mut out);
            out.extend(free_tyvars_traced(ret));
        }
    }
    out
}

/// All trace variables occurring in the annotations of a traceable type.
pub fn trace_vars_ty(t: &Ty, out: &mut BTreeSet<TraceVar>) {
    out.extend(t.ann().iter().cloned());
    match t {
        Ty::Var(_, _) | Ty::Unit(_) => {}
        Ty::Pair(a, b, _) => {
            trace_vars_ty(a, out);
            trace_vars_ty(b, out);
        }
        Ty::Variant(r, _) | Ty::Rec(_, r, _) => trace_vars_row(r, out),
    }
}

fn trace_vars_row(r: &Row, out: &mut BTreeSet<TraceVar>) {
    if let Row::Ext(_, t, rest) = r {
        trace_vars_ty(t, out);
        trace_vars_row(rest, out);
    }
}

pub fn trace_vars_traced(t: &Traced, out: &mut BTreeSet<TraceVar>) {
    match t {
        Traced::Result { ids, body } => {
            out.extend(ids.iter().map(|a| TraceVar::Id(*a)));
            trace_vars_ty(body, out);
        }
        Traced::Strategy(s) => {
            out.extend(s.ids.iter().map(|a| TraceVar::Id(*a)));
            trace_vars_ty(&s.input, out);
            trace_vars_ty(&s.output, out);
        }
        Traced::Combinator(p, ret) => {
            out.extend(p.ids.iter().map(|a| TraceVar::Id(*a)));
            trace_vars_ty(&p.input, out);
            trace_vars_ty(&p.output, out);
            trace_vars_traced(ret, out);
        }
    }
}

// ---------------------------------------------------------------------------
// Display naming
// ---------------------------------------------------------------------------

/// Assigns display names to trace variables: identifiers get `a`, `b`, ... in
/// first-appearance order, member `k` of identifier `x` prints as `xk`.
#[derive(Debug, Default)]
pub struct DisplayNames {
    ids: HashMap<TraceId, String>,
    mems: HashMap<TraceMem, String>,
    next_id: usize,
    mem_counters: HashMap<TraceId, usize>,
    owner: HashMap<TraceMem, TraceId>,
}

impl DisplayNames {
    pub fn new() -> Self {
        DisplayNames::default()
    }

    /// Register member ownership from a tracing environment so members can be
    /// named after their identifier.
    pub fn seed_env(&mut self, env: &TracingEnv) {
        for tr in &env.0 {
            for m in &tr.members {
                self.owner.insert(*m, tr.id);
            }
        }
    }

    pub fn id_name(&mut self, a: TraceId) -> String {
        if let Some(n) = self.ids.get(&a) {
            return n.clone();
        }
        let name = index_name(self.next_id);
        self.next_id += 1;
        self.ids.insert(a, name.clone());
        name
    }

    pub fn mem_name(&mut self, m: TraceMem) -> String {
        if let Some(n) = self.mems.get(&m) {
            return n.clone();
        }
        let owner = self.owner.get(&m).copied();
        let (base, idx) = match owner {
            Some(a) => {
                let base = self.id_name(a);
                let c = self.mem_counters.entry(a).or_insert(0);
                let idx = *c;
                *c += 1;
                (base, idx)
            }
            None => ("m".to_string(), self.mems.len()),
        };
        let name = format!("{base}{idx}");
        self.mems.insert(m, name.clone());
        name
    }

    pub fn var_name(&mut self, v: TraceVar) -> String {
        match v {
            TraceVar::Id(a) => self.id_name(a),
            TraceVar::Mem(m) => self.mem_name(m),
        }
    }
}

/// a, b, ..., z, aa, ab, ...
fn index_name(mut i: usize) -> String {
    let mut out = String::new();
    loop {
        out.insert(0, (b'a' + (i % 26) as u8) as char);
        if i < 26 {
            break;
        }
        i = i / 26 - 1;
    }
    out
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

pub fn ty_to_json(t: &Ty, names: &mut DisplayNames) -> serde_json::Value {
    use serde_json::json;
    let ann_json = |ann: &Ann, names: &mut DisplayNames| -> serde_json::Value {
        json!(ann.iter().map(|v| names.var_name(*v)).collect::<Vec<_>>())
    };
    match t {
        Ty::Var(v, ann) => json!({"kind": "var", "name": format!("t{}", v.0), "traces": ann_json(ann, names)}),
        Ty::Unit(ann) => json!({"kind": "unit", "traces": ann_json(ann, names)}),
        Ty::Pair(a, b, ann) => json!({
            "kind": "pair",
            "fst": ty_to_json(a, names),
            "snd": ty_to_json(b, names),
            "traces": ann_json(ann, names),
        }),
        Ty::Variant(r, ann) => json!({
            "kind": "variant",
            "row": row_to_json(r, names),
            "traces": ann_json(ann, names),
        }),
        Ty::Rec(v, r, ann) => json!({
            "kind": "rec",
            "var": format!("t{}", v.0),
            "row": row_to_json(r, names),
            "traces": ann_json(ann, names),
        }),
    }
}

fn row_to_json(r: &Row, names: &mut DisplayNames) -> serde_json::Value {
    use serde_json::json;
    let (entries, tail) = r.entries();
    let entries: Vec<_> = entries
        .into_iter()
        .map(|(l, t)| json!({"label": l, "type": ty_to_json(t, names)}))
        .collect();
    let tail = match tail {
        Row::Var(v) => json!(format!("r{}", v.0)),
        Row::Empty => json!(null),
        Row::Ext(_, _, _) => unreachable!(),
    };
    json!({"entries": entries, "tail": tail})
}

pub fn traced_to_json(t: &Traced, names: &mut DisplayNames) -> serde_json::Value {
    use serde_json::json;
    let ids_json = |ids: &BTreeSet<TraceId>, names: &mut DisplayNames| -> serde_json::Value {
        json!(ids.iter().map(|a| names.id_name(*a)).collect::<Vec<_>>())
    };
    match t {
        Traced::Result { ids, body } => json!({
            "kind": "result",
            "traces": ids_json(ids, names),
            "body": ty_to_json(body, names),
        }),
        Traced::Strategy(s) => json!({
            "kind": "strategy",
            "traces": ids_json(&s.ids, names),
            "input": ty_to_json(&s.input, names),
            "output": ty_to_json(&s.output, names),
        }),
        Traced::Combinator(p, ret) => json!({
            "kind": "combinator",
            "param": traced_to_json(&Traced::Strategy((**p).clone()), names),
            "return": traced_to_json(ret, names),
        }),
    }
}

impl fmt::Display for TyVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tid(n: u32) -> TraceId {
        TraceId(n)
    }
    fn tmem(n: u32) -> TraceMem {
        TraceMem(n)
    }
    fn ann_id(n: u32) -> Ann {
        [TraceVar::Id(tid(n))].into_iter().collect()
    }
    fn ann_mem(n: u32) -> Ann {
        [TraceVar::Mem(tmem(n))].into_iter().collect()
    }

    #[test]
    fn erase_removes_annotations() {
        let t = Ty::Unit(ann_id(0));
        assert_eq!(erase_ty(&t), Ty::unit());
        // idempotent
        assert_eq!(erase_ty(&erase_ty(&t)), erase_ty(&t));
    }

    #[test]
    fn erase_on_strategy_clears_ids() {
        let s = Traced::strategy([tid(0)].into(), Ty::Unit(ann_id(0)), Ty::Unit(ann_id(0)));
        match erase_traced(&s) {
            Traced::Strategy(st) => {
                assert!(st.ids.is_empty());
                assert_eq!(st.input, Ty::unit());
            }
            _ => panic!(),
        }
    }

    #[test]
    fn erase_keeps_empty_variant() {
        let t = Ty::Variant(Row::Empty, Ann::new());
        assert_eq!(erase_ty(&t), t);
    }

    #[test]
    fn ty_eq_ignores_row_order() {
        let a = Ty::Variant(
            row_from(
                vec![("A".into(), Ty::unit()), ("B".into(), Ty::unit())],
                Row::Empty,
            ),
            Ann::new(),
        );
        let b = Ty::Variant(
            Row::Ext(
                "B".into(),
                Rc::new(Ty::unit()),
                Rc::new(Row::Ext("A".into(), Rc::new(Ty::unit()), Rc::new(Row::Empty))),
            ),
            Ann::new(),
        );
        assert!(ty_eq(&a, &b));
    }

    #[test]
    fn ty_eq_unfolds_recursive_types() {
        // v as <A: v | .>  equals its unfolding <A: (v as <A: v | .>) | .>
        let v = TyVar(0);
        let rec = Ty::Rec(
            v,
            row_from(vec![("A".into(), Ty::var(v))], Row::Empty),
            Ann::new(),
        );
        let unfolded = unfold_rec(&rec).unwrap();
        assert!(ty_eq(&rec, &unfolded));
        assert!(!ty_eq(&rec, &Ty::unit()));
    }

    #[test]
    fn unfold_erases_substituted_copies() {
        // Outer trace on the rec node survives; copies substituted for the
        // bound variable are erased.
        let v = TyVar(0);
        let rec = Ty::Rec(
            v,
            row_from(vec![("A".into(), Ty::Var(v, ann_mem(1)))], Row::Empty),
            ann_mem(0),
        );
        let unf = unfold_rec(&rec).unwrap();
        assert_eq!(unf.ann(), &ann_mem(0));
        match &unf {
            Ty::Variant(row, _) => {
                let (entries, _) = row.entries();
                let inner = entries[0].1;
                // the occurrence keeps its own annotation, its interior is erased
                assert_eq!(inner.ann(), &ann_mem(1));
                assert!(matches!(inner, Ty::Rec(_, _, _)));
            }
            _ => panic!(),
        }
    }

    #[test]
    fn fold_inverts_unfold_on_trace_free_types() {
        let v = TyVar(0);
        let rec = Ty::Rec(
            v,
            row_from(
                vec![(
                    "Op".into(),
                    Ty::pair(Ty::var(v), Ty::Variant(row_from(vec![], Row::Var(TyVar(1))), Ann::new())),
                )],
                Row::Var(TyVar(2)),
            ),
            Ann::new(),
        );
        let unf = unfold_rec(&rec).unwrap();
        let folded = fold_rec(&unf).expect("fold should find the recursive structure");
        assert!(ty_eq(&folded, &rec));
    }

    #[test]
    fn trace_subst_identity_and_single() {
        let t = Ty::Var(TyVar(0), ann_mem(0));
        assert_eq!(apply_trace_subst(&t, &TraceSubst::empty()), t);
        let s = TraceSubst::single(tmem(0), Ty::Unit(ann_id(5)));
        assert_eq!(apply_trace_subst(&t, &s), Ty::Unit(ann_id(5)));
    }

    #[test]
    fn trace_subst_preserves_erasure() {
        // replacement has the same underlying type as the replaced position
        let t = Ty::pair(Ty::Var(TyVar(0), ann_mem(0)), Ty::Unit(ann_id(1)));
        let s = TraceSubst::single(tmem(0), Ty::Var(TyVar(0), ann_mem(7)));
        let applied = apply_trace_subst(&t, &s);
        assert!(ty_eq(&erase_ty(&applied), &erase_ty(&t)));
    }

    #[test]
    fn compose_with_fail_is_fail() {
        let s = TraceSubst::single(tmem(0), Ty::unit());
        assert!(s.clone().compose(TraceSubst::Fail).is_fail());
        assert!(TraceSubst::Fail.compose(s).is_fail());
    }

    #[test]
    fn mems_collects_member_positions() {
        let env = TracingEnv::single(tid(0), [tmem(0), tmem(1)].into());
        let t = Traced::strategy(
            [tid(0)].into(),
            Ty::pair(Ty::Var(TyVar(0), ann_mem(0)), Ty::Var(TyVar(1), ann_mem(1))),
            Ty::pair(Ty::Var(TyVar(1), ann_mem(1)), Ty::Var(TyVar(0), ann_mem(0))),
        );
        let ms = mems_traced(&env, &t);
        assert_eq!(ms.len(), 4);
        let mut unique: Vec<_> = ms;
        unique.sort_by_key(|t| format!("{t:?}"));
        unique.dedup();
        assert_eq!(unique.len(), 2);
    }

    #[test]
    fn mems_empty_on_unit() {
        let env = TracingEnv::single(tid(0), BTreeSet::new());
        let mut out = Vec::new();
        mems_ty(&env, &Ty::unit(), &mut out);
        assert!(out.is_empty());
    }

    #[test]
    fn mems_on_row_entry() {
        let env = TracingEnv::single(tid(0), [tmem(3)].into());
        let t = Ty::Variant(
            row_from(vec![("L".into(), Ty::Var(TyVar(0), ann_mem(3)))], Row::Empty),
            Ann::new(),
        );
        let mut out = Vec::new();
        mems_ty(&env, &t, &mut out);
        assert_eq!(out, vec![Ty::Var(TyVar(0), ann_mem(3))]);
    }

    #[test]
    fn index_names_roll_over() {
        assert_eq!(index_name(0), "a");
        assert_eq!(index_name(25), "z");
        assert_eq!(index_name(26), "aa");
    }
}
