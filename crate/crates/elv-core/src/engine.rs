//! The trace engine: all computations on traces.
//!
//! A traced triple bundles a tracing environment, a strategy-combinator
//! environment and a traced type that are mutually well-traced. The engine
//! slices triples per trace identifier, freshly renames them, merges them
//! pointwise, unifies traces of single-trace slices, and combines everything
//! in `comp_trace`, which enumerates every way of connecting one trace of a
//! combinator parameter with one trace of its argument.

use std::collections::BTreeSet;
use std::rc::Rc;

use crate::structural::{trace_check, Session, UnifyAuditEvent};

use crate::types::*;

/// A tracing environment, combinator environment and traced type that belong
/// together.
#[derive(Debug, Clone)]
pub struct TracedTriple {
    pub phi: TracingEnv,
    pub sigma: CombEnv,
    pub omega: Traced,
}

impl TracedTriple {
    pub fn new(phi: TracingEnv, sigma: CombEnv, omega: Traced) -> Self {
        TracedTriple { phi, sigma, omega }
    }
}

/// The trace identifier set of a result or strategy type. Never defined for
/// combinator types.
pub fn trace_ids(env: &TracingEnv, omega: &Traced) -> BTreeSet<TraceId> {
    // Pathological programs (conversion-divergent merges under exponential
    // type growth) can lose trace well-formedness; the checker gives up on
    // them rather than computing with an ill-traced type.
    let checked = |r: Result<BTreeSet<TraceId>, crate::structural::TraceError>| match r {
        Ok(ids) => ids,
        Err(_) => std::panic::panic_any(crate::structural::ResourceLimit),
    };
    match omega {
        Traced::Result { ids, body } => {
            let got = checked(trace_check(env, body));
            debug_assert_eq!(&got, ids, "stored identifier set must be recomputable");
            got
        }
        Traced::Strategy(s) => {
            let gi = checked(trace_check(env, &s.input));
            let go = checked(trace_check(env, &s.output));
            debug_assert_eq!(gi, go, "strategy sides must carry the same traces");
            debug_assert_eq!(&gi, &s.ids);
            gi
        }
        Traced::Combinator(_, _) => panic!("traceIds is not defined on combinator types"),
    }
}

// ---------------------------------------------------------------------------
// Select / Delete
// ---------------------------------------------------------------------------

/// Restrict a traceable type to a single trace: positions carrying the
/// identifier keep only it, positions carrying one of its members keep only
/// that member (with an erased interior), and every other annotation is
/// dropped.
pub fn select_in_ty(trace: &Trace, t: &Ty) -> Ty {
    let ann = t.ann();
    if ann.contains(&TraceVar::Id(trace.id)) {
        debug_assert!(matches!(t, Ty::Unit(_)), "identifiers trace only units");
        return Ty::Unit([TraceVar::Id(trace.id)].into_iter().collect());
    }
    if let Some(m) = ann.iter().find_map(|v| match v {
        TraceVar::Mem(m) if trace.members.contains(m) => Some(*m),
        _ => None,
    }) {
        return erase_ty(t).with_ann([TraceVar::Mem(m)].into_iter().collect());
    }
    // No variable of the selected trace here: drop the annotation, recurse.
    match t {
        Ty::Var(v, _) => Ty::Var(*v, Ann::new()),
        Ty::Unit(_) => Ty::Unit(Ann::new()),
        Ty::Pair(a, b, _) => Ty::Pair(
            Rc::new(select_in_ty(trace, a)),
            Rc::new(select_in_ty(trace, b)),
            Ann::new(),
        ),
        Ty::Variant(r, _) => Ty::Variant(select_in_row(trace, r), Ann::new()),
        Ty::Rec(v, r, _) => Ty::Rec(*v, select_in_row(trace, r), Ann::new()),
    }
}

fn select_in_row(trace: &Trace, r: &Row) -> Row {
    match r {
        Row::Ext(l, t, rest) => Row::Ext(
            l.clone(),
            Rc::new(select_in_ty(trace, t)),
            Rc::new(select_in_row(trace, rest)),
        ),
        other => other.clone(),
    }
}

pub fn select_in_traced(trace: &Trace, t: &Traced) -> Traced {
    match t {
        Traced::Result { ids, body } => {
            if ids.contains(&trace.id) {
                Traced::result(
                    [trace.id].into_iter().collect(),
                    select_in_ty(trace, body),
                )
            } else {
                Traced::result(BTreeSet::new(), erase_ty(body))
            }
        }
        Traced::Strategy(s) => {
            if s.ids.contains(&trace.id) {
                Traced::strategy(
                    [trace.id].into_iter().collect(),
                    select_in_ty(trace, &s.input),
                    select_in_ty(trace, &s.output),
                )
            } else {
                Traced::strategy(BTreeSet::new(), erase_ty(&s.input), erase_ty(&s.output))
            }
        }
        Traced::Combinator(p, ret) => {
            let param = match select_in_traced(trace, &Traced::Strategy((**p).clone())) {
                Traced::Strategy(s) => s,
                _ => unreachable!(),
            };
            Traced::Combinator(Box::new(param), Box::new(select_in_traced(trace, ret)))
        }
    }
}

/// Select the traces named by `ids` (in the given order) out of a triple; all
/// other traces are removed from the environments and the type.
pub fn select(ids: &[TraceId], triple: &TracedTriple) -> TracedTriple {
    let mut acc = TracedTriple::new(
        TracingEnv::empty(),
        erase_comb_env(&triple.sigma),
        erase_traced(&triple.omega),
    );
    for a in ids {
        if let Some(trace) = triple.phi.lookup(*a) {
            let sigma_i = CombEnv(
                triple
                    .sigma
                    .0
                    .iter()
                    .map(|(n, s)| {
                        (
                            n.clone(),
                            match select_in_traced(trace, &Traced::Strategy(s.clone())) {
                                Traced::Strategy(sel) => sel,
                                _ => unreachable!(),
                            },
                        )
                    })
                    .collect(),
            );
            let slice = TracedTriple::new(
                TracingEnv::single(trace.id, trace.members.clone()),
                sigma_i,
                select_in_traced(trace, &triple.omega),
            );
            acc = add(&acc, &slice);
        }
    }
    acc
}

/// Dual of [`select`]: remove the named traces, keep the rest.
pub fn delete(ids: &[TraceId], triple: &TracedTriple) -> TracedTriple {
    let keep: Vec<TraceId> = triple
        .phi
        .ids()
        .into_iter()
        .filter(|a| !ids.contains(a))
        .collect();
    select(&keep, triple)
}

// ---------------------------------------------------------------------------
// Fresh
// ---------------------------------------------------------------------------

/// Members of `trace` that occur in a traceable type.
fn used_members_ty(trace: &Trace, t: &Ty, out: &mut BTreeSet<TraceMem>) {
    for v in t.ann() {
        if let TraceVar::Mem(m) = v {
            if trace.members.contains(m) {
                out.insert(*m);
            }
        }
    }
    match t {
        Ty::Var(_, _) | Ty::Unit(_) => {}
        Ty::Pair(a, b, _) => {
            used_members_ty(trace, a, out);
            used_members_ty(trace, b, out);
        }
        Ty::Variant(r, _) | Ty::Rec(_, r, _) => used_members_row(trace, r, out),
    }
}

fn used_members_row(trace: &Trace, r: &Row, out: &mut BTreeSet<TraceMem>) {
    if let Row::Ext(_, t, rest) = r {
        used_members_ty(trace, t, out);
        used_members_row(trace, rest, out);
    }
}

/// Members of `trace` that occur anywhere in a traced type.
pub fn used_members(trace: &Trace, t: &Traced, out: &mut BTreeSet<TraceMem>) {
    match t {
        Traced::Result { body, .. } => used_members_ty(trace, body, out),
        Traced::Strategy(s) => {
            used_members_ty(trace, &s.input, out);
            used_members_ty(trace, &s.output, out);
        }
        Traced::Combinator(p, ret) => {
            used_members_ty(trace, &p.input, out);
            used_members_ty(trace, &p.output, out);
            used_members(trace, ret, out);
        }
    }
}

/// Uniformly rename all trace variables of a triple to fresh ones and drop
/// trace members that no longer occur in the type or the environment.
pub fn fresh(sess: &mut Session, triple: &TracedTriple) -> TracedTriple {
    let mut acc = TracedTriple::new(
        TracingEnv::empty(),
        erase_comb_env(&triple.sigma),
        erase_traced(&triple.omega),
    );
    for trace in triple.phi.0.clone() {
        let slice = select(&[trace.id], triple);
        let mut used = BTreeSet::new();
        used_members(&trace, &slice.omega, &mut used);
        for (_, s) in &slice.sigma.0 {
            used_members(&trace, &Traced::Strategy(s.clone()), &mut used);
        }
        let mut rename = TraceRename::default();
        rename.ids.insert(trace.id, sess.fresh_trace_id());
        for m in &used {
            rename.mems.insert(*m, sess.fresh_trace_mem());
        }
        let renamed = TracedTriple::new(
            rename_traces_env(&TracingEnv::single(trace.id, used.clone()), &rename),
            rename_traces_comb_env(&slice.sigma, &rename),
            rename_traces_traced(&slice.omega, &rename),
        );
        acc = add(&acc, &renamed);
    }
    acc
}

// ---------------------------------------------------------------------------
// Add
// ---------------------------------------------------------------------------

/// Pointwise union of the trace information of two types with the same
/// erasure (up to the equi-recursive conversion). When the fold states of
/// the two sides diverge, the shapes are aligned by unfolding; if they still
/// disagree, the side whose interior is trace-free yields to the other.
pub fn add_ty(a: &Ty, b: &Ty) -> Ty {
    if a == b {
        return a.clone();
    }
    let merged_ann: Ann = a.ann().union(b.ann()).cloned().collect();
    // a side with no interior trace information contributes only its root
    // annotation, whatever its fold state
    let mut b_inner = BTreeSet::new();
    trace_vars_ty(&b.strip_ann(), &mut b_inner);
    if b_inner.is_empty() {
        return a.clone().with_ann(merged_ann);
    }
    let mut a_inner = BTreeSet::new();
    trace_vars_ty(&a.strip_ann(), &mut a_inner);
    if a_inner.is_empty() {
        return b.clone().with_ann(merged_ann);
    }
    match (a, b) {
        (Ty::Var(v, _), Ty::Var(w, _)) if v == w => Ty::Var(*v, merged_ann),
        (Ty::Unit(_), Ty::Unit(_)) => Ty::Unit(merged_ann),
        (Ty::Pair(a1, a2, _), Ty::Pair(b1, b2, _)) => Ty::Pair(
            Rc::new(add_ty(a1, b1)),
            Rc::new(add_ty(a2, b2)),
            merged_ann,
        ),
        (Ty::Variant(ra, _), Ty::Variant(rb, _)) => match try_add_row(ra, rb) {
            Some(row) => Ty::Variant(row, merged_ann),
            None => add_fallback(a, b, merged_ann),
        },
        (Ty::Rec(va, ra, _), Ty::Rec(vb, rb, _)) => {
            let rb2 = if va == vb {
                rb.clone()
            } else {
                subst_tyvar_in_row(rb, *vb, &Ty::var(*va))
            };
            match try_add_row(ra, &rb2) {
                Some(row) => Ty::Rec(*va, row, merged_ann),
                None => add_fallback(a, b, merged_ann),
            }
        }
        // Fold states diverged: prefer folding the unfolded side back (no
        // growth); unfold the recursive side only when interior annotations
        // pin the other side open, which is finite.
        (Ty::Rec(_, _, _), Ty::Variant(_, _)) => match refold_variant(b) {
            Some(fb) => add_ty(a, &fb).with_ann(merged_ann),
            None => add_ty(&unfold_rec(a).expect("rec unfolds"), b).with_ann(merged_ann),
        },
        (Ty::Variant(_, _), Ty::Rec(_, _, _)) => match refold_variant(a) {
            Some(fa) => add_ty(&fa, b).with_ann(merged_ann),
            None => add_ty(a, &unfold_rec(b).expect("rec unfolds")).with_ann(merged_ann),
        },
        _ => add_fallback(a, b, merged_ann),
    }
}

/// Shapes that refuse to align (a bound recursion variable against a copy of
/// its type, or rows in different unfolding states): the underlying types
/// are equal up to conversion, so keep whichever side still carries interior
/// trace information.
fn add_fallback(a: &Ty, b: &Ty, merged_ann: Ann) -> Ty {
    let mut a_inner = BTreeSet::new();
    trace_vars_ty(&a.strip_ann(), &mut a_inner);
    let mut b_inner = BTreeSet::new();
    trace_vars_ty(&b.strip_ann(), &mut b_inner);
    if b_inner.is_empty() {
        a.clone().with_ann(merged_ann)
    } else if a_inner.is_empty() {
        b.clone().with_ann(merged_ann)
    } else {
        panic!("addType on traced types whose shapes cannot align: {a:?} vs {b:?}")
    }
}

fn try_add_row(a: &Row, b: &Row) -> Option<Row> {
    // Union of rows: shared labels merge pointwise, one-sided labels pass
    // through (they stand for unmaterialized row-variable progress on the
    // other side, which carries no trace information).
    let (ea, ta) = a.entries();
    let (eb, tb) = b.entries();
    let mut bmap: std::collections::BTreeMap<&str, &Ty> = std::collections::BTreeMap::new();
    for (l, t) in &eb {
        bmap.insert(l, t);
    }
    let mut entries: Vec<(String, Ty)> = Vec::new();
    let mut seen: std::collections::BTreeSet<&str> = std::collections::BTreeSet::new();
    for (l, t) in &ea {
        seen.insert(*l);
        match bmap.get(*l) {
            Some(t2) => entries.push((l.to_string(), add_ty(t, t2))),
            None => entries.push((l.to_string(), (*t).clone())),
        }
    }
    for (l, t) in &eb {
        if !seen.contains(*l) {
            entries.push((l.to_string(), (*t).clone()));
        }
    }
    let tail = match (ta, tb) {
        (Row::Empty, Row::Empty) => Row::Empty,
        (Row::Var(v), _) => Row::Var(*v),
        (_, Row::Var(w)) => Row::Var(*w),
        _ => unreachable!("expanded tails are vars or empty"),
    };
    Some(row_from(entries, tail))
}

pub fn add_traced(a: &Traced, b: &Traced) -> Traced {
    match (a, b) {
        (Traced::Result { ids: ia, body: ba }, Traced::Result { ids: ib, body: bb }) => {
            Traced::result(ia.union(ib).cloned().collect(), add_ty(ba, bb))
        }
        (Traced::Strategy(sa), Traced::Strategy(sb)) => Traced::strategy(
            sa.ids.union(&sb.ids).cloned().collect(),
            add_ty(&sa.input, &sb.input),
            add_ty(&sa.output, &sb.output),
        ),
        (Traced::Combinator(pa, ra), Traced::Combinator(pb, rb)) => Traced::Combinator(
            Box::new(StrategyTy {
                ids: pa.ids.union(&pb.ids).cloned().collect(),
                input: add_ty(&pa.input, &pb.input),
                output: add_ty(&pa.output, &pb.output),
            }),
            Box::new(add_traced(ra, rb)),
        ),
        _ => panic!("addType on traced types with different shapes"),
    }
}

/// Merge two traced triples: disjoint tracing environments are concatenated,
/// the combinator environments and types (equal after erasure) are united
/// pointwise.
pub fn add(m: &TracedTriple, n: &TracedTriple) -> TracedTriple {
    debug_assert!(
        m.phi.ids().iter().all(|a| n.phi.lookup(*a).is_none()),
        "Add requires disjoint tracing environments"
    );
    let sigma = CombEnv(
        m.sigma
            .0
            .iter()
            .map(|(name, sm)| {
                let sn = n
                    .sigma
                    .lookup(name)
                    .expect("Add requires combinator environments with the same names");
                let merged = match add_traced(
                    &Traced::Strategy(sm.clone()),
                    &Traced::Strategy(sn.clone()),
                ) {
                    Traced::Strategy(s) => s,
                    _ => unreachable!(),
                };
                (name.clone(), merged)
            })
            .collect(),
    );
    TracedTriple::new(
        m.phi.concat(&n.phi),
        sigma,
        add_traced(&m.omega, &n.omega),
    )
}

// ---------------------------------------------------------------------------
// Trace unification
// ---------------------------------------------------------------------------

/// Unify the traces of two single-traced types with the same erasure. The
/// result is either a trace substitution making both sides equal, or the
/// bottom value signalling that the traces cannot connect.
pub fn unify_trace(trace: &Trace, a: &Traced, b: &Traced) -> TraceSubst {
    match (a, b) {
        (Traced::Result { body: ba, .. }, Traced::Result { body: bb, .. }) => {
            unify_trace_ty(trace, ba, bb)
        }
        (Traced::Strategy(sa), Traced::Strategy(sb)) => {
            let s = unify_trace_ty(trace, &sa.input, &sb.input);
            if s.is_fail() {
                return TraceSubst::Fail;
            }
            let oa = apply_trace_subst(&sa.output, &s);
            let ob = apply_trace_subst(&sb.output, &s);
            unify_trace_ty(trace, &oa, &ob).compose(s)
        }
        _ => panic!("unifyTrace is not defined on combinator types"),
    }
}

pub fn unify_trace_ty(trace: &Trace, a: &Ty, b: &Ty) -> TraceSubst {
    unify_trace_ty_inner(trace, a, b, &mut std::collections::HashSet::new())
}

fn unify_trace_ty_inner(
    trace: &Trace,
    a: &Ty,
    b: &Ty,
    assumed: &mut std::collections::HashSet<(Ty, Ty)>,
) -> TraceSubst {
    let a_id = a.ann().contains(&TraceVar::Id(trace.id));
    let b_id = b.ann().contains(&TraceVar::Id(trace.id));
    // A unit traced by the identifier never unifies with its untraced
    // counterpart.
    if a_id && b.ann().is_empty() {
        return TraceSubst::Fail;
    }
    if b_id && a.ann().is_empty() {
        return TraceSubst::Fail;
    }
    // Member-traced positions map to the other side, unless the other side is
    // exactly the bare underlying type.
    if let Some(m) = member_of(trace, a) {
        if ty_eq(b, &a.strip_ann()) {
            return TraceSubst::Fail;
        }
        return TraceSubst::single(m, b.clone());
    }
    if let Some(m) = member_of(trace, b) {
        if ty_eq(a, &b.strip_ann()) {
            return TraceSubst::Fail;
        }
        return TraceSubst::single(m, a.clone());
    }
    // Equal types unify with the empty substitution.
    if ty_eq(a, b) {
        return TraceSubst::empty();
    }
    match (a, b) {
        (Ty::Variant(ra, _), Ty::Variant(rb, _)) => unify_trace_row(trace, ra, rb, assumed),
        (Ty::Pair(a1, a2, _), Ty::Pair(b1, b2, _)) => {
            let s = unify_trace_ty_inner(trace, a1, b1, assumed);
            if s.is_fail() {
                return TraceSubst::Fail;
            }
            let a2s = apply_trace_subst(a2, &s);
            let b2s = apply_trace_subst(b2, &s);
            unify_trace_ty_inner(trace, &a2s, &b2s, assumed).compose(s)
        }
        // Equi-recursive variants are unfolded in advance; the substituted
        // copies are erased, so a revisited pair carries no trace content
        // and unifies with the empty substitution.
        (Ty::Rec(_, _, _), _) | (_, Ty::Rec(_, _, _)) => {
            let key = (a.clone(), b.clone());
            if assumed.contains(&key) {
                return TraceSubst::empty();
            }
            assumed.insert(key);
            let ua = unfold_rec(a).unwrap_or_else(|| a.clone());
            let ub = unfold_rec(b).unwrap_or_else(|| b.clone());
            unify_trace_ty_inner(trace, &ua, &ub, assumed)
        }
        _ => TraceSubst::Fail,
    }
}

fn member_of(trace: &Trace, t: &Ty) -> Option<TraceMem> {
    t.ann().iter().find_map(|v| match v {
        TraceVar::Mem(m) if trace.members.contains(m) => Some(*m),
        _ => None,
    })
}

fn unify_trace_row(
    trace: &Trace,
    a: &Row,
    b: &Row,
    assumed: &mut std::collections::HashSet<(Ty, Ty)>,
) -> TraceSubst {
    // Rows of conversion-equal types can differ in how much row-variable
    // progress they have materialized. A label present on one side only has
    // an erased counterpart behind the other side's row variable, so its
    // payload unifies against its own erasure: that fails exactly when the
    // payload carries trace content that would have nothing to connect to.
    let (ea, _) = a.entries();
    let (eb, _) = b.entries();
    let mut subst = TraceSubst::empty();
    let mut bmap: std::collections::BTreeMap<&str, &Ty> = std::collections::BTreeMap::new();
    for (l, t) in &eb {
        bmap.insert(l, t);
    }
    let mut seen: std::collections::BTreeSet<&str> = std::collections::BTreeSet::new();
    for (l, ta) in &ea {
        seen.insert(l);
        let ta = apply_trace_subst(ta, &subst);
        let s = match bmap.get(l) {
            Some(tb) => {
                let tb = apply_trace_subst(tb, &subst);
                unify_trace_ty_inner(trace, &ta, &tb, assumed)
            }
            None => unify_trace_ty_inner(trace, &ta, &erase_ty(&ta), assumed),
        };
        if s.is_fail() {
            return TraceSubst::Fail;
        }
        subst = s.compose(subst);
    }
    for (l, tb) in &eb {
        if seen.contains(l) {
            continue;
        }
        let tb = apply_trace_subst(tb, &subst);
        let s = unify_trace_ty_inner(trace, &erase_ty(&tb), &tb, assumed);
        if s.is_fail() {
            return TraceSubst::Fail;
        }
        subst = s.compose(subst);
    }
    subst
}


// ---------------------------------------------------------------------------
// compTrace
// ---------------------------------------------------------------------------

/// Compute the traced result of applying a strategy combinator: `omega_m` is
/// the parameter type expected by the combinator, `omega_c` the type of the
/// combinator body, and `omega_n` the argument's type. Every pair of traces
/// (one from the parameter, one from the argument) is tried; each pair whose
/// single-trace slices unify contributes a freshly renamed instance of the
/// body type under the unifying substitution. Traces not involved in the
/// computation pass through untouched. An empty resulting tracing
/// environment is valid output: it is the signal consumed by the
/// warning/error policy downstream.
#[allow(clippy::too_many_arguments)]
pub fn comp_trace(
    sess: &mut Session,
    phi_m: &TracingEnv,
    sigma_m: &CombEnv,
    omega_m: &Traced,
    omega_c: &Traced,
    phi_n: &TracingEnv,
    sigma_n: &CombEnv,
    omega_n: &Traced,
) -> TracedTriple {
    let ids_m: Vec<TraceId> = {
        let set = trace_ids(phi_m, omega_m);
        phi_m.ids().into_iter().filter(|a| set.contains(a)).collect()
    };
    let ids_n: Vec<TraceId> = {
        let set = trace_ids(phi_n, omega_n);
        phi_n.ids().into_iter().filter(|a| set.contains(a)).collect()
    };

    let normalize = |sess: &Session, t: &TracedTriple| {
        TracedTriple::new(
            t.phi.clone(),
            sess.zonk_comb_env(&t.sigma),
            sess.zonk_traced(&t.omega),
        )
    };
    let minus_m = normalize(
        sess,
        &delete(&ids_m, &TracedTriple::new(phi_m.clone(), sigma_m.clone(), omega_c.clone())),
    );
    let minus_n = normalize(
        sess,
        &delete(&ids_n, &TracedTriple::new(phi_n.clone(), sigma_n.clone(), omega_n.clone())),
    );

    let mut acc = TracedTriple::new(
        minus_m.phi.concat(&minus_n.phi),
        CombEnv(
            minus_m
                .sigma
                .0
                .iter()
                .chain(minus_n.sigma.0.iter())
                .cloned()
                .collect(),
        ),
        minus_m.omega,
    );

    let triple_m = TracedTriple::new(phi_m.clone(), sigma_m.clone(), omega_m.clone());
    let triple_c = TracedTriple::new(phi_m.clone(), CombEnv::empty(), omega_c.clone());
    let triple_n = TracedTriple::new(phi_n.clone(), sigma_n.clone(), omega_n.clone());

    let mut iterations = 0usize;
    let mut successes = 0usize;
    for am in &ids_m {
        for an in &ids_n {
            iterations += 1;
            // structural bindings may have grown after earlier iterations;
            // slices are taken from freshly normalized triples
            let slice_m = normalize(sess, &select(&[*am], &normalize(sess, &triple_m)));
            let slice_c = normalize(sess, &select(&[*am], &normalize(sess, &triple_c)));
            let slice_n = {
                let sel = normalize(sess, &select(&[*an], &normalize(sess, &triple_n)));
                let mut rename = TraceRename::default();
                rename.ids.insert(*an, *am);
                TracedTriple::new(
                    rename_traces_env(&sel.phi, &rename),
                    rename_traces_comb_env(&sel.sigma, &rename),
                    rename_traces_traced(&sel.omega, &rename),
                )
            };
            let members_m = slice_m
                .phi
                .lookup(*am)
                .map(|t| t.members.clone())
                .unwrap_or_default();
            let members_n = slice_n
                .phi
                .lookup(*am)
                .map(|t| t.members.clone())
                .unwrap_or_default();
            debug_assert!(members_m.is_disjoint(&members_n));
            let pooled = Trace {
                id: *am,
                members: members_m.union(&members_n).cloned().collect(),
            };
            let subst = unify_trace(&pooled, &slice_m.omega, &slice_n.omega);
            if let Some(log) = sess.audit_unify.as_mut() {
                if !subst.is_fail() {
                    log.push(UnifyAuditEvent {
                        env: TracingEnv::single(pooled.id, pooled.members.clone()),
                        left: slice_m.omega.clone(),
                        right: slice_n.omega.clone(),
                        subst: subst.clone(),
                    });
                }
            }
            if !subst.is_fail() {
                successes += 1;
                let mut sigma_pair = slice_m.sigma.0.clone();
                for (n, s) in &slice_n.sigma.0 {
                    debug_assert!(
                        !sigma_pair.iter().any(|(m, _)| m == n),
                        "combinator environments must be disjoint (linearity)"
                    );
                    sigma_pair.push((n.clone(), s.clone()));
                }
                let sigma_subst = CombEnv(
                    sigma_pair
                        .into_iter()
                        .map(|(n, s)| {
                            let t = apply_trace_subst_traced(&Traced::Strategy(s), &subst);
                            match t {
                                Traced::Strategy(s) => (n, s),
                                _ => unreachable!(),
                            }
                        })
                        .collect(),
                );
                let omega_i = apply_trace_subst_traced(&slice_c.omega, &subst);
                // normalize the fold state of substituted types so the
                // accumulator merge walks aligned shapes
                let freshened = fresh(
                    sess,
                    &normalize(
                        sess,
                        &TracedTriple::new(
                            TracingEnv::single(pooled.id, pooled.members.clone()),
                            sigma_subst,
                            omega_i,
                        ),
                    ),
                );
                acc = add(&acc, &freshened);
            }
        }
    }
    sess.comp_trace_stats
        .push((iterations, successes, ids_m.len(), ids_n.len()));
    acc
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
    fn unit_id(a: TraceId) -> Ty {
        Ty::Unit([TraceVar::Id(a)].into_iter().collect())
    }
    fn var_mem(v: u32, m: TraceMem) -> Ty {
        Ty::Var(TyVar(v), [TraceVar::Mem(m)].into_iter().collect())
    }

    #[test]
    fn unify_identifier_against_untraced_unit_fails() {
        let trace = Trace { id: tid(0), members: BTreeSet::new() };
        assert!(unify_trace_ty(&trace, &unit_id(tid(0)), &Ty::unit()).is_fail());
        assert!(unify_trace_ty(&trace, &Ty::unit(), &unit_id(tid(0))).is_fail());
    }

    #[test]
    fn unify_equal_types_is_empty() {
        let trace = Trace { id: tid(0), members: BTreeSet::new() };
        let t = unit_id(tid(0));
        assert_eq!(unify_trace_ty(&trace, &t, &t), TraceSubst::empty());
    }

    #[test]
    fn unify_member_maps_to_other_side() {
        let trace = Trace { id: tid(0), members: [tmem(0)].into() };
        let got = unify_trace_ty(&trace, &var_mem(1, tmem(0)), &unit_id(tid(0)));
        assert_eq!(got, TraceSubst::single(tmem(0), unit_id(tid(0))));
        // against the bare underlying type the unification fails
        assert!(unify_trace_ty(&trace, &var_mem(1, tmem(0)), &Ty::var(TyVar(1))).is_fail());
    }

    #[test]
    fn select_single_trace_keeps_only_it() {
        // type: pair((){a}, x{b0}) under a |> {}, b |> {b0}
        let phi = TracingEnv(vec![
            Trace { id: tid(0), members: BTreeSet::new() },
            Trace { id: tid(1), members: [tmem(0)].into() },
        ]);
        let t = Traced::result(
            [tid(0), tid(1)].into(),
            Ty::pair(unit_id(tid(0)), var_mem(0, tmem(0))),
        );
        let triple = TracedTriple::new(phi, CombEnv::empty(), t);
        let sel = select(&[tid(0)], &triple);
        assert_eq!(sel.phi.ids(), vec![tid(0)]);
        match &sel.omega {
            Traced::Result { ids, body } => {
                assert_eq!(ids, &[tid(0)].into_iter().collect::<BTreeSet<_>>());
                match body {
                    Ty::Pair(a, b, _) => {
                        assert_eq!(**a, unit_id(tid(0)));
                        assert_eq!(**b, Ty::var(TyVar(0)));
                    }
                    _ => panic!(),
                }
            }
            _ => panic!(),
        }
        // selecting everything is the identity
        let all = select(&[tid(0), tid(1)], &triple);
        assert!(traced_eq(&all.omega, &triple.omega));
        // selecting nothing erases
        let none = select(&[], &triple);
        assert!(none.phi.is_empty());
        assert!(traced_eq(&none.omega, &erase_traced(&triple.omega)));
    }

    #[test]
    fn delete_is_dual_of_select() {
        let phi = TracingEnv(vec![
            Trace { id: tid(0), members: BTreeSet::new() },
            Trace { id: tid(1), members: [tmem(0)].into() },
        ]);
        let t = Traced::result(
            [tid(0), tid(1)].into(),
            Ty::pair(unit_id(tid(0)), var_mem(0, tmem(0))),
        );
        let triple = TracedTriple::new(phi, CombEnv::empty(), t);
        let deleted = delete(&[tid(0)], &triple);
        let selected = select(&[tid(1)], &triple);
        assert_eq!(deleted.phi, selected.phi);
        assert!(traced_eq(&deleted.omega, &selected.omega));
    }

    #[test]
    fn fresh_drops_unused_members() {
        let mut sess = Session::new();
        // phi = a |> {a0, a1}, omega mentions only a0
        let phi = TracingEnv::single(tid(7), [tmem(7), tmem(8)].into());
        let omega = Traced::result([tid(7)].into(), var_mem(0, tmem(7)));
        let out = fresh(&mut sess, &TracedTriple::new(phi, CombEnv::empty(), omega));
        assert_eq!(out.phi.0.len(), 1);
        assert_eq!(out.phi.0[0].members.len(), 1);
        // renamed apart from the input
        assert_ne!(out.phi.0[0].id, tid(7));
    }

    #[test]
    fn add_unions_annotations() {
        let a = unit_id(tid(0));
        let b = unit_id(tid(1));
        let sum = add_ty(&a, &b);
        assert_eq!(sum.ann().len(), 2);
        // adding an erased twin is the identity
        let t = var_mem(3, tmem(2));
        assert_eq!(add_ty(&t, &erase_ty(&t)), t);
    }
}
