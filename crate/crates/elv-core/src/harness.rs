//! Metatheory harness: generated programs plus executable checks of the
//! soundness and success/failure statements.
//!
//! Rules are generated typed-by-construction over a fixed arithmetic label
//! alphabet; strategy programs are composed from them and filtered through
//! the checker. Inputs are biased toward instances of the rules' left-hand
//! sides so a healthy share of generated executions is well-traced. Each
//! well-typed program is evaluated exhaustively and checked against the
//! theorem statements; violations are shrunk by node deletion to a locally
//! minimal counterexample.

use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;

use crate::check::{self, check_against_verdict, check_program, AgainstVerdict, CheckOutcome};
use crate::engine;
use crate::eval::{evaluate_all_audited, EvalError, MatchAudit, OutcomeSet};
use crate::term::{mk, p2e, CoreKind, CoreTerm, PatKind, Pattern};
use crate::types::*;

/// Deterministic splitmix64 generator: reproducible across platforms.
#[derive(Debug, Clone)]
pub struct Rng(u64);

impl Rng {
    pub fn new(seed: u64) -> Rng {
        Rng(seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.next_u64() % n.max(1)
    }

    pub fn chance(&mut self, percent: u64) -> bool {
        self.below(100) < percent
    }
}

const OPS: [&str; 4] = ["Mul", "Add", "Sub", "Div"];
const VAR_POOL: [&str; 6] = ["m", "n", "v", "w", "x", "y"];

/// A well-formed linear rule over the arithmetic alphabet. Always
/// type-checks: the body uses only pattern variables.
pub fn gen_rule(rng: &mut Rng, depth: u32) -> CoreTerm {
    let mut vars = Vec::new();
    let pattern = gen_pattern(rng, depth, &mut vars);
    let body = gen_body(rng, depth, &vars);
    mk::rule(pattern, body)
}

fn gen_pattern(rng: &mut Rng, depth: u32, vars: &mut Vec<String>) -> Pattern {
    gen_pattern_at(rng, depth, vars, true)
}

fn gen_pattern_at(rng: &mut Rng, depth: u32, vars: &mut Vec<String>, top: bool) -> Pattern {
    if depth == 0 {
        return gen_pattern_leaf(rng, vars, top);
    }
    // the top level keeps to operator shapes and variables so that random
    // rules compose structurally; variety lives in the operands
    let roll = if top { rng.below(10).min(5) } else { rng.below(10) };
    match roll {
        0..=4 => {
            let op = OPS[rng.below(OPS.len() as u64) as usize];
            let l = gen_pattern_at(rng, depth - 1, vars, false);
            let r = gen_pattern_at(rng, depth - 1, vars, false);
            if rng.chance(15) && !vars.iter().any(|v| v == "op") {
                vars.push("op".to_string());
                mk::pbinop_var("op", l, r)
            } else {
                mk::pbinop(op, l, r)
            }
        }
        5..=6 => gen_pattern_leaf(rng, vars, top),
        7 => {
            // numeral labels mostly wrap variables or units so that merged
            // rows keep compatible payloads
            let inner = if rng.chance(70) {
                gen_pattern_leaf(rng, vars, false)
            } else {
                gen_pattern_at(rng, depth - 1, vars, false)
            };
            Pattern::new(PatKind::Label(
                format!("{}", rng.below(10)),
                Rc::new(inner),
            ))
        }
        8 => Pattern::new(PatKind::Pair(
            Rc::new(gen_pattern_at(rng, depth - 1, vars, false)),
            Rc::new(gen_pattern_at(rng, depth - 1, vars, false)),
        )),
        _ => gen_pattern_leaf(rng, vars, top),
    }
}

fn gen_pattern_leaf(rng: &mut Rng, vars: &mut Vec<String>, top: bool) -> Pattern {
    if rng.chance(if top { 80 } else { 55 }) {
        // fresh variable
        for candidate in VAR_POOL {
            if !vars.iter().any(|v| v == candidate) {
                vars.push(candidate.to_string());
                return mk::pvar(candidate);
            }
        }
    }
    if !top && rng.chance(20) {
        mk::punit()
    } else {
        mk::pnum(rng.below(10))
    }
}

fn gen_body(rng: &mut Rng, depth: u32, vars: &[String]) -> CoreTerm {
    gen_body_at(rng, depth, vars, true)
}

fn gen_body_at(rng: &mut Rng, depth: u32, vars: &[String], top: bool) -> CoreTerm {
    if depth == 0 || (!top && rng.chance(35)) {
        return gen_body_leaf_at(rng, vars, top);
    }
    if top && rng.chance(30) {
        // a bare pattern variable composes with anything downstream
        let usable: Vec<&String> = vars.iter().filter(|v| v.as_str() != "op").collect();
        if !usable.is_empty() {
            return mk::var(usable[rng.below(usable.len() as u64) as usize]);
        }
    }
    let roll = if top { rng.below(8).min(4) } else { rng.below(8) };
    match roll {
        0..=4 => {
            let op = OPS[rng.below(OPS.len() as u64) as usize];
            mk::binop(
                op,
                gen_body_at(rng, depth - 1, vars, false),
                gen_body_at(rng, depth - 1, vars, false),
            )
        }
        5 => mk::label(
            &format!("{}", rng.below(10)),
            gen_body_at(rng, depth - 1, vars, false),
        ),
        6 => mk::pair(
            gen_body_at(rng, depth - 1, vars, false),
            gen_body_at(rng, depth - 1, vars, false),
        ),
        _ => gen_body_leaf(rng, vars),
    }
}

fn gen_body_leaf(rng: &mut Rng, vars: &[String]) -> CoreTerm {
    gen_body_leaf_at(rng, vars, false)
}

fn gen_body_leaf_at(rng: &mut Rng, vars: &[String], top: bool) -> CoreTerm {
    let usable: Vec<&String> = vars.iter().filter(|v| v.as_str() != "op").collect();
    if !usable.is_empty() && rng.chance(if top { 85 } else { 70 }) {
        return mk::var(usable[rng.below(usable.len() as u64) as usize]);
    }
    if !top && rng.chance(20) {
        mk::unit()
    } else {
        mk::num(rng.below(10))
    }
}

/// A closed value instantiating a pattern: pattern variables become random
/// closed expressions, so the value matches the pattern by construction.
fn instantiate_pattern(rng: &mut Rng, p: &Pattern) -> CoreTerm {
    match &p.kind {
        PatKind::Var(_) => gen_closed_value(rng, 1),
        PatKind::Unit => mk::unit(),
        PatKind::Pair(a, b) => mk::pair(instantiate_pattern(rng, a), instantiate_pattern(rng, b)),
        PatKind::Label(l, q) => mk::label(l, instantiate_pattern(rng, q)),
    }
}

fn gen_closed_value(rng: &mut Rng, depth: u32) -> CoreTerm {
    if depth == 0 || rng.chance(40) {
        return mk::num(rng.below(10));
    }
    match rng.below(4) {
        0 | 1 => mk::binop(
            OPS[rng.below(OPS.len() as u64) as usize],
            gen_closed_value(rng, depth - 1),
            gen_closed_value(rng, depth - 1),
        ),
        _ => mk::num(rng.below(10)),
    }
}

/// A strategy expression built from generated rules and the combinators.
/// Returns the strategy together with the leftmost rule's pattern (used to
/// bias execution inputs).
fn gen_strategy(rng: &mut Rng, budget: u32) -> (CoreTerm, Pattern) {
    if budget <= 4 {
        let depth = 1 + (rng.below(2) as u32);
        let r = gen_rule(rng, depth);
        let p = first_pattern(&r).expect("rules have patterns");
        return (r, p);
    }
    match rng.below(10) {
        0..=3 => {
            let (a, pa) = gen_strategy(rng, budget / 2);
            // most of the time the right side is built to consume the left
            // side's output shape, so sequential paths frequently connect
            let b = if rng.chance(65) {
                match first_body(&a) {
                    Some(body) => {
                        let mut vars = Vec::new();
                        let pat = pattern_of_value_shape(rng, &body, &mut vars);
                        mk::rule(pat, gen_body(rng, 2, &vars))
                    }
                    None => gen_strategy(rng, budget / 2).0,
                }
            } else {
                gen_strategy(rng, budget / 2).0
            };
            (mk::seq(a, b), pa)
        }
        4..=6 => {
            let (a, pa) = gen_strategy(rng, budget / 2);
            let (b, _) = gen_strategy(rng, budget / 2);
            (mk::choice(a, b), pa)
        }
        7 => {
            // a combinator that uses its argument once, applied immediately;
            // nested definitions get distinct names (no shadowing)
            let name = format!("s{}", rng.below(1_000_000));
            let (inner, pa) = gen_strategy(rng, budget / 2);
            let (arg, _) = gen_strategy(rng, budget / 2);
            let body = if rng.chance(50) {
                mk::seq(inner, mk::var(&name))
            } else {
                mk::choice(mk::var(&name), inner)
            };
            (mk::comb_app(mk::st(&name, body), arg), pa)
        }
        _ => {
            let depth = 1 + (rng.below(2) as u32);
            let r = gen_rule(rng, depth);
            let p = first_pattern(&r).expect("rules have patterns");
            (r, p)
        }
    }
}

/// The body of the leftmost rule of a strategy expression.
fn first_body(t: &CoreTerm) -> Option<CoreTerm> {
    match &t.kind {
        CoreKind::Rule(_, e) => Some((**e).clone()),
        CoreKind::CombApp(f, a) => first_body(f).or_else(|| first_body(a)),
        CoreKind::StLam(_, b) => first_body(b),
        CoreKind::Let(_, a, b) => first_body(a).or_else(|| first_body(b)),
        _ => None,
    }
}

/// A pattern with the same constructor skeleton as a rule body: term
/// variables and opaque positions become fresh pattern variables.
fn pattern_of_value_shape(rng: &mut Rng, body: &CoreTerm, vars: &mut Vec<String>) -> Pattern {
    let fresh = |vars: &mut Vec<String>| {
        for candidate in VAR_POOL {
            if !vars.iter().any(|v| v == candidate) {
                vars.push(candidate.to_string());
                return mk::pvar(candidate);
            }
        }
        mk::punit()
    };
    match &body.kind {
        CoreKind::Unit => mk::punit(),
        CoreKind::Pair(a, b) => {
            let pa = pattern_of_value_shape(rng, a, vars);
            let pb = pattern_of_value_shape(rng, b, vars);
            Pattern::new(PatKind::Pair(Rc::new(pa), Rc::new(pb)))
        }
        CoreKind::Label(l, e) => {
            let inner = pattern_of_value_shape(rng, e, vars);
            Pattern::new(PatKind::Label(l.clone(), Rc::new(inner)))
        }
        _ => fresh(vars),
    }
}

fn first_pattern(t: &CoreTerm) -> Option<Pattern> {
    match &t.kind {
        CoreKind::Rule(p, _) => Some((**p).clone()),
        CoreKind::CombApp(f, a) => first_pattern(f).or_else(|| first_pattern(a)),
        CoreKind::StLam(_, b) => first_pattern(b),
        CoreKind::Let(_, a, b) => first_pattern(a).or_else(|| first_pattern(b)),
        _ => None,
    }
}

/// A closed program: a strategy applied to an input, optionally wrapped in a
/// `let`. Inputs are biased toward instances of a rule pattern inside the
/// strategy so executions are frequently well-traced.
pub fn gen_strategy_program(seed: u64, size: u32) -> CoreTerm {
    let mut rng = Rng::new(seed);
    let budget = size.max(6);
    let (strategy, pattern) = gen_strategy(&mut rng, budget);
    let input = if rng.chance(85) {
        instantiate_pattern(&mut rng, &pattern)
    } else {
        gen_closed_value(&mut rng, 2)
    };
    let exec = |s: CoreTerm, rng: &mut Rng| {
        if rng.chance(6) {
            mk::exec(s, mk::fail())
        } else {
            mk::exec(s, mk::succ(input.clone()))
        }
    };
    if rng.chance(25) {
        // bind the strategy first; rejected programs (dead binders) are
        // resampled by the caller
        mk::let_in("f", strategy, exec(mk::var("f"), &mut rng))
    } else {
        exec(strategy, &mut rng)
    }
}

// ---------------------------------------------------------------------------
// Theorem checking
// ---------------------------------------------------------------------------

pub const THEOREMS: [&str; 13] = [
    "subject_reduction",
    "progress",
    "strong_normalization",
    "empty_traced_failed_result",
    "empty_traced_unproductive_strategy",
    "successful_rewrite",
    "successful_rule",
    "failed_rule",
    "rule_substitution",
    "seq_reduction",
    "enumeration",
    "unification",
    "pattern_matching",
];

#[derive(Debug, Clone, Default)]
pub struct TheoremCounts {
    pub checked: u64,
    pub violations: u64,
}

#[derive(Debug, Clone)]
pub struct Violation {
    pub theorem: &'static str,
    pub seed: Option<u64>,
    pub program: CoreTerm,
    pub shrunk: Option<CoreTerm>,
    pub detail: String,
}

#[derive(Debug, Default)]
pub struct Report {
    pub programs: u64,
    pub well_typed: u64,
    pub well_traced: u64,
    /// Programs whose checks were cut short by the per-program budget.
    pub timed_out: u64,
    pub counts: BTreeMap<&'static str, TheoremCounts>,
    pub violations: Vec<Violation>,
}

impl Report {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "programs": self.programs,
            "wellTyped": self.well_typed,
            "wellTraced": self.well_traced,
            "timedOut": self.timed_out,
            "theorems": self.counts.iter().map(|(name, c)| {
                (name.to_string(), serde_json::json!({
                    "checked": c.checked,
                    "violations": c.violations,
                }))
            }).collect::<serde_json::Map<_, _>>(),
            "violations": self.violations.iter().map(|v| serde_json::json!({
                "theorem": v.theorem,
                "seed": v.seed,
                "detail": v.detail,
                "program": v.program.to_json(),
                "shrunk": v.shrunk.as_ref().map(|t| t.to_json()),
            })).collect::<Vec<_>>(),
        })
    }
}

/// Result of checking every theorem statement on one program.
#[derive(Debug, Default)]
pub struct ProgramReport {
    pub well_typed: bool,
    pub well_traced: bool,
    pub checked: Vec<&'static str>,
    pub violations: Vec<(&'static str, String)>,
    /// Reachable states the inference algorithm could not re-type because of
    /// occurs-check ordering; not violations.
    pub inference_incomplete: u64,
    /// The per-program time budget ran out; remaining checks were skipped.
    pub timed_out: bool,
}

/// Cap on per-state type checks (subject reduction is quadratic otherwise).
const SUBJECT_REDUCTION_CAP: usize = 48;

pub fn check_theorems(program: &CoreTerm, fuel_per_node: u64) -> ProgramReport {
    check_theorems_with_deadline(program, fuel_per_node, None)
}

/// Run every theorem check on one program. A resource-limit signal from any
/// stage (re-typing reducts of pathological programs can exhaust the checker
/// budget) marks the program as timed out rather than unwinding further.
pub fn check_theorems_with_deadline(
    program: &CoreTerm,
    fuel_per_node: u64,
    deadline: Option<std::time::Instant>,
) -> ProgramReport {
    let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
        check_theorems_inner(program, fuel_per_node, deadline)
    }));
    match result {
        Ok(report) => report,
        Err(payload) => {
            if payload
                .downcast_ref::<crate::structural::ResourceLimit>()
                .is_none()
            {
                std::panic::resume_unwind(payload);
            }
            ProgramReport {
                well_typed: true,
                timed_out: true,
                ..ProgramReport::default()
            }
        }
    }
}

fn check_theorems_inner(
    program: &CoreTerm,
    fuel_per_node: u64,
    deadline: Option<std::time::Instant>,
) -> ProgramReport {
    let past_deadline =
        |d: &Option<std::time::Instant>| d.map(|d| std::time::Instant::now() > d).unwrap_or(false);
    let mut report = ProgramReport::default();
    let outcome = check_with_audit(program);
    let Ok(typing) = &outcome.typing else {
        return report;
    };
    report.well_typed = true;

    // instrumented unification lemma: every successful unifyTrace call must
    // equalize its inputs
    if let Some(events) = &outcome.session.audit_unify {
        report.checked.push("unification");
        for ev in events {
            let l = apply_trace_subst_traced(&ev.left, &ev.subst);
            let r = apply_trace_subst_traced(&ev.right, &ev.subst);
            // equality up to conversion and row-variable progress: the two
            // sides may hold the same type at different materializations
            if !crate::types::traced_progress_eq(&l, &r) {
                report
                    .violations
                    .push(("unification", "t1[S] differs from t2[S]".to_string()));
                break;
            }
        }
    }

    let fuel = fuel_per_node * program.size() as u64;
    let mut match_audit = MatchAudit::default();
    let eval = {
        let mut audit_opt: Option<&mut MatchAudit> = Some(&mut match_audit);
        crate::eval::evaluate_all_with_deadline(program, fuel, &mut audit_opt, deadline)
    };

    let outcomes: OutcomeSet = match eval {
        Ok(set) => {
            report.checked.push("strong_normalization");
            report.checked.push("progress");
            set
        }
        Err(EvalError::Deadline) => {
            report.timed_out = true;
            return report;
        }
        Err(EvalError::FuelExhausted(n)) => {
            report.checked.push("strong_normalization");
            report.violations.push((
                "strong_normalization",
                format!("fuel exhausted after {n} states"),
            ));
            return report;
        }
        Err(EvalError::Stuck(t)) => {
            report.checked.push("progress");
            report
                .violations
                .push(("progress", format!("stuck non-value: {t}")));
            return report;
        }
    };

    // instrumented pattern-matching lemma
    report.checked.push("pattern_matching");
    for (p, v, s) in &match_audit.events {
        let rebuilt = p2e(p).subst(s);
        if &rebuilt != v {
            report
                .violations
                .push(("pattern_matching", format!("p2e(p)[S] = {rebuilt} but v = {v}")));
            break;
        }
    }

    // subject reduction: every reachable state keeps the program's type.
    // States the inference rejects through the occurs check are counted as
    // inference incompleteness, not violations: the declarative rules fix no
    // unification order, and re-typing a reduct can demand recursion the
    // one-pass algorithm only finds in other orders.
    report.checked.push("subject_reduction");
    let reachable = reachable_states(program, SUBJECT_REDUCTION_CAP, fuel);
    for state in &reachable {
        if past_deadline(&deadline) {
            report.timed_out = true;
            return report;
        }
        if state == program {
            continue;
        }
        match check_against_verdict(&outcome.session, state, &typing.phi, &typing.ty) {
            AgainstVerdict::Holds => {}
            AgainstVerdict::Inconclusive => report.inference_incomplete += 1,
            AgainstVerdict::Fails => {
                report.violations.push((
                    "subject_reduction",
                    format!("state no longer has the program type: {state}"),
                ));
                break;
            }
        }
    }

    // per-redex lemmas over reachable states
    check_rule_lemmas(&outcome, &reachable, fuel, &mut report);
    check_seq_reduction(&outcome, &reachable, &mut report);

    // whole-program result statements
    if let Traced::Result { ids, .. } = &typing.ty {
        if ids.is_empty() {
            report.checked.push("empty_traced_failed_result");
            if !(outcomes.all_fail() && outcomes.outcomes.len() == 1) {
                report.violations.push((
                    "empty_traced_failed_result",
                    format!("expected {{fail}}, got {:?}", outcomes.values()),
                ));
            }
        } else {
            report.well_traced = true;
            report.checked.push("successful_rewrite");
            if !outcomes.any_succ() {
                report.violations.push((
                    "successful_rewrite",
                    "well-traced execution without a successful outcome".to_string(),
                ));
            }
        }
    }

    // a statically dead strategy makes every execution fail
    if let CoreKind::Exec(strategy, _) = &program.kind {
        if strategy.is_closed() {
            let mut checker = check::checker_session();
            if let Ok(st) = checker.type_closed(strategy) {
                if let Traced::Strategy(s) = &st.ty {
                    if s.ids.is_empty() {
                        report.checked.push("empty_traced_unproductive_strategy");
                        if !outcomes.all_fail() {
                            report.violations.push((
                                "empty_traced_unproductive_strategy",
                                "empty-traced strategy produced a success".to_string(),
                            ));
                        }
                    }
                }
            }
        }
    }

    check_enumeration(&outcome, program, &outcomes, fuel, &mut report);
    report
}

fn check_with_audit(program: &CoreTerm) -> CheckOutcome {
    let mut checker = check::checker_session();
    checker.sess.audit_unify = Some(Vec::new());
    let typing = checker.type_closed(program);
    CheckOutcome {
        typing,
        warnings: checker.warnings,
        session: checker.sess,
    }
}

fn reachable_states(program: &CoreTerm, cap: usize, fuel: u64) -> Vec<CoreTerm> {
    let mut seen = vec![program.clone()];
    let mut frontier = vec![program.clone()];
    let mut budget = fuel;
    while !frontier.is_empty() && seen.len() < cap {
        let mut next = Vec::new();
        for t in frontier {
            for s in crate::eval::step_all(&t) {
                if budget == 0 {
                    return seen;
                }
                budget -= 1;
                if !seen.contains(&s) {
                    seen.push(s.clone());
                    next.push(s);
                    if seen.len() >= cap {
                        return seen;
                    }
                }
            }
        }
        frontier = next;
    }
    seen
}

/// Successful rule, failed rule, and rule substitution, checked on every
/// reachable root redex of the shape `(rule p -> e) <- succ v`.
fn check_rule_lemmas(
    outcome: &CheckOutcome,
    reachable: &[CoreTerm],
    fuel: u64,
    report: &mut ProgramReport,
) {
    let mut checked_any = (false, false, false);
    for state in reachable {
        let CoreKind::Exec(s, i) = &state.kind else { continue };
        let CoreKind::Rule(p, body) = &s.kind else { continue };
        let CoreKind::Succ(v) = &i.kind else { continue };
        if !v.is_value() || !state.is_closed() {
            continue;
        }
        let mut checker = check::checker_session();
        let Ok(t) = checker.type_closed(state) else { continue };
        let Traced::Result { ids, .. } = &t.ty else { continue };
        if ids.is_empty() {
            checked_any.1 = true;
            // failed rule: the execution must step to fail
            if crate::eval::step_all(state) != vec![mk::fail()] {
                report
                    .violations
                    .push(("failed_rule", format!("{state} did not step to fail")));
            }
        } else {
            checked_any.0 = true;
            match crate::eval::match_pattern(p, v) {
                None => report.violations.push((
                    "successful_rule",
                    format!("well-traced rule execution failed to match: {state}"),
                )),
                Some(subst) => {
                    // rule substitution: the contractum keeps the type
                    checked_any.2 = true;
                    let contractum = mk::succ(body.subst(&subst));
                    let verdict =
                        check_against_verdict(&checker.sess, &contractum, &t.phi, &t.ty);
                    if verdict == AgainstVerdict::Inconclusive {
                        report.inference_incomplete += 1;
                    } else if evaluate_all_audited(&contractum, fuel, &mut None).is_err()
                        || verdict == AgainstVerdict::Fails
                    {
                        report.violations.push((
                            "rule_substitution",
                            format!("succ e[S] lost the execution type at {state}"),
                        ));
                    }
                }
            }
        }
    }
    let _ = outcome;
    if checked_any.0 {
        report.checked.push("successful_rule");
    }
    if checked_any.1 {
        report.checked.push("failed_rule");
    }
    if checked_any.2 {
        report.checked.push("rule_substitution");
    }
}

/// Seq reduction: both sides of the `seq` notion of reduction get the same
/// result type.
fn check_seq_reduction(outcome: &CheckOutcome, reachable: &[CoreTerm], report: &mut ProgramReport) {
    let mut checked = false;
    for state in reachable {
        let CoreKind::Exec(s, i) = &state.kind else { continue };
        if !s.is_value() || !i.is_value() || !state.is_closed() {
            continue;
        }
        let CoreKind::CombApp(inner, vj) = &s.kind else { continue };
        let CoreKind::CombApp(comb, vm) = &inner.kind else { continue };
        if comb.kind != CoreKind::Seq {
            continue;
        }
        let lhs = state;
        let rhs = mk::exec((**vj).clone(), mk::exec((**vm).clone(), (**i).clone()));
        let mut checker = check::checker_session();
        let Ok(t1) = checker.type_closed(lhs) else { continue };
        checked = true;
        match checker.type_closed(&rhs) {
            Ok(t2) => match check::typings_agree_verdict(&checker.sess, &t1, &t2) {
                AgainstVerdict::Holds => {}
                AgainstVerdict::Inconclusive => report.inference_incomplete += 1,
                AgainstVerdict::Fails => {
                    report.violations.push((
                        "seq_reduction",
                        format!("seq contractum type differs at {state}"),
                    ));
                }
            },
            Err(d) if d.message.contains(check::OCCURS_MARKER) || d.code == "E007" => {
                report.inference_incomplete += 1;
            }
            Err(e) => {
                report.violations.push((
                    "seq_reduction",
                    format!("seq contractum fails to type at {state}: {e}"),
                ));
            }
        }
    }
    let _ = outcome;
    if checked {
        report.checked.push("seq_reduction");
    }
}

/// Enumeration: when the execution head normalizes to a combinator value (or
/// rule) applied to a successful input, each trace of the result type has a
/// successful outcome typed by that trace's slice.
fn check_enumeration(
    outcome: &CheckOutcome,
    program: &CoreTerm,
    outcomes: &OutcomeSet,
    fuel: u64,
    report: &mut ProgramReport,
) {
    let CoreKind::Exec(strategy, input) = &program.kind else { return };
    let CoreKind::Succ(vi) = &input.kind else { return };
    if !vi.is_value() || !strategy.is_closed() {
        return;
    }
    let Ok(head) = evaluate_all_audited(strategy, fuel, &mut None) else { return };
    let [head_value] = head.values()[..] else { return };
    if !(head_value.is_combinator_value() || matches!(head_value.kind, CoreKind::Rule(_, _))) {
        return;
    }
    let redex = mk::exec(head_value.clone(), mk::succ((**vi).clone()));
    let mut checker = check::checker_session();
    let Ok(t) = checker.type_closed(&redex) else { return };
    let Traced::Result { ids, .. } = &t.ty else { return };
    if ids.is_empty() {
        return;
    }
    report.checked.push("enumeration");
    let triple = engine::TracedTriple::new(t.phi.clone(), CombEnv::empty(), t.ty.clone());
    for id in ids.clone() {
        let slice = engine::select(&[id], &triple);
        let mut inconclusive = false;
        let witness = outcomes.outcomes.iter().any(|o| {
            if !matches!(o.value.kind, CoreKind::Succ(_)) {
                return false;
            }
            match check_against_verdict(&checker.sess, &o.value, &slice.phi, &slice.omega) {
                AgainstVerdict::Holds => true,
                AgainstVerdict::Inconclusive => {
                    inconclusive = true;
                    false
                }
                AgainstVerdict::Fails => false,
            }
        });
        if !witness {
            if inconclusive {
                report.inference_incomplete += 1;
            } else {
                report.violations.push((
                    "enumeration",
                    format!(
                        "no successful outcome types at the slice {}",
                        crate::render::render_simplified(&slice.phi, &slice.omega)
                    ),
                ));
            }
        }
    }
    let _ = outcome;
}

// ---------------------------------------------------------------------------
// Shrinking
// ---------------------------------------------------------------------------

/// Candidate reductions for shrinking: hoist children, inline redexes,
/// replace subtrees with minimal stand-ins.
fn shrink_candidates(t: &CoreTerm) -> Vec<CoreTerm> {
    let mut out = Vec::new();
    match &t.kind {
        CoreKind::CombApp(f, a) => {
            if let CoreKind::CombApp(comb, lhs) = &f.kind {
                if matches!(comb.kind, CoreKind::Seq | CoreKind::Choice) {
                    out.push((**lhs).clone());
                    out.push((**a).clone());
                }
            }
            if let CoreKind::StLam(x, body) = &f.kind {
                let mut m = HashMap::new();
                m.insert(x.clone(), (**a).clone());
                out.push(body.subst(&m));
            }
            for c in shrink_candidates(f) {
                out.push(CoreTerm::new(CoreKind::CombApp(Rc::new(c), a.clone())));
            }
            for c in shrink_candidates(a) {
                out.push(CoreTerm::new(CoreKind::CombApp(f.clone(), Rc::new(c))));
            }
        }
        CoreKind::Exec(s, i) => {
            out.push(CoreTerm::new(CoreKind::Exec(
                Rc::new(mk::rule(mk::pvar("x"), mk::var("x"))),
                i.clone(),
            )));
            out.push(CoreTerm::new(CoreKind::Exec(
                s.clone(),
                Rc::new(mk::succ(mk::unit())),
            )));
            for c in shrink_candidates(s) {
                out.push(CoreTerm::new(CoreKind::Exec(Rc::new(c), i.clone())));
            }
            for c in shrink_candidates(i) {
                out.push(CoreTerm::new(CoreKind::Exec(s.clone(), Rc::new(c))));
            }
        }
        CoreKind::Let(x, a, b) => {
            let mut m = HashMap::new();
            m.insert(x.clone(), (**a).clone());
            out.push(b.subst(&m));
            for c in shrink_candidates(a) {
                out.push(CoreTerm::new(CoreKind::Let(x.clone(), Rc::new(c), b.clone())));
            }
        }
        CoreKind::Alt(a, b) => {
            out.push((**a).clone());
            out.push((**b).clone());
        }
        CoreKind::Rule(p, body) => {
            if !matches!((&p.kind, &body.kind), (PatKind::Unit, CoreKind::Unit)) {
                out.push(mk::rule(mk::punit(), mk::unit()));
            }
            if let Some(v) = p.vars().first() {
                out.push(mk::rule((**p).clone(), mk::var(v)));
            }
        }
        CoreKind::Succ(v) => {
            if v.kind != CoreKind::Unit {
                out.push(mk::succ(mk::unit()));
            }
        }
        CoreKind::StLam(x, body) => {
            for c in shrink_candidates(body) {
                out.push(CoreTerm::new(CoreKind::StLam(x.clone(), Rc::new(c))));
            }
        }
        _ => {}
    }
    out.retain(|c| c != t && c.size() < t.size());
    out
}

/// Delta-debug to a locally minimal counterexample: stop when no candidate
/// reproduces the violation.
pub fn shrink(program: &CoreTerm, theorem: &'static str, fuel_per_node: u64) -> CoreTerm {
    let mut current = program.clone();
    let mut rounds = 0;
    'outer: while rounds < 64 {
        rounds += 1;
        for candidate in shrink_candidates(&current) {
            let rep = check_theorems(&candidate, fuel_per_node);
            if rep.violations.iter().any(|(th, _)| *th == theorem) {
                current = candidate;
                continue 'outer;
            }
        }
        break;
    }
    current
}

// ---------------------------------------------------------------------------
// Harness driver
// ---------------------------------------------------------------------------

pub struct HarnessConfig {
    pub seeds: u64,
    pub size: u32,
    pub fuel_per_node: u64,
    /// Wall-clock budget per program: exponentially large values make single
    /// steps expensive within the fuel bound, so remaining checks on such a
    /// program are skipped once the budget runs out.
    pub per_program_budget: std::time::Duration,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            seeds: 1000,
            size: 25,
            fuel_per_node: 10_000,
            per_program_budget: std::time::Duration::from_millis(1500),
        }
    }
}

pub fn run(config: &HarnessConfig) -> Report {
    let mut report = Report::default();
    for name in THEOREMS {
        report.counts.insert(name, TheoremCounts::default());
    }
    for seed in 0..config.seeds {
        // resample until the program type-checks; dead `let` binders and
        // structurally broken compositions are rejected by the checker
        let mut program = gen_strategy_program(seed, config.size);
        let mut attempt = 0;
        while !check_program(&program).is_ok() && attempt < 8 {
            attempt += 1;
            program = gen_strategy_program(seed.wrapping_add(attempt * 0x1000_0000), config.size);
        }
        report.programs += 1;
        let deadline = std::time::Instant::now() + config.per_program_budget;
        let prog_report =
            check_theorems_with_deadline(&program, config.fuel_per_node, Some(deadline));
        if prog_report.timed_out {
            report.timed_out += 1;
        }
        if !prog_report.well_typed {
            continue;
        }
        report.well_typed += 1;
        if prog_report.well_traced {
            report.well_traced += 1;
        }
        for name in &prog_report.checked {
            report.counts.get_mut(name).unwrap().checked += 1;
        }
        for (theorem, detail) in prog_report.violations {
            report.counts.get_mut(theorem).unwrap().violations += 1;
            let shrunk = shrink(&program, theorem, config.fuel_per_node);
            report.violations.push(Violation {
                theorem,
                seed: Some(seed),
                program: program.clone(),
                shrunk: Some(shrunk),
                detail,
            });
        }
    }
    report
}

/// Check one specific program (used by tests and the CLI on goldens).
pub fn check_one(program: &CoreTerm) -> ProgramReport {
    check_theorems(program, 10_000)
}

fn apply_trace_subst_traced(t: &Traced, s: &TraceSubst) -> Traced {
    crate::types::apply_trace_subst_traced(t, s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_rules_always_typecheck() {
        for seed in 0..300 {
            let mut rng = Rng::new(seed);
            let rule = gen_rule(&mut rng, 3);
            let res = check_program(&rule);
            assert!(
                res.is_ok(),
                "seed {seed} generated an ill-typed rule {rule}: {:?}",
                res.typing.err()
            );
        }
    }

    #[test]
    fn depth_zero_rules_are_leaves() {
        let mut rng = Rng::new(3);
        let r = gen_rule(&mut rng, 0);
        assert!(check_program(&r).is_ok());
        assert!(r.size() <= 5);
    }

    #[test]
    fn acceptance_rate_of_generated_programs() {
        let mut typed = 0;
        let mut traced = 0;
        let total = 500;
        for seed in 0..total {
            let program = gen_strategy_program(seed, 20);
            let res = check_program(&program);
            if let Ok(t) = &res.typing {
                typed += 1;
                if matches!(&t.ty, Traced::Result { ids, .. } if !ids.is_empty()) {
                    traced += 1;
                }
            }
        }
        assert!(
            traced * 100 / total >= 30,
            "want at least 30% well-traced executions, got {traced}/{total} (typed {typed})"
        );
    }

    #[test]
    fn example_programs_pass_all_theorems() {
        // a known-good program: swap then simplify
        let src = "(rule 5 + 5 -> 10) ((rule m * n -> n * m ; rule 2 * 5 -> 5 + 5) (5 * 2))";
        let ast = crate::surface::parse(src).unwrap();
        let program = crate::surface::desugar(&ast);
        let rep = check_one(&program);
        assert!(rep.well_typed);
        assert!(rep.violations.is_empty(), "{:?}", rep.violations);
        assert!(rep.checked.contains(&"successful_rewrite"));
    }

    #[test]
    fn progress_is_trivial_on_values() {
        let rep = check_one(&mk::fail());
        assert!(rep.well_typed);
        assert!(rep.violations.is_empty());
    }

    #[test]
    fn dead_rule_execution_fails_as_predicted() {
        // Example-6 shaped body: composed strategy applied to a matching input
        let src = "(rule 2 * n -> n + n ; rule 2 + 3 -> 5) (2 * 9)";
        let ast = crate::surface::parse(src).unwrap();
        let program = crate::surface::desugar(&ast);
        let rep = check_one(&program);
        assert!(rep.well_typed);
        assert!(rep.checked.contains(&"empty_traced_failed_result"));
        assert!(rep.violations.is_empty(), "{:?}", rep.violations);
    }

    #[test]
    fn shrinking_reaches_local_minimum() {
        // fabricate a violation finder: shrink against a theorem that never
        // reproduces just returns the program
        let program = gen_strategy_program(1, 20);
        let shrunk = shrink(&program, "progress", 2_000);
        assert!(shrunk.size() <= program.size());
    }
}
