//! Small-step operational semantics with exhaustive enumeration of
//! nondeterministic outcomes.
//!
//! The stepping relation embeds the notions of reduction into evaluation
//! contexts. `step_all` returns every one-step successor over all valid
//! context decompositions; in particular a choice of two successful results
//! has two successors. `evaluate_all` takes the breadth-first closure with
//! structural deduplication, so existence questions about outcomes are
//! decidable at desk scale; `evaluate_sample` follows one seeded path.

use std::collections::{HashMap, HashSet, VecDeque};
use std::rc::Rc;

use thiserror::Error;

use crate::term::{CoreKind, CoreTerm, Pattern};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    /// Normalization guarantees termination; running out of fuel signals an
    /// implementation bug.
    #[error("fuel exhausted after {0} steps (evaluator bug: well-typed terms normalize)")]
    FuelExhausted(u64),
    /// A closed well-typed non-value with no successor contradicts progress.
    #[error("stuck non-value term (soundness bug): {0}")]
    Stuck(CoreTerm),
    /// The caller's wall-clock budget ran out (exponentially large values
    /// make individual steps expensive even within the fuel bound).
    #[error("evaluation exceeded its time budget")]
    Deadline,
}

/// One evaluation outcome: a value and the number of steps on the shortest
/// path reaching it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub value: CoreTerm,
    pub steps: u64,
}

/// The set of distinct outcomes reachable from a term.
#[derive(Debug, Clone, Default)]
pub struct OutcomeSet {
    pub outcomes: Vec<Outcome>,
    /// Number of distinct states explored.
    pub states: u64,
}

impl OutcomeSet {
    pub fn values(&self) -> Vec<&CoreTerm> {
        self.outcomes.iter().map(|o| &o.value).collect()
    }

    pub fn contains(&self, v: &CoreTerm) -> bool {
        self.outcomes.iter().any(|o| &o.value == v)
    }

    pub fn any_succ(&self) -> bool {
        self.outcomes
            .iter()
            .any(|o| matches!(o.value.kind, CoreKind::Succ(_)))
    }

    pub fn all_fail(&self) -> bool {
        self.outcomes
            .iter()
            .all(|o| o.value.kind == CoreKind::Fail)
    }
}

/// Record of successful pattern matches, for the pattern-matching lemma.
#[derive(Debug, Default)]
pub struct MatchAudit {
    pub events: Vec<(Pattern, CoreTerm, HashMap<String, CoreTerm>)>,
}

/// Match a pattern against a value. `None` is the bottom `failPat`.
pub fn match_pattern(p: &Pattern, v: &CoreTerm) -> Option<HashMap<String, CoreTerm>> {
    use crate::term::PatKind;
    match (&p.kind, &v.kind) {
        (PatKind::Var(x), _) => {
            let mut m = HashMap::new();
            m.insert(x.clone(), v.clone());
            Some(m)
        }
        (PatKind::Label(pl, q), CoreKind::Label(vl, w)) if pl == vl => match_pattern(q, w),
        (PatKind::Unit, CoreKind::Unit) => Some(HashMap::new()),
        (PatKind::Pair(pa, pb), CoreKind::Pair(va, vb)) => {
            let ma = match_pattern(pa, va)?;
            let mb = match_pattern(pb, vb)?;
            // linear patterns: the two domains are disjoint
            let mut m = ma;
            m.extend(mb);
            Some(m)
        }
        _ => None,
    }
}

/// All one-step successors of a closed term (empty exactly when it is a
/// value, given well-typedness).
pub fn step_all(e: &CoreTerm) -> Vec<CoreTerm> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    collect_steps(e, &mut |t| {
        if seen.insert(t.clone()) {
            out.push(t);
        }
    }, &mut None);
    out
}

fn step_all_audited(e: &CoreTerm, audit: &mut Option<&mut MatchAudit>) -> Vec<CoreTerm> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    collect_steps(e, &mut |t| {
        if seen.insert(t.clone()) {
            out.push(t);
        }
    }, audit);
    out
}

fn collect_steps(
    e: &CoreTerm,
    push: &mut dyn FnMut(CoreTerm),
    audit: &mut Option<&mut MatchAudit>,
) {
    root_steps(e, push, audit);
    // context positions
    match &e.kind {
        CoreKind::CombApp(f, a) => {
            collect_steps(f, &mut |t| {
                push(CoreTerm::new(CoreKind::CombApp(Rc::new(t), a.clone())))
            }, audit);
            if f.is_value() {
                collect_steps(a, &mut |t| {
                    push(CoreTerm::new(CoreKind::CombApp(f.clone(), Rc::new(t))))
                }, audit);
            }
        }
        CoreKind::Exec(s, i) => {
            collect_steps(s, &mut |t| {
                push(CoreTerm::new(CoreKind::Exec(Rc::new(t), i.clone())))
            }, audit);
            if s.is_value() {
                collect_steps(i, &mut |t| {
                    push(CoreTerm::new(CoreKind::Exec(s.clone(), Rc::new(t))))
                }, audit);
            }
        }
        CoreKind::Label(l, inner) => {
            let l = l.clone();
            collect_steps(inner, &mut |t| {
                push(CoreTerm::new(CoreKind::Label(l.clone(), Rc::new(t))))
            }, audit);
        }
        CoreKind::Pair(a, b) => {
            collect_steps(a, &mut |t| {
                push(CoreTerm::new(CoreKind::Pair(Rc::new(t), b.clone())))
            }, audit);
            if a.is_value() {
                collect_steps(b, &mut |t| {
                    push(CoreTerm::new(CoreKind::Pair(a.clone(), Rc::new(t))))
                }, audit);
            }
        }
        CoreKind::Let(x, bound, body) => {
            let x = x.clone();
            collect_steps(bound, &mut |t| {
                push(CoreTerm::new(CoreKind::Let(
                    x.clone(),
                    Rc::new(t),
                    body.clone(),
                )))
            }, audit);
        }
        CoreKind::Succ(inner) => {
            collect_steps(inner, &mut |t| {
                push(CoreTerm::new(CoreKind::Succ(Rc::new(t))))
            }, audit);
        }
        CoreKind::Alt(a, b) => {
            collect_steps(a, &mut |t| {
                push(CoreTerm::new(CoreKind::Alt(Rc::new(t), b.clone())))
            }, audit);
            if a.is_value() {
                collect_steps(b, &mut |t| {
                    push(CoreTerm::new(CoreKind::Alt(a.clone(), Rc::new(t))))
                }, audit);
            }
        }
        _ => {}
    }
}

/// The notions of reduction, applied at the root.
fn root_steps(
    e: &CoreTerm,
    push: &mut dyn FnMut(CoreTerm),
    audit: &mut Option<&mut MatchAudit>,
) {
    match &e.kind {
        CoreKind::Exec(s, i) => {
            if !s.is_value() {
                return;
            }
            // (v <- fail) ~> fail
            if i.kind == CoreKind::Fail {
                push(CoreTerm::new(CoreKind::Fail));
            }
            // primitive combinator executions
            if let Some((comb, va, vb)) = combinator_value_parts(s) {
                if i.is_value() {
                    match comb {
                        CoreKind::Seq => {
                            // (seq <= va <= vb) <- vi ~> vb <- (va <- vi)
                            push(CoreTerm::new(CoreKind::Exec(
                                vb.clone(),
                                Rc::new(CoreTerm::new(CoreKind::Exec(va.clone(), i.clone()))),
                            )));
                        }
                        CoreKind::Choice => {
                            // (choice <= va <= vb) <- vi ~> (va <- vi) <> (vb <- vi)
                            push(CoreTerm::new(CoreKind::Alt(
                                Rc::new(CoreTerm::new(CoreKind::Exec(va.clone(), i.clone()))),
                                Rc::new(CoreTerm::new(CoreKind::Exec(vb.clone(), i.clone()))),
                            )));
                        }
                        _ => {}
                    }
                }
            }
            // rule execution
            if let CoreKind::Rule(p, body) = &s.kind {
                if let CoreKind::Succ(v) = &i.kind {
                    if v.is_value() {
                        match match_pattern(p, v) {
                            None => push(CoreTerm::new(CoreKind::Fail)),
                            Some(subst) => {
                                if let Some(a) = audit.as_deref_mut() {
                                    a.events.push((
                                        (**p).clone(),
                                        (**v).clone(),
                                        subst.clone(),
                                    ));
                                }
                                push(CoreTerm::new(CoreKind::Succ(Rc::new(body.subst(&subst)))));
                            }
                        }
                    }
                }
            }
        }
        CoreKind::Alt(a, b) => {
            let a_succ = matches!(a.kind, CoreKind::Succ(ref v) if v.is_value());
            let b_succ = matches!(b.kind, CoreKind::Succ(ref v) if v.is_value());
            let a_fail = a.kind == CoreKind::Fail;
            let b_fail = b.kind == CoreKind::Fail;
            match (a_succ, a_fail, b_succ, b_fail) {
                (true, _, true, _) => {
                    // both reduction rules apply
                    push((**a).clone());
                    push((**b).clone());
                }
                (true, _, _, true) => push((**a).clone()),
                (_, true, true, _) => push((**b).clone()),
                (_, true, _, true) => push(CoreTerm::new(CoreKind::Fail)),
                _ => {}
            }
        }
        CoreKind::CombApp(f, a) => {
            if let CoreKind::StLam(x, body) = &f.kind {
                if a.is_value() {
                    let mut m = HashMap::new();
                    m.insert(x.clone(), (**a).clone());
                    push(body.subst(&m));
                }
            }
        }
        CoreKind::Let(x, bound, body) => {
            if bound.is_value() {
                let mut m = HashMap::new();
                m.insert(x.clone(), (**bound).clone());
                push(body.subst(&m));
            }
        }
        _ => {}
    }
}

/// `seq <= va <= vb` or `choice <= va <= vb` with both arguments values.
fn combinator_value_parts(s: &CoreTerm) -> Option<(CoreKind, Rc<CoreTerm>, Rc<CoreTerm>)> {
    if let CoreKind::CombApp(inner, vb) = &s.kind {
        if let CoreKind::CombApp(comb, va) = &inner.kind {
            if matches!(comb.kind, CoreKind::Seq | CoreKind::Choice)
                && va.is_value()
                && vb.is_value()
            {
                return Some((comb.kind.clone(), va.clone(), vb.clone()));
            }
        }
    }
    None
}

/// Exhaustive breadth-first closure of the stepping relation. Fuel bounds
/// the number of explored states.
pub fn evaluate_all(e: &CoreTerm, fuel: u64) -> Result<OutcomeSet, EvalError> {
    evaluate_all_audited(e, fuel, &mut None)
}

pub fn evaluate_all_audited(
    e: &CoreTerm,
    fuel: u64,
    audit: &mut Option<&mut MatchAudit>,
) -> Result<OutcomeSet, EvalError> {
    evaluate_all_with_deadline(e, fuel, audit, None)
}

pub fn evaluate_all_with_deadline(
    e: &CoreTerm,
    fuel: u64,
    audit: &mut Option<&mut MatchAudit>,
    deadline: Option<std::time::Instant>,
) -> Result<OutcomeSet, EvalError> {
    let mut seen: HashSet<CoreTerm> = HashSet::new();
    let mut queue: VecDeque<(CoreTerm, u64)> = VecDeque::new();
    let mut outcomes: Vec<Outcome> = Vec::new();
    let mut states = 0u64;
    seen.insert(e.clone());
    queue.push_back((e.clone(), 0));
    while let Some((t, depth)) = queue.pop_front() {
        states += 1;
        if states > fuel {
            return Err(EvalError::FuelExhausted(states));
        }
        if states % 64 == 0 {
            if let Some(d) = deadline {
                if std::time::Instant::now() > d {
                    return Err(EvalError::Deadline);
                }
            }
        }
        let succs = step_all_audited(&t, audit);
        if succs.is_empty() {
            if t.is_value() {
                outcomes.push(Outcome {
                    value: t,
                    steps: depth,
                });
            } else {
                return Err(EvalError::Stuck(t));
            }
            continue;
        }
        for s in succs {
            if seen.insert(s.clone()) {
                queue.push_back((s, depth + 1));
            }
        }
    }
    outcomes.sort_by_key(|o| format!("{}", o.value));
    outcomes.dedup_by(|a, b| a.value == b.value);
    Ok(OutcomeSet { outcomes, states })
}

/// Follow one path through the stepping relation, choosing among successors
/// with a seeded pseudo-random generator. Reproducible per seed.
pub fn evaluate_sample(e: &CoreTerm, seed: u64, fuel: u64) -> Result<Outcome, EvalError> {
    let mut state = seed.wrapping_add(0x9e3779b97f4a7c15);
    let mut next = || {
        // splitmix64
        state = state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    };
    let mut cur = e.clone();
    let mut steps = 0u64;
    loop {
        if steps > fuel {
            return Err(EvalError::FuelExhausted(steps));
        }
        let succs = step_all(&cur);
        if succs.is_empty() {
            if cur.is_value() {
                return Ok(Outcome { value: cur, steps });
            }
            return Err(EvalError::Stuck(cur));
        }
        let idx = (next() % succs.len() as u64) as usize;
        cur = succs[idx].clone();
        steps += 1;
    }
}

/// Outcome sets as JSON: pretty-printed values plus counts.
pub fn outcomes_to_json(set: &OutcomeSet) -> serde_json::Value {
    serde_json::json!({
        "count": set.outcomes.len(),
        "states": set.states,
        "outcomes": set.outcomes.iter().map(|o| serde_json::json!({
            "value": crate::surface::print_term(&o.value).unwrap_or_else(|_| format!("{}", o.value)),
            "steps": o.steps,
            "term": o.value.to_json(),
        })).collect::<Vec<_>>(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::mk::*;
    use crate::term::p2e;

    #[test]
    fn match_variable_binds_value() {
        let v = binop("Mul", num(5), num(2));
        let m = match_pattern(&pvar("x"), &v).unwrap();
        assert_eq!(m.get("x"), Some(&v));
    }

    #[test]
    fn match_unit_is_empty() {
        assert_eq!(match_pattern(&punit(), &unit()), Some(HashMap::new()));
    }

    #[test]
    fn match_label_mismatch_fails() {
        assert_eq!(match_pattern(&pnum(1), &num(2)), None);
    }

    /// Matching a pattern then converting it back must reproduce the value.
    #[test]
    fn match_substitution_inverts_p2e() {
        let p = pbinop_var("op", pvar("m"), pvar("n"));
        let v = binop("Add", num(3), num(4));
        let m = match_pattern(&p, &v).unwrap();
        assert_eq!(p2e(&p).subst(&m), v);
    }

    #[test]
    fn choice_execution_steps_to_alt() {
        let r = rule(punit(), unit());
        let e = exec(choice(r.clone(), r.clone()), succ(unit()));
        let succs = step_all(&e);
        assert_eq!(succs.len(), 1);
        assert!(matches!(succs[0].kind, CoreKind::Alt(_, _)));
    }

    #[test]
    fn exec_of_fail_steps_to_fail() {
        let e = exec(rule(punit(), unit()), fail());
        let succs = step_all(&e);
        assert_eq!(succs, vec![fail()]);
    }

    #[test]
    fn succ_alt_succ_has_two_successors() {
        let e = alt(succ(num(1)), succ(num(2)));
        let succs = step_all(&e);
        assert_eq!(succs.len(), 2);
        assert!(succs.contains(&succ(num(1))));
        assert!(succs.contains(&succ(num(2))));
    }

    #[test]
    fn fail_alt_fail_steps_to_fail() {
        assert_eq!(step_all(&alt(fail(), fail())), vec![fail()]);
        assert_eq!(
            evaluate_sample(&alt(fail(), fail()), 7, 100).unwrap().value,
            fail()
        );
    }

    #[test]
    fn values_have_no_successors() {
        assert!(step_all(&fail()).is_empty());
        assert!(step_all(&succ(num(10))).is_empty());
        let partial = comb_app(CoreTerm::new(CoreKind::Seq), rule(punit(), unit()));
        assert!(step_all(&partial).is_empty(), "combinator values are irreducible");
    }

    /// Independent closure oracle: a naive recursive enumeration of reachable
    /// values, unrelated to the breadth-first engine.
    fn naive_outcomes(e: &CoreTerm, depth: u64, acc: &mut HashSet<CoreTerm>) {
        let succs = step_all(e);
        if succs.is_empty() {
            acc.insert(e.clone());
            return;
        }
        assert!(depth > 0, "oracle depth exceeded");
        for s in succs {
            naive_outcomes(&s, depth - 1, acc);
        }
    }

    #[test]
    fn exhaustive_closure_matches_naive_oracle() {
        // e5-shaped program applied to 1 * 7: the dead branch fails, the
        // live branch succeeds. The result choice absorbs the failed side
        // (`fail <> succ v` steps to `succ v` only), so the outcome set is
        // exactly {succ 7}.
        let dead = seq(
            rule(pbinop("Mul", pvar("m"), pvar("n")), binop("Mul", var("n"), var("m"))),
            rule(pbinop("Add", pvar("m"), pvar("n")), binop("Add", var("n"), var("m"))),
        );
        let live = rule(pbinop("Mul", pnum(1), pvar("v")), var("v"));
        let program = exec(choice(dead, live), succ(binop("Mul", num(1), num(7))));
        let got = evaluate_all(&program, 10_000).unwrap();
        let mut expected = HashSet::new();
        naive_outcomes(&program, 64, &mut expected);
        let got_set: HashSet<CoreTerm> = got.outcomes.iter().map(|o| o.value.clone()).collect();
        assert_eq!(got_set, expected);
        assert_eq!(got_set, HashSet::from([succ(num(7))]));
    }

    #[test]
    fn both_branches_failing_yields_fail() {
        let dead1 = rule(pbinop("Add", pvar("m"), pvar("n")), var("m"));
        let dead2 = rule(pbinop("Div", pvar("m"), pvar("n")), var("m"));
        let program = exec(choice(dead1, dead2), succ(binop("Mul", num(1), num(7))));
        let got = evaluate_all(&program, 10_000).unwrap();
        assert_eq!(got.values(), vec![&fail()]);
    }

    #[test]
    fn sample_is_a_member_of_the_closure() {
        let dead = rule(pbinop("Add", pvar("m"), pvar("n")), var("m"));
        let live = rule(pbinop("Mul", pnum(1), pvar("v")), var("v"));
        let program = exec(choice(dead, live), succ(binop("Mul", num(1), num(7))));
        let all = evaluate_all(&program, 10_000).unwrap();
        for seed in 0..16 {
            let one = evaluate_sample(&program, seed, 10_000).unwrap();
            assert!(all.contains(&one.value), "sample escaped the closure");
        }
    }

    #[test]
    fn fail_evaluates_to_fail() {
        let got = evaluate_all(&fail(), 10).unwrap();
        assert_eq!(got.values(), vec![&fail()]);
    }
}
