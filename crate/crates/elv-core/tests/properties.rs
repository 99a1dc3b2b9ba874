//! Property tests over generated programs: frontend round trips, erasure
//! laws, trace-substitution laws, and the Select/Delete duality.

use proptest::prelude::*;

use elv_core::check;
use elv_core::engine::{self, TracedTriple};
use elv_core::harness;
use elv_core::surface::{desugar, parse, print_term};
use elv_core::term::CoreKind;
use elv_core::types::*;

/// A well-typed strategy with its typing, or nothing if the seed produced an
/// ill-typed program.
fn typed_strategy(seed: u64) -> Option<(TracedTriple, check::Checker)> {
    let program = harness::gen_strategy_program(seed, 16);
    let strategy = match &program.kind {
        CoreKind::Exec(s, _) => (**s).clone(),
        _ => return None,
    };
    let mut checker = check::checker_session();
    let typing = checker.type_closed(&strategy).ok()?;
    Some((
        TracedTriple::new(typing.phi, CombEnv::empty(), typing.ty),
        checker,
    ))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Printing a desugared program and reading it back is the identity.
    #[test]
    fn print_parse_round_trip(seed in 0u64..100_000) {
        let program = harness::gen_strategy_program(seed, 16);
        let printed = print_term(&program).expect("generated programs print");
        let reparsed = desugar(&parse(&printed).expect("printed programs parse"));
        prop_assert_eq!(program, reparsed);
    }

    /// Erasure is idempotent and stable under trace substitution.
    #[test]
    fn erase_laws(seed in 0u64..100_000) {
        if let Some((triple, _)) = typed_strategy(seed) {
            let erased = erase_traced(&triple.omega);
            prop_assert!(traced_eq(&erase_traced(&erased), &erased));
            // the empty substitution never changes a type
            if let Traced::Strategy(s) = &triple.omega {
                let sub = TraceSubst::empty();
                prop_assert!(ty_eq(&apply_trace_subst(&s.input, &sub), &s.input));
            }
        }
    }

    /// Deleting a set of traces is selecting its complement.
    #[test]
    fn select_delete_duality(seed in 0u64..100_000, split in 0usize..8) {
        if let Some((triple, _)) = typed_strategy(seed) {
            let ids = triple.phi.ids();
            let k = split.min(ids.len());
            let chosen: Vec<TraceId> = ids.iter().take(k).cloned().collect();
            let rest: Vec<TraceId> = ids.iter().skip(k).cloned().collect();
            let deleted = engine::delete(&chosen, &triple);
            let selected = engine::select(&rest, &triple);
            prop_assert_eq!(&deleted.phi, &selected.phi);
            prop_assert!(traced_eq(&deleted.omega, &selected.omega));
        }
    }

    /// Freshening is alpha-equivalence; the renamed environment only keeps
    /// members that still occur.
    #[test]
    fn fresh_is_alpha_renaming(seed in 0u64..100_000) {
        if let Some((triple, mut checker)) = typed_strategy(seed) {
            let fresh = engine::fresh(&mut checker.sess, &triple);
            prop_assert!(check::traced_alpha_eq(
                &triple.phi,
                &triple.omega,
                &fresh.phi,
                &fresh.omega
            ));
        }
    }

    /// A value accepted by the value predicate has no one-step successor.
    #[test]
    fn values_are_normal_forms(seed in 0u64..100_000) {
        let program = harness::gen_strategy_program(seed, 16);
        let fuel = 10_000 * program.size() as u64;
        if let Ok(outcomes) = elv_core::eval::evaluate_all(&program, fuel) {
            for outcome in &outcomes.outcomes {
                prop_assert!(outcome.value.is_value());
                prop_assert!(elv_core::eval::step_all(&outcome.value).is_empty());
            }
        }
    }
}
