//! Library-level golden checks for the worked examples: types, diagnostics,
//! trace identifier sets, and formal-rendering round trips.

use elv_core::check::{self, check_program};
use elv_core::engine;
use elv_core::render;
use elv_core::surface::{desugar, parse};
use elv_core::types::*;

fn check_src(src: &str) -> check::CheckOutcome {
    check_program(&desugar(&parse(src).expect("parse")))
}

const E1: &str = "rule m * n -> n * m ; (rule 1 * v -> v || rule 2 * w -> w + w)";

#[test]
fn swap_then_simplify_types_with_two_paths() {
    let out = check_src(E1);
    let t = out.typing.expect("well-typed");
    let rendered = render::render_simplified(&t.phi, &t.ty);
    assert!(
        render::simplified_eq(&rendered, "{d,e}: d0*1 | e0*2 → d0 | e0+e0"),
        "got {rendered}"
    );
    // the composed strategy has exactly two traces
    let ids = engine::trace_ids(&t.phi, &t.ty);
    assert_eq!(ids.len(), 2);
}

#[test]
fn choice_subterm_renders_per_branch() {
    let out = check_src("rule 1 * v -> v || rule 2 * w -> w + w");
    let t = out.typing.expect("well-typed");
    let rendered = render::render_simplified(&t.phi, &t.ty);
    assert!(
        render::simplified_eq(&rendered, "{b,c}: 1*b0 | 2*c0 → b0 | c0+c0"),
        "got {rendered}"
    );
}

#[test]
fn execution_chain_produces_ten() {
    let src = format!("let e1 = {E1} let e2 = (rule 5 + 5 -> 10) (e1 (5 * 2))");
    let out = check_src(&src);
    let t = out.typing.expect("well-typed");
    let rendered = render::render_simplified(&t.phi, &t.ty);
    assert!(render::simplified_eq(&rendered, "▶{c} 10"), "got {rendered}");
    assert!(out.warnings.is_empty());
}

#[test]
fn dead_left_composition_warns_once() {
    let src = "(rule m * n -> n * m ; rule m + n -> n + m) || rule 1 * v -> v";
    let out = check_src(src);
    let t = out.typing.expect("well-typed overall");
    assert_eq!(out.warnings.len(), 1);
    assert_eq!(out.warnings[0].code, "W001");
    let rendered = render::render_simplified(&t.phi, &t.ty);
    assert!(render::simplified_eq(&rendered, "{a}: 1*a0 → a0"), "got {rendered}");
}

#[test]
fn dead_let_bindings_error_with_unification_detail() {
    for src in [
        "let e6 = rule 2 * n -> n + n ; rule 2 + 3 -> 5 in e6",
        "let e7 = (rule m * n -> n * m || rule m + n -> n + m) ; \
         (rule v - 0 -> v || rule w / 1 -> w) in e7",
    ] {
        let out = check_src(src);
        let err = out.typing.expect_err("must be rejected");
        assert_eq!(err.code, "E001");
        assert!(err
            .note
            .as_deref()
            .unwrap_or_default()
            .contains("There is no trace for the composed strategy type"));
        // the warning was upgraded, not duplicated
        assert!(out.warnings.iter().all(|w| w.code != "W001"));
    }
}

#[test]
fn overlapping_choice_keeps_one_trace() {
    let src = "(rule m * n -> n * m || rule 1 * v -> v) ; rule m + n -> n + m";
    let out = check_src(src);
    let t = out.typing.expect("well-typed");
    let rendered = render::render_simplified(&t.phi, &t.ty);
    assert!(
        render::simplified_eq(&rendered, "{d}: 1*(d0+d1) → d1+d0"),
        "got {rendered}"
    );
}

#[test]
fn combinator_type_shows_the_swap() {
    let out = check_src("st s => (rule m op n -> n op m) ; s");
    let t = out.typing.expect("well-typed");
    let rendered = render::render_simplified(&t.phi, &t.ty);
    assert!(
        render::simplified_eq(
            &rendered,
            "({a}: (a0 a2 a1) → a3) ⇒ ({a}: (a1 a2 a0) → a3)"
        ),
        "got {rendered}"
    );
}

#[test]
fn formal_rendering_round_trips_on_goldens() {
    for src in [
        E1,
        "rule 1 * v -> v || rule 2 * w -> w + w",
        "rule m op n -> n op m",
        "(rule m * n -> n * m || rule 1 * v -> v) ; rule m + n -> n + m",
    ] {
        let out = check_src(src);
        let t = out.typing.expect("well-typed");
        let printed = render::render_formal(&t.phi, &t.ty);
        let (phi2, ty2) = render::parse_formal(&printed)
            .unwrap_or_else(|e| panic!("reparse of {printed}: {e}"));
        assert!(
            check::traced_alpha_eq(&t.phi, &t.ty, &phi2, &ty2),
            "formal round trip drifted for {src}:\n{printed}"
        );
    }
}

#[test]
fn slicing_matches_per_identifier_rendering() {
    let out = check_src(E1);
    let t = out.typing.expect("well-typed");
    let full = render::render_simplified(&t.phi, &t.ty);
    let segments: Vec<&str> = full
        .trim_start_matches(|c| c != ':')
        .trim_start_matches(": ")
        .split(" → ")
        .collect();
    let inputs: Vec<&str> = segments[0].split(" | ").collect();
    let triple = engine::TracedTriple::new(t.phi.clone(), CombEnv::empty(), t.ty.clone());
    for (i, id) in t.phi.ids().into_iter().enumerate() {
        let slice = engine::select(&[id], &triple);
        let sliced = render::render_simplified(&slice.phi, &slice.omega);
        let slice_input = sliced
            .trim_start_matches(|c| c != ':')
            .trim_start_matches(": ")
            .split(" → ")
            .next()
            .unwrap();
        assert!(
            render::simplified_eq(slice_input, inputs[i]),
            "slice {i}: {slice_input} vs {}",
            inputs[i]
        );
    }
}
