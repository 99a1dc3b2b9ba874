//! Core of the `elv` strategy language.
//!
//! A strategy is a composable term rewrite: either a single `rule p -> e`, or
//! a combinator composition (`;`, `||`, user-defined combinators via `st`).
//! This crate provides:
//!
//! - the surface parser and desugarer ([`surface`]),
//! - the core term and type representations ([`term`], [`types`]),
//! - the trace engine that connects rewrite paths across compositions
//!   ([`engine`]),
//! - structural (row-polymorphic, equi-recursive) unification and kinding
//!   ([`structural`]),
//! - the type checker with warning/error diagnostics ([`check`]),
//! - the exhaustive small-step evaluator ([`eval`]),
//! - type rendering in the simplified per-path presentation ([`render`]),
//! - a metatheory harness that property-tests soundness and success/failure
//!   guarantees on generated programs ([`harness`]).
//!
//! The central idea: strategy types carry *traces*, one per possible rewrite
//! path. A strategy whose type has no traces left is statically known to fail
//! at runtime; the checker warns when that happens inside a composition and
//! rejects the program when such a strategy is bound by `let`.

pub mod check;
pub mod engine;
pub mod eval;
pub mod harness;
pub mod render;
pub mod span;
pub mod structural;
pub mod surface;
pub mod term;
pub mod types;

pub use check::{checker_session, CheckOutcome, Diagnostic, Severity};
pub use eval::{evaluate_all, evaluate_sample, Outcome, OutcomeSet};
pub use span::Span;
pub use surface::{desugar, parse, ParseError};
pub use term::{CoreTerm, Pattern};
pub use types::{Traced, TracingEnv, Ty};
