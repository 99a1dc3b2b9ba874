//! Shared inputs for the pipeline benchmarks.

/// The worked example programs, largest compositions first.
pub const PROGRAMS: &[(&str, &str)] = &[
    (
        "swap_then_simplify",
        "let e1 = rule m * n -> n * m ; (rule 1 * v -> v || rule 2 * w -> w + w)",
    ),
    (
        "two_choices",
        "let e3 = (rule m * n -> n * m || rule m + n -> n + m) ; \
         (rule 1 * v -> v || rule 0 + w -> w)",
    ),
    (
        "combinator",
        "let swapOps = st s => (rule m op n -> n op m) ; s",
    ),
    (
        "execution",
        "let e1 = rule m * n -> n * m ; (rule 1 * v -> v || rule 2 * w -> w + w) \
         let e2 = (rule 5 + 5 -> 10) (e1 (5 * 2))",
    ),
];

/// An execution whose closure branches: choice over overlapping rules.
pub const EVAL_PROGRAM: &str =
    "let e8 = (rule m * n -> n * m || rule 1 * v -> v) ; rule m + n -> n + m \
     let run = e8 (1 * (3 + 4))";
