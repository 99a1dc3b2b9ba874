//! `elv` — check, evaluate, and property-test strategy programs.
//!
//! Exit codes: 0 success (warnings allowed unless `--deny-warnings`), 1 type
//! error, 2 denied warnings, 3 parse error, 4 I/O error. The `harness`
//! subcommand exits nonzero on any theorem violation.

use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use elv_core::check::{self, Severity};
use elv_core::span::line_col;
use elv_core::types::{DisplayNames, Traced};
use elv_core::{eval, harness, render, surface};

#[derive(Parser)]
#[command(name = "elv", version, about = "A strategy language with traced types")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and type-check a program, printing its type.
    Check(CheckArgs),
    /// Type-check and evaluate a program.
    Eval(EvalArgs),
    /// Generate random programs and check the metatheory statements on them.
    Harness(HarnessArgs),
}

#[derive(Args)]
struct CheckArgs {
    /// Source file (`.elv`).
    path: PathBuf,
    /// Print the full formal type instead of the simplified presentation.
    #[arg(long)]
    formal: bool,
    /// Machine-readable JSON output.
    #[arg(long)]
    json: bool,
    /// Treat warnings as errors (exit code 2).
    #[arg(long)]
    deny_warnings: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Source file whose top level is an execution or result expression.
    path: PathBuf,
    /// Print every reachable outcome (the default).
    #[arg(long)]
    all: bool,
    /// Follow a single seeded path instead of enumerating.
    #[arg(long, value_name = "SEED")]
    sample: Option<u64>,
    /// Step budget; defaults to 10000 times the term size.
    #[arg(long)]
    fuel: Option<u64>,
    /// Machine-readable JSON output.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct HarnessArgs {
    /// Accepted for compatibility: `elv harness run ...`.
    #[arg(value_parser = ["run"], hide = true)]
    run: Option<String>,
    /// Number of seeded programs.
    #[arg(long, default_value_t = 1000)]
    seeds: u64,
    /// Size budget per generated program (nodes).
    #[arg(long, default_value_t = 25)]
    size: u32,
    /// Step budget per term-size unit.
    #[arg(long, default_value_t = 10_000)]
    fuel: u64,
    /// Write the JSON report here.
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Check(args) => cmd_check(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Harness(args) => cmd_harness(args),
    }
}

fn color_enabled() -> bool {
    match std::env::var("ELV_COLOR") {
        Ok(v) if v == "0" => false,
        Ok(_) => true,
        Err(_) => std::io::stderr().is_terminal(),
    }
}

struct Styles {
    red: &'static str,
    yellow: &'static str,
    bold: &'static str,
    reset: &'static str,
}

fn styles() -> Styles {
    if color_enabled() {
        Styles {
            red: "\x1b[31;1m",
            yellow: "\x1b[33;1m",
            bold: "\x1b[1m",
            reset: "\x1b[0m",
        }
    } else {
        Styles {
            red: "",
            yellow: "",
            bold: "",
            reset: "",
        }
    }
}

fn read_source(path: &PathBuf) -> Result<String, ExitCode> {
    std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        ExitCode::from(4)
    })
}

/// Print a diagnostic with a source excerpt and caret underline.
fn print_diagnostic(source: &str, path: &PathBuf, diag: &check::Diagnostic) {
    let st = styles();
    let (tag, color) = match diag.severity {
        Severity::Warning => ("warning", st.yellow),
        Severity::Error => ("error", st.red),
    };
    eprintln!(
        "{color}{tag}[{}]{}: {}{}{}",
        diag.code, st.reset, st.bold, diag.message, st.reset
    );
    if let Some(span) = diag.span {
        let (line, col) = line_col(source, span.start);
        eprintln!("  --> {}:{line}:{col}", path.display());
        if let Some(text) = source.lines().nth(line - 1) {
            let width = line.to_string().len();
            eprintln!("  {:width$} |", "");
            eprintln!("  {line} | {text}");
            let line_start = source
                .lines()
                .take(line - 1)
                .map(|l| l.len() + 1)
                .sum::<usize>();
            let caret_start = span.start.saturating_sub(line_start);
            let caret_len = span.end.min(line_start + text.len()).saturating_sub(span.start);
            let underline = format!(
                "{}^{}",
                " ".repeat(caret_start),
                "~".repeat(caret_len.saturating_sub(1))
            );
            eprintln!("  {:width$} | {underline}", "");
        }
    }
    if let Some(note) = &diag.note {
        eprintln!("  = note: {note}");
    }
}

struct Checked {
    term: elv_core::CoreTerm,
    outcome: check::CheckOutcome,
}

fn load_and_check(path: &PathBuf) -> Result<Checked, ExitCode> {
    let source = read_source(path)?;
    let ast = match surface::parse(&source) {
        Ok(ast) => ast,
        Err(e) => {
            let st = styles();
            eprintln!("{}parse error{}: {e}", st.red, st.reset);
            return Err(ExitCode::from(3));
        }
    };
    let term = surface::desugar(&ast);
    let outcome = check::check_program(&term);
    for w in &outcome.warnings {
        print_diagnostic(&source, path, w);
    }
    if let Err(e) = &outcome.typing {
        print_diagnostic(&source, path, e);
    }
    Ok(Checked { term, outcome })
}

fn cmd_check(args: CheckArgs) -> ExitCode {
    let checked = match load_and_check(&args.path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let outcome = &checked.outcome;
    match &outcome.typing {
        Ok(typing) => {
            let simplified = render::render_simplified(&typing.phi, &typing.ty);
            let formal = render::render_formal(&typing.phi, &typing.ty);
            if args.json {
                let mut names = DisplayNames::new();
                names.seed_env(&typing.phi);
                let json = serde_json::json!({
                    "ok": true,
                    "type": {
                        "simplified": simplified,
                        "formal": formal,
                        "term": elv_core::types::traced_to_json(&typing.ty, &mut names),
                    },
                    "diagnostics": outcome.warnings.iter().map(|d| d.to_json()).collect::<Vec<_>>(),
                });
                println!("{}", serde_json::to_string_pretty(&json).unwrap());
            } else if args.formal {
                println!("{formal}");
            } else {
                println!("{simplified}");
            }
            if args.deny_warnings && !outcome.warnings.is_empty() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            if args.json {
                let mut diags: Vec<_> = outcome.warnings.iter().map(|d| d.to_json()).collect();
                diags.push(e.to_json());
                let json = serde_json::json!({
                    "ok": false,
                    "type": null,
                    "diagnostics": diags,
                });
                println!("{}", serde_json::to_string_pretty(&json).unwrap());
            }
            ExitCode::from(1)
        }
    }
}

fn cmd_eval(args: EvalArgs) -> ExitCode {
    let checked = match load_and_check(&args.path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let typing = match &checked.outcome.typing {
        Ok(t) => t,
        Err(_) => return ExitCode::from(1),
    };
    if !matches!(typing.ty, Traced::Result { .. }) {
        let st = styles();
        eprintln!(
            "{}error{}: the program is not an execution or result (its type is `{}`); there is nothing to evaluate",
            st.red,
            st.reset,
            render::render_simplified(&typing.phi, &typing.ty)
        );
        return ExitCode::from(1);
    }
    let fuel = args
        .fuel
        .unwrap_or_else(|| 10_000 * checked.term.size() as u64);
    if let Some(seed) = args.sample {
        match eval::evaluate_sample(&checked.term, seed, fuel) {
            Ok(outcome) => {
                let text = surface::print_term(&outcome.value)
                    .unwrap_or_else(|_| format!("{}", outcome.value));
                if args.json {
                    let json = serde_json::json!({
                        "seed": seed,
                        "value": text,
                        "steps": outcome.steps,
                        "term": outcome.value.to_json(),
                    });
                    println!("{}", serde_json::to_string_pretty(&json).unwrap());
                } else {
                    println!("{text}");
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("evaluation error: {e}");
                ExitCode::from(1)
            }
        }
    } else {
        match eval::evaluate_all(&checked.term, fuel) {
            Ok(set) => {
                if args.json {
                    println!(
                        "{}",
                        serde_json::to_string_pretty(&eval::outcomes_to_json(&set)).unwrap()
                    );
                } else {
                    for outcome in &set.outcomes {
                        let text = surface::print_term(&outcome.value)
                            .unwrap_or_else(|_| format!("{}", outcome.value));
                        println!("{text}");
                    }
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("evaluation error: {e}");
                ExitCode::from(1)
            }
        }
    }
}

fn cmd_harness(args: HarnessArgs) -> ExitCode {
    let config = harness::HarnessConfig {
        seeds: args.seeds,
        size: args.size,
        fuel_per_node: args.fuel,
        ..Default::default()
    };
    let report = harness::run(&config);
    let json = serde_json::json!({
        "seeds": args.seeds,
        "size": args.size,
        "fuel": args.fuel,
        "report": report.to_json(),
    });
    if let Some(path) = &args.report {
        if let Err(e) = std::fs::write(path, serde_json::to_string_pretty(&json).unwrap()) {
            eprintln!("error: cannot write report {}: {e}", path.display());
            return ExitCode::from(4);
        }
        eprintln!("report written to {}", path.display());
    }
    println!(
        "programs: {}  well-typed: {}  well-traced: {}",
        report.programs, report.well_typed, report.well_traced
    );
    for (name, counts) in &report.counts {
        println!(
            "{name:38} checked {:6}  violations {}",
            counts.checked, counts.violations
        );
    }
    if report.ok() {
        println!("no violations");
        ExitCode::SUCCESS
    } else {
        for v in &report.violations {
            eprintln!(
                "violation of {} (seed {:?}): {}\n  program: {}\n  shrunk:  {}",
                v.theorem,
                v.seed,
                v.detail,
                v.program,
                v.shrunk
                    .as_ref()
                    .map(|t| t.to_string())
                    .unwrap_or_default()
            );
        }
        ExitCode::from(1)
    }
}
