use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use elv_bench::{EVAL_PROGRAM, PROGRAMS};
use elv_core::{check, eval, harness, surface};

fn bench_parse(c: &mut Criterion) {
    let mut group = c.benchmark_group("parse");
    for (name, src) in PROGRAMS {
        group.bench_function(*name, |b| {
            b.iter(|| surface::desugar(&surface::parse(src).unwrap()))
        });
    }
    group.finish();
}

fn bench_check(c: &mut Criterion) {
    let mut group = c.benchmark_group("check");
    for (name, src) in PROGRAMS {
        let term = surface::desugar(&surface::parse(src).unwrap());
        group.bench_function(*name, |b| {
            b.iter_batched(
                || term.clone(),
                |t| check::check_program(&t),
                BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

fn bench_eval(c: &mut Criterion) {
    let term = surface::desugar(&surface::parse(EVAL_PROGRAM).unwrap());
    let fuel = 10_000 * term.size() as u64;
    c.bench_function("evaluate_all/choice_overlap", |b| {
        b.iter(|| eval::evaluate_all(&term, fuel).unwrap())
    });
}

fn bench_harness(c: &mut Criterion) {
    c.bench_function("harness/20_seeds", |b| {
        b.iter(|| {
            harness::run(&harness::HarnessConfig {
                seeds: 20,
                size: 15,
                fuel_per_node: 2_000,
                per_program_budget: std::time::Duration::from_millis(500),
            })
        })
    });
}

criterion_group!(
    name = pipeline;
    config = Criterion::default().sample_size(20);
    targets = bench_parse, bench_check, bench_eval, bench_harness
);
criterion_main!(pipeline);
