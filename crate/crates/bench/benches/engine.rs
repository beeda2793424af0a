use criterion::{black_box, criterion_group, criterion_main, Criterion};
use lbs_bench::{cases, mixed, MIXED};
use lbs_core::expr::{diff, normalize};
use lbs_core::run::{run, RunConfig};
use lbs_core::{catalog, parse};

fn expressions(c: &mut Criterion) {
    let e = mixed();
    c.bench_function("parse", |b| b.iter(|| parse(black_box(MIXED)).unwrap()));
    c.bench_function("normalize", |b| b.iter(|| normalize(black_box(&e))));
    let x = parse("x").unwrap();
    c.bench_function("diff+normalize", |b| b.iter(|| normalize(&diff(black_box(&e), &x))));
}

fn catalog_load(c: &mut Criterion) {
    c.bench_function("load bundled catalog", |b| b.iter(|| catalog::bundled().unwrap()));
}

fn suites(c: &mut Criterion) {
    let mut g = c.benchmark_group("suites");
    g.sample_size(10);
    let cfg = RunConfig { jobs: Some(1), ..RunConfig::default() };
    for glob in ["prop1-*", "case-*", "a6a8-*"] {
        let cs = cases(glob);
        let refs: Vec<_> = cs.iter().collect();
        g.bench_function(glob, |b| b.iter(|| run(black_box(&refs), &cfg)));
    }
    g.finish();
}

criterion_group!(benches, expressions, catalog_load, suites);
criterion_main!(benches);
