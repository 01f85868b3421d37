use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use sort3lab::isa::{assets, parse_program, Target};
use sort3lab::kernels::Order;
use sort3lab::par::Parallelism;
use sort3lab::search::{search, Budget, SearchConfig, Shape};
use sort3lab::verifier::{verify_sorter_with, Domain, Subject, VerifyOptions};

const MODES: [(&str, Parallelism); 2] = [
    ("sequential", Parallelism::Sequential),
    ("parallel", Parallelism::Parallel),
];

fn verification(c: &mut Criterion) {
    let listing1 = parse_program(assets::LISTING1).unwrap();
    let subject = Subject::Program {
        name: "listing1".into(),
        program: &listing1,
    };
    let domain = Domain::Random { seed: 7, n: 20_000 };
    let mut group = c.benchmark_group("verify_listing1_random_20k");
    for (name, parallelism) in MODES {
        let opts = VerifyOptions {
            parallelism,
            ..VerifyOptions::default()
        };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| assert!(verify_sorter_with(&subject, &domain, Order::Signed, opts).passed()))
        });
    }
    group.finish();
}

fn searching(c: &mut Criterion) {
    let mut cfg = SearchConfig::new(Target::Sort2);
    cfg.registers = 2;
    cfg.vocabulary = vec![Shape::MovMemReg, Shape::MovRegMem, Shape::CmpRegReg, Shape::CmovgMemReg];
    cfg.budget = Budget::UNLIMITED;
    let mut group = c.benchmark_group("search_sort2_small_vocabulary");
    group.sample_size(10);
    for (name, parallelism) in MODES {
        let mut cfg = cfg.clone();
        cfg.parallelism = parallelism;
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| assert_eq!(search(&cfg).unwrap().minimal_length, Some(7)))
        });
    }
    group.finish();
}

criterion_group!(benches, verification, searching);
criterion_main!(benches);
