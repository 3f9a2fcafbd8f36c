use std::path::PathBuf;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use olc::costs::CostModel;
use olc::experiments::sweep_delta_a;
use olc::netmodel::NetworkCase;
use olc::par::Execution;
use olc::scenario::Scenario;
use olc::verify::{run_verification, Analytic, Subject, VerifyOptions};

fn ieee39() -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/ieee39.json");
    let mut s = Scenario::new(NetworkCase::load(path).unwrap());
    s.disturbance = vec![(29, -2.0)];
    s.default_cost = CostModel::Quadratic { b: 1.0 };
    s
}

const MODES: [(&str, Execution); 2] = [
    ("parallel", Execution::Parallel),
    ("sequential", Execution::Sequential),
];

fn sweep(c: &mut Criterion) {
    let mut s = ieee39();
    s.integrator.t_end = 2.0;
    let deltas = [-0.4, -0.2, -0.1, 0.0, 0.5, 1.0, 2.0, 4.0];
    let mut group = c.benchmark_group("sweep_delta_a");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| sweep_delta_a(&s, &deltas, exec).unwrap())
        });
    }
    group.finish();
}

fn verify(c: &mut Criterion) {
    let s = ieee39();
    let cl = s.closed_loop().unwrap();
    let subject = Subject { grid: &cl.grid, costs: &cl.costs, gains: &cl.gains, case: None };
    let mut group = c.benchmark_group("verify");
    group.sample_size(10);
    for (name, execution) in MODES {
        let opts = VerifyOptions { samples: 200, fd_samples: 10, execution, ..VerifyOptions::default() };
        group.bench_with_input(BenchmarkId::from_parameter(name), &opts, |b, opts| {
            b.iter(|| run_verification(&subject, &Analytic, opts).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sweep, verify);
criterion_main!(benches);
