use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fedmm_bench::{domain_problem, hyper, quadratic_clients};
use fedmm_core::federation::run_prepared;
use fedmm_core::optim::{init_clients, run_round};
use fedmm_core::{OptimizerKind, PrimalDualPair, ServerState};

fn quadratic_rounds(c: &mut Criterion) {
    let mut group = c.benchmark_group("quadratic_round");
    for &(n, d) in &[(3usize, 4usize), (10, 20), (10, 50)] {
        let objs = quadratic_clients(n, d, d);
        let hp = hyper(20);
        let init = PrimalDualPair::zeros(d, d);
        for kind in [OptimizerKind::FedMM, OptimizerKind::FedAvgGda, OptimizerKind::FedSgda] {
            group.bench_with_input(BenchmarkId::new(kind.name(), format!("n{n}_d{d}")), &kind, |b, &kind| {
                let mut server = ServerState::new(init.clone());
                let mut clients = init_clients(n, &init);
                b.iter(|| run_round(kind, black_box(&objs), &mut clients, &mut server, &hp).unwrap());
            });
        }
    }
    group.finish();
}

fn domain_run(c: &mut Criterion) {
    let mut group = c.benchmark_group("domain_adapt_run");
    group.sample_size(10);
    for kind in [OptimizerKind::FedMM, OptimizerKind::FedAvgGda] {
        let (mut config, problem) = domain_problem(kind);
        config.hyper.rounds = 20;
        config.metrics_every = 10;
        group.bench_function(kind.name(), |b| b.iter(|| run_prepared(black_box(&config), &problem).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, quadratic_rounds, domain_run);
criterion_main!(benches);
