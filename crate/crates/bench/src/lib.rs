//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use fedmm_core::config::{ExperimentConfig, ProblemConfig, ProblemKind};
use fedmm_core::federation::{prepare_problem, PartitionSpec, PreparedProblem};
use fedmm_core::objective::make_quadratic_client;
use fedmm_core::problems::heterogeneous_quadratic;
use fedmm_core::{HyperParams, LocalObjective, OptimizerKind};

/// `n` heterogeneous quadratic clients of the given dimensions.
pub fn quadratic_clients(n: usize, d1: usize, d2: usize) -> Vec<Arc<dyn LocalObjective>> {
    heterogeneous_quadratic(n, d1, d2, 7)
        .expect("instance draws")
        .into_iter()
        .map(|s| Arc::new(make_quadratic_client(s).expect("valid spec")) as Arc<dyn LocalObjective>)
        .collect()
}

/// Hyperparameters with `m` fixed local steps.
pub fn hyper(m: usize) -> HyperParams {
    HyperParams {
        eta1: 0.05,
        eta2: 0.05,
        local_steps: vec![m],
        ..HyperParams::default()
    }
}

/// The two-client domain-adaptation toy at full label shift.
pub fn domain_problem(optimizer: OptimizerKind) -> (ExperimentConfig, PreparedProblem) {
    let base = ExperimentConfig::default();
    let config = ExperimentConfig {
        optimizer,
        problem: ProblemConfig {
            kind: ProblemKind::DomainAdapt,
            ..base.problem.clone()
        },
        hyper: HyperParams { nu: 2.0, ..hyper(20) },
        partition: PartitionSpec::two_client(1.0),
        ..base
    };
    let problem = prepare_problem(&config).expect("toy problem builds");
    (config, problem)
}
