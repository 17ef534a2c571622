//! Federated minimax optimization.
//!
//! The crate implements FedMM (augmented-Lagrangian consensus with per-client
//! multipliers) next to the GDA baselines FedSGDA, FedAvgGDA, FedProxGDA and
//! centralized GDA, together with closed-form-checkable quadratic saddle
//! objectives, a linear adversarial domain-adaptation objective, a
//! round-based federation simulator and verification diagnostics.

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod federation;
pub mod objective;
pub mod optim;
pub mod params;
pub mod problems;

pub use error::{FedError, Result};
pub use objective::{GlobalObjective, LocalObjective};
pub use optim::OptimizerKind;
pub use params::{axpy, seeded_rng, ClientState, HyperParams, LocalSolver, ParamVector, PrimalDualPair, ServerState, SimRng};
