//! Parameter containers, hyperparameters and the deterministic generator.
//!
//! Every arithmetic helper here is pure: inputs are borrowed, results are
//! freshly allocated.

use std::ops::Index;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{FedError, Result};

/// Generator used for every random draw in the library.
///
/// ChaCha20 seeded through `seed_from_u64`; the stream is identical on
/// every platform for a given seed.
pub type SimRng = ChaCha20Rng;

pub fn seeded_rng(seed: u64) -> SimRng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Flat block of real parameters (an `omega` or `psi` block).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(data: Vec<f64>) -> Self {
        Self(data)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    fn check_len(&self, other: &Self, context: &'static str) -> Result<()> {
        if self.len() != other.len() {
            return Err(FedError::DimensionMismatch {
                context,
                left: self.len(),
                right: other.len(),
            });
        }
        Ok(())
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.check_len(other, "dot")?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        axpy(1.0, other, self)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        axpy(-1.0, other, self)
    }

    pub fn scale(&self, a: f64) -> Self {
        Self(self.0.iter().map(|v| a * v).collect())
    }

    /// Euclidean distance `‖self − other‖`.
    pub fn distance(&self, other: &Self) -> Result<f64> {
        Ok(self.sub(other)?.norm())
    }

    /// Arithmetic mean, summed in slice order.
    pub fn mean<'a, I>(vectors: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a ParamVector>,
    {
        let mut iter = vectors.into_iter();
        let first = iter.next().ok_or(FedError::EmptyDataset)?;
        let mut acc = first.0.clone();
        let mut count = 1usize;
        for v in iter {
            first.check_len(v, "mean")?;
            for (a, b) in acc.iter_mut().zip(&v.0) {
                *a += b;
            }
            count += 1;
        }
        let inv = 1.0 / count as f64;
        Ok(Self(acc.into_iter().map(|v| v * inv).collect()))
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(data: Vec<f64>) -> Self {
        Self(data)
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;

    fn index(&self, index: usize) -> &f64 {
        &self.0[index]
    }
}

/// Returns `a·x + y`.
pub fn axpy(a: f64, x: &ParamVector, y: &ParamVector) -> Result<ParamVector> {
    x.check_len(y, "axpy")?;
    Ok(ParamVector(
        x.0.iter().zip(&y.0).map(|(xi, yi)| a * xi + yi).collect(),
    ))
}

/// The `(omega, psi)` pair of a minimax problem.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalDualPair {
    pub omega: ParamVector,
    pub psi: ParamVector,
}

impl PrimalDualPair {
    pub fn new(omega: ParamVector, psi: ParamVector) -> Self {
        Self { omega, psi }
    }

    pub fn zeros(d1: usize, d2: usize) -> Self {
        Self::new(ParamVector::zeros(d1), ParamVector::zeros(d2))
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.omega.len(), self.psi.len())
    }

    pub fn is_finite(&self) -> bool {
        self.omega.is_finite() && self.psi.is_finite()
    }

    pub(crate) fn check_dims(&self, dims: (usize, usize), context: &'static str) -> Result<()> {
        if self.omega.len() != dims.0 {
            return Err(FedError::DimensionMismatch {
                context,
                left: self.omega.len(),
                right: dims.0,
            });
        }
        if self.psi.len() != dims.1 {
            return Err(FedError::DimensionMismatch {
                context,
                left: self.psi.len(),
                right: dims.1,
            });
        }
        Ok(())
    }
}

/// One client's primal iterate and consensus multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientState {
    pub id: usize,
    pub pair: PrimalDualPair,
    /// Multiplier of the `omega` consensus constraint.
    pub lambda: ParamVector,
    /// Multiplier of the `psi` consensus constraint.
    pub beta: ParamVector,
}

impl ClientState {
    /// Fresh client at `pair` with zero multipliers.
    pub fn new(id: usize, pair: PrimalDualPair) -> Self {
        let (d1, d2) = pair.dims();
        Self {
            id,
            pair,
            lambda: ParamVector::zeros(d1),
            beta: ParamVector::zeros(d2),
        }
    }
}

/// Server-side consensus variables and communication ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    pub global: PrimalDualPair,
    pub round: usize,
    /// Scalars exchanged so far (downloads plus uploads).
    pub floats_sent: u64,
}

impl ServerState {
    pub fn new(global: PrimalDualPair) -> Self {
        Self {
            global,
            round: 0,
            floats_sent: 0,
        }
    }

    /// Scalars moved in one round: every client downloads and uploads both blocks.
    pub fn floats_per_round(n_clients: usize, dims: (usize, usize)) -> u64 {
        (n_clients * 2 * (dims.0 + dims.1)) as u64
    }

    pub(crate) fn finish_round(&mut self, global: PrimalDualPair, n_clients: usize) {
        let dims = global.dims();
        self.global = global;
        self.round += 1;
        self.floats_sent += Self::floats_per_round(n_clients, dims);
    }
}

/// How the local saddle problem of a round is solved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LocalSolver {
    /// Exactly `M_i` gradient descent ascent steps.
    FixedSteps,
    /// Gradient descent ascent until both local gradient norms are at most
    /// `tol`, capped at `max_steps`.
    ToTolerance { tol: f64, max_steps: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    /// Consensus penalty on `omega`.
    pub mu1: f64,
    /// Consensus penalty on `psi`.
    pub mu2: f64,
    /// Descent step.
    pub eta1: f64,
    /// Ascent step.
    pub eta2: f64,
    /// Per-round decay base of the multiplier shift; round `t` uses `eta3^t`.
    pub eta3: f64,
    /// Adversarial trade-off weight.
    pub nu: f64,
    /// Local steps per client; a single entry applies to every client.
    pub local_steps: Vec<usize>,
    pub rounds: usize,
    /// Proximal weight for FedProxGDA.
    pub prox_mu: f64,
    pub tol: f64,
    pub local_solver: LocalSolver,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            mu1: 1.0,
            mu2: 1.0,
            eta1: 0.01,
            eta2: 0.01,
            eta3: 1.0,
            nu: 0.25,
            local_steps: vec![20],
            rounds: 100,
            prox_mu: 1.0,
            tol: 1e-8,
            local_solver: LocalSolver::FixedSteps,
        }
    }
}

impl HyperParams {
    /// `M_i` for client `id`.
    pub fn steps_for(&self, id: usize) -> usize {
        match self.local_steps.as_slice() {
            [single] => *single,
            steps => steps.get(id).copied().unwrap_or(1),
        }
    }

    /// The multiplier shift factor `eta3^t`.
    pub fn decay_at(&self, round: usize) -> f64 {
        let exp = i32::try_from(round).unwrap_or(i32::MAX);
        self.eta3.powi(exp)
    }

    pub fn validate(&self, n_clients: usize) -> Result<()> {
        let positive = [
            ("mu1", self.mu1),
            ("mu2", self.mu2),
            ("eta1", self.eta1),
            ("eta2", self.eta2),
            ("tol", self.tol),
        ];
        for (field, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(FedError::InvalidHyper {
                    field,
                    reason: format!("must be positive and finite, got {value}"),
                });
            }
        }
        if !(self.eta3 > 0.0 && self.eta3 <= 1.0) {
            return Err(FedError::InvalidHyper {
                field: "eta3",
                reason: format!("must lie in (0, 1], got {}", self.eta3),
            });
        }
        for (field, value) in [("nu", self.nu), ("prox_mu", self.prox_mu)] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(FedError::InvalidHyper {
                    field,
                    reason: format!("must be nonnegative, got {value}"),
                });
            }
        }
        if self.local_steps.is_empty() || self.local_steps.contains(&0) {
            return Err(FedError::InvalidHyper {
                field: "local_steps",
                reason: "every client needs at least one local step".into(),
            });
        }
        if self.local_steps.len() > 1 && self.local_steps.len() != n_clients {
            return Err(FedError::InvalidHyper {
                field: "local_steps",
                reason: format!(
                    "{} entries for {} clients",
                    self.local_steps.len(),
                    n_clients
                ),
            });
        }
        if let LocalSolver::ToTolerance { tol, max_steps } = self.local_solver {
            if tol.is_nan() || tol <= 0.0 || max_steps == 0 {
                return Err(FedError::InvalidHyper {
                    field: "local_tol",
                    reason: "needs a positive tolerance and step cap".into(),
                });
            }
        }
        Ok(())
    }
}
