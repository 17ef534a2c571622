//! Local objectives `f_i(omega, psi)`, their client average, and the inner
//! maximization oracle behind `psi*(omega)`, `Phi(omega)` and `∇Phi(omega)`.

mod domain_adapt;
mod quadratic;
pub mod textio;

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

pub use domain_adapt::{
    make_domain_adapt_client, DataPoint, Domain, DomainAdaptDataset, DomainAdaptLayout,
    DomainAdaptObjective, LabeledPoint,
};
pub use quadratic::{make_quadratic_client, LipschitzBounds, QuadraticObjective, QuadraticSaddleSpec};

use crate::error::{FedError, Result};
use crate::params::{ParamVector, SimRng};

/// A smooth minimax objective `f(omega, psi)`: minimized in `omega`,
/// maximized in `psi`.
///
/// Callers pass blocks of length `dims()`. The optimizers validate
/// dimensions before evaluating, so implementations may panic on mismatch.
pub trait LocalObjective: Debug + Send + Sync {
    /// `(d1, d2)`: lengths of the `omega` and `psi` blocks.
    fn dims(&self) -> (usize, usize);

    fn value(&self, omega: &ParamVector, psi: &ParamVector) -> f64;

    /// Both partial gradients at one point.
    fn grads(&self, omega: &ParamVector, psi: &ParamVector) -> (ParamVector, ParamVector);

    fn grad_omega(&self, omega: &ParamVector, psi: &ParamVector) -> ParamVector {
        self.grads(omega, psi).0
    }

    fn grad_psi(&self, omega: &ParamVector, psi: &ParamVector) -> ParamVector {
        self.grads(omega, psi).1
    }

    fn as_quadratic(&self) -> Option<&QuadraticObjective> {
        None
    }

    /// A seeded minibatch view of the objective, for families backed by data.
    fn minibatch(&self, _size: usize, _rng: &mut SimRng) -> Option<Arc<dyn LocalObjective>> {
        None
    }
}

/// `f(omega, psi) = (1/N) Σ f_i(omega, psi)` over a fixed client order.
#[derive(Debug, Clone)]
pub struct GlobalObjective {
    clients: Vec<Arc<dyn LocalObjective>>,
    dims: (usize, usize),
}

impl GlobalObjective {
    pub fn new(clients: Vec<Arc<dyn LocalObjective>>) -> Result<Self> {
        let first = clients.first().ok_or(FedError::EmptyDataset)?;
        let dims = first.dims();
        for c in &clients[1..] {
            let d = c.dims();
            if d.0 != dims.0 {
                return Err(FedError::DimensionMismatch {
                    context: "global objective omega",
                    left: dims.0,
                    right: d.0,
                });
            }
            if d.1 != dims.1 {
                return Err(FedError::DimensionMismatch {
                    context: "global objective psi",
                    left: dims.1,
                    right: d.1,
                });
            }
        }
        Ok(Self { clients, dims })
    }

    pub fn clients(&self) -> &[Arc<dyn LocalObjective>] {
        &self.clients
    }

    pub fn n_clients(&self) -> usize {
        self.clients.len()
    }

    /// Client-averaged quadratic coefficients `(Ā, B̄, C̄, ā, c̄)` when every
    /// client is quadratic.
    pub fn quadratic_average(&self) -> Option<QuadraticAverage> {
        let quads: Option<Vec<&QuadraticObjective>> =
            self.clients.iter().map(|c| c.as_quadratic()).collect();
        let quads = quads?;
        let n = quads.len() as f64;
        let (d1, d2) = self.dims;
        let mut avg = QuadraticAverage {
            a_mat: DMatrix::zeros(d1, d1),
            b_mat: DMatrix::zeros(d1, d2),
            c_mat: DMatrix::zeros(d2, d2),
            a_vec: DVector::zeros(d1),
            c_vec: DVector::zeros(d2),
        };
        for q in &quads {
            let s = q.spec();
            avg.a_mat += &s.a_mat;
            avg.b_mat += &s.b_mat;
            avg.c_mat += &s.c_mat;
            avg.a_vec += &s.a_vec;
            avg.c_vec += &s.c_vec;
        }
        avg.a_mat /= n;
        avg.b_mat /= n;
        avg.c_mat /= n;
        avg.a_vec /= n;
        avg.c_vec /= n;
        Some(avg)
    }
}

impl LocalObjective for GlobalObjective {
    fn dims(&self) -> (usize, usize) {
        self.dims
    }

    fn value(&self, omega: &ParamVector, psi: &ParamVector) -> f64 {
        let sum: f64 = self.clients.iter().map(|c| c.value(omega, psi)).sum();
        sum / self.clients.len() as f64
    }

    fn grads(&self, omega: &ParamVector, psi: &ParamVector) -> (ParamVector, ParamVector) {
        let (first, rest) = self.clients.split_first().expect("nonempty by construction");
        let (go, gp) = first.grads(omega, psi);
        let (mut go, mut gp) = (go.into_vec(), gp.into_vec());
        for c in rest {
            let (a, b) = c.grads(omega, psi);
            for (acc, v) in go.iter_mut().zip(a.iter()) {
                *acc += v;
            }
            for (acc, v) in gp.iter_mut().zip(b.iter()) {
                *acc += v;
            }
        }
        let inv = 1.0 / self.clients.len() as f64;
        (
            ParamVector::new(go.into_iter().map(|v| v * inv).collect()),
            ParamVector::new(gp.into_iter().map(|v| v * inv).collect()),
        )
    }
}

/// Averaged quadratic coefficients of a [`GlobalObjective`].
#[derive(Debug, Clone)]
pub struct QuadraticAverage {
    pub a_mat: DMatrix<f64>,
    pub b_mat: DMatrix<f64>,
    pub c_mat: DMatrix<f64>,
    pub a_vec: DVector<f64>,
    pub c_vec: DVector<f64>,
}

impl QuadraticAverage {
    /// `C̄⁻¹ B̄ᵀ`, the linear part of `psi*(omega)`.
    pub fn response_matrix(&self) -> Result<DMatrix<f64>> {
        let chol = self.c_mat.clone().cholesky().ok_or_else(|| not_pd("C̄", &self.c_mat))?;
        Ok(chol.solve(&self.b_mat.transpose()))
    }

    /// Hessian of `Phi`: `Ā + B̄ C̄⁻¹ B̄ᵀ`.
    pub fn phi_hessian(&self) -> Result<DMatrix<f64>> {
        Ok(&self.a_mat + &self.b_mat * self.response_matrix()?)
    }

    /// The unique stationary point of `Phi`, when its Hessian is invertible.
    pub fn phi_stationary_point(&self) -> Result<ParamVector> {
        let chol = self.c_mat.clone().cholesky().ok_or_else(|| not_pd("C̄", &self.c_mat))?;
        let h = self.phi_hessian()?;
        // ∇Phi(ω) = H ω + ā + B̄ C̄⁻¹ c̄
        let rhs = -(&self.a_vec + &self.b_mat * chol.solve(&self.c_vec));
        let sol = h
            .lu()
            .solve(&rhs)
            .ok_or_else(|| FedError::InvalidSpec("Phi Hessian is singular".into()))?;
        Ok(ParamVector::new(sol.iter().copied().collect()))
    }
}

fn not_pd(name: &'static str, m: &DMatrix<f64>) -> FedError {
    let min_eigenvalue = m.clone().symmetric_eigen().eigenvalues.min();
    FedError::NotPositiveDefinite {
        name,
        min_eigenvalue,
    }
}

/// Strategy used by [`inner_max_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerMaxMethod {
    /// Closed form when every client is quadratic, gradient ascent otherwise.
    Auto,
    ClosedForm,
    GradientAscent,
}

const ASCENT_MAX_ITERS: usize = 200_000;

/// `psi*(omega) = argmax_psi f(omega, psi)` to gradient-norm tolerance `tol`.
pub fn inner_max(objective: &GlobalObjective, omega: &ParamVector, tol: f64) -> Result<ParamVector> {
    inner_max_with(objective, omega, tol, InnerMaxMethod::Auto)
}

pub fn inner_max_with(
    objective: &GlobalObjective,
    omega: &ParamVector,
    tol: f64,
    method: InnerMaxMethod,
) -> Result<ParamVector> {
    let (d1, d2) = objective.dims();
    if omega.len() != d1 {
        return Err(FedError::DimensionMismatch {
            context: "inner_max omega",
            left: omega.len(),
            right: d1,
        });
    }
    let quad = match method {
        InnerMaxMethod::GradientAscent => None,
        InnerMaxMethod::Auto => objective.quadratic_average(),
        InnerMaxMethod::ClosedForm => Some(objective.quadratic_average().ok_or_else(|| {
            FedError::InvalidSpec("closed-form inner maximization needs quadratic clients".into())
        })?),
    };
    match quad {
        Some(avg) => closed_form_inner_max(objective, &avg, omega, tol),
        None => gradient_ascent_inner_max(objective, omega, &ParamVector::zeros(d2), tol, ASCENT_MAX_ITERS),
    }
}

fn closed_form_inner_max(
    objective: &GlobalObjective,
    avg: &QuadraticAverage,
    omega: &ParamVector,
    tol: f64,
) -> Result<ParamVector> {
    let chol = avg.c_mat.clone().cholesky().ok_or_else(|| not_pd("C̄", &avg.c_mat))?;
    let w = DVector::from_column_slice(omega.as_slice());
    let mut psi = chol.solve(&(avg.b_mat.transpose() * &w + &avg.c_vec));
    // One refinement pass absorbs rounding on ill-conditioned C̄.
    for _ in 0..2 {
        let g = objective.grad_psi(omega, &ParamVector::new(psi.iter().copied().collect()));
        let g = DVector::from_column_slice(g.as_slice());
        if g.norm() <= tol {
            break;
        }
        psi += chol.solve(&g);
    }
    let psi = ParamVector::new(psi.iter().copied().collect());
    let grad_norm = objective.grad_psi(omega, &psi).norm();
    if grad_norm > tol {
        return Err(FedError::InnerMaxNotConverged {
            iterations: 0,
            grad_norm,
        });
    }
    Ok(psi)
}

/// Gradient ascent on `psi` with backtracking (Armijo) step control.
pub fn gradient_ascent_inner_max(
    objective: &dyn LocalObjective,
    omega: &ParamVector,
    start: &ParamVector,
    tol: f64,
    max_iters: usize,
) -> Result<ParamVector> {
    let mut psi = start.clone();
    let mut value = objective.value(omega, &psi);
    let mut step = 1.0;
    let mut grad = objective.grad_psi(omega, &psi);
    let mut grad_norm = grad.norm();
    for iteration in 0..max_iters {
        if grad_norm <= tol {
            return Ok(psi);
        }
        let g2 = grad_norm * grad_norm;
        loop {
            let trial = crate::params::axpy(step, &grad, &psi)?;
            let trial_value = objective.value(omega, &trial);
            let gain = 0.5 * step * g2;
            let accept = if gain > 1e-13 * value.abs().max(1.0) {
                trial_value.is_finite() && trial_value >= value + gain
            } else {
                // Value changes are below rounding; fall back to gradient decrease.
                objective.grad_psi(omega, &trial).norm() < grad_norm
            };
            if accept {
                psi = trial;
                value = trial_value;
                step *= 2.0;
                break;
            }
            step *= 0.5;
            if step < 1e-300 {
                return Err(FedError::InnerMaxNotConverged {
                    iterations: iteration,
                    grad_norm,
                });
            }
        }
        grad = objective.grad_psi(omega, &psi);
        grad_norm = grad.norm();
        if !grad_norm.is_finite() {
            return Err(FedError::Divergence {
                context: "inner maximization",
                step: iteration,
            });
        }
    }
    if grad_norm <= tol {
        return Ok(psi);
    }
    Err(FedError::InnerMaxNotConverged {
        iterations: max_iters,
        grad_norm,
    })
}

/// Like [`inner_max`], but non-quadratic objectives start the ascent at
/// `start` instead of zero.
pub fn inner_max_from(
    objective: &GlobalObjective,
    omega: &ParamVector,
    start: &ParamVector,
    tol: f64,
) -> Result<ParamVector> {
    match objective.quadratic_average() {
        Some(_) => inner_max(objective, omega, tol),
        None => {
            if start.len() != objective.dims().1 {
                return Err(FedError::DimensionMismatch {
                    context: "inner_max start",
                    left: start.len(),
                    right: objective.dims().1,
                });
            }
            gradient_ascent_inner_max(objective, omega, start, tol, ASCENT_MAX_ITERS)
        }
    }
}

/// `(Phi(omega), ∇Phi(omega))` with `∇Phi(omega) = ∇_omega f(omega, psi*(omega))`.
pub fn phi_value_and_grad(
    objective: &GlobalObjective,
    omega: &ParamVector,
    tol: f64,
) -> Result<(f64, ParamVector)> {
    let psi = inner_max(objective, omega, tol)?;
    Ok((objective.value(omega, &psi), objective.grad_omega(omega, &psi)))
}
