use nalgebra::{DMatrix, DVector};

use super::LocalObjective;
use crate::error::{FedError, Result};
use crate::params::ParamVector;

/// Coefficients of
/// `f(ω, ψ) = ½ωᵀAω + ωᵀBψ − ½ψᵀCψ + aᵀω + cᵀψ`.
///
/// `A` may be indefinite; `C` must be positive definite, which makes `f`
/// strongly concave in `ψ` with modulus `λ_min(C)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSaddleSpec {
    pub a_mat: DMatrix<f64>,
    pub b_mat: DMatrix<f64>,
    pub c_mat: DMatrix<f64>,
    pub a_vec: DVector<f64>,
    pub c_vec: DVector<f64>,
}

impl QuadraticSaddleSpec {
    pub fn new(
        a_mat: DMatrix<f64>,
        b_mat: DMatrix<f64>,
        c_mat: DMatrix<f64>,
        a_vec: DVector<f64>,
        c_vec: DVector<f64>,
    ) -> Self {
        Self {
            a_mat,
            b_mat,
            c_mat,
            a_vec,
            c_vec,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.a_vec.len(), self.c_vec.len())
    }
}

/// Operator-norm bounds on the four gradient blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzBounds {
    pub l11: f64,
    pub l12: f64,
    pub l21: f64,
    pub l22: f64,
}

#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    spec: QuadraticSaddleSpec,
    strong_concavity: f64,
}

pub fn make_quadratic_client(spec: QuadraticSaddleSpec) -> Result<QuadraticObjective> {
    let (d1, d2) = spec.dims();
    let shape_err = |what: &str, got: (usize, usize), want: (usize, usize)| {
        FedError::InvalidSpec(format!(
            "{what} is {}x{}, expected {}x{}",
            got.0, got.1, want.0, want.1
        ))
    };
    if spec.a_mat.shape() != (d1, d1) {
        return Err(shape_err("A", spec.a_mat.shape(), (d1, d1)));
    }
    if spec.b_mat.shape() != (d1, d2) {
        return Err(shape_err("B", spec.b_mat.shape(), (d1, d2)));
    }
    if spec.c_mat.shape() != (d2, d2) {
        return Err(shape_err("C", spec.c_mat.shape(), (d2, d2)));
    }
    if d2 == 0 {
        return Err(FedError::InvalidSpec("psi block is empty".into()));
    }
    let finite = spec.a_mat.iter().chain(spec.b_mat.iter()).chain(spec.c_mat.iter())
        .chain(spec.a_vec.iter()).chain(spec.c_vec.iter())
        .all(|v| v.is_finite());
    if !finite {
        return Err(FedError::InvalidSpec("non-finite coefficient".into()));
    }
    for (name, m) in [("A", &spec.a_mat), ("C", &spec.c_mat)] {
        let scale = m.amax().max(1.0);
        if (m - m.transpose()).amax() > 1e-12 * scale {
            return Err(FedError::InvalidSpec(format!("{name} is not symmetric")));
        }
    }
    let min_eigenvalue = spec.c_mat.clone().symmetric_eigen().eigenvalues.min();
    if min_eigenvalue.is_nan() || min_eigenvalue <= 0.0 {
        return Err(FedError::NotPositiveDefinite {
            name: "C",
            min_eigenvalue,
        });
    }
    Ok(QuadraticObjective {
        spec,
        strong_concavity: min_eigenvalue,
    })
}

fn sym_op_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().symmetric_eigen().eigenvalues.amax()
}

fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

impl QuadraticObjective {
    pub fn spec(&self) -> &QuadraticSaddleSpec {
        &self.spec
    }

    /// `λ_min(C)`.
    pub fn strong_concavity(&self) -> f64 {
        self.strong_concavity
    }

    pub fn lipschitz_bounds(&self) -> LipschitzBounds {
        let l12 = op_norm(&self.spec.b_mat);
        LipschitzBounds {
            l11: sym_op_norm(&self.spec.a_mat),
            l12,
            l21: l12,
            l22: sym_op_norm(&self.spec.c_mat),
        }
    }

    fn split(&self, omega: &ParamVector, psi: &ParamVector) -> (DVector<f64>, DVector<f64>) {
        (
            DVector::from_column_slice(omega.as_slice()),
            DVector::from_column_slice(psi.as_slice()),
        )
    }
}

fn to_param(v: DVector<f64>) -> ParamVector {
    ParamVector::new(v.as_slice().to_vec())
}

impl LocalObjective for QuadraticObjective {
    fn dims(&self) -> (usize, usize) {
        self.spec.dims()
    }

    fn value(&self, omega: &ParamVector, psi: &ParamVector) -> f64 {
        let s = &self.spec;
        let (w, p) = self.split(omega, psi);
        0.5 * w.dot(&(&s.a_mat * &w)) + w.dot(&(&s.b_mat * &p)) - 0.5 * p.dot(&(&s.c_mat * &p))
            + s.a_vec.dot(&w)
            + s.c_vec.dot(&p)
    }

    fn grads(&self, omega: &ParamVector, psi: &ParamVector) -> (ParamVector, ParamVector) {
        (self.grad_omega(omega, psi), self.grad_psi(omega, psi))
    }

    fn grad_omega(&self, omega: &ParamVector, psi: &ParamVector) -> ParamVector {
        let s = &self.spec;
        let (w, p) = self.split(omega, psi);
        to_param(&s.a_mat * &w + &s.b_mat * &p + &s.a_vec)
    }

    fn grad_psi(&self, omega: &ParamVector, psi: &ParamVector) -> ParamVector {
        let s = &self.spec;
        let (w, p) = self.split(omega, psi);
        to_param(s.b_mat.tr_mul(&w) - &s.c_mat * &p + &s.c_vec)
    }

    fn as_quadratic(&self) -> Option<&QuadraticObjective> {
        Some(self)
    }
}
