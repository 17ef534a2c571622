//! Built-in synthetic problems: a heterogeneous quadratic saddle instance
//! and a two-domain Gaussian adaptation toy.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{FedError, Result};
use crate::objective::{
    make_quadratic_client, DataPoint, Domain, DomainAdaptDataset, DomainAdaptLayout,
    GlobalObjective, LabeledPoint, LocalObjective, QuadraticSaddleSpec,
};
use crate::params::{seeded_rng, SimRng};

fn gaussian_matrix(rng: &mut SimRng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn gaussian_vector(rng: &mut SimRng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

fn random_orthogonal(rng: &mut SimRng, n: usize) -> DMatrix<f64> {
    gaussian_matrix(rng, n, n).qr().q()
}

fn symmetric_with_spectrum(rng: &mut SimRng, eigs: &[f64]) -> DMatrix<f64> {
    let q = random_orthogonal(rng, eigs.len());
    let m = &q * DMatrix::from_diagonal(&DVector::from_column_slice(eigs)) * q.transpose();
    // Exact symmetry.
    (&m + m.transpose()) * 0.5
}

/// Heterogeneous quadratic saddle instance.
///
/// Every client has an indefinite `A_i` with spectrum in `[-0.5, 1.5]`, a
/// positive definite `C_i` with spectrum in `[1, 3]`, its own coupling `B_i`
/// and its own linear terms. Draws are repeated until the Hessian of `Phi`
/// for the client average has smallest eigenvalue at least `0.2`, so `Phi`
/// has a unique minimizer.
pub fn heterogeneous_quadratic(
    n_clients: usize,
    d1: usize,
    d2: usize,
    seed: u64,
) -> Result<Vec<QuadraticSaddleSpec>> {
    if n_clients == 0 || d1 < 2 || d2 == 0 {
        return Err(FedError::InvalidSpec(format!(
            "quadratic instance needs n >= 1, d1 >= 2, d2 >= 1 (got {n_clients}, {d1}, {d2})"
        )));
    }
    let mut rng = seeded_rng(seed);
    for _attempt in 0..1000 {
        let specs: Vec<QuadraticSaddleSpec> = (0..n_clients)
            .map(|_| {
                let mut a_eigs: Vec<f64> = (0..d1).map(|_| rng.random_range(-0.5..1.5)).collect();
                a_eigs[0] = rng.random_range(-0.5..-0.2);
                a_eigs[1] = rng.random_range(0.8..1.5);
                let c_eigs: Vec<f64> = (0..d2).map(|_| rng.random_range(1.0..3.0)).collect();
                QuadraticSaddleSpec::new(
                    symmetric_with_spectrum(&mut rng, &a_eigs),
                    gaussian_matrix(&mut rng, d1, d2) * 0.5,
                    symmetric_with_spectrum(&mut rng, &c_eigs),
                    gaussian_vector(&mut rng, d1),
                    gaussian_vector(&mut rng, d2),
                )
            })
            .collect();
        let objs = specs
            .iter()
            .map(|s| make_quadratic_client(s.clone()).map(|q| Arc::new(q) as Arc<dyn LocalObjective>))
            .collect::<Result<Vec<_>>>()?;
        let avg = GlobalObjective::new(objs)?
            .quadratic_average()
            .expect("all clients are quadratic");
        let h = avg.phi_hessian()?;
        if h.symmetric_eigen().eigenvalues.min() >= 0.2 {
            return Ok(specs);
        }
    }
    Err(FedError::InvalidSpec("could not draw an instance with convex Phi".into()))
}

/// A random client: symmetric Gaussian `A`, Gaussian `B`, `C = GGᵀ/d2 + I`
/// and Gaussian linear terms. No condition on the global `Phi`.
pub fn random_quadratic_spec(rng: &mut SimRng, d1: usize, d2: usize) -> QuadraticSaddleSpec {
    let a = gaussian_matrix(rng, d1, d1);
    let g = gaussian_matrix(rng, d2, d2);
    let c = &g * g.transpose() / d2 as f64 + DMatrix::identity(d2, d2);
    QuadraticSaddleSpec::new(
        (&a + a.transpose()) * 0.5,
        gaussian_matrix(rng, d1, d2),
        (&c + c.transpose()) * 0.5,
        gaussian_vector(rng, d1),
        gaussian_vector(rng, d2),
    )
}

/// Two Gaussian domains with two classes.
///
/// Inputs are `x = [x1, x2, 1]`. Class `y` has mean `±(m, m)` in the first
/// two coordinates with isotropic noise; target points are shifted by
/// `(0, shift)`. A classifier fitted on the source leans on `x2` and
/// misplaces target points, while features blind to `x2` transfer.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainToySpec {
    /// Training points per domain (split evenly across the two classes).
    pub points_per_domain: usize,
    pub holdout_points: usize,
    pub class_sep: f64,
    pub shift: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for DomainToySpec {
    fn default() -> Self {
        Self {
            points_per_domain: 200,
            holdout_points: 1000,
            class_sep: 1.0,
            shift: 4.0,
            noise: 1.0,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DomainToy {
    pub train: DomainAdaptDataset,
    /// Labeled target-domain points held out for evaluation.
    pub holdout: Vec<LabeledPoint>,
}

pub const TOY_FEATURES: usize = 3;
pub const TOY_CLASSES: usize = 2;

impl DomainToySpec {
    pub fn layout(&self, hidden: usize) -> DomainAdaptLayout {
        DomainAdaptLayout {
            n_features: TOY_FEATURES,
            hidden,
            n_classes: TOY_CLASSES,
        }
    }

    fn draw(&self, rng: &mut SimRng, label: usize, domain: Domain) -> Vec<f64> {
        let sign = if label == 1 { 1.0 } else { -1.0 };
        let offset = if domain == Domain::Target { self.shift } else { 0.0 };
        let n1: f64 = rng.sample(StandardNormal);
        let n2: f64 = rng.sample(StandardNormal);
        vec![
            sign * self.class_sep + self.noise * n1,
            sign * self.class_sep + offset + self.noise * n2,
            1.0,
        ]
    }

    pub fn generate(&self) -> Result<DomainToy> {
        if self.points_per_domain < 2 {
            return Err(FedError::InvalidSpec("toy needs at least two points per domain".into()));
        }
        let mut rng = seeded_rng(self.seed);
        let mut points = Vec::with_capacity(2 * self.points_per_domain);
        for domain in [Domain::Source, Domain::Target] {
            for i in 0..self.points_per_domain {
                let label = i % 2;
                let x = self.draw(&mut rng, label, domain);
                points.push(DataPoint {
                    x,
                    label: (domain == Domain::Source).then_some(label),
                    domain,
                });
            }
        }
        let holdout = (0..self.holdout_points)
            .map(|i| {
                let label = i % 2;
                LabeledPoint {
                    x: self.draw(&mut rng, label, Domain::Target),
                    label,
                }
            })
            .collect();
        Ok(DomainToy {
            train: DomainAdaptDataset::new(TOY_FEATURES, points)?,
            holdout,
        })
    }
}
