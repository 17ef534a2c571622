//! Linear DANN-style adversarial objective.
//!
//! Block layout:
//! - `omega = [W (hidden × features, row-major), V (classes × hidden, row-major)]`
//! - `psi = [u (hidden)]`
//!
//! Features are `z = W x`, class scores `V z`, and the domain classifier is
//! `h = σ(uᵀz)`, read as the probability that a point is unlabeled-domain.
//! Per point the loss is
//! - labeled (source): `CE(softmax(V z), y) + ν log(1 − h)`
//! - unlabeled (target): `ν log h`
//!
//! and `f = α Σ_j F_j − (ρ/2)‖u‖²` with `α = 1/|D|` unless overridden.

use std::sync::Arc;

use rand::seq::index::sample;

use super::LocalObjective;
use crate::error::{FedError, Result};
use crate::params::{ParamVector, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    /// Labeled domain.
    Source,
    /// Unlabeled domain.
    Target,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataPoint {
    pub x: Vec<f64>,
    pub label: Option<usize>,
    pub domain: Domain,
}

/// A point with a ground-truth label, used for held-out evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPoint {
    pub x: Vec<f64>,
    pub label: usize,
}

/// Client data: labeled source points and unlabeled target points.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainAdaptDataset {
    n_features: usize,
    points: Vec<DataPoint>,
}

impl DomainAdaptDataset {
    /// Checks that every source point is labeled, every target point is not,
    /// and that feature lengths agree.
    pub fn new(n_features: usize, points: Vec<DataPoint>) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if p.x.len() != n_features {
                return Err(FedError::DimensionMismatch {
                    context: "data point features",
                    left: p.x.len(),
                    right: n_features,
                });
            }
            match (p.domain, p.label) {
                (Domain::Source, None) => {
                    return Err(FedError::InvalidSpec(format!("source point {i} has no label")))
                }
                (Domain::Target, Some(_)) => {
                    return Err(FedError::InvalidSpec(format!("target point {i} carries a label")))
                }
                _ => {}
            }
        }
        Ok(Self { n_features, points })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn points(&self) -> &[DataPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn count(&self, domain: Domain) -> usize {
        self.points.iter().filter(|p| p.domain == domain).count()
    }

    pub(crate) fn from_points_unchecked(n_features: usize, points: Vec<DataPoint>) -> Self {
        Self { n_features, points }
    }
}

/// Shape of the linear extractor / predictor / domain classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DomainAdaptLayout {
    pub n_features: usize,
    pub hidden: usize,
    pub n_classes: usize,
}

impl DomainAdaptLayout {
    pub fn dims(&self) -> (usize, usize) {
        (
            self.hidden * self.n_features + self.n_classes * self.hidden,
            self.hidden,
        )
    }

    fn extractor_len(&self) -> usize {
        self.hidden * self.n_features
    }

    pub(crate) fn features(&self, omega: &[f64], x: &[f64]) -> Vec<f64> {
        let p = self.n_features;
        omega[..self.extractor_len()]
            .chunks_exact(p)
            .map(|row| row.iter().zip(x).map(|(w, xi)| w * xi).sum())
            .collect()
    }

    pub(crate) fn class_scores(&self, omega: &[f64], z: &[f64]) -> Vec<f64> {
        omega[self.extractor_len()..]
            .chunks_exact(self.hidden)
            .map(|row| row.iter().zip(z).map(|(v, zi)| v * zi).sum())
            .collect()
    }

    /// Predicted class, ties resolved to the lowest index.
    pub fn predict(&self, omega: &ParamVector, x: &[f64]) -> usize {
        let z = self.features(omega.as_slice(), x);
        let scores = self.class_scores(omega.as_slice(), &z);
        let mut best = 0;
        for (k, s) in scores.iter().enumerate().skip(1) {
            if *s > scores[best] {
                best = k;
            }
        }
        best
    }
}

#[derive(Debug, Clone)]
pub struct DomainAdaptObjective {
    dataset: Arc<DomainAdaptDataset>,
    layout: DomainAdaptLayout,
    nu: f64,
    weight: f64,
    psi_ridge: f64,
}

/// Builds the client objective over `data`; `α = 1/|D|`.
pub fn make_domain_adapt_client(
    data: DomainAdaptDataset,
    layout: DomainAdaptLayout,
    nu: f64,
) -> Result<DomainAdaptObjective> {
    if data.is_empty() {
        return Err(FedError::EmptyDataset);
    }
    if data.n_features != layout.n_features {
        return Err(FedError::DimensionMismatch {
            context: "dataset features vs layout",
            left: data.n_features,
            right: layout.n_features,
        });
    }
    if layout.hidden == 0 || layout.n_classes == 0 {
        return Err(FedError::InvalidSpec("layout needs hidden units and classes".into()));
    }
    for p in &data.points {
        if let Some(label) = p.label {
            if label >= layout.n_classes {
                return Err(FedError::LabelOutOfRange {
                    label,
                    classes: layout.n_classes,
                });
            }
        }
    }
    if !(nu >= 0.0 && nu.is_finite()) {
        return Err(FedError::InvalidHyper {
            field: "nu",
            reason: format!("must be nonnegative, got {nu}"),
        });
    }
    let weight = 1.0 / data.len() as f64;
    Ok(DomainAdaptObjective {
        dataset: Arc::new(data),
        layout,
        nu,
        weight,
        psi_ridge: 0.0,
    })
}

/// `log(1 + e^s)` without overflow.
fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

fn log_sum_exp(scores: &[f64]) -> f64 {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln()
}

impl DomainAdaptObjective {
    /// Replaces the per-point weight `α`.
    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    /// Adds `−(ρ/2)‖u‖²`, making the objective `ρ`-strongly concave in `psi`.
    pub fn with_psi_ridge(mut self, ridge: f64) -> Self {
        self.psi_ridge = ridge;
        self
    }

    pub fn layout(&self) -> DomainAdaptLayout {
        self.layout
    }

    pub fn dataset(&self) -> &DomainAdaptDataset {
        &self.dataset
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    fn domain_score(&self, psi: &[f64], z: &[f64]) -> f64 {
        psi.iter().zip(z).map(|(u, zi)| u * zi).sum()
    }
}

impl LocalObjective for DomainAdaptObjective {
    fn dims(&self) -> (usize, usize) {
        self.layout.dims()
    }

    fn value(&self, omega: &ParamVector, psi: &ParamVector) -> f64 {
        let (w, u) = (omega.as_slice(), psi.as_slice());
        let mut total = 0.0;
        for p in self.dataset.points() {
            let z = self.layout.features(w, &p.x);
            let s = self.domain_score(u, &z);
            match p.label {
                Some(y) => {
                    let scores = self.layout.class_scores(w, &z);
                    total += log_sum_exp(&scores) - scores[y];
                    total -= self.nu * softplus(s);
                }
                None => total -= self.nu * softplus(-s),
            }
        }
        let ridge = 0.5 * self.psi_ridge * u.iter().map(|v| v * v).sum::<f64>();
        self.weight * total - ridge
    }

    fn grads(&self, omega: &ParamVector, psi: &ParamVector) -> (ParamVector, ParamVector) {
        let layout = self.layout;
        let (w, u) = (omega.as_slice(), psi.as_slice());
        let (k, nf) = (layout.hidden, layout.n_features);
        let ext = layout.extractor_len();
        let mut g_omega = vec![0.0; layout.dims().0];
        let mut g_psi = vec![0.0; k];
        let mut dz = vec![0.0; k];
        for p in self.dataset.points() {
            let z = layout.features(w, &p.x);
            let s = self.domain_score(u, &z);
            // d/ds of the adversarial term.
            let ds = match p.label {
                Some(_) => -self.nu * sigmoid(s),
                None => self.nu * sigmoid(-s),
            };
            for j in 0..k {
                g_psi[j] += ds * z[j];
                dz[j] = ds * u[j];
            }
            if let Some(y) = p.label {
                let scores = layout.class_scores(w, &z);
                let lse = log_sum_exp(&scores);
                for (c, sc) in scores.iter().enumerate() {
                    let r = (sc - lse).exp() - if c == y { 1.0 } else { 0.0 };
                    let row = &w[ext + c * k..ext + (c + 1) * k];
                    let g_row = &mut g_omega[ext + c * k..ext + (c + 1) * k];
                    for j in 0..k {
                        g_row[j] += r * z[j];
                        dz[j] += r * row[j];
                    }
                }
            }
            for j in 0..k {
                let g_row = &mut g_omega[j * nf..(j + 1) * nf];
                for (g, xi) in g_row.iter_mut().zip(&p.x) {
                    *g += dz[j] * xi;
                }
            }
        }
        let a = self.weight;
        let g_omega = g_omega.into_iter().map(|v| a * v).collect();
        let g_psi = g_psi
            .into_iter()
            .zip(u)
            .map(|(v, ui)| a * v - self.psi_ridge * ui)
            .collect();
        (ParamVector::new(g_omega), ParamVector::new(g_psi))
    }

    fn minibatch(&self, size: usize, rng: &mut SimRng) -> Option<Arc<dyn LocalObjective>> {
        let n = self.dataset.len();
        let size = size.clamp(1, n);
        let mut idx = sample(rng, n, size).into_vec();
        idx.sort_unstable();
        let points = idx.iter().map(|&i| self.dataset.points[i].clone()).collect();
        Some(Arc::new(DomainAdaptObjective {
            dataset: Arc::new(DomainAdaptDataset::from_points_unchecked(
                self.dataset.n_features,
                points,
            )),
            layout: self.layout,
            nu: self.nu,
            weight: self.weight * n as f64 / size as f64,
            psi_ridge: self.psi_ridge,
        }))
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::LN_2;

    use rand::Rng;
    use rand_distr::StandardNormal;

    use super::*;
    use crate::params::seeded_rng;

    const LAYOUT: DomainAdaptLayout = DomainAdaptLayout {
        n_features: 3,
        hidden: 2,
        n_classes: 2,
    };

    fn src(x: &[f64], y: usize) -> DataPoint {
        DataPoint {
            x: x.to_vec(),
            label: Some(y),
            domain: Domain::Source,
        }
    }

    fn tgt(x: &[f64]) -> DataPoint {
        DataPoint {
            x: x.to_vec(),
            label: None,
            domain: Domain::Target,
        }
    }

    fn zeros() -> (ParamVector, ParamVector) {
        let (d1, d2) = LAYOUT.dims();
        (ParamVector::zeros(d1), ParamVector::zeros(d2))
    }

    #[test]
    fn zero_weights_single_source_point() {
        let nu = 0.3;
        let data = DomainAdaptDataset::new(3, vec![src(&[1.0, -2.0, 0.5], 1)]).unwrap();
        let obj = make_domain_adapt_client(data, LAYOUT, nu).unwrap();
        let (w, u) = zeros();
        let expected = LN_2 + nu * 0.5f64.ln();
        assert!((obj.value(&w, &u) - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_weights_single_target_point() {
        let nu = 0.7;
        let data = DomainAdaptDataset::new(3, vec![tgt(&[0.2, 0.1, 3.0])]).unwrap();
        let obj = make_domain_adapt_client(data, LAYOUT, nu).unwrap();
        let (w, u) = zeros();
        assert!((obj.value(&w, &u) - nu * 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn construction_errors() {
        let empty = DomainAdaptDataset::new(3, vec![]).unwrap();
        assert!(matches!(
            make_domain_adapt_client(empty, LAYOUT, 0.1),
            Err(FedError::EmptyDataset)
        ));
        let bad = DomainAdaptDataset::new(3, vec![src(&[0.0; 3], 2)]).unwrap();
        assert!(matches!(
            make_domain_adapt_client(bad, LAYOUT, 0.1),
            Err(FedError::LabelOutOfRange { label: 2, classes: 2 })
        ));
        assert!(DomainAdaptDataset::new(
            3,
            vec![DataPoint {
                x: vec![0.0; 3],
                label: None,
                domain: Domain::Source
            }]
        )
        .is_err());
        assert!(DomainAdaptDataset::new(
            3,
            vec![DataPoint {
                x: vec![0.0; 3],
                label: Some(0),
                domain: Domain::Target
            }]
        )
        .is_err());
    }

    fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|j| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[j] += h;
                xm[j] -= h;
                (f(&xp) - f(&xm)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = seeded_rng(11);
        let mut pts = Vec::new();
        for i in 0..6 {
            let x: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
            pts.push(if i % 2 == 0 { src(&x, i % 4 / 2) } else { tgt(&x) });
        }
        let obj = make_domain_adapt_client(DomainAdaptDataset::new(3, pts).unwrap(), LAYOUT, 0.4)
            .unwrap()
            .with_psi_ridge(0.05);
        let (d1, d2) = LAYOUT.dims();
        let w: Vec<f64> = (0..d1).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.7).collect();
        let u: Vec<f64> = (0..d2).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.7).collect();
        let (w, u) = (ParamVector::new(w), ParamVector::new(u));
        let (gw, gu) = obj.grads(&w, &u);
        let fw = central_diff(|v| obj.value(&ParamVector::new(v.to_vec()), &u), w.as_slice(), 1e-6);
        let fu = central_diff(|v| obj.value(&w, &ParamVector::new(v.to_vec())), u.as_slice(), 1e-6);
        let rel = |a: &[f64], b: &[f64]| {
            let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-12);
            num / den
        };
        assert!(rel(gw.as_slice(), &fw) < 1e-6);
        assert!(rel(gu.as_slice(), &fu) < 1e-6);
    }

    #[test]
    fn predict_ties_go_to_lowest_class() {
        let (w, _) = zeros();
        assert_eq!(LAYOUT.predict(&w, &[1.0, 2.0, 3.0]), 0);
    }

    #[test]
    fn minibatch_is_seeded() {
        let pts: Vec<DataPoint> = (0..10).map(|i| tgt(&[i as f64, 0.0, 1.0])).collect();
        let obj = make_domain_adapt_client(DomainAdaptDataset::new(3, pts).unwrap(), LAYOUT, 0.2)
            .unwrap();
        let (w, u) = zeros();
        let a = obj.minibatch(4, &mut seeded_rng(5)).unwrap();
        let b = obj.minibatch(4, &mut seeded_rng(5)).unwrap();
        assert_eq!(a.grads(&w, &u), b.grads(&w, &u));
        // Batch weight rescales to the full-data mean.
        assert!((a.value(&w, &u) - obj.value(&w, &u)).abs() < 1e-12);
    }
}
