//! Federated minimax optimizers: FedMM, FedSGDA, FedAvgGDA, FedProxGDA and
//! centralized GDA.
//!
//! Every local loop is simultaneous GDA: both partial gradients are taken at
//! `(ω̂^m, ψ̂^m)` before either block moves. Aggregation averages client
//! uploads in client-id order, so the result does not depend on the order in
//! which local rounds finish.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{FedError, Result};
use crate::objective::LocalObjective;
use crate::params::{axpy, ClientState, HyperParams, LocalSolver, ParamVector, PrimalDualPair, ServerState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptimizerKind {
    FedMM,
    FedSgda,
    FedAvgGda,
    FedProxGda,
    CentralGda,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 5] = [
        OptimizerKind::FedMM,
        OptimizerKind::FedSgda,
        OptimizerKind::FedAvgGda,
        OptimizerKind::FedProxGda,
        OptimizerKind::CentralGda,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::FedMM => "fedmm",
            OptimizerKind::FedSgda => "fedsgda",
            OptimizerKind::FedAvgGda => "fedavg_gda",
            OptimizerKind::FedProxGda => "fedprox_gda",
            OptimizerKind::CentralGda => "central_gda",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown optimizer `{s}`"))
    }
}

/// What a client uploads after its local round.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalRoundOutput {
    pub client_id: usize,
    pub omega_out: ParamVector,
    pub psi_out: ParamVector,
    /// Upload size, `d1 + d2`.
    pub floats: usize,
    /// `max(‖∇_ω L_i‖, ‖∇_ψ L_i‖)` at the final local iterate.
    pub local_grad_norm: f64,
    pub local_steps: usize,
}

impl LocalRoundOutput {
    fn new(client_id: usize, pair: PrimalDualPair, local_grad_norm: f64, local_steps: usize) -> Self {
        let floats = pair.omega.len() + pair.psi.len();
        Self {
            client_id,
            omega_out: pair.omega,
            psi_out: pair.psi,
            floats,
            local_grad_norm,
            local_steps,
        }
    }
}

fn check_pair(obj: &dyn LocalObjective, pair: &PrimalDualPair, context: &'static str) -> Result<()> {
    pair.check_dims(obj.dims(), context)
}

/// Gradients of the client augmented Lagrangian
/// `f_i + ⟨λ, ω−ω₀⟩ + μ₁/2‖ω−ω₀‖² − ⟨β, ψ−ψ₀⟩ − μ₂/2‖ψ−ψ₀‖²`
/// at the client's current iterate.
pub fn augmented_lagrangian_grads(
    obj: &dyn LocalObjective,
    state: &ClientState,
    global: &PrimalDualPair,
    hp: &HyperParams,
) -> Result<(ParamVector, ParamVector)> {
    check_pair(obj, &state.pair, "client iterate")?;
    check_pair(obj, global, "global pair")?;
    let (d1, d2) = obj.dims();
    if state.lambda.len() != d1 {
        return Err(FedError::DimensionMismatch {
            context: "lambda",
            left: state.lambda.len(),
            right: d1,
        });
    }
    if state.beta.len() != d2 {
        return Err(FedError::DimensionMismatch {
            context: "beta",
            left: state.beta.len(),
            right: d2,
        });
    }
    al_grads(obj, &state.pair, &state.lambda, &state.beta, global, hp.mu1, hp.mu2)
}

fn al_grads(
    obj: &dyn LocalObjective,
    at: &PrimalDualPair,
    lambda: &ParamVector,
    beta: &ParamVector,
    global: &PrimalDualPair,
    mu1: f64,
    mu2: f64,
) -> Result<(ParamVector, ParamVector)> {
    let (gw, gp) = obj.grads(&at.omega, &at.psi);
    let gw = axpy(mu1, &at.omega.sub(&global.omega)?, &gw.add(lambda)?)?;
    let gp = axpy(-mu2, &at.psi.sub(&global.psi)?, &gp.sub(beta)?)?;
    Ok((gw, gp))
}

/// Runs simultaneous GDA from `start` on the saddle function whose partial
/// gradients `grads` returns. Returns the final iterate, the achieved
/// gradient norm there, and the number of steps taken.
fn local_gda<G>(
    start: &PrimalDualPair,
    grads: G,
    hp: &HyperParams,
    fixed_steps: usize,
) -> Result<(PrimalDualPair, f64, usize)>
where
    G: Fn(&PrimalDualPair) -> Result<(ParamVector, ParamVector)>,
{
    let grad_norm = |g: &(ParamVector, ParamVector)| g.0.norm().max(g.1.norm());
    let mut it = start.clone();
    let (tol, max_steps) = match hp.local_solver {
        LocalSolver::FixedSteps => (None, fixed_steps),
        LocalSolver::ToTolerance { tol, max_steps } => (Some(tol), max_steps),
    };
    let mut g = grads(&it)?;
    let mut steps = 0;
    while steps < max_steps {
        if let Some(tol) = tol {
            if grad_norm(&g) <= tol {
                break;
            }
        }
        let omega = axpy(-hp.eta1, &g.0, &it.omega)?;
        let psi = axpy(hp.eta2, &g.1, &it.psi)?;
        it = PrimalDualPair::new(omega, psi);
        if !it.is_finite() {
            return Err(FedError::Divergence {
                context: "local GDA",
                step: steps,
            });
        }
        steps += 1;
        g = grads(&it)?;
    }
    Ok((it, grad_norm(&g), steps))
}

/// One FedMM client round at round index `t`.
///
/// Starts from the globals, runs local GDA on the augmented Lagrangian,
/// takes a dual step on `(λ, β)`, and uploads the multiplier-shifted pair
/// `ω + (η₃ᵗ/μ₁)λ`, `ψ + (η₃ᵗ/μ₂)β`. The returned state holds the new local
/// iterate and multipliers.
pub fn fedmm_local_round(
    obj: &dyn LocalObjective,
    state: &ClientState,
    global: &PrimalDualPair,
    hp: &HyperParams,
    t: usize,
) -> Result<(ClientState, LocalRoundOutput)> {
    augmented_lagrangian_grads(obj, state, global, hp)?;
    let (lambda, beta) = (&state.lambda, &state.beta);
    let (pair, e, steps) = local_gda(
        global,
        |at| al_grads(obj, at, lambda, beta, global, hp.mu1, hp.mu2),
        hp,
        hp.steps_for(state.id),
    )?;
    let lambda = axpy(hp.mu1, &pair.omega.sub(&global.omega)?, lambda)?;
    let beta = axpy(hp.mu2, &pair.psi.sub(&global.psi)?, beta)?;
    let decay = hp.decay_at(t);
    let omega_out = axpy(decay / hp.mu1, &lambda, &pair.omega)?;
    let psi_out = axpy(decay / hp.mu2, &beta, &pair.psi)?;
    let upload = PrimalDualPair::new(omega_out, psi_out);
    if !upload.is_finite() || !lambda.is_finite() || !beta.is_finite() {
        return Err(FedError::Divergence {
            context: "dual update",
            step: steps,
        });
    }
    let next = ClientState {
        id: state.id,
        pair,
        lambda,
        beta,
    };
    Ok((next, LocalRoundOutput::new(state.id, upload, e, steps)))
}

/// Plain average of all `n_clients` uploads, summed in client-id order.
pub fn aggregate(outputs: &[LocalRoundOutput], n_clients: usize) -> Result<PrimalDualPair> {
    let mut slots: Vec<Option<&LocalRoundOutput>> = vec![None; n_clients];
    for out in outputs {
        match slots.get_mut(out.client_id) {
            Some(slot @ None) => *slot = Some(out),
            Some(Some(_)) => {
                return Err(FedError::InvalidSpec(format!(
                    "duplicate upload from client {}",
                    out.client_id
                )))
            }
            None => {
                return Err(FedError::InvalidSpec(format!(
                    "upload from unknown client {}",
                    out.client_id
                )))
            }
        }
    }
    let missing: Vec<usize> = (0..n_clients).filter(|&i| slots[i].is_none()).collect();
    if !missing.is_empty() || n_clients == 0 {
        return Err(FedError::MissingClients(missing));
    }
    let ordered: Vec<&LocalRoundOutput> = slots.into_iter().flatten().collect();
    let omega = ParamVector::mean(ordered.iter().map(|o| &o.omega_out))?;
    let psi = ParamVector::mean(ordered.iter().map(|o| &o.psi_out))?;
    Ok(PrimalDualPair::new(omega, psi))
}

/// Server update of FedMM: `(ω₀, ψ₀) = (1/N) Σ (ω_i^{t+}, ψ_i^{t+})`.
pub fn fedmm_aggregate(outputs: &[LocalRoundOutput], n_clients: usize) -> Result<PrimalDualPair> {
    aggregate(outputs, n_clients)
}

fn raw_grads(obj: &dyn LocalObjective) -> impl Fn(&PrimalDualPair) -> Result<(ParamVector, ParamVector)> + '_ {
    move |at| Ok(obj.grads(&at.omega, &at.psi))
}

/// FedSGDA client step: a single GDA step on `f_i` from the globals.
pub fn fedsgda_local(
    obj: &dyn LocalObjective,
    global: &PrimalDualPair,
    hp: &HyperParams,
    client_id: usize,
) -> Result<LocalRoundOutput> {
    check_pair(obj, global, "global pair")?;
    let hp = HyperParams {
        local_solver: LocalSolver::FixedSteps,
        ..hp.clone()
    };
    let (pair, e, steps) = local_gda(global, raw_grads(obj), &hp, 1)?;
    Ok(LocalRoundOutput::new(client_id, pair, e, steps))
}

/// FedAvgGDA client: `M_i` GDA steps on `f_i` from the globals.
pub fn fedavg_gda_local(
    obj: &dyn LocalObjective,
    global: &PrimalDualPair,
    hp: &HyperParams,
    client_id: usize,
) -> Result<LocalRoundOutput> {
    check_pair(obj, global, "global pair")?;
    let (pair, e, steps) = local_gda(global, raw_grads(obj), hp, hp.steps_for(client_id))?;
    Ok(LocalRoundOutput::new(client_id, pair, e, steps))
}

/// FedProxGDA client: `M_i` GDA steps on
/// `f_i + μ/2‖ω−ω₀‖² − μ/2‖ψ−ψ₀‖²` from the globals.
pub fn fedprox_gda_local(
    obj: &dyn LocalObjective,
    global: &PrimalDualPair,
    hp: &HyperParams,
    client_id: usize,
) -> Result<LocalRoundOutput> {
    check_pair(obj, global, "global pair")?;
    if hp.prox_mu.is_nan() || hp.prox_mu < 0.0 {
        return Err(FedError::InvalidHyper {
            field: "prox_mu",
            reason: format!("must be nonnegative, got {}", hp.prox_mu),
        });
    }
    if hp.prox_mu == 0.0 {
        return fedavg_gda_local(obj, global, hp, client_id);
    }
    let mu = hp.prox_mu;
    let grads = |at: &PrimalDualPair| -> Result<(ParamVector, ParamVector)> {
        let (gw, gp) = obj.grads(&at.omega, &at.psi);
        Ok((
            axpy(mu, &at.omega.sub(&global.omega)?, &gw)?,
            axpy(-mu, &at.psi.sub(&global.psi)?, &gp)?,
        ))
    };
    let (pair, e, steps) = local_gda(global, grads, hp, hp.steps_for(client_id))?;
    Ok(LocalRoundOutput::new(client_id, pair, e, steps))
}

/// One simultaneous GDA step on the pooled objective.
pub fn centralized_gda_step(
    obj: &dyn LocalObjective,
    pair: &PrimalDualPair,
    eta1: f64,
    eta2: f64,
) -> Result<PrimalDualPair> {
    check_pair(obj, pair, "centralized pair")?;
    let (gw, gp) = obj.grads(&pair.omega, &pair.psi);
    let next = PrimalDualPair::new(axpy(-eta1, &gw, &pair.omega)?, axpy(eta2, &gp, &pair.psi)?);
    if !next.is_finite() {
        return Err(FedError::Divergence {
            context: "centralized GDA",
            step: 0,
        });
    }
    Ok(next)
}

/// Summary of one communication round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundStats {
    /// Largest achieved local gradient norm across clients.
    pub max_local_grad_norm: f64,
    pub local_steps: Vec<usize>,
}

/// Runs one round of `kind` over all clients and updates the server.
///
/// `clients[i]` must belong to `objectives[i]` and carry id `i`. For
/// [`OptimizerKind::CentralGda`] a single objective (the pooled problem) and a
/// single client slot are expected. Client rounds run in parallel; the
/// aggregate is independent of scheduling.
pub fn run_round(
    kind: OptimizerKind,
    objectives: &[Arc<dyn LocalObjective>],
    clients: &mut [ClientState],
    server: &mut ServerState,
    hp: &HyperParams,
) -> Result<RoundStats> {
    let n = objectives.len();
    if clients.len() != n {
        return Err(FedError::DimensionMismatch {
            context: "clients vs objectives",
            left: clients.len(),
            right: n,
        });
    }
    if let Some(bad) = clients.iter().enumerate().find(|(i, c)| c.id != *i) {
        return Err(FedError::InvalidSpec(format!(
            "client slot {} carries id {}",
            bad.0, bad.1.id
        )));
    }
    let t = server.round;
    let global = server.global.clone();
    if kind == OptimizerKind::CentralGda {
        if n != 1 {
            return Err(FedError::InvalidSpec(format!(
                "centralized GDA runs on one pooled objective, got {n}"
            )));
        }
        let next = centralized_gda_step(objectives[0].as_ref(), &global, hp.eta1, hp.eta2)?;
        let (gw, gp) = objectives[0].grads(&next.omega, &next.psi);
        clients[0].pair = next.clone();
        server.finish_round(next, 1);
        return Ok(RoundStats {
            max_local_grad_norm: gw.norm().max(gp.norm()),
            local_steps: vec![1],
        });
    }

    let results: Vec<(Option<ClientState>, LocalRoundOutput)> = objectives
        .par_iter()
        .zip(clients.par_iter())
        .map(|(obj, state)| -> Result<_> {
            let obj = obj.as_ref();
            Ok(match kind {
                OptimizerKind::FedMM => {
                    let (s, o) = fedmm_local_round(obj, state, &global, hp, t)?;
                    (Some(s), o)
                }
                OptimizerKind::FedSgda => (None, fedsgda_local(obj, &global, hp, state.id)?),
                OptimizerKind::FedAvgGda => (None, fedavg_gda_local(obj, &global, hp, state.id)?),
                OptimizerKind::FedProxGda => (None, fedprox_gda_local(obj, &global, hp, state.id)?),
                OptimizerKind::CentralGda => unreachable!("handled above"),
            })
        })
        .collect::<Result<_>>()?;

    let outputs: Vec<LocalRoundOutput> = results.iter().map(|(_, o)| o.clone()).collect();
    let next_global = aggregate(&outputs, n)?;
    for ((state, out), slot) in results.into_iter().zip(clients.iter_mut()) {
        match state {
            Some(s) => *slot = s,
            None => slot.pair = PrimalDualPair::new(out.omega_out, out.psi_out),
        }
    }
    server.finish_round(next_global, n);
    Ok(RoundStats {
        max_local_grad_norm: outputs.iter().map(|o| o.local_grad_norm).fold(0.0, f64::max),
        local_steps: outputs.iter().map(|o| o.local_steps).collect(),
    })
}

/// Fresh client states, all at the given globals with zero multipliers.
pub fn init_clients(n: usize, global: &PrimalDualPair) -> Vec<ClientState> {
    (0..n).map(|i| ClientState::new(i, global.clone())).collect()
}

#[cfg(test)]
mod tests {
    use nalgebra::{DMatrix, DVector};

    use super::*;
    use crate::objective::{make_quadratic_client, GlobalObjective, QuadraticSaddleSpec};

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec())
    }

    fn pair(w: &[f64], p: &[f64]) -> PrimalDualPair {
        PrimalDualPair::new(pv(w), pv(p))
    }

    /// Scalar quadratic `½aω² + bωψ − ½cψ² + aᵥω + cᵥψ`.
    fn quad(a: f64, b: f64, c: f64, av: f64, cv: f64) -> Arc<dyn LocalObjective> {
        Arc::new(
            make_quadratic_client(QuadraticSaddleSpec::new(
                DMatrix::from_element(1, 1, a),
                DMatrix::from_element(1, 1, b),
                DMatrix::from_element(1, 1, c),
                DVector::from_element(1, av),
                DVector::from_element(1, cv),
            ))
            .unwrap(),
        )
    }

    /// `f ≡ 0`.
    #[derive(Debug)]
    struct Flat;

    impl LocalObjective for Flat {
        fn dims(&self) -> (usize, usize) {
            (1, 1)
        }

        fn value(&self, _: &ParamVector, _: &ParamVector) -> f64 {
            0.0
        }

        fn grads(&self, _: &ParamVector, _: &ParamVector) -> (ParamVector, ParamVector) {
            (pv(&[0.0]), pv(&[0.0]))
        }
    }

    fn flat() -> Arc<dyn LocalObjective> {
        Arc::new(Flat)
    }

    #[test]
    fn al_grads_vanish_at_consensus() {
        let obj = quad(1.5, 0.5, 2.0, 0.3, -0.2);
        let g = pair(&[0.7], &[-0.4]);
        let state = ClientState::new(0, g.clone());
        let hp = HyperParams::default();
        let (gw, gp) = augmented_lagrangian_grads(obj.as_ref(), &state, &g, &hp).unwrap();
        let (fw, fp) = obj.grads(&g.omega, &g.psi);
        assert_eq!((gw, gp), (fw, fp));
    }

    #[test]
    fn al_grads_hand_values() {
        let obj = flat();
        let hp = HyperParams {
            mu1: 2.0,
            mu2: 1.0,
            ..HyperParams::default()
        };
        let mut state = ClientState::new(0, pair(&[1.0], &[0.0]));
        state.lambda = pv(&[3.0]);
        let (gw, _) = augmented_lagrangian_grads(obj.as_ref(), &state, &pair(&[0.0], &[0.0]), &hp).unwrap();
        assert_eq!(gw, pv(&[5.0]));

        let mut state = ClientState::new(0, pair(&[0.0], &[1.0]));
        state.beta = pv(&[1.0]);
        let (_, gp) = augmented_lagrangian_grads(obj.as_ref(), &state, &pair(&[0.0], &[0.0]), &hp).unwrap();
        assert_eq!(gp, pv(&[-2.0]));
    }

    #[test]
    fn al_grads_dimension_mismatch() {
        let obj = flat();
        let state = ClientState::new(0, pair(&[0.0, 1.0], &[0.0]));
        let err = augmented_lagrangian_grads(obj.as_ref(), &state, &pair(&[0.0], &[0.0]), &HyperParams::default());
        assert!(matches!(err, Err(FedError::DimensionMismatch { .. })));
    }

    #[test]
    fn fedmm_zero_gradient_is_fixed_point() {
        let obj = flat();
        let g = pair(&[0.0], &[0.0]);
        let state = ClientState::new(0, g.clone());
        let (next, out) = fedmm_local_round(obj.as_ref(), &state, &g, &HyperParams::default(), 0).unwrap();
        assert_eq!(next.pair, g);
        assert_eq!(next.lambda, pv(&[0.0]));
        assert_eq!(out.omega_out, pv(&[0.0]));
    }

    fn constant_slope() -> Arc<dyn LocalObjective> {
        // ∇_ω f ≡ 2, ∇_ψ f = −ψ.
        quad(0.0, 0.0, 1.0, 2.0, 0.0)
    }

    #[test]
    fn fedmm_hand_trace() {
        let hp = HyperParams {
            local_steps: vec![1],
            eta1: 1.0,
            mu1: 1.0,
            eta3: 1.0,
            ..HyperParams::default()
        };
        let g = pair(&[0.0], &[0.0]);
        let state = ClientState::new(0, g.clone());
        let (next, out) = fedmm_local_round(constant_slope().as_ref(), &state, &g, &hp, 0).unwrap();
        assert_eq!(next.pair.omega, pv(&[-2.0]));
        assert_eq!(next.lambda, pv(&[-2.0]));
        assert_eq!(out.omega_out, pv(&[-4.0]));

        let hp = HyperParams { eta3: 0.5, ..hp };
        let (_, out) = fedmm_local_round(constant_slope().as_ref(), &state, &g, &hp, 1).unwrap();
        assert_eq!(out.omega_out, pv(&[-3.0]));
    }

    fn output(id: usize, w: f64) -> LocalRoundOutput {
        LocalRoundOutput::new(id, pair(&[w], &[w * 0.1]), 0.0, 1)
    }

    #[test]
    fn aggregate_examples() {
        let one = aggregate(&[output(0, 2.5)], 1).unwrap();
        assert_eq!(one, pair(&[2.5], &[0.25]));
        let two = fedmm_aggregate(&[output(0, 2.0), output(1, 4.0)], 2).unwrap();
        assert_eq!(two.omega, pv(&[3.0]));
    }

    #[test]
    fn aggregate_is_order_independent() {
        let outs: Vec<_> = [0.1, 1e16, -1e16, 0.3, 7.7].iter().enumerate().map(|(i, &w)| output(i, w)).collect();
        let mut rev = outs.clone();
        rev.reverse();
        let a = aggregate(&outs, 5).unwrap();
        let b = aggregate(&rev, 5).unwrap();
        assert_eq!(a.omega.as_slice()[0].to_bits(), b.omega.as_slice()[0].to_bits());
    }

    #[test]
    fn aggregate_lists_missing_clients() {
        match aggregate(&[output(1, 1.0)], 3).unwrap_err() {
            FedError::MissingClients(ids) => assert_eq!(ids, vec![0, 2]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fedsgda_two_client_average() {
        let objs = vec![quad(0.0, 0.0, 1.0, 1.0, 0.0), quad(0.0, 0.0, 1.0, 3.0, 0.0)];
        let hp = HyperParams {
            eta1: 0.1,
            ..HyperParams::default()
        };
        let g = pair(&[0.0], &[0.0]);
        let mut clients = init_clients(2, &g);
        let mut server = ServerState::new(g);
        run_round(OptimizerKind::FedSgda, &objs, &mut clients, &mut server, &hp).unwrap();
        assert!((server.global.omega[0] + 0.2).abs() < 1e-15);
        assert_eq!(server.floats_sent, 2 * 2 * 2);
    }

    #[test]
    fn fedsgda_zero_gradient_keeps_globals() {
        let objs = vec![flat(), flat()];
        let g = pair(&[0.0], &[0.0]);
        let mut clients = init_clients(2, &g);
        let mut server = ServerState::new(g.clone());
        run_round(OptimizerKind::FedSgda, &objs, &mut clients, &mut server, &HyperParams::default()).unwrap();
        assert_eq!(server.global, g);
    }

    #[test]
    fn centralized_step_hand_values() {
        // f = ωψ − ½ψ²
        let f = quad(0.0, 1.0, 1.0, 0.0, 0.0);
        let next = centralized_gda_step(f.as_ref(), &pair(&[1.0], &[0.0]), 0.5, 0.5).unwrap();
        assert_eq!(next, pair(&[1.0], &[0.5]));
        let origin = pair(&[0.0], &[0.0]);
        assert_eq!(centralized_gda_step(f.as_ref(), &origin, 0.5, 0.5).unwrap(), origin);
    }

    #[test]
    fn divergence_is_reported() {
        let f = quad(-1.0, 0.0, 1.0, 0.0, 0.0);
        let hp = HyperParams {
            eta1: 1e200,
            local_steps: vec![5],
            ..HyperParams::default()
        };
        let err = fedavg_gda_local(f.as_ref(), &pair(&[1e200], &[0.0]), &hp, 0).unwrap_err();
        assert!(matches!(err, FedError::Divergence { .. }));
    }

    #[test]
    fn prox_zero_matches_fedavg_and_single_step_matches_sgda() {
        let f = quad(0.8, -0.6, 1.3, 0.2, 0.9);
        let g = pair(&[0.4], &[-1.1]);
        let hp = HyperParams {
            prox_mu: 0.0,
            local_steps: vec![7],
            eta1: 0.1,
            eta2: 0.2,
            ..HyperParams::default()
        };
        assert_eq!(
            fedprox_gda_local(f.as_ref(), &g, &hp, 0).unwrap(),
            fedavg_gda_local(f.as_ref(), &g, &hp, 0).unwrap()
        );
        let hp1 = HyperParams {
            local_steps: vec![1],
            ..hp
        };
        assert_eq!(
            fedavg_gda_local(f.as_ref(), &g, &hp1, 0).unwrap(),
            fedsgda_local(f.as_ref(), &g, &hp1, 0).unwrap()
        );
    }

    #[test]
    fn fedmm_without_duals_matches_fedprox_first_step() {
        let f = quad(0.8, -0.6, 1.3, 0.2, 0.9);
        let g = pair(&[0.4], &[-1.1]);
        let hp = HyperParams {
            mu1: 0.7,
            mu2: 0.7,
            prox_mu: 0.7,
            local_steps: vec![1],
            eta1: 0.1,
            eta2: 0.2,
            eta3: 1e-9,
            ..HyperParams::default()
        };
        let state = ClientState::new(0, g.clone());
        let (next, _) = fedmm_local_round(f.as_ref(), &state, &g, &hp, 0).unwrap();
        let prox = fedprox_gda_local(f.as_ref(), &g, &hp, 0).unwrap();
        assert_eq!(next.pair.omega, prox.omega_out);
        assert_eq!(next.pair.psi, prox.psi_out);
    }

    #[test]
    fn central_matches_single_client_sgda() {
        let f = quad(0.8, -0.6, 1.3, 0.2, 0.9);
        let hp = HyperParams {
            eta1: 0.05,
            eta2: 0.1,
            ..HyperParams::default()
        };
        let start = pair(&[1.0], &[-1.0]);
        let pooled: Arc<dyn LocalObjective> = Arc::new(GlobalObjective::new(vec![f.clone()]).unwrap());
        let mut c_clients = init_clients(1, &start);
        let mut c_server = ServerState::new(start.clone());
        let mut s_clients = init_clients(1, &start);
        let mut s_server = ServerState::new(start);
        for _ in 0..100 {
            run_round(OptimizerKind::CentralGda, std::slice::from_ref(&pooled), &mut c_clients, &mut c_server, &hp).unwrap();
            run_round(OptimizerKind::FedSgda, std::slice::from_ref(&f), &mut s_clients, &mut s_server, &hp).unwrap();
            assert_eq!(c_server.global, s_server.global);
        }
    }

    #[test]
    fn stationary_saddle_is_fixed_for_every_optimizer() {
        // Saddle at (0, 0) for each client.
        let objs = vec![quad(0.5, 1.0, 1.0, 0.0, 0.0), quad(-0.2, 0.3, 2.0, 0.0, 0.0)];
        let g = pair(&[0.0], &[0.0]);
        for kind in OptimizerKind::ALL {
            let objs: Vec<Arc<dyn LocalObjective>> = if kind == OptimizerKind::CentralGda {
                vec![Arc::new(GlobalObjective::new(objs.clone()).unwrap())]
            } else {
                objs.clone()
            };
            let mut clients = init_clients(objs.len(), &g);
            let mut server = ServerState::new(g.clone());
            for _ in 0..3 {
                run_round(kind, &objs, &mut clients, &mut server, &HyperParams::default()).unwrap();
            }
            assert_eq!(server.global, g, "{kind}");
        }
    }

    #[test]
    fn homogeneous_clients_stay_identical() {
        let f = quad(0.4, 0.9, 1.5, -0.3, 0.6);
        let objs = vec![f.clone(), f.clone(), f];
        let g = pair(&[1.0], &[0.5]);
        let hp = HyperParams {
            eta1: 0.1,
            eta2: 0.1,
            local_steps: vec![5],
            ..HyperParams::default()
        };
        for kind in [
            OptimizerKind::FedMM,
            OptimizerKind::FedSgda,
            OptimizerKind::FedAvgGda,
            OptimizerKind::FedProxGda,
        ] {
            let mut clients = init_clients(3, &g);
            let mut server = ServerState::new(g.clone());
            for _ in 0..10 {
                run_round(kind, &objs, &mut clients, &mut server, &hp).unwrap();
                assert!(clients.windows(2).all(|w| w[0].pair == w[1].pair && w[0].lambda == w[1].lambda));
            }
        }
    }

    #[test]
    fn optimizer_names_round_trip() {
        for k in OptimizerKind::ALL {
            assert_eq!(k.name().parse::<OptimizerKind>().unwrap(), k);
        }
        assert!("fedmmm".parse::<OptimizerKind>().is_err());
    }
}
