//! Verification oracles: consensus-update identities of FedMM, finite
//! differences, stationarity summaries and empirical constants.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{FedError, Result};
use crate::federation::RunLog;
use crate::objective::{
    inner_max, make_domain_adapt_client, make_quadratic_client, phi_value_and_grad, DataPoint,
    Domain, DomainAdaptDataset, DomainAdaptLayout, GlobalObjective, LocalObjective,
    QuadraticObjective, QuadraticSaddleSpec,
};
use crate::optim::{init_clients, run_round, OptimizerKind};
use crate::params::{
    seeded_rng, ClientState, HyperParams, LocalSolver, ParamVector, PrimalDualPair, ServerState,
    SimRng,
};
use crate::problems::{heterogeneous_quadratic, random_quadratic_spec};

/// Residual of one identity at one round.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityReport {
    pub name: String,
    pub round: usize,
    pub residual_norm: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl IdentityReport {
    fn new(name: &str, round: usize, residual_norm: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            round,
            residual_norm,
            tolerance,
            pass: residual_norm <= tolerance,
        }
    }
}

pub const IDENTITY_CSV_HEADER: &str = "name,round,residual,tolerance,pass";

pub fn identity_reports_csv(reports: &[IdentityReport]) -> String {
    let mut out = String::from(IDENTITY_CSV_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(out, "{},{},{},{},{}", r.name, r.round, r.residual_norm, r.tolerance, r.pass);
    }
    out
}

/// Identity names, in report order.
pub const PSI_SUM_STEP: &str = "psi_sum_step";
pub const OMEGA_SUM_STEP: &str = "omega_sum_step";
pub const PSI_CLIENT_STEP: &str = "psi_client_step";
pub const OMEGA_CLIENT_STEP: &str = "omega_client_step";
pub const OMEGA_MULTIPLIER: &str = "omega_multiplier";
pub const PSI_MULTIPLIER: &str = "psi_multiplier";

/// Base tolerance of every identity, widened by the local solve error.
pub const IDENTITY_BASE_TOL: f64 = 1e-8;

/// Tolerance for local solve error `e`: `1e-8 + 10 e`.
pub fn identity_tolerance(local_error: f64) -> f64 {
    IDENTITY_BASE_TOL + 10.0 * local_error
}

fn check_clients(objectives: &[Arc<dyn LocalObjective>], states: &[ClientState], what: &'static str) -> Result<()> {
    if states.len() != objectives.len() {
        return Err(FedError::DimensionMismatch {
            context: what,
            left: states.len(),
            right: objectives.len(),
        });
    }
    if let Some((i, s)) = states.iter().enumerate().find(|(i, s)| s.id != *i) {
        return Err(FedError::InvalidSpec(format!("{what}: slot {i} holds client {}", s.id)));
    }
    Ok(())
}

fn sum_of<'a>(mut vs: impl Iterator<Item = &'a ParamVector>, len: usize) -> Result<ParamVector> {
    vs.try_fold(ParamVector::zeros(len), |acc, v| acc.add(v))
}

/// Residuals of the four consensus-update identities over one FedMM round
/// with `eta3 = 1`:
///
/// - `psi_sum_step`: `Σψ_i⁺ − Σψ_i − (1/μ₂) Σ∇ψ f_i(ω_i⁺, ψ_i⁺)`
/// - `omega_sum_step`: `Σω_i⁺ − Σω_i + (1/μ₁) Σ∇ω f_i(ω_i⁺, ψ_i⁺)`
/// - `psi_client_step`: `max_i ‖μ₂(ψ_i⁺ − ψ₀) − [∇ψ f_i(⁺) − ∇ψ f_i]‖`
/// - `omega_client_step`: `max_i ‖μ₁(ω_i⁺ − ω₀) − [∇ω f_i − ∇ω f_i(⁺)]‖`
///
/// `before` and `after` are the client states around the round and
/// `global_before` the consensus pair it started from. The sum identities
/// hold from the first round on; the per-client ones need `before` to come
/// out of an earlier round, since they rely on the multipliers already
/// matching the local gradients. `local_error` is the largest local
/// gradient norm achieved in the rounds involved; tolerances are
/// `1e-8 + 10 e`, times `N` for the sums. Nothing is mutated.
pub fn check_identities(
    objectives: &[Arc<dyn LocalObjective>],
    before: &[ClientState],
    after: &[ClientState],
    global_before: &PrimalDualPair,
    hp: &HyperParams,
    local_error: f64,
    round: usize,
) -> Result<Vec<IdentityReport>> {
    check_clients(objectives, before, "clients before round")?;
    check_clients(objectives, after, "clients after round")?;
    let n = objectives.len();
    let (d1, d2) = global_before.dims();

    let mut grads_before = Vec::with_capacity(n);
    let mut grads_after = Vec::with_capacity(n);
    for ((obj, b), a) in objectives.iter().zip(before).zip(after) {
        grads_before.push(obj.grads(&b.pair.omega, &b.pair.psi));
        grads_after.push(obj.grads(&a.pair.omega, &a.pair.psi));
    }

    let psi_sum = sum_of(after.iter().map(|s| &s.pair.psi), d2)?
        .sub(&sum_of(before.iter().map(|s| &s.pair.psi), d2)?)?
        .sub(&sum_of(grads_after.iter().map(|g| &g.1), d2)?.scale(1.0 / hp.mu2))?;
    let omega_sum = sum_of(after.iter().map(|s| &s.pair.omega), d1)?
        .sub(&sum_of(before.iter().map(|s| &s.pair.omega), d1)?)?
        .add(&sum_of(grads_after.iter().map(|g| &g.0), d1)?.scale(1.0 / hp.mu1))?;

    let mut psi_client: f64 = 0.0;
    let mut omega_client: f64 = 0.0;
    for i in 0..n {
        let a = &after[i].pair;
        let r_psi = a
            .psi
            .sub(&global_before.psi)?
            .scale(hp.mu2)
            .sub(&grads_after[i].1.sub(&grads_before[i].1)?)?;
        let r_omega = a
            .omega
            .sub(&global_before.omega)?
            .scale(hp.mu1)
            .sub(&grads_before[i].0.sub(&grads_after[i].0)?)?;
        psi_client = psi_client.max(r_psi.norm());
        omega_client = omega_client.max(r_omega.norm());
    }

    let tol = identity_tolerance(local_error);
    Ok(vec![
        IdentityReport::new(PSI_SUM_STEP, round, psi_sum.norm(), tol * n as f64),
        IdentityReport::new(OMEGA_SUM_STEP, round, omega_sum.norm(), tol * n as f64),
        IdentityReport::new(PSI_CLIENT_STEP, round, psi_client, tol),
        IdentityReport::new(OMEGA_CLIENT_STEP, round, omega_client, tol),
    ])
}

/// After a converged local round the multipliers equal the local gradients:
/// `λ_i = −∇ω f_i` and `β_i = ∇ψ f_i` at the client iterate.
pub fn check_multipliers(
    objectives: &[Arc<dyn LocalObjective>],
    after: &[ClientState],
    local_error: f64,
    round: usize,
) -> Result<Vec<IdentityReport>> {
    check_clients(objectives, after, "clients after round")?;
    let mut omega_res: f64 = 0.0;
    let mut psi_res: f64 = 0.0;
    for (obj, s) in objectives.iter().zip(after) {
        let (gw, gp) = obj.grads(&s.pair.omega, &s.pair.psi);
        omega_res = omega_res.max(s.lambda.add(&gw)?.norm());
        psi_res = psi_res.max(s.beta.sub(&gp)?.norm());
    }
    let tol = identity_tolerance(local_error);
    Ok(vec![
        IdentityReport::new(OMEGA_MULTIPLIER, round, omega_res, tol),
        IdentityReport::new(PSI_MULTIPLIER, round, psi_res, tol),
    ])
}

/// Runs `rounds + 1` FedMM rounds and checks every identity on rounds
/// `1..=rounds` (round 0 only seeds the multipliers).
///
/// `hp` must use `eta3 = 1`; the local solver is taken as given, so pass
/// [`LocalSolver::ToTolerance`] for tight residuals.
pub fn identity_suite(
    objectives: &[Arc<dyn LocalObjective>],
    init: &PrimalDualPair,
    hp: &HyperParams,
    rounds: usize,
) -> Result<Vec<IdentityReport>> {
    if hp.eta3 != 1.0 {
        return Err(FedError::InvalidHyper {
            field: "eta3",
            reason: "identity checks assume an undecayed multiplier shift (eta3 = 1)".into(),
        });
    }
    let mut server = ServerState::new(init.clone());
    let mut clients = init_clients(objectives.len(), init);
    let mut prev_error = run_round(OptimizerKind::FedMM, objectives, &mut clients, &mut server, hp)?
        .max_local_grad_norm;
    let mut reports = Vec::with_capacity(6 * rounds);
    for round in 1..=rounds {
        let before = clients.clone();
        let global_before = server.global.clone();
        let stats = run_round(OptimizerKind::FedMM, objectives, &mut clients, &mut server, hp)?;
        let e = prev_error.max(stats.max_local_grad_norm);
        reports.extend(check_identities(objectives, &before, &clients, &global_before, hp, e, round)?);
        reports.extend(check_multipliers(objectives, &clients, stats.max_local_grad_norm, round)?);
        prev_error = stats.max_local_grad_norm;
    }
    Ok(reports)
}

/// Central differences `(f(x + h e_j) − f(x − h e_j)) / 2h`.
pub fn finite_diff_grad<F>(f: F, x: &ParamVector, h: f64) -> Result<ParamVector>
where
    F: Fn(&ParamVector) -> f64,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(FedError::InvalidStep(h));
    }
    let mut probe = x.clone().into_vec();
    let mut grad = Vec::with_capacity(probe.len());
    for j in 0..probe.len() {
        let orig = probe[j];
        probe[j] = orig + h;
        let up = f(&ParamVector::new(probe.clone()));
        probe[j] = orig - h;
        let down = f(&ParamVector::new(probe.clone()));
        probe[j] = orig;
        if !(up.is_finite() && down.is_finite()) {
            return Err(FedError::NonFiniteValue(j));
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(ParamVector::new(grad))
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_error(a: &ParamVector, b: &ParamVector) -> Result<f64> {
    let scale = a.norm().max(b.norm());
    let diff = a.distance(b)?;
    Ok(if scale == 0.0 { diff } else { diff / scale })
}

/// Relative errors of both analytic partial gradients against central
/// differences with step `h`.
pub fn gradient_check(
    obj: &dyn LocalObjective,
    omega: &ParamVector,
    psi: &ParamVector,
    h: f64,
) -> Result<(f64, f64)> {
    let (gw, gp) = obj.grads(omega, psi);
    let fw = finite_diff_grad(|w| obj.value(w, psi), omega, h)?;
    let fp = finite_diff_grad(|p| obj.value(omega, p), psi, h)?;
    Ok((relative_error(&gw, &fw)?, relative_error(&gp, &fp)?))
}

/// `max ‖ψ*(ω) − ψ*(ω′)‖ / ‖ω − ω′‖` over the probe pairs.
pub fn estimate_kappa(
    objective: &GlobalObjective,
    omega_pairs: &[(ParamVector, ParamVector)],
    tol: f64,
) -> Result<f64> {
    let mut best: f64 = 0.0;
    for (i, (a, b)) in omega_pairs.iter().enumerate() {
        let gap = a.distance(b)?;
        if gap == 0.0 {
            return Err(FedError::DegeneratePair(i));
        }
        let pa = inner_max(objective, a, tol)?;
        let pb = inner_max(objective, b, tol)?;
        best = best.max(pa.distance(&pb)? / gap);
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaritySummary {
    pub min: f64,
    pub final_value: f64,
    /// First round whose sample is at most the tolerance.
    pub first_round_below: Option<usize>,
}

/// Summary of `(round, ‖∇Φ‖)` samples; unsampled rounds are skipped.
pub fn stationarity_of(samples: &[(usize, Option<f64>)], tol: f64) -> Result<StationaritySummary> {
    let present: Vec<(usize, f64)> = samples.iter().filter_map(|(r, v)| v.map(|v| (*r, v))).collect();
    let (_, final_value) = *present.last().ok_or(FedError::NoStationaritySamples)?;
    Ok(StationaritySummary {
        min: present.iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
        final_value,
        first_round_below: present.iter().find(|p| p.1 <= tol).map(|p| p.0),
    })
}

pub fn stationarity_series(log: &RunLog, tol: f64) -> Result<StationaritySummary> {
    let samples: Vec<(usize, Option<f64>)> = log.rounds.iter().map(|m| (m.round, m.phi_grad_norm)).collect();
    stationarity_of(&samples, tol)
}

/// Largest observed gradient-difference ratios for the four blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzSample {
    pub l11: f64,
    pub l12: f64,
    pub l21: f64,
    pub l22: f64,
}

fn gaussian(rng: &mut SimRng, len: usize, scale: f64) -> ParamVector {
    ParamVector::new((0..len).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect())
}

pub fn sample_lipschitz(obj: &dyn LocalObjective, rng: &mut SimRng, pairs: usize) -> Result<LipschitzSample> {
    let (d1, d2) = obj.dims();
    let mut s = LipschitzSample {
        l11: 0.0,
        l12: 0.0,
        l21: 0.0,
        l22: 0.0,
    };
    for _ in 0..pairs {
        let (w, w2) = (gaussian(rng, d1, 1.0), gaussian(rng, d1, 1.0));
        let (p, p2) = (gaussian(rng, d2, 1.0), gaussian(rng, d2, 1.0));
        let (dw, dp) = (w.distance(&w2)?, p.distance(&p2)?);
        let (gw, gp) = obj.grads(&w, &p);
        let (gw_w, gp_w) = obj.grads(&w2, &p);
        let (gw_p, gp_p) = obj.grads(&w, &p2);
        if dw > 0.0 {
            s.l11 = s.l11.max(gw.distance(&gw_w)? / dw);
            s.l21 = s.l21.max(gp.distance(&gp_w)? / dw);
        }
        if dp > 0.0 {
            s.l12 = s.l12.max(gw.distance(&gw_p)? / dp);
            s.l22 = s.l22.max(gp.distance(&gp_p)? / dp);
        }
    }
    Ok(s)
}

/// Largest `⟨∇ψf(ω,ψ) − ∇ψf(ω,ψ′), ψ − ψ′⟩ / ‖ψ − ψ′‖² + modulus` over
/// random draws; nonpositive when `f` is `modulus`-strongly concave in `ψ`.
pub fn strong_concavity_margin(
    obj: &dyn LocalObjective,
    modulus: f64,
    rng: &mut SimRng,
    draws: usize,
) -> Result<f64> {
    let (d1, d2) = obj.dims();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..draws {
        let w = gaussian(rng, d1, 1.0);
        let (p, p2) = (gaussian(rng, d2, 1.0), gaussian(rng, d2, 1.0));
        let delta = p.sub(&p2)?;
        let d2n = delta.dot(&delta)?;
        if d2n == 0.0 {
            continue;
        }
        let g = obj.grad_psi(&w, &p).sub(&obj.grad_psi(&w, &p2))?;
        worst = worst.max(g.dot(&delta)? / d2n + modulus);
    }
    Ok(worst)
}

/// Largest `⟨∇ψ f(ω, ψ*(ω)), v⟩ / ‖v‖` over random directions.
pub fn danskin_residual(
    objective: &GlobalObjective,
    omega: &ParamVector,
    tol: f64,
    rng: &mut SimRng,
    directions: usize,
) -> Result<f64> {
    let psi = inner_max(objective, omega, tol)?;
    let g = objective.grad_psi(omega, &psi);
    let mut worst: f64 = 0.0;
    for _ in 0..directions {
        let v = gaussian(rng, g.len(), 1.0);
        let n = v.norm();
        if n > 0.0 {
            worst = worst.max(g.dot(&v)? / n);
        }
    }
    Ok(worst)
}

/// A random small domain-adaptation client with a random probe point.
pub fn random_domain_adapt_probe(
    rng: &mut SimRng,
) -> Result<(Arc<dyn LocalObjective>, ParamVector, ParamVector)> {
    let layout = DomainAdaptLayout {
        n_features: rng.random_range(1..=5),
        hidden: rng.random_range(1..=4),
        n_classes: rng.random_range(2..=3),
    };
    let n_points = rng.random_range(1..=8);
    let points = (0..n_points)
        .map(|_| {
            let x = (0..layout.n_features).map(|_| rng.sample(StandardNormal)).collect();
            if rng.random_bool(0.5) {
                DataPoint {
                    x,
                    label: Some(rng.random_range(0..layout.n_classes)),
                    domain: Domain::Source,
                }
            } else {
                DataPoint {
                    x,
                    label: None,
                    domain: Domain::Target,
                }
            }
        })
        .collect();
    let data = DomainAdaptDataset::new(layout.n_features, points)?;
    let obj = make_domain_adapt_client(data, layout, rng.random_range(0.0..2.0))?
        .with_psi_ridge(rng.random_range(0.0..0.5));
    let (d1, d2) = layout.dims();
    Ok((Arc::new(obj), gaussian(rng, d1, 0.7), gaussian(rng, d2, 0.7)))
}

/// A random quadratic client (dims up to 50) with a random probe point.
pub fn random_quadratic_probe(
    rng: &mut SimRng,
) -> Result<(Arc<dyn LocalObjective>, ParamVector, ParamVector)> {
    let d1 = rng.random_range(1..=50);
    let d2 = rng.random_range(1..=50);
    let obj = make_quadratic_client(random_quadratic_spec(rng, d1, d2))?;
    Ok((Arc::new(obj), gaussian(rng, d1, 1.0), gaussian(rng, d2, 1.0)))
}

/// Trajectory of the consensus pair over `rounds` rounds of `kind`.
pub fn global_trajectory(
    kind: OptimizerKind,
    objectives: &[Arc<dyn LocalObjective>],
    hp: &HyperParams,
    init: &PrimalDualPair,
    rounds: usize,
) -> Result<Vec<PrimalDualPair>> {
    let mut server = ServerState::new(init.clone());
    let mut clients = init_clients(objectives.len(), init);
    let mut out = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        run_round(kind, objectives, &mut clients, &mut server, hp)?;
        out.push(server.global.clone());
    }
    Ok(out)
}

/// One line of the check table.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn from_result(name: &str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((pass, detail)) => Self {
                name: name.into(),
                pass,
                detail,
            },
            Err(e) => Self {
                name: name.into(),
                pass: false,
                detail: format!("error: {e}"),
            },
        }
    }
}

/// Finite-difference tolerance of the gradient oracle checks.
pub const GRADIENT_REL_TOL: f64 = 1e-5;
/// Finite-difference step of the gradient oracle checks.
pub const FD_STEP: f64 = 1e-6;

fn gradient_oracle<F>(mut probe: F, probes: usize) -> Result<(bool, String)>
where
    F: FnMut() -> Result<(Arc<dyn LocalObjective>, ParamVector, ParamVector)>,
{
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let (obj, w, p) = probe()?;
        let (ew, ep) = gradient_check(obj.as_ref(), &w, &p, FD_STEP)?;
        worst = worst.max(ew).max(ep);
    }
    Ok((worst <= GRADIENT_REL_TOL, format!("max_rel_err={worst:e} probes={probes}")))
}

fn to_objectives(specs: &[QuadraticSaddleSpec]) -> Result<Vec<Arc<dyn LocalObjective>>> {
    specs
        .iter()
        .map(|s| make_quadratic_client(s.clone()).map(|q| Arc::new(q) as Arc<dyn LocalObjective>))
        .collect()
}

/// Hyperparameters of the identity checks: tight local solves, no decay.
pub fn identity_hyper() -> HyperParams {
    HyperParams {
        eta1: 0.1,
        eta2: 0.1,
        eta3: 1.0,
        local_solver: LocalSolver::ToTolerance {
            tol: 1e-12,
            max_steps: 100_000,
        },
        ..HyperParams::default()
    }
}

fn bit_exact(a: &[PrimalDualPair], b: &[PrimalDualPair]) -> (bool, String) {
    let first_diff = a.iter().zip(b).position(|(x, y)| x != y);
    match first_diff {
        None if a.len() == b.len() => (true, format!("steps={}", a.len())),
        None => (false, format!("length {} vs {}", a.len(), b.len())),
        Some(i) => (false, format!("first difference at step {i}")),
    }
}

/// The full diagnostics suite on built-in fixtures, or on `fixture` (a
/// multi-client quadratic instance) when given.
pub fn run_check_suite(fixture: Option<&[QuadraticSaddleSpec]>) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    let builtin = || heterogeneous_quadratic(3, 4, 3, 7);
    let objectives = match fixture {
        Some(specs) => match to_objectives(specs) {
            Ok(objs) if !objs.is_empty() => {
                out.push(CheckOutcome {
                    name: "fixture".into(),
                    pass: true,
                    detail: format!("clients={}", objs.len()),
                });
                Ok(objs)
            }
            Ok(_) => Err(FedError::InvalidSpec("fixture has no clients".into())),
            Err(e) => Err(e),
        },
        None => builtin().and_then(|s| to_objectives(&s)),
    };
    let objectives = match objectives {
        Ok(o) => o,
        Err(e) => {
            out.push(CheckOutcome {
                name: "fixture".into(),
                pass: false,
                detail: format!("error: {e}"),
            });
            return out;
        }
    };

    let mut rng = seeded_rng(2024);
    out.push(CheckOutcome::from_result(
        "gradient_quadratic",
        gradient_oracle(|| random_quadratic_probe(&mut rng), 100),
    ));
    let mut rng = seeded_rng(2025);
    out.push(CheckOutcome::from_result(
        "gradient_domain_adapt",
        gradient_oracle(|| random_domain_adapt_probe(&mut rng), 100),
    ));

    let (d1, d2) = objectives[0].dims();
    let init = PrimalDualPair::zeros(d1, d2);
    let identities = identity_suite(&objectives, &init, &identity_hyper(), 50);
    let (consensus, multipliers): (Vec<_>, Vec<_>) = match &identities {
        Ok(r) => r
            .iter()
            .cloned()
            .partition(|r| r.name != OMEGA_MULTIPLIER && r.name != PSI_MULTIPLIER),
        Err(_) => (Vec::new(), Vec::new()),
    };
    let summarize = |reports: &[IdentityReport]| -> (bool, String) {
        let worst = reports.iter().map(|r| r.residual_norm).fold(0.0, f64::max);
        let fails = reports.iter().filter(|r| !r.pass).count();
        (fails == 0 && !reports.is_empty(), format!("max_residual={worst:e} failures={fails} reports={}", reports.len()))
    };
    match identities {
        Ok(_) => {
            out.push(CheckOutcome::from_result("consensus_identities", Ok(summarize(&consensus))));
            out.push(CheckOutcome::from_result("multiplier_recovery", Ok(summarize(&multipliers))));
        }
        Err(e) => out.push(CheckOutcome::from_result("consensus_identities", Err(e))),
    }

    let hp = HyperParams {
        eta1: 0.05,
        eta2: 0.05,
        local_steps: vec![5],
        ..HyperParams::default()
    };
    let single = vec![objectives[0].clone()];
    out.push(CheckOutcome::from_result("fedsgda_single_client_equals_central", (|| {
        let a = global_trajectory(OptimizerKind::FedSgda, &single, &hp, &init, 100)?;
        let b = global_trajectory(OptimizerKind::CentralGda, &single, &hp, &init, 100)?;
        Ok(bit_exact(&a, &b))
    })()));
    out.push(CheckOutcome::from_result("fedprox_zero_equals_fedavg", (|| {
        let prox = HyperParams { prox_mu: 0.0, ..hp.clone() };
        let a = global_trajectory(OptimizerKind::FedProxGda, &objectives, &prox, &init, 50)?;
        let b = global_trajectory(OptimizerKind::FedAvgGda, &objectives, &prox, &init, 50)?;
        Ok(bit_exact(&a, &b))
    })()));
    out.push(CheckOutcome::from_result("fedavg_one_step_equals_fedsgda", (|| {
        let one = HyperParams { local_steps: vec![1], ..hp.clone() };
        let a = global_trajectory(OptimizerKind::FedAvgGda, &objectives, &one, &init, 50)?;
        let b = global_trajectory(OptimizerKind::FedSgda, &objectives, &one, &init, 50)?;
        Ok(bit_exact(&a, &b))
    })()));

    let make_global = || GlobalObjective::new(objectives.clone());
    out.push(CheckOutcome::from_result("kappa_within_operator_norm", (|| {
        let global = make_global()?;
        let avg = global
            .quadratic_average()
            .ok_or_else(|| FedError::InvalidSpec("fixture is not quadratic".into()))?;
        let bound = avg.response_matrix()?.singular_values().max();
        let mut rng = seeded_rng(7);
        let pairs: Vec<_> = (0..200).map(|_| (gaussian(&mut rng, d1, 1.0), gaussian(&mut rng, d1, 1.0))).collect();
        let kappa = estimate_kappa(&global, &pairs, 1e-10)?;
        Ok((kappa <= bound + 1e-8, format!("estimate={kappa:e} operator_norm={bound:e}")))
    })()));
    out.push(CheckOutcome::from_result("lipschitz_bounds", (|| {
        let mut rng = seeded_rng(8);
        let mut ok = true;
        let mut worst: f64 = 0.0;
        for obj in &objectives {
            let q: &QuadraticObjective = obj.as_quadratic().expect("quadratic fixture");
            let b = q.lipschitz_bounds();
            let s = sample_lipschitz(obj.as_ref(), &mut rng, 200)?;
            let slack = 1e-9;
            ok &= s.l11 <= b.l11 * (1.0 + slack) + slack
                && s.l12 <= b.l12 * (1.0 + slack) + slack
                && s.l21 <= b.l21 * (1.0 + slack) + slack
                && s.l22 <= b.l22 * (1.0 + slack) + slack;
            worst = worst.max(s.l11 / b.l11.max(f64::MIN_POSITIVE));
        }
        Ok((ok, format!("max_l11_ratio_to_bound={worst:.6}")))
    })()));
    out.push(CheckOutcome::from_result("strong_concavity", (|| {
        let global = make_global()?;
        let avg = global.quadratic_average().expect("quadratic fixture");
        let modulus = avg.c_mat.clone().symmetric_eigen().eigenvalues.min() - 1e-10;
        let margin = strong_concavity_margin(&global, modulus, &mut seeded_rng(9), 200)?;
        Ok((margin <= 0.0, format!("worst_margin={margin:e} modulus={modulus:e}")))
    })()));
    out.push(CheckOutcome::from_result("danskin_first_order", (|| {
        let global = make_global()?;
        let mut rng = seeded_rng(10);
        let tol = 1e-10;
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let w = gaussian(&mut rng, d1, 1.0);
            worst = worst.max(danskin_residual(&global, &w, tol, &mut rng, 10)?);
        }
        Ok((worst <= tol, format!("worst={worst:e}")))
    })()));
    out.push(CheckOutcome::from_result("phi_gradient", (|| {
        let global = make_global()?;
        let mut rng = seeded_rng(11);
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let w = gaussian(&mut rng, d1, 1.0);
            let (_, g) = phi_value_and_grad(&global, &w, 1e-12)?;
            let fd = finite_diff_grad(
                |x| phi_value_and_grad(&global, x, 1e-12).map_or(f64::NAN, |r| r.0),
                &w,
                FD_STEP,
            )?;
            worst = worst.max(relative_error(&g, &fd)?);
        }
        Ok((worst <= GRADIENT_REL_TOL, format!("max_rel_err={worst:e}")))
    })()));
    out.push(CheckOutcome::from_result("communication_ledger", (|| {
        let hp = HyperParams {
            rounds: 10,
            ..hp.clone()
        };
        let mut server = ServerState::new(init.clone());
        let mut clients = init_clients(objectives.len(), &init);
        for _ in 0..hp.rounds {
            run_round(OptimizerKind::FedMM, &objectives, &mut clients, &mut server, &hp)?;
        }
        let expected = ServerState::floats_per_round(objectives.len(), (d1, d2)) * hp.rounds as u64;
        Ok((server.floats_sent == expected, format!("floats={} expected={expected}", server.floats_sent)))
    })()));
    out
}
