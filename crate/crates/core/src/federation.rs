//! Round-based client/server simulation: label-shift partitioning, the
//! experiment loop, communication accounting and run logs.

use std::fmt::{self, Write as _};
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::{ExperimentConfig, ProblemKind};
use crate::error::{FedError, Result};
use crate::objective::textio::{parse_dataset, parse_quadratic_instance};
use crate::objective::{
    inner_max_from, make_domain_adapt_client, make_quadratic_client, DataPoint, Domain,
    DomainAdaptDataset, DomainAdaptLayout, GlobalObjective, LabeledPoint, LocalObjective,
};
use crate::optim::{init_clients, run_round, OptimizerKind};
use crate::params::{seeded_rng, ClientState, ParamVector, PrimalDualPair, ServerState, SimRng};
use crate::problems::heterogeneous_quadratic;

/// How source and target points are spread over clients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionMode {
    /// Two clients; client 0 gets a fraction `p` of the source points and
    /// `1 - p` of the target points, client 1 the rest.
    TwoClientP,
    OneSourceOneTarget,
    OneSourceTwoTarget,
    TwoSourceOneTarget,
}

impl PartitionMode {
    pub const ALL: [PartitionMode; 4] = [
        PartitionMode::TwoClientP,
        PartitionMode::OneSourceOneTarget,
        PartitionMode::OneSourceTwoTarget,
        PartitionMode::TwoSourceOneTarget,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PartitionMode::TwoClientP => "two_client_p",
            PartitionMode::OneSourceOneTarget => "one_source_one_target",
            PartitionMode::OneSourceTwoTarget => "one_source_two_target",
            PartitionMode::TwoSourceOneTarget => "two_source_one_target",
        }
    }

    /// Client count implied by the mode.
    pub fn n_clients(self) -> usize {
        match self {
            PartitionMode::TwoClientP | PartitionMode::OneSourceOneTarget => 2,
            PartitionMode::OneSourceTwoTarget | PartitionMode::TwoSourceOneTarget => 3,
        }
    }
}

impl fmt::Display for PartitionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PartitionMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|m| m.name()).collect();
                format!("unknown partition mode `{s}` (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionSpec {
    pub n_clients: usize,
    pub p: f64,
    pub mode: PartitionMode,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        Self {
            n_clients: 2,
            p: 1.0,
            mode: PartitionMode::TwoClientP,
        }
    }
}

impl PartitionSpec {
    pub fn two_client(p: f64) -> Self {
        Self {
            n_clients: 2,
            p,
            mode: PartitionMode::TwoClientP,
        }
    }

    /// Checks `p` and that the client count matches the mode.
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(FedError::Config {
                field: "partition.p".into(),
                reason: format!("must lie in [0, 1], got {}", self.p),
            });
        }
        if self.n_clients != self.mode.n_clients() {
            return Err(FedError::Config {
                field: "partition.n_clients".into(),
                reason: format!(
                    "mode {} needs {} clients, got {}",
                    self.mode,
                    self.mode.n_clients(),
                    self.n_clients
                ),
            });
        }
        Ok(())
    }
}

/// Splits shuffled indices into `groups` parts whose sizes differ by at most one.
fn split_even(indices: &[usize], groups: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); groups];
    for (k, &i) in indices.iter().enumerate() {
        out[k % groups].push(i);
    }
    out
}

/// Label-shift partition of `dataset` into `spec.n_clients` client datasets.
///
/// The result is a disjoint cover of the input. Within each client the
/// original point order is kept. Assignment depends only on `rng`.
pub fn partition_label_shift(
    dataset: &DomainAdaptDataset,
    spec: &PartitionSpec,
    rng: &mut SimRng,
) -> Result<Vec<DomainAdaptDataset>> {
    if dataset.is_empty() {
        return Err(FedError::EmptyDataset);
    }
    spec.validate()?;
    let mut source: Vec<usize> = Vec::new();
    let mut target: Vec<usize> = Vec::new();
    for (i, p) in dataset.points().iter().enumerate() {
        match p.domain {
            Domain::Source => source.push(i),
            Domain::Target => target.push(i),
        }
    }
    source.shuffle(rng);
    target.shuffle(rng);

    let assignment: Vec<Vec<usize>> = match spec.mode {
        PartitionMode::TwoClientP => {
            let ns = (spec.p * source.len() as f64).round() as usize;
            let nt = ((1.0 - spec.p) * target.len() as f64).round() as usize;
            let first: Vec<usize> = source[..ns].iter().chain(&target[..nt]).copied().collect();
            let second: Vec<usize> = source[ns..].iter().chain(&target[nt..]).copied().collect();
            vec![first, second]
        }
        PartitionMode::OneSourceOneTarget => vec![source, target],
        PartitionMode::OneSourceTwoTarget => {
            let mut parts = vec![source];
            parts.extend(split_even(&target, 2));
            parts
        }
        PartitionMode::TwoSourceOneTarget => {
            let mut parts = split_even(&source, 2);
            parts.push(target);
            parts
        }
    };

    assignment
        .into_iter()
        .enumerate()
        .map(|(client, mut idx)| {
            if idx.is_empty() {
                return Err(FedError::EmptyPartition(client));
            }
            idx.sort_unstable();
            let points: Vec<DataPoint> = idx.iter().map(|&i| dataset.points()[i].clone()).collect();
            Ok(DomainAdaptDataset::from_points_unchecked(dataset.n_features(), points))
        })
        .collect()
}

/// Fraction of `holdout` points whose predicted class equals the label.
pub fn evaluate_target_accuracy(
    layout: &DomainAdaptLayout,
    omega: &ParamVector,
    holdout: &[LabeledPoint],
) -> Result<f64> {
    if holdout.is_empty() {
        return Err(FedError::EmptyHoldout);
    }
    if omega.len() != layout.dims().0 {
        return Err(FedError::DimensionMismatch {
            context: "accuracy omega vs layout",
            left: omega.len(),
            right: layout.dims().0,
        });
    }
    if let Some(p) = holdout.iter().find(|p| p.x.len() != layout.n_features) {
        return Err(FedError::DimensionMismatch {
            context: "holdout features",
            left: p.x.len(),
            right: layout.n_features,
        });
    }
    let hits = holdout
        .iter()
        .filter(|p| layout.predict(omega, &p.x) == p.label)
        .count();
    Ok(hits as f64 / holdout.len() as f64)
}

/// Metrics recorded after round `round` completes.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    pub round: usize,
    /// `‖∇Φ(ω₀)‖` at the new global, when sampled this round.
    pub phi_grad_norm: Option<f64>,
    /// `max_i ‖ω_i − ω₀‖`.
    pub consensus_omega: f64,
    pub consensus_psi: f64,
    /// Global objective at the new consensus pair.
    pub global_loss: f64,
    pub target_accuracy: Option<f64>,
    /// Cumulative scalars exchanged.
    pub floats_communicated: u64,
}

pub const CSV_HEADER: &str =
    "round,phi_grad_norm,consensus_omega,consensus_psi,global_loss,target_accuracy,floats_communicated";

fn opt_field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl RoundMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.round,
            opt_field(self.phi_grad_norm),
            self.consensus_omega,
            self.consensus_psi,
            self.global_loss,
            opt_field(self.target_accuracy),
            self.floats_communicated
        )
    }
}

/// Everything recorded by one experiment.
#[derive(Debug, Clone)]
pub struct RunLog {
    /// The configuration rendered in config-file syntax.
    pub config_echo: String,
    pub seed: u64,
    pub n_clients: usize,
    pub dims: (usize, usize),
    pub rounds: Vec<RoundMetrics>,
    pub wall_clock: Vec<Duration>,
    pub final_global: PrimalDualPair,
    pub final_clients: Vec<ClientState>,
}

impl RunLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rounds.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for m in &self.rounds {
            let _ = writeln!(out, "{}", m.csv_row());
        }
        out
    }

    /// Writes the CSV next to `path` and renames it into place, so a failed
    /// write never leaves a partial file.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }

    pub fn last(&self) -> Option<&RoundMetrics> {
        self.rounds.last()
    }

    /// Most recent sampled `‖∇Φ‖`.
    pub fn final_phi_grad_norm(&self) -> Option<f64> {
        self.rounds.iter().rev().find_map(|m| m.phi_grad_norm)
    }
}

/// Write-then-rename file output.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| FedError::Io(e.error))?;
    Ok(())
}

/// A problem instance ready to be optimized.
#[derive(Debug, Clone)]
pub struct PreparedProblem {
    /// Objectives handed to the optimizer: one per client, or the single
    /// pooled objective for centralized GDA.
    pub objectives: Vec<Arc<dyn LocalObjective>>,
    /// Global average used by diagnostics only.
    pub diagnostic: GlobalObjective,
    pub init: PrimalDualPair,
    pub holdout: Option<(DomainAdaptLayout, Vec<LabeledPoint>)>,
}

impl PreparedProblem {
    pub fn n_clients(&self) -> usize {
        self.objectives.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.diagnostic.dims()
    }
}

fn read_file(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(FedError::MissingFile(path.to_path_buf()));
    }
    Ok(std::fs::read_to_string(path)?)
}

fn parse_holdout(text: &str) -> Result<Vec<LabeledPoint>> {
    let (data, _) = parse_dataset(text)?;
    data.points()
        .iter()
        .map(|p| match p.label {
            Some(label) => Ok(LabeledPoint { x: p.x.clone(), label }),
            None => Err(FedError::InvalidSpec("holdout points must carry labels (use `S`)".into())),
        })
        .collect()
}

/// Builds the client objectives, diagnostics oracle, starting point and
/// holdout set described by `config`.
pub fn prepare_problem(config: &ExperimentConfig) -> Result<PreparedProblem> {
    let central = config.optimizer == OptimizerKind::CentralGda;
    let pc = &config.problem;
    match pc.kind {
        ProblemKind::Quadratic => {
            let specs = match &pc.file {
                Some(path) => parse_quadratic_instance(&read_file(path)?)?,
                None => heterogeneous_quadratic(config.partition.n_clients, pc.d1, pc.d2, pc.instance_seed)?,
            };
            let clients = specs
                .into_iter()
                .map(|s| make_quadratic_client(s).map(|q| Arc::new(q) as Arc<dyn LocalObjective>))
                .collect::<Result<Vec<_>>>()?;
            let diagnostic = GlobalObjective::new(clients.clone())?;
            let (d1, d2) = diagnostic.dims();
            let objectives = if central {
                vec![Arc::new(diagnostic.clone()) as Arc<dyn LocalObjective>]
            } else {
                clients
            };
            Ok(PreparedProblem {
                objectives,
                diagnostic,
                init: PrimalDualPair::zeros(d1, d2),
                holdout: None,
            })
        }
        ProblemKind::DomainAdapt => {
            let (train, n_classes, holdout) = match &pc.file {
                Some(path) => {
                    let (train, n_classes) = parse_dataset(&read_file(path)?)?;
                    let holdout = match &pc.holdout {
                        Some(h) => Some(parse_holdout(&read_file(h)?)?),
                        None => None,
                    };
                    (train, n_classes, holdout)
                }
                None => {
                    let toy = pc.toy_spec().generate()?;
                    (toy.train, crate::problems::TOY_CLASSES, Some(toy.holdout))
                }
            };
            let layout = DomainAdaptLayout {
                n_features: train.n_features(),
                hidden: pc.hidden,
                n_classes,
            };
            let mut rng = seeded_rng(config.seed);
            let build = |data: DomainAdaptDataset| -> Result<Arc<dyn LocalObjective>> {
                let mut obj = make_domain_adapt_client(data, layout, config.hyper.nu)?
                    .with_psi_ridge(pc.psi_ridge);
                if let Some(alpha) = pc.alpha {
                    obj = obj.with_weight(alpha);
                }
                Ok(Arc::new(obj))
            };
            let (objectives, diagnostic) = if central {
                let pooled = build(train)?;
                (vec![pooled.clone()], GlobalObjective::new(vec![pooled])?)
            } else {
                let parts = partition_label_shift(&train, &config.partition, &mut rng)?;
                let clients = parts.into_iter().map(build).collect::<Result<Vec<_>>>()?;
                (clients.clone(), GlobalObjective::new(clients)?)
            };
            let (d1, d2) = layout.dims();
            let omega: Vec<f64> = (0..d1)
                .map(|_| pc.init_scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            Ok(PreparedProblem {
                objectives,
                diagnostic,
                init: PrimalDualPair::new(ParamVector::new(omega), ParamVector::zeros(d2)),
                holdout: holdout.map(|h| (layout, h)),
            })
        }
    }
}

/// Seed for the minibatch of `client` in `round`, mixed splitmix64-style.
pub fn derive_seed(seed: u64, round: u64, client: u64) -> u64 {
    let mut z = seed
        ^ round.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ client.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn max_distance<'a>(
    items: impl Iterator<Item = &'a ParamVector>,
    center: &ParamVector,
) -> Result<f64> {
    items.map(|v| v.distance(center)).try_fold(0.0_f64, |acc, d| Ok(acc.max(d?)))
}

/// Runs the configured experiment from scratch.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunLog> {
    config.validate()?;
    let problem = prepare_problem(config)?;
    run_prepared(config, &problem)
}

/// Runs `config.hyper.rounds` rounds on an already prepared problem.
pub fn run_prepared(config: &ExperimentConfig, problem: &PreparedProblem) -> Result<RunLog> {
    let hp = &config.hyper;
    let kind = config.optimizer;
    let n = problem.n_clients();
    match kind {
        OptimizerKind::CentralGda => hp.validate(hp.local_steps.len().max(1))?,
        _ => hp.validate(n)?,
    }
    let mut server = ServerState::new(problem.init.clone());
    let mut clients = init_clients(n, &problem.init);
    let mut rounds = Vec::with_capacity(hp.rounds);
    let mut wall_clock = Vec::with_capacity(hp.rounds);
    let every = config.metrics_every.max(1);

    for t in 0..hp.rounds {
        let started = Instant::now();
        let at_round = |e: FedError| FedError::AtRound {
            round: t,
            source: Box::new(e),
        };
        let batch_objectives;
        let objectives: &[Arc<dyn LocalObjective>] = match config.problem.batch_size {
            Some(size) => {
                batch_objectives = problem
                    .objectives
                    .iter()
                    .enumerate()
                    .map(|(i, obj)| {
                        let mut rng = seeded_rng(derive_seed(config.seed, t as u64, i as u64));
                        obj.minibatch(size, &mut rng).unwrap_or_else(|| obj.clone())
                    })
                    .collect::<Vec<_>>();
                &batch_objectives
            }
            None => &problem.objectives,
        };
        run_round(kind, objectives, &mut clients, &mut server, hp).map_err(at_round)?;

        let global = &server.global;
        let phi_grad_norm = if t % every == 0 || t + 1 == hp.rounds {
            inner_max_from(&problem.diagnostic, &global.omega, &global.psi, hp.tol)
                .ok()
                .map(|psi| problem.diagnostic.grad_omega(&global.omega, &psi).norm())
        } else {
            None
        };
        let consensus_omega =
            max_distance(clients.iter().map(|c| &c.pair.omega), &global.omega).map_err(at_round)?;
        let consensus_psi =
            max_distance(clients.iter().map(|c| &c.pair.psi), &global.psi).map_err(at_round)?;
        let target_accuracy = match &problem.holdout {
            Some((layout, points)) => {
                Some(evaluate_target_accuracy(layout, &global.omega, points).map_err(at_round)?)
            }
            None => None,
        };
        rounds.push(RoundMetrics {
            round: t,
            phi_grad_norm,
            consensus_omega,
            consensus_psi,
            global_loss: problem.diagnostic.value(&global.omega, &global.psi),
            target_accuracy,
            floats_communicated: server.floats_sent,
        });
        wall_clock.push(started.elapsed());
    }

    Ok(RunLog {
        config_echo: config.render(),
        seed: config.seed,
        n_clients: n,
        dims: problem.dims(),
        rounds,
        wall_clock,
        final_global: server.global,
        final_clients: clients,
    })
}
