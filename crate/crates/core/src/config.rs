//! Experiment configuration in a plain `key = value` format.
//!
//! One assignment per line, `#` starts a comment, nesting uses dotted keys
//! (`hyper.eta1 = 0.05`). Unknown and repeated keys are errors. Every key
//! is optional; [`ExperimentConfig::default`] supplies the rest. Relative
//! `problem.file` and `problem.holdout` paths resolve against the directory
//! of the config file; `output` is used as given.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{FedError, Result};
use crate::federation::{PartitionMode, PartitionSpec};
use crate::optim::OptimizerKind;
use crate::params::{HyperParams, LocalSolver};
use crate::problems::DomainToySpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Quadratic,
    DomainAdapt,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Quadratic => "quadratic",
            ProblemKind::DomainAdapt => "domain_adapt",
        }
    }
}

impl FromStr for ProblemKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "quadratic" => Ok(ProblemKind::Quadratic),
            "domain_adapt" => Ok(ProblemKind::DomainAdapt),
            _ => Err(format!("unknown problem `{s}` (expected quadratic or domain_adapt)")),
        }
    }
}

/// Problem family and the knobs of its built-in generator.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    /// Quadratic instance or training dataset file; built-in generator if unset.
    pub file: Option<PathBuf>,
    /// Labeled target holdout for a file-backed dataset.
    pub holdout: Option<PathBuf>,
    /// Seed of the built-in generators, independent of the run seed.
    pub instance_seed: u64,
    pub d1: usize,
    pub d2: usize,
    pub points_per_domain: usize,
    pub holdout_points: usize,
    pub class_sep: f64,
    pub shift: f64,
    pub noise: f64,
    pub hidden: usize,
    /// Ridge on the domain classifier, keeping the inner problem strongly concave.
    pub psi_ridge: f64,
    /// Standard deviation of the random `omega` start.
    pub init_scale: f64,
    /// Per-point weight override; `1/|D_i|` when unset.
    pub alpha: Option<f64>,
    /// Minibatch size; full batch when unset.
    pub batch_size: Option<usize>,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        let toy = DomainToySpec::default();
        Self {
            kind: ProblemKind::Quadratic,
            file: None,
            holdout: None,
            instance_seed: toy.seed,
            d1: 4,
            d2: 3,
            points_per_domain: toy.points_per_domain,
            holdout_points: toy.holdout_points,
            class_sep: toy.class_sep,
            shift: toy.shift,
            noise: toy.noise,
            hidden: 2,
            psi_ridge: 0.05,
            init_scale: 0.1,
            alpha: None,
            batch_size: None,
        }
    }
}

impl ProblemConfig {
    pub fn toy_spec(&self) -> DomainToySpec {
        DomainToySpec {
            points_per_domain: self.points_per_domain,
            holdout_points: self.holdout_points,
            class_sep: self.class_sep,
            shift: self.shift,
            noise: self.noise,
            seed: self.instance_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub optimizer: OptimizerKind,
    pub problem: ProblemConfig,
    pub hyper: HyperParams,
    pub partition: PartitionSpec,
    pub seed: u64,
    /// `‖∇Φ‖` is evaluated every this many rounds (and on the last round).
    pub metrics_every: usize,
    pub output_path: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::FedMM,
            problem: ProblemConfig::default(),
            hyper: HyperParams {
                eta1: 0.1,
                eta2: 0.1,
                ..HyperParams::default()
            },
            partition: PartitionSpec::default(),
            seed: 0,
            metrics_every: 1,
            output_path: PathBuf::from("run.csv"),
        }
    }
}

/// Every accepted key, in rendering order.
pub const KEYS: &[&str] = &[
    "optimizer",
    "problem",
    "problem.file",
    "problem.holdout",
    "problem.instance_seed",
    "problem.d1",
    "problem.d2",
    "problem.points_per_domain",
    "problem.holdout_points",
    "problem.class_sep",
    "problem.shift",
    "problem.noise",
    "problem.hidden",
    "problem.psi_ridge",
    "problem.init_scale",
    "problem.alpha",
    "problem.batch_size",
    "hyper.mu1",
    "hyper.mu2",
    "hyper.eta1",
    "hyper.eta2",
    "hyper.eta3",
    "hyper.nu",
    "hyper.local_steps",
    "hyper.rounds",
    "hyper.prox_mu",
    "hyper.tol",
    "hyper.local_tol",
    "hyper.max_local_steps",
    "partition.n_clients",
    "partition.p",
    "partition.mode",
    "seed",
    "metrics_every",
    "output",
];

const DEFAULT_MAX_LOCAL_STEPS: usize = 100_000;

fn parse_value<T: FromStr>(value: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| format!("invalid value `{value}`: {e}"))
}

fn parse_steps(value: &str) -> std::result::Result<Vec<usize>, String> {
    value
        .split(',')
        .map(|s| parse_value::<usize>(s.trim()))
        .collect()
}

impl ExperimentConfig {
    /// Applies one assignment. `Err` carries a reason; unknown keys report
    /// `None` so callers can phrase the error by origin.
    fn assign(&mut self, key: &str, value: &str, base: &Path) -> std::result::Result<(), Option<String>> {
        let p = &mut self.problem;
        let h = &mut self.hyper;
        let resolve = |v: &str| {
            let path = PathBuf::from(v);
            if path.is_relative() {
                base.join(path)
            } else {
                path
            }
        };
        let r: std::result::Result<(), String> = (|| {
            match key {
                "optimizer" => self.optimizer = parse_value(value)?,
                "problem" => p.kind = parse_value(value)?,
                "problem.file" => p.file = Some(resolve(value)),
                "problem.holdout" => p.holdout = Some(resolve(value)),
                "problem.instance_seed" => p.instance_seed = parse_value(value)?,
                "problem.d1" => p.d1 = parse_value(value)?,
                "problem.d2" => p.d2 = parse_value(value)?,
                "problem.points_per_domain" => p.points_per_domain = parse_value(value)?,
                "problem.holdout_points" => p.holdout_points = parse_value(value)?,
                "problem.class_sep" => p.class_sep = parse_value(value)?,
                "problem.shift" => p.shift = parse_value(value)?,
                "problem.noise" => p.noise = parse_value(value)?,
                "problem.hidden" => p.hidden = parse_value(value)?,
                "problem.psi_ridge" => p.psi_ridge = parse_value(value)?,
                "problem.init_scale" => p.init_scale = parse_value(value)?,
                "problem.alpha" => p.alpha = Some(parse_value(value)?),
                "problem.batch_size" => p.batch_size = Some(parse_value(value)?),
                "hyper.mu1" => h.mu1 = parse_value(value)?,
                "hyper.mu2" => h.mu2 = parse_value(value)?,
                "hyper.eta1" => h.eta1 = parse_value(value)?,
                "hyper.eta2" => h.eta2 = parse_value(value)?,
                "hyper.eta3" => h.eta3 = parse_value(value)?,
                "hyper.nu" => h.nu = parse_value(value)?,
                "hyper.local_steps" => h.local_steps = parse_steps(value)?,
                "hyper.rounds" => h.rounds = parse_value(value)?,
                "hyper.prox_mu" => h.prox_mu = parse_value(value)?,
                "hyper.tol" => h.tol = parse_value(value)?,
                "hyper.local_tol" => {
                    let tol = parse_value(value)?;
                    let max_steps = match h.local_solver {
                        LocalSolver::ToTolerance { max_steps, .. } => max_steps,
                        LocalSolver::FixedSteps => DEFAULT_MAX_LOCAL_STEPS,
                    };
                    h.local_solver = LocalSolver::ToTolerance { tol, max_steps };
                }
                "hyper.max_local_steps" => {
                    let max_steps = parse_value(value)?;
                    let tol = match h.local_solver {
                        LocalSolver::ToTolerance { tol, .. } => tol,
                        LocalSolver::FixedSteps => {
                            return Err("set hyper.local_tol before hyper.max_local_steps".into())
                        }
                    };
                    h.local_solver = LocalSolver::ToTolerance { tol, max_steps };
                }
                "partition.n_clients" => self.partition.n_clients = parse_value(value)?,
                "partition.p" => self.partition.p = parse_value(value)?,
                "partition.mode" => self.partition.mode = parse_value::<PartitionMode>(value)?,
                "seed" => self.seed = parse_value(value)?,
                "metrics_every" => self.metrics_every = parse_value(value)?,
                "output" => self.output_path = PathBuf::from(value),
                _ => return Err(String::new()),
            }
            Ok(())
        })();
        r.map_err(|reason| if KEYS.contains(&key) { Some(reason) } else { None })
    }

    /// Applies a `key=value` override (as given to `--set`).
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| FedError::Config {
            field: assignment.to_string(),
            reason: "override must have the form key=value".into(),
        })?;
        let (key, value) = (key.trim(), value.trim());
        self.assign(key, value, Path::new("")).map_err(|reason| FedError::Config {
            field: key.to_string(),
            reason: reason.unwrap_or_else(|| "unknown key".into()),
        })
    }

    /// Cross-field validation: hyperparameters, partition, referenced files.
    pub fn validate(&self) -> Result<()> {
        // Centralized GDA ignores local steps, and a quadratic file fixes its
        // own client count (checked at run time).
        let n_clients = match (self.optimizer, self.problem.kind, &self.problem.file) {
            (OptimizerKind::CentralGda, _, _) | (_, ProblemKind::Quadratic, Some(_)) => {
                self.hyper.local_steps.len().max(1)
            }
            _ => self.partition.n_clients,
        };
        self.hyper.validate(n_clients).map_err(|e| match e {
            FedError::InvalidHyper { field, reason } => FedError::Config {
                field: format!("hyper.{field}"),
                reason,
            },
            other => other,
        })?;
        if self.metrics_every == 0 {
            return Err(FedError::Config {
                field: "metrics_every".into(),
                reason: "must be at least 1".into(),
            });
        }
        if self.partition.n_clients == 0 {
            return Err(FedError::Config {
                field: "partition.n_clients".into(),
                reason: "must be at least 1".into(),
            });
        }
        let p = &self.problem;
        if p.kind == ProblemKind::DomainAdapt {
            self.partition.validate()?;
            for (field, v) in [("problem.psi_ridge", p.psi_ridge), ("problem.init_scale", p.init_scale)] {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(FedError::Config {
                        field: field.into(),
                        reason: format!("must be nonnegative, got {v}"),
                    });
                }
            }
            if p.hidden == 0 {
                return Err(FedError::Config {
                    field: "problem.hidden".into(),
                    reason: "must be at least 1".into(),
                });
            }
        }
        if p.batch_size == Some(0) {
            return Err(FedError::Config {
                field: "problem.batch_size".into(),
                reason: "must be at least 1".into(),
            });
        }
        for path in p.file.iter().chain(p.holdout.iter()) {
            if !path.exists() {
                return Err(FedError::MissingFile(path.clone()));
            }
        }
        Ok(())
    }

    /// The configuration in config-file syntax; parsing it back yields an
    /// equal config.
    pub fn render(&self) -> String {
        let p = &self.problem;
        let h = &self.hyper;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("optimizer", self.optimizer.name().into());
        kv("problem", p.kind.name().into());
        if let Some(f) = &p.file {
            kv("problem.file", f.display().to_string());
        }
        if let Some(f) = &p.holdout {
            kv("problem.holdout", f.display().to_string());
        }
        kv("problem.instance_seed", p.instance_seed.to_string());
        kv("problem.d1", p.d1.to_string());
        kv("problem.d2", p.d2.to_string());
        kv("problem.points_per_domain", p.points_per_domain.to_string());
        kv("problem.holdout_points", p.holdout_points.to_string());
        kv("problem.class_sep", p.class_sep.to_string());
        kv("problem.shift", p.shift.to_string());
        kv("problem.noise", p.noise.to_string());
        kv("problem.hidden", p.hidden.to_string());
        kv("problem.psi_ridge", p.psi_ridge.to_string());
        kv("problem.init_scale", p.init_scale.to_string());
        if let Some(a) = p.alpha {
            kv("problem.alpha", a.to_string());
        }
        if let Some(b) = p.batch_size {
            kv("problem.batch_size", b.to_string());
        }
        kv("hyper.mu1", h.mu1.to_string());
        kv("hyper.mu2", h.mu2.to_string());
        kv("hyper.eta1", h.eta1.to_string());
        kv("hyper.eta2", h.eta2.to_string());
        kv("hyper.eta3", h.eta3.to_string());
        kv("hyper.nu", h.nu.to_string());
        let steps: Vec<String> = h.local_steps.iter().map(|s| s.to_string()).collect();
        kv("hyper.local_steps", steps.join(","));
        kv("hyper.rounds", h.rounds.to_string());
        kv("hyper.prox_mu", h.prox_mu.to_string());
        kv("hyper.tol", h.tol.to_string());
        if let LocalSolver::ToTolerance { tol, max_steps } = h.local_solver {
            kv("hyper.local_tol", tol.to_string());
            kv("hyper.max_local_steps", max_steps.to_string());
        }
        kv("partition.n_clients", self.partition.n_clients.to_string());
        kv("partition.p", self.partition.p.to_string());
        kv("partition.mode", self.partition.mode.name().into());
        kv("seed", self.seed.to_string());
        kv("metrics_every", self.metrics_every.to_string());
        kv("output", self.output_path.display().to_string());
        out
    }
}

/// Parses config text. `base` anchors relative input paths.
///
/// Syntax errors and unknown keys report their line; cross-field problems
/// are reported by field name after all overrides are applied.
pub fn parse_config_str(text: &str, base: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut seen: Vec<&str> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| FedError::Parse {
            line,
            message: format!("expected `key = value`, found `{content}`"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if value.is_empty() {
            return Err(FedError::Parse {
                line,
                message: format!("key `{key}` has no value"),
            });
        }
        if seen.contains(&key) {
            return Err(FedError::Parse {
                line,
                message: format!("key `{key}` set twice"),
            });
        }
        seen.push(key);
        cfg.assign(key, value, base).map_err(|reason| FedError::Parse {
            line,
            message: match reason {
                Some(r) => format!("{key}: {r}"),
                None => format!("unknown key `{key}`"),
            },
        })?;
    }
    for o in overrides {
        cfg.apply_override(o)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Reads and parses a config file, then applies `overrides` in order.
pub fn parse_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    if !path.exists() {
        return Err(FedError::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new(""));
    parse_config_str(&text, base, overrides)
}
