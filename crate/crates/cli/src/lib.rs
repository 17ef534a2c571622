//! Library side of the `fedmm` command-line tool.
//!
//! Every subcommand is a function here taking an already parsed
//! configuration and an output sink, so tests can drive the same code
//! paths the binary uses.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | unexpected internal error |
//! | 2 | command-line usage error |
//! | 3 | invalid configuration or input file |
//! | 4 | I/O failure (unreadable input, unwritable output) |
//! | 5 | the optimizer diverged (non-finite iterate) |
//! | 6 | numerical failure (inner maximization, degenerate problem) |
//! | 7 | `check`: at least one diagnostic failed |
//! | 8 | `sweep`: at least one sub-run failed |

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fedmm_core::config::{parse_config, ExperimentConfig};
use fedmm_core::diagnostics::{run_check_suite, CheckOutcome};
use fedmm_core::federation::{run_experiment, write_atomic, RunLog};
use fedmm_core::objective::textio::parse_quadratic_instance;
use fedmm_core::FedError;
use rayon::prelude::*;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_DIVERGED: i32 = 5;
pub const EXIT_NUMERICAL: i32 = 6;
pub const EXIT_CHECK_FAILED: i32 = 7;
pub const EXIT_SWEEP_FAILED: i32 = 8;

/// Environment variable that replaces the configured seed.
pub const SEED_ENV: &str = "FEDMM_SEED";

/// Maps a library error to its documented exit code.
pub fn exit_code(err: &FedError) -> i32 {
    match err {
        FedError::AtRound { source, .. } => exit_code(source),
        FedError::Parse { .. }
        | FedError::Config { .. }
        | FedError::MissingFile(_)
        | FedError::InvalidHyper { .. }
        | FedError::InvalidSpec(_)
        | FedError::EmptyDataset
        | FedError::LabelOutOfRange { .. }
        | FedError::EmptyPartition(_)
        | FedError::EmptyHoldout
        | FedError::DimensionMismatch { .. }
        | FedError::NotPositiveDefinite { .. } => EXIT_CONFIG,
        FedError::Io(_) => EXIT_IO,
        FedError::Divergence { .. } | FedError::NonFiniteValue(_) => EXIT_DIVERGED,
        FedError::InnerMaxNotConverged { .. }
        | FedError::DegeneratePair(_)
        | FedError::NoStationaritySamples
        | FedError::InvalidStep(_) => EXIT_NUMERICAL,
        FedError::MissingClients(_) => EXIT_INTERNAL,
    }
}

/// Loads a config file. The seed comes from the file, then `seed_env`
/// (the value of [`SEED_ENV`]) when set, then any explicit `--set seed=`.
pub fn load_config(path: &Path, sets: &[String], seed_env: Option<&str>) -> fedmm_core::Result<ExperimentConfig> {
    let mut overrides = Vec::with_capacity(sets.len() + 1);
    if let Some(seed) = seed_env {
        overrides.push(format!("seed={}", seed.trim()));
    }
    overrides.extend(sets.iter().cloned());
    parse_config(path, &overrides)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "none".into())
}

/// One `key=value` summary line for a finished run.
pub fn summary_line(config: &ExperimentConfig, log: &RunLog) -> String {
    let last = log.last();
    format!(
        "status=ok optimizer={} rounds={} clients={} seed={} final_phi_grad_norm={} consensus_omega={} \
         consensus_psi={} global_loss={} target_accuracy={} floats_communicated={} output={}",
        config.optimizer,
        log.rounds.len(),
        log.n_clients,
        log.seed,
        fmt_opt(log.final_phi_grad_norm()),
        fmt_opt(last.map(|m| m.consensus_omega)),
        fmt_opt(last.map(|m| m.consensus_psi)),
        fmt_opt(last.map(|m| m.global_loss)),
        fmt_opt(last.and_then(|m| m.target_accuracy)),
        last.map_or(0, |m| m.floats_communicated),
        config.output_path.display(),
    )
}

/// Error summary line; `error` has newlines flattened.
pub fn error_line(err: &FedError) -> String {
    format!("status=error exit_code={} error=\"{}\"", exit_code(err), err.to_string().replace('"', "'"))
}

/// Runs one experiment, writes its CSV atomically and returns the log.
pub fn run_to_file(config: &ExperimentConfig) -> fedmm_core::Result<RunLog> {
    let log = run_experiment(config)?;
    log.write_csv(&config.output_path)?;
    Ok(log)
}

/// `fedmm run`: returns the exit code after printing a summary line.
pub fn cmd_run(config: &ExperimentConfig, out: &mut dyn Write) -> i32 {
    match run_to_file(config) {
        Ok(log) => {
            let _ = writeln!(out, "{}", summary_line(config, &log));
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(out, "{}", error_line(&e));
            exit_code(&e)
        }
    }
}

/// Parameter varied by `fedmm sweep`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    PartitionP,
    Optimizer,
    LocalSteps,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::PartitionP => "partition_p",
            SweepAxis::Optimizer => "optimizer",
            SweepAxis::LocalSteps => "local_steps",
        }
    }

    /// Config key the axis writes.
    pub fn key(self) -> &'static str {
        match self {
            SweepAxis::PartitionP => "partition.p",
            SweepAxis::Optimizer => "optimizer",
            SweepAxis::LocalSteps => "hyper.local_steps",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [SweepAxis::PartitionP, SweepAxis::Optimizer, SweepAxis::LocalSteps]
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown sweep axis `{s}` (expected partition_p, optimizer or local_steps)"))
    }
}

/// Keeps file names portable: anything outside `[A-Za-z0-9._-]` becomes `_`.
fn file_token(value: &str) -> String {
    value
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect()
}

/// `sweep_<axis>_<value>.csv` inside `dir`.
pub fn sweep_file(dir: &Path, axis: SweepAxis, value: &str) -> PathBuf {
    dir.join(format!("sweep_{}_{}.csv", axis.name(), file_token(value)))
}

pub fn sweep_index_file(dir: &Path, axis: SweepAxis) -> PathBuf {
    dir.join(format!("sweep_{}_index.csv", axis.name()))
}

/// Sweep outputs land next to the configured output file.
pub fn sweep_dir(config: &ExperimentConfig) -> PathBuf {
    match config.output_path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Result of one sweep point.
#[derive(Debug)]
pub struct SweepEntry {
    pub value: String,
    pub output: PathBuf,
    pub outcome: fedmm_core::Result<RunLog>,
}

pub const SWEEP_INDEX_HEADER: &str = "value,status,output,rounds,final_phi_grad_norm,consensus_omega,\
global_loss,target_accuracy,floats_communicated,error";

/// Runs every sweep point (in parallel) and returns them in input order.
pub fn run_sweep(base: &ExperimentConfig, axis: SweepAxis, values: &[String]) -> Vec<SweepEntry> {
    let dir = sweep_dir(base);
    values
        .par_iter()
        .map(|value| {
            let output = sweep_file(&dir, axis, value);
            let outcome = (|| {
                let mut config = base.clone();
                config.apply_override(&format!("{}={}", axis.key(), value))?;
                config.output_path = output.clone();
                config.validate()?;
                run_to_file(&config)
            })();
            SweepEntry {
                value: value.clone(),
                output,
                outcome,
            }
        })
        .collect()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn sweep_index_csv(entries: &[SweepEntry]) -> String {
    let mut out = String::from(SWEEP_INDEX_HEADER);
    out.push('\n');
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for e in entries {
        let value = csv_field(&e.value);
        let output = csv_field(&e.output.display().to_string());
        let _ = match &e.outcome {
            Ok(log) => {
                let last = log.last();
                writeln!(
                    out,
                    "{value},ok,{output},{},{},{},{},{},{},",
                    log.rounds.len(),
                    opt(log.final_phi_grad_norm()),
                    opt(last.map(|m| m.consensus_omega)),
                    opt(last.map(|m| m.global_loss)),
                    opt(last.and_then(|m| m.target_accuracy)),
                    last.map_or(0, |m| m.floats_communicated),
                )
            }
            Err(err) => writeln!(out, "{value},error,,,,,,,,{}", csv_field(&err.to_string())),
        };
    }
    out
}

/// `fedmm sweep`: one CSV per value, then the index. Failed points are
/// recorded in the index without stopping the others.
pub fn cmd_sweep(base: &ExperimentConfig, axis: SweepAxis, values: &[String], out: &mut dyn Write) -> i32 {
    if values.is_empty() {
        let _ = writeln!(out, "status=error exit_code={EXIT_USAGE} error=\"no sweep values\"");
        return EXIT_USAGE;
    }
    let entries = run_sweep(base, axis, values);
    let index = sweep_index_file(&sweep_dir(base), axis);
    for e in &entries {
        let _ = match &e.outcome {
            Ok(log) => writeln!(
                out,
                "axis={} value={} status=ok rounds={} final_phi_grad_norm={} target_accuracy={} output={}",
                axis.name(),
                e.value,
                log.rounds.len(),
                fmt_opt(log.final_phi_grad_norm()),
                fmt_opt(log.last().and_then(|m| m.target_accuracy)),
                e.output.display()
            ),
            Err(err) => writeln!(
                out,
                "axis={} value={} status=error exit_code={} error=\"{}\"",
                axis.name(),
                e.value,
                exit_code(err),
                err.to_string().replace('"', "'")
            ),
        };
    }
    if let Err(e) = write_atomic(&index, sweep_index_csv(&entries).as_bytes()) {
        let _ = writeln!(out, "{}", error_line(&e));
        return exit_code(&e);
    }
    let failed = entries.iter().filter(|e| e.outcome.is_err()).count();
    let _ = writeln!(
        out,
        "status={} axis={} runs={} failed={failed} index={}",
        if failed == 0 { "ok" } else { "partial" },
        axis.name(),
        entries.len(),
        index.display()
    );
    if failed == 0 {
        EXIT_OK
    } else {
        EXIT_SWEEP_FAILED
    }
}

/// Reads a quadratic fixture; read or parse failures become a failed
/// `fixture` outcome.
pub fn check_outcomes(fixture: Option<&Path>) -> Vec<CheckOutcome> {
    match fixture {
        None => run_check_suite(None),
        Some(path) => {
            let specs = std::fs::read_to_string(path)
                .map_err(FedError::from)
                .and_then(|text| parse_quadratic_instance(&text));
            match specs {
                Ok(specs) => run_check_suite(Some(&specs)),
                Err(e) => vec![CheckOutcome {
                    name: "fixture".into(),
                    pass: false,
                    detail: format!("error: {e}"),
                }],
            }
        }
    }
}

/// `fedmm check`: prints the pass/fail table, exit 0 iff all pass.
pub fn cmd_check(fixture: Option<&Path>, out: &mut dyn Write) -> i32 {
    let outcomes = check_outcomes(fixture);
    let width = outcomes.iter().map(|o| o.name.len()).max().unwrap_or(0);
    let mut table = String::new();
    for o in &outcomes {
        let _ = writeln!(
            table,
            "{:<width$}  {}  {}",
            o.name,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    let _ = write!(out, "{table}");
    let _ = writeln!(
        out,
        "status={} checks={} failed={failed}",
        if failed == 0 { "ok" } else { "failed" },
        outcomes.len()
    );
    if failed == 0 {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    }
}
