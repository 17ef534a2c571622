use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fedmm_cli::{EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_IO, EXIT_SWEEP_FAILED};
use fedmm_core::config::parse_config;
use fedmm_core::federation::run_experiment;
use fedmm_core::objective::textio::format_quadratic_instance;
use fedmm_core::problems::heterogeneous_quadratic;

fn fedmm(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedmm"))
        .args(args)
        .current_dir(dir)
        .env_remove("FEDMM_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("exp.cfg");
    fs::write(&path, body).unwrap();
    path
}

const QUAD: &str = "optimizer = fedmm\nproblem = quadratic\nhyper.rounds = 30\nhyper.local_steps = 20\noutput = run.csv\n";
const DOMAIN: &str = "optimizer = fedavg_gda\nproblem = domain_adapt\nproblem.points_per_domain = 40\n\
problem.holdout_points = 100\nhyper.rounds = 20\nhyper.local_steps = 5\nhyper.eta1 = 0.05\nhyper.eta2 = 0.05\n\
partition.p = 1.0\noutput = run.csv\n";

#[test]
fn binary_matches_library_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), DOMAIN);
    let o = fedmm(&["run", "--config", "exp.cfg"], dir.path());
    assert!(o.status.success(), "{}", stdout(&o));
    let from_binary = fs::read_to_string(dir.path().join("run.csv")).unwrap();

    let config = parse_config(&cfg, &[]).unwrap();
    let from_library = run_experiment(&config).unwrap().to_csv();
    assert_eq!(from_binary, from_library);
}

#[test]
fn zero_rounds_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), QUAD);
    let o = fedmm(&["run", "--config", "exp.cfg", "--set", "hyper.rounds=0"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let csv = fs::read_to_string(dir.path().join("run.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
    assert!(csv.starts_with("round,phi_grad_norm"));
}

#[test]
fn summary_is_key_value() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), QUAD);
    let o = fedmm(&["run", "--config", "exp.cfg"], dir.path());
    assert!(o.status.success());
    let line = stdout(&o);
    for field in line.split_whitespace() {
        assert!(field.contains('='), "{field}");
    }
    assert!(line.contains("status=ok") && line.contains("floats_communicated=840"));
}

#[test]
fn unwritable_output_leaves_nothing_behind() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), QUAD);
    // A directory in the way makes the final rename fail.
    fs::create_dir(dir.path().join("taken")).unwrap();
    let o = fedmm(&["run", "--config", "exp.cfg", "--set", "output=taken"], dir.path());
    assert_eq!(o.status.code(), Some(EXIT_IO), "{}", stdout(&o));
    let mut names: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["exp.cfg", "taken"]);
    assert_eq!(fs::read_dir(dir.path().join("taken")).unwrap().count(), 0);

    let o = fedmm(&["run", "--config", "exp.cfg", "--set", "output=missing/run.csv"], dir.path());
    assert_eq!(o.status.code(), Some(EXIT_IO));
}

#[test]
fn unknown_key_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "optimizer = fedmm\netaa1 = 0.1\n");
    let o = fedmm(&["run", "--config", "exp.cfg"], dir.path());
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
    let s = stdout(&o);
    assert!(s.contains("line 2") && s.contains("etaa1"), "{s}");
}

#[test]
fn missing_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = fedmm(&["run", "--config", "absent.cfg"], dir.path());
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
}

#[test]
fn seed_env_overrides_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), DOMAIN);
    let run = |seed: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_fedmm"));
        cmd.args(["run", "--config", "exp.cfg"]).current_dir(dir.path());
        match seed {
            Some(s) => cmd.env("FEDMM_SEED", s),
            None => cmd.env_remove("FEDMM_SEED"),
        };
        let o = cmd.output().unwrap();
        assert!(o.status.success());
        (stdout(&o), fs::read_to_string(dir.path().join("run.csv")).unwrap())
    };
    let (s0, csv0) = run(None);
    let (s5, csv5) = run(Some("5"));
    assert!(s0.contains("seed=0") && s5.contains("seed=5"));
    assert_ne!(csv0, csv5);
    assert_eq!(run(Some("5")).1, csv5);
}

#[test]
fn single_value_sweep_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), DOMAIN);
    assert!(fedmm(&["run", "--config", "exp.cfg"], dir.path()).status.success());
    let o = fedmm(
        &["sweep", "--config", "exp.cfg", "--axis", "partition_p", "--values", "1.0"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stdout(&o));
    assert_eq!(
        fs::read(dir.path().join("run.csv")).unwrap(),
        fs::read(dir.path().join("sweep_partition_p_1.0.csv")).unwrap()
    );
}

#[test]
fn sweep_records_failures_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), QUAD);
    let o = fedmm(
        &["sweep", "--config", "exp.cfg", "--axis", "local_steps", "--values", "20,0,5"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(EXIT_SWEEP_FAILED), "{}", stdout(&o));
    let index = fs::read_to_string(dir.path().join("sweep_local_steps_index.csv")).unwrap();
    let rows: Vec<&str> = index.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("20,ok,"));
    assert!(rows[1].starts_with("0,error,"));
    assert!(rows[2].starts_with("5,ok,"));
    assert!(dir.path().join("sweep_local_steps_20.csv").exists());
    assert!(dir.path().join("sweep_local_steps_5.csv").exists());
    assert!(!dir.path().join("sweep_local_steps_0.csv").exists());
}

#[test]
fn check_passes_on_builtin_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let o = fedmm(&["check"], dir.path());
    let s = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{s}");
    assert!(s.contains("status=ok") && !s.contains("FAIL"));
}

#[test]
fn check_names_a_bad_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let mut specs = heterogeneous_quadratic(2, 2, 1, 3).unwrap();
    specs[1].c_mat[(0, 0)] = -1.0;
    fs::write(dir.path().join("bad.txt"), format_quadratic_instance(&specs)).unwrap();
    let o = fedmm(&["check", "--fixture", "bad.txt"], dir.path());
    assert_eq!(o.status.code(), Some(EXIT_CHECK_FAILED));
    let s = stdout(&o);
    assert!(s.lines().any(|l| l.starts_with("fixture") && l.contains("FAIL")), "{s}");
}

#[test]
fn help_documents_exit_codes_and_env() {
    let dir = tempfile::tempdir().unwrap();
    let top = stdout(&fedmm(&["--help"], dir.path()));
    assert!(top.contains("Exit codes"));
    let run = stdout(&fedmm(&["run", "--help"], dir.path()));
    assert!(run.contains("FEDMM_SEED") && run.contains("--set"));
}
