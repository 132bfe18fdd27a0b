use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const TINY_GRID: &str = "[grid]\nn_r = 3\nn_theta = 4\nn_phi = 6\nn_v = 4\nlattice = 6\nline_order = 6\n";

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path
}

fn lbe(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lbe"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env_remove("LBE_OUT")
        .output()
        .unwrap()
}

fn report(out: &Path) -> Value {
    serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap()
}

fn small_ball(extra: &str) -> String {
    format!("[domain]\nshape = \"sphere\"\nradius = 0.1\n{TINY_GRID}{extra}")
}

#[test]
fn geometry_on_unit_ball_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("seed = 1\n[domain]\nshape = \"sphere\"\nradius = 1.0\n[study]\nsamples = 10000\ngradient_samples = 500\n"),
    );
    let out = dir.path().join("out");
    let o = lbe(&["verify-geometry"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let r = report(&out);
    let circle = &r["verdicts"][0];
    assert_eq!(circle["lemma"], "chord_bound");
    assert_eq!(circle["constant"], 2.0);
    assert!(!out.join("failure.json").exists());
}

#[test]
fn zero_data_solve_exits_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_ball("[boundary]\nfamily = \"zero\"\n"));
    let out = dir.path().join("out");
    let o = lbe(&["solve"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(out.join("iterations.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "iteration,delta,ratio,norm,h1");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("1,0,"), "{}", lines[1]);
    assert_eq!(report(&out)["summary"]["final_residual"], 0.0);
}

#[test]
fn non_convergence_exits_two_with_failure_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &small_ball("[solve]\nmax_iterations = 2\ntolerance = 1e-300\n"),
    );
    let out = dir.path().join("out");
    let o = lbe(&["solve"], &cfg, &out);
    assert_eq!(o.status.code(), Some(2));
    let failure: Value = serde_json::from_slice(&fs::read(out.join("failure.json")).unwrap()).unwrap();
    assert_eq!(failure["command"], "solve");
    assert!(failure["reason"].as_str().unwrap().contains("did not reach"));
}

#[test]
fn invalid_config_exits_one_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_ball("[kernel]\nrho = 1.2\n"));
    let out = dir.path().join("out");
    let o = lbe(&["solve"], &cfg, &out);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("kernel.rho") && err.contains("(0, 1)"), "{err}");
    assert!(!out.exists());
}

#[test]
fn unknown_key_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_ball("turbulence = 3\n"));
    let o = lbe(&["solve"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line") && err.contains("turbulence"), "{err}");
}

#[test]
fn randomized_command_without_seed_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_ball(""));
    let o = lbe(&["contraction"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
}

#[test]
fn output_directory_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_ball("[boundary]\nfamily = \"zero\"\n"));
    let from_env = dir.path().join("env");
    let o = Command::new(env!("CARGO_BIN_EXE_lbe"))
        .args(["solve", "--config"])
        .arg(&cfg)
        .env("LBE_OUT", &from_env)
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(from_env.join("report.json").exists());
    let from_flag = dir.path().join("flag");
    let o = Command::new(env!("CARGO_BIN_EXE_lbe"))
        .args(["solve", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&from_flag)
        .env("LBE_OUT", dir.path().join("ignored"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(from_flag.join("report.json").exists());
    assert!(!dir.path().join("ignored").exists());
}

#[test]
fn scaling_table_and_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("[domain]\nshape = \"sphere\"\nradius = 1.0\n{TINY_GRID}"),
    );
    let out = dir.path().join("out");
    let o = lbe(&["scaling", "--seed", "4"], &cfg, &out);
    assert!(matches!(o.status.code(), Some(0 | 2)));
    let csv = fs::read_to_string(out.join("scaling.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("kappa,diam,contraction,stability"));
    assert_eq!(lines.count(), 5);
    let r = report(&out);
    assert!(r["summary"]["alpha"].is_number());
    assert_eq!(r["verdicts"][0]["seed"], 4);
}

/// Every report file except `timing.json`.
fn report_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "timing.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("seed = 17\n[domain]\nshape = \"ellipsoid\"\nsemi_axes = [0.2, 0.1, 0.15]\n{TINY_GRID}[study]\nsamples = 10000\ngradient_samples = 200\n"),
    );
    for command in ["contraction", "verify-geometry"] {
        let out = dir.path().join(command);
        lbe(&[command], &cfg, &out);
        let first = report_files(&out);
        lbe(&[command], &cfg, &out);
        let second = report_files(&out);
        assert!(first.len() >= 2);
        assert_eq!(first.len(), second.len());
        for ((name, a), (_, b)) in first.iter().zip(&second) {
            assert!(a == b, "{command}: {name} differs between reruns");
        }
    }
    let out = dir.path().join("contraction");
    let before = fs::read(out.join("contraction_trials.csv")).unwrap();
    lbe(&["contraction", "--seed", "18"], &cfg, &out);
    assert_ne!(fs::read(out.join("contraction_trials.csv")).unwrap(), before);
}
