//! End-to-end checks of the `ppi` binary: JSON shape, flag plumbing,
//! seeded determinism and exit codes.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ppi"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

struct Fixture {
    dir: PathBuf,
    labeled: PathBuf,
    unlabeled: PathBuf,
}

impl Fixture {
    fn synth(tag: &str, world: &str, n: usize, big_n: usize, seed: u64) -> Fixture {
        let dir = std::env::temp_dir().join(format!("ppi-cli-test-{tag}-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let labeled = dir.join("labeled.csv");
        let unlabeled = dir.join("unlabeled.csv");
        let out = run(&[
            "synth",
            "--world",
            world,
            "--n",
            &n.to_string(),
            "--N",
            &big_n.to_string(),
            "--labeled-out",
            labeled.to_str().unwrap(),
            "--unlabeled-out",
            unlabeled.to_str().unwrap(),
            "--seed",
            &seed.to_string(),
        ]);
        assert!(out.status.success(), "synth failed: {}", String::from_utf8_lossy(&out.stderr));
        Fixture { dir, labeled, unlabeled }
    }
}

impl Drop for Fixture {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.dir);
    }
}

#[test]
fn estimate_chain_rule_reports_interval() {
    let fx = Fixture::synth("cr", "fig1", 200, 2000, 7);
    let out = run(&[
        "estimate",
        "--labeled",
        fx.labeled.to_str().unwrap(),
        "--unlabeled",
        fx.unlabeled.to_str().unwrap(),
        "--kind",
        "binary",
        "--method",
        "chain_rule",
        "--seed",
        "3",
    ]);
    let v = stdout_json(&out);
    assert_eq!(v["method"], "chain_rule");
    assert_eq!(v["level"], 0.95);
    assert!(v["lo"].as_f64().unwrap() < v["hi"].as_f64().unwrap());
    assert!(v["diagnostics"].is_object());
}

#[test]
fn estimate_ptune_logs_lambda() {
    let fx = Fixture::synth("pt", "regime", 200, 2000, 9);
    let out = run(&[
        "estimate",
        "--labeled",
        fx.labeled.to_str().unwrap(),
        "--unlabeled",
        fx.unlabeled.to_str().unwrap(),
        "--kind",
        "real",
        "--method",
        "difference_bayes",
        "--ptune",
        "--seed",
        "3",
    ]);
    let v = stdout_json(&out);
    assert_eq!(v["method"], "difference_ptune");
    let lambda = v["diagnostics"]["lambda"].as_f64().expect("lambda logged");
    assert!((0.0..=1.0).contains(&lambda));
    assert_eq!(v["diagnostics"]["lambda_source"], "estimated");
}

#[test]
fn same_seed_is_byte_identical() {
    let fx = Fixture::synth("det", "fig1", 150, 1500, 4);
    let args = [
        "estimate",
        "--labeled",
        fx.labeled.to_str().unwrap(),
        "--unlabeled",
        fx.unlabeled.to_str().unwrap(),
        "--kind",
        "binary",
        "--method",
        "chain_rule",
        "--seed",
        "12",
    ];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn ppi_seed_env_matches_flag() {
    let fx = Fixture::synth("env", "fig1", 150, 1500, 4);
    let base = [
        "estimate",
        "--labeled",
        fx.labeled.to_str().unwrap(),
        "--unlabeled",
        fx.unlabeled.to_str().unwrap(),
        "--kind",
        "binary",
        "--method",
        "chain_rule",
    ];
    let with_flag = run(&[&base[..], &["--seed", "77"]].concat());
    let with_env = bin().args(base).env("PPI_SEED", "77").output().unwrap();
    assert!(with_flag.status.success() && with_env.status.success());
    assert_eq!(with_flag.stdout, with_env.stdout);
}

#[test]
fn sweep_classical_ratio_is_one() {
    let fx = Fixture::synth("sw", "fig1", 200, 1000, 2);
    let out = run(&[
        "sweep",
        "--labeled",
        fx.labeled.to_str().unwrap(),
        "--unlabeled",
        fx.unlabeled.to_str().unwrap(),
        "--kind",
        "binary",
        "--methods",
        "chain_rule",
        "--n-values",
        "60",
        "--trials",
        "1",
        "--seed",
        "5",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.trim().lines().collect();
    assert_eq!(lines[0], "method,n,trials,coverage,mean_width,width_ratio");
    assert_eq!(lines.len(), 3);
    let classical: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(classical[0], "classical_proportion_cp");
    assert_eq!(classical[5], "1");
}

#[test]
fn validation_errors_exit_2() {
    let fx = Fixture::synth("v2", "fig1", 50, 500, 1);
    let bad = fx.dir.join("bad.csv");
    std::fs::write(&bad, "f,y\n1,1\n2,1\n").unwrap();
    let out = run(&[
        "estimate",
        "--labeled",
        bad.to_str().unwrap(),
        "--unlabeled",
        fx.unlabeled.to_str().unwrap(),
        "--kind",
        "binary",
        "--method",
        "chain_rule",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("row 3"), "row-numbered message, got: {stderr}");

    let out = run(&[
        "estimate",
        "--labeled",
        fx.labeled.to_str().unwrap(),
        "--unlabeled",
        fx.unlabeled.to_str().unwrap(),
        "--kind",
        "binary",
        "--method",
        "no_such_method",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_1() {
    let fx = Fixture::synth("v1", "fig1", 50, 500, 1);
    let out = run(&[
        "sweep",
        "--labeled",
        fx.labeled.to_str().unwrap(),
        "--unlabeled",
        fx.unlabeled.to_str().unwrap(),
        "--kind",
        "binary",
        "--methods",
        "chain_rule",
        "--n-values",
        "20",
        "--trials",
        "1",
        "--out",
        fx.dir.join("no-such-dir/out.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn coverage_smoke_runs_fast() {
    let start = std::time::Instant::now();
    let out = run(&[
        "coverage",
        "--world",
        "fig1",
        "--method",
        "chain_rule",
        "--trials",
        "10",
        "--n-range",
        "100,200",
        "--N-range",
        "1000,2000",
        "--seed",
        "6",
    ]);
    let v = stdout_json(&out);
    assert_eq!(v["trials"], 10);
    assert!(v["coverage"].as_f64().unwrap() <= 1.0);
    assert!(start.elapsed().as_secs() < 5, "smoke run took {:?}", start.elapsed());
}
