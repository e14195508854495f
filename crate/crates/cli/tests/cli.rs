use std::fs;
use std::process::{Command, Output};

use iampc_core::harness::{run_method, Benchmark, Method, ScenarioConfig};

fn iampc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iampc"))
        .args(args)
        .env_remove("IAMPC_OUT_DIR")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn list_shows_defaults() {
    let o = iampc(&["list"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(
        text.contains("two_tank")
            && text.contains("t_s=0.2, u∈[0,2], Δu∈[-0.5,0.5], p=3, poles=[0.01,0.02]")
    );
    assert!(text.contains("p=5, poles=[0.05,0.1]"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn unknown_names_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = iampc(&[
        "run",
        "--plant",
        "unknown",
        "--method",
        "ia-mpc",
        "--out-dir",
        out,
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown plant"));
    let o = iampc(&[
        "run",
        "--plant",
        "cstr",
        "--method",
        "nmpc",
        "--out-dir",
        out,
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = iampc(&[
        "run",
        "--plant",
        "cstr",
        "--method",
        "ia-mpc",
        "--set",
        "mpc.T=x",
        "--out-dir",
        out,
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn run_matches_direct_harness_call() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("short.cfg");
    fs::write(&config, "# shorter run\nduration = 20\n").unwrap();
    let o = iampc(&[
        "run",
        "--plant",
        "two_tank",
        "--method",
        "ia-mpc",
        "--seed",
        "7",
        "--noise",
        "--config",
        config.to_str().unwrap(),
        "--set",
        "mpc.T=8",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(stdout(&o).contains("rms_tracking_error="));

    let mut s = ScenarioConfig::default_for(Benchmark::TwoTank)
        .with_seed(7)
        .with_noise(true);
    s.duration = 20.0;
    s.mpc.horizon = 8;
    let direct = run_method(&s, Method::IaMpc).unwrap();
    let written = fs::read_to_string(dir.path().join("two_tank_ia-mpc_noise.csv")).unwrap();
    assert_eq!(written, direct.log.to_csv());
    let metrics = fs::read_to_string(dir.path().join("two_tank_ia-mpc_noise_metrics.txt")).unwrap();
    assert!(metrics.contains("seed=7\n") && metrics.contains("samples=100\n"));
}

#[test]
fn compare_prints_both_methods() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_iampc"))
        .args([
            "compare",
            "--plant",
            "bilinear_motor",
            "--seed",
            "3",
            "--set",
            "duration=0.8",
        ])
        .env("IAMPC_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let rows: Vec<&str> = text
        .lines()
        .filter(|l| l.starts_with("ia-mpc") || l.starts_with("sl-mpc"))
        .collect();
    assert_eq!(rows.len(), 2);
    assert!(dir.path().join("bilinear_motor_ia-mpc.csv").exists());
    assert!(dir.path().join("bilinear_motor_sl-mpc.csv").exists());
}

#[test]
fn diverging_run_exits_with_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = iampc(&[
        "run",
        "--plant",
        "van_der_pol",
        "--method",
        "sl-mpc",
        "--set",
        "initial_x=1e200,0",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("van_der_pol_sl-mpc.csv").exists());
}
