use std::path::Path;
use std::process::{Command, Output};

const HEADER: &str = "experiment,method,sweep_value,trial,rate_bits,iterations,mc_outage,status,seed";

/// Three transmit antennas per node keep the SDP programs small.
const SMALL: &str = r#"{"n_t1": 3, "n_t2": 3, "n_r1": 2, "n_r2": 2, "n_e": 2}"#;

fn secrecy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_secrecy")).args(args).env_remove("SEED").output().expect("run secrecy")
}

fn small_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("config.json");
    let body = if extra.is_empty() { SMALL.to_string() } else { format!("{}, {extra}}}", SMALL.trim_end_matches('}')) };
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn lines(out: &Output) -> Vec<String> {
    String::from_utf8(out.stdout.clone()).unwrap().lines().map(str::to_string).collect()
}

fn field<'a>(line: &'a str, i: usize) -> &'a str {
    line.split(',').nth(i).unwrap()
}

#[test]
fn power_sweep_emits_one_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let out = secrecy(&["--experiment", "power-sweep", "--config", &cfg, "--methods", "markov", "--grid", "0,5,10", "--trials", "1", "--mc-samples", "200"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = lines(&out);
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0], HEADER);
    for (row, p) in rows[1..].iter().zip([0.0, 5.0, 10.0]) {
        assert_eq!(field(row, 0), "power-sweep");
        assert_eq!(field(row, 1), "markov");
        assert_eq!(field(row, 2).parse::<f64>().unwrap(), p);
        assert_eq!(field(row, 7), "optimal");
        let rate: f64 = field(row, 4).parse().unwrap();
        let outage: f64 = field(row, 6).parse().unwrap();
        assert!(rate >= 0.0);
        assert!((0.0..=1.0).contains(&outage));
    }
}

#[test]
fn rows_cover_grid_methods_and_trials() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let out = secrecy(&[
        "--experiment", "epsilon-sweep", "--config", &cfg, "--methods", "markov,hd-markov", "--grid", "0.001,0.01",
        "--trials", "3", "--mc-samples", "0",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let rows = lines(&out);
    assert_eq!(rows.len(), 1 + 2 * 2 * 3);
    // Outage is not estimated when disabled, nor for two-slot designs.
    assert!(rows[1..].iter().all(|r| field(r, 6).is_empty()));
}

#[test]
fn same_seed_reproduces_bytes_and_seed_env_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let args = ["--experiment", "power-sweep", "--config", &cfg, "--methods", "markov,sdp", "--grid", "0,10", "--trials", "2", "--mc-samples", "300", "--seed", "5"];
    let a = secrecy(&args);
    let b = Command::new(env!("CARGO_BIN_EXE_secrecy")).args(args).env("RAYON_NUM_THREADS", "3").env_remove("SEED").output().unwrap();
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);

    let c = Command::new(env!("CARGO_BIN_EXE_secrecy")).args(args).env("SEED", "6").output().unwrap();
    let rows = lines(&c);
    assert!(rows[1..].iter().all(|r| field(r, 8) == "6"));
    assert_ne!(a.stdout, c.stdout);
}

/// Without uncertainty the SDP bound is exact, so SDP matches the
/// perfect-CSI design. The expectation bound still charges the
/// deterministic leakage at `1 / rho` times its value and stays below.
#[test]
fn zero_uncertainty_sdp_matches_perfect_csi() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let out = secrecy(&[
        "--experiment", "epsilon-sweep", "--config", &cfg, "--methods", "markov,sdp,perfect-csi", "--grid", "0",
        "--trials", "3", "--mc-samples", "0",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = lines(&out);
    let rate = |method: &str, trial: &str| -> f64 {
        let row = rows[1..].iter().find(|r| field(r, 1) == method && field(r, 3) == trial).unwrap();
        field(row, 4).parse().unwrap()
    };
    for trial in ["0", "1", "2"] {
        let perfect = rate("perfect-csi", trial);
        let sdp = rate("sdp", trial);
        assert!((sdp - perfect).abs() < 1e-2, "sdp {sdp} vs perfect {perfect}");
        assert!(rate("markov", trial) <= perfect + 1e-6);
    }
}

#[test]
fn convergence_with_one_iteration_gives_one_row_per_trial() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let out = secrecy(&["--experiment", "convergence", "--config", &cfg, "--methods", "markov", "--trials", "4", "--max-dc-iters", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let rows = lines(&out);
    assert_eq!(rows.len(), 5);
    assert!(rows[1..].iter().all(|r| field(r, 2).parse::<f64>().unwrap() == 1.0 && field(r, 5) == "1"));
}

#[test]
fn convergence_rates_are_nondecreasing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let out = secrecy(&["--experiment", "convergence", "--config", &cfg, "--methods", "markov,sdp", "--trials", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let rows = lines(&out);
    for method in ["markov", "sdp"] {
        for trial in ["0", "1", "2"] {
            let rates: Vec<f64> = rows[1..]
                .iter()
                .filter(|r| field(r, 1) == method && field(r, 3) == trial)
                .map(|r| field(r, 4).parse().unwrap())
                .collect();
            assert!(!rates.is_empty());
            assert!(rates.windows(2).all(|w| w[1] >= w[0] - 1e-6), "{method} {trial}: {rates:?}");
        }
    }
}

#[test]
fn default_validation_run_passes() {
    let out = secrecy(&["--experiment", "validate"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}\n{}", String::from_utf8_lossy(&out.stderr));
    let rows = lines(&out);
    assert!(rows[1..].iter().all(|r| field(r, 7) == "pass"));
    assert!(rows.iter().any(|r| field(r, 1) == "trace-identity"));
    assert!(rows.iter().any(|r| field(r, 1) == "lemma2-witness"));
}

#[test]
fn indefinite_covariance_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    // Omega_1 is 6 x 6 for three transmit antennas and two eavesdropper antennas.
    let mut rows = Vec::new();
    for i in 0..6 {
        let row: Vec<&str> = (0..6).map(|j| if i != j { "0" } else if i == 0 { "-0.01" } else { "0.005" }).collect();
        rows.push(format!("[{}]", row.join(",")));
    }
    let cfg = small_config(dir.path(), &format!("\"omega1\": [{}]", rows.join(",")));
    let out = secrecy(&["--experiment", "validate", "--config", &cfg, "--trials", "1", "--mc-samples", "200"]);
    assert_eq!(out.status.code(), Some(1));
    let rows = lines(&out);
    let config_row = rows.iter().find(|r| field(r, 1) == "config").unwrap();
    assert!(config_row.contains("indefinite covariance"), "{config_row}");
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    for args in [
        vec!["--experiment", "power-sweep", "--grid", "5,0"],
        vec!["--experiment", "power-sweep", "--trials", "0"],
        vec!["--experiment", "power-sweep", "--methods", "nonsense"],
        vec!["--experiment", "sideways"],
        vec!["--experiment", "power-sweep", "--config", "/nonexistent/config.json"],
    ] {
        let out = secrecy(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(out.stdout.is_empty());
    }
    std::fs::write(&cfg, r#"{"n_t1": 3, "unknown_field": 1}"#).unwrap();
    assert_eq!(secrecy(&["--experiment", "power-sweep", "--config", &cfg]).status.code(), Some(2));
}

#[test]
fn writes_csv_and_plot_script_to_out() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let csv = dir.path().join("sweep.csv");
    let out = secrecy(&[
        "--experiment", "power-sweep", "--config", &cfg, "--methods", "markov", "--grid", "0,10", "--trials", "1",
        "--mc-samples", "0", "--out", csv.to_str().unwrap(), "--plot",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let body = std::fs::read_to_string(&csv).unwrap();
    assert!(body.starts_with(HEADER));
    let script = std::fs::read_to_string(dir.path().join("sweep.gp")).unwrap();
    assert!(script.contains("sweep.csv"));
    assert!(script.contains("markov"));
}
