//! End-to-end checks of the command-line surface: output contracts,
//! determinism, and error/exit-code behavior.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_relaykey"))
}

fn tmp(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("relaykey-cli-{}-{name}", std::process::id()))
}

fn write_cfg(name: &str, body: &str) -> PathBuf {
    let p = tmp(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn relaykey")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn csv_rows(path: &PathBuf) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn table1_known_rows_and_byte_identical_rerun() {
    let out1 = tmp("t1a.csv");
    let out2 = tmp("t1b.csv");
    assert!(run(&["table1", "--output", out1.to_str().unwrap()]).status.success());
    assert!(run(&["table1", "--output", out2.to_str().unwrap()]).status.success());
    assert_eq!(
        std::fs::read(&out1).unwrap(),
        std::fs::read(&out2).unwrap(),
        "reruns must be byte-identical"
    );
    let rows = csv_rows(&out1);
    assert_eq!(rows.len(), 60);
    let cell = |c: &str, db: &str| {
        rows.iter()
            .find(|r| r[0] == c && r[1] == db)
            .map(|r| (r[2].parse::<f64>().unwrap(), r[3].parse::<f64>().unwrap()))
            .unwrap()
    };
    let (bo, bs) = cell("0.0", "5");
    assert!((bo - 0.807).abs() <= 0.005 && (bs - 0.740).abs() <= 0.005);
    let (bo, bs) = cell("0.3", "25");
    assert!((bo - 0.628).abs() <= 0.005 && (bs - 0.623).abs() <= 0.005);
    for p in [out1, out2] {
        let _ = std::fs::remove_file(p);
    }
}

#[test]
fn sweep_beta_peak_and_vanishing_endpoints() {
    let cfg = write_cfg(
        "sweep-beta.json",
        r#"{"sweep": "beta", "start": 0.001, "stop": 0.999, "step": 0.001,
            "c": 0.0, "rho_db": 30.0}"#,
    );
    let out = tmp("sweep-beta.csv");
    let res = run(&["sweep", "--config", cfg.to_str().unwrap(), "--output", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", stderr_of(&res));
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 999);
    let theta: Vec<f64> = rows.iter().map(|r| r[5].parse().unwrap()).collect();
    let betas: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    let arg = theta
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap()
        .0;
    assert!(
        (betas[arg] - 0.545).abs() <= 0.005,
        "throughput peak at beta = {}, expected 0.545 +/- 0.005",
        betas[arg]
    );
    // at 30 dB the probing SNR stays high even at beta=0.001, so only the
    // broadcast-starved right edge vanishes; both edges vanish at 10 dB below
    assert!(theta[998] < 1e-3, "theta near beta=1 is {}", theta[998]);
    // the practical columns stay empty when L/epsilon are not configured
    assert!(rows[0][7].is_empty() && rows[0][8].is_empty() && rows[0][9].is_empty());

    let res = run(&[
        "sweep", "--config", cfg.to_str().unwrap(), "--set", "rho_db=10",
        "--output", out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", stderr_of(&res));
    let rows = csv_rows(&out);
    let theta_lo: f64 = rows[0][5].parse().unwrap();
    let theta_hi: f64 = rows[998][5].parse().unwrap();
    assert!(theta_lo < 1e-3, "theta near beta=0 is {theta_lo}");
    assert!(theta_hi < 1e-3, "theta near beta=1 is {theta_hi}");
    let _ = std::fs::remove_file(out);
}

#[test]
fn sweep_with_block_length_reports_practical_peak() {
    let cfg = write_cfg(
        "sweep-fbl.json",
        r#"{"sweep": "beta", "start": 0.70, "stop": 0.98, "step": 0.0125,
            "c": 0.0, "rho_db": 15.0, "L": 100, "epsilon": 1e-7, "scheme": "optimal"}"#,
    );
    let out = tmp("sweep-fbl.csv");
    let res = run(&["sweep", "--config", cfg.to_str().unwrap(), "--output", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", stderr_of(&res));
    let rows = csv_rows(&out);
    let (mut best, mut best_beta) = (f64::NEG_INFINITY, 0.0);
    for r in &rows {
        let obj: f64 = r[9].parse().unwrap();
        if obj > best {
            best = obj;
            best_beta = r[2].parse().unwrap();
        }
    }
    assert!(
        (0.85..=0.95).contains(&best_beta),
        "practical objective peaks at beta = {best_beta}"
    );
    let _ = std::fs::remove_file(out);
}

#[test]
fn sweep_is_thread_count_invariant() {
    let cfg = write_cfg(
        "sweep-threads.json",
        r#"{"sweep": "c", "start": 0.0, "stop": 0.9, "step": 0.1,
            "rho_db": 20.0, "beta": 0.6, "L": 50, "epsilon": 1e-2}"#,
    );
    let out1 = tmp("sweep-th1.csv");
    let out4 = tmp("sweep-th4.csv");
    let r1 = run(&[
        "--threads", "1", "sweep", "--config", cfg.to_str().unwrap(),
        "--output", out1.to_str().unwrap(),
    ]);
    let r4 = run(&[
        "--threads", "4", "sweep", "--config", cfg.to_str().unwrap(),
        "--output", out4.to_str().unwrap(),
    ]);
    assert!(r1.status.success() && r4.status.success());
    assert_eq!(std::fs::read(&out1).unwrap(), std::fs::read(&out4).unwrap());
    for p in [out1, out4] {
        let _ = std::fs::remove_file(p);
    }
}

#[test]
fn simulate_outputs_match_config_shape_and_rerun_exactly() {
    let cfg = write_cfg(
        "sim.json",
        r#"{"c_ar": 0.2, "c_br": 0.2, "rho_db": 20.0, "beta": 0.6, "L": 40,
            "rounds": 25, "trials": 80, "scheme": {"intermediate": {"switch_on": 5}},
            "epsilon": 1e-2, "outage_model": "asymptotic_marcum_q", "seed": 11,
            "key_source": "practical"}"#,
    );
    let out1 = tmp("sim1.csv");
    let out2 = tmp("sim2.csv");
    let traj = tmp("traj.csv");
    let r1 = run(&[
        "simulate", "--config", cfg.to_str().unwrap(),
        "--output", out1.to_str().unwrap(),
        "--dump-trajectory", traj.to_str().unwrap(),
    ]);
    assert!(r1.status.success(), "{}", stderr_of(&r1));
    let r2 = run(&["simulate", "--config", cfg.to_str().unwrap(), "--output", out2.to_str().unwrap()]);
    assert!(r2.status.success());
    assert_eq!(std::fs::read(&out1).unwrap(), std::fs::read(&out2).unwrap());

    let rows = csv_rows(&out1);
    assert_eq!(rows.len(), 25, "one summary row per round");
    let beta_used: f64 = rows[0][2].parse().unwrap();
    assert!((0.0..1.0).contains(&beta_used));
    let traj_rows = csv_rows(&traj);
    assert_eq!(traj_rows.len(), 25, "trajectory covers each round of trial 0");
    for r in &traj_rows {
        let n_ar: u64 = r[1].parse().unwrap();
        let n_br: u64 = r[2].parse().unwrap();
        let n_xor: u64 = r[3].parse().unwrap();
        assert!(n_xor <= n_ar.max(n_br));
    }
    for p in [out1, out2, traj] {
        let _ = std::fs::remove_file(p);
    }
}

#[test]
fn simulate_optimized_beta_matches_table_value() {
    let cfg = write_cfg(
        "sim-opt.json",
        r#"{"c_ar": 0.0, "c_br": 0.0, "rho_db": 30.0, "beta": "optimize", "L": 30,
            "rounds": 5, "trials": 20, "scheme": "optimal", "epsilon": 1e-2,
            "outage_model": "asymptotic_marcum_q", "seed": 3}"#,
    );
    let out = tmp("sim-opt.csv");
    let res = run(&["simulate", "--config", cfg.to_str().unwrap(), "--output", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", stderr_of(&res));
    let rows = csv_rows(&out);
    let beta_used: f64 = rows[0][2].parse().unwrap();
    assert!((beta_used - 0.545).abs() <= 0.005, "optimized beta = {beta_used}");
    let _ = std::fs::remove_file(out);
}

#[test]
fn optimize_prints_to_stdout_or_file_identically() {
    let cfg = write_cfg(
        "opt.json",
        r#"{"c": 0.2, "rho_db": 15.0, "method": "grid_throughput", "weight": "half"}"#,
    );
    let res = run(&["optimize", "--config", cfg.to_str().unwrap()]);
    assert!(res.status.success());
    let stdout = String::from_utf8_lossy(&res.stdout).into_owned();
    let out = tmp("opt.csv");
    assert!(run(&["optimize", "--config", cfg.to_str().unwrap(), "--output", out.to_str().unwrap()])
        .status
        .success());
    assert_eq!(stdout, std::fs::read_to_string(&out).unwrap());
    assert!(stdout.contains("grid_throughput,0.2,15,7.12"));
    let _ = std::fs::remove_file(out);
}

#[test]
fn config_errors_exit_2_before_any_work() {
    // unknown key, named in the message
    let cfg = write_cfg("bad-key.json", r#"{"c": 0.2, "rho_db": 15.0, "method": "grid_throughput", "wieght": "half"}"#);
    let res = run(&["optimize", "--config", cfg.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr_of(&res).contains("wieght"), "stderr: {}", stderr_of(&res));

    // malformed JSON reports position
    let cfg = write_cfg("bad-json.json", "{\"c\": 0.2,,}");
    let res = run(&["optimize", "--config", cfg.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));

    // missing file
    let res = run(&["optimize", "--config", "/nonexistent/cfg.json"]);
    assert_eq!(res.status.code(), Some(2));

    // constrained method without its target
    let cfg = write_cfg("no-eta.json", r#"{"c": 0.2, "rho_db": 15.0, "method": "newton_constrained"}"#);
    let res = run(&["optimize", "--config", cfg.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr_of(&res).contains("eta"));

    // out-of-range LOS fraction
    let cfg = write_cfg("bad-c.json", r#"{"c": 1.5, "rho_db": 15.0, "method": "grid_throughput"}"#);
    let res = run(&["optimize", "--config", cfg.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));

    // degenerate sweep step
    let cfg = write_cfg(
        "bad-step.json",
        r#"{"sweep": "beta", "start": 0.2, "stop": 0.8, "step": 0.0, "c": 0.0, "rho_db": 10.0}"#,
    );
    let out = tmp("never.csv");
    let res = run(&["sweep", "--config", cfg.to_str().unwrap(), "--output", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists(), "config errors must abort before writing output");

    // block length without an error target
    let cfg = write_cfg(
        "half-practical.json",
        r#"{"sweep": "beta", "start": 0.2, "stop": 0.8, "step": 0.1, "c": 0.0, "rho_db": 10.0, "L": 100}"#,
    );
    let res = run(&["sweep", "--config", cfg.to_str().unwrap(), "--output", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));

    // simulate config validation failures surface the same way
    let cfg = write_cfg(
        "sim-bad.json",
        r#"{"c_ar": 0.2, "c_br": 0.2, "rho_db": 20.0, "beta": 1.7, "L": 40,
            "rounds": 5, "trials": 5, "scheme": "optimal", "epsilon": 1e-2,
            "outage_model": "asymptotic_marcum_q", "seed": 1}"#,
    );
    let res = run(&["simulate", "--config", cfg.to_str().unwrap(), "--output", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn set_overrides_reach_the_computation() {
    let cfg = write_cfg(
        "opt-base.json",
        r#"{"c": 0.0, "rho_db": 30.0, "method": "grid_throughput", "weight": "half"}"#,
    );
    let base = run(&["optimize", "--config", cfg.to_str().unwrap()]);
    let shifted = run(&["optimize", "--config", cfg.to_str().unwrap(), "--set", "rho_db=5"]);
    assert!(base.status.success() && shifted.status.success());
    let get_beta = |o: &Output| {
        String::from_utf8_lossy(&o.stdout)
            .lines()
            .nth(1)
            .unwrap()
            .split(',')
            .nth(3)
            .unwrap()
            .parse::<f64>()
            .unwrap()
    };
    assert!((get_beta(&base) - 0.545).abs() <= 0.005);
    assert!((get_beta(&shifted) - 0.807).abs() <= 0.005);

    // an override introducing an unknown key is rejected like a file key
    let res = run(&["optimize", "--config", cfg.to_str().unwrap(), "--set", "bogus=1"]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn validate_canary_trips_on_injected_bias() {
    let res = run(&["validate", "--marcum-perturb", "1e-3"]);
    assert_eq!(res.status.code(), Some(1), "biased oracle must fail validation");
    let text = String::from_utf8_lossy(&res.stdout).into_owned();
    assert!(text.contains("FAIL analytic-outage-vs-mc"), "stdout: {text}");
    assert!(text.contains("PASS marcum-vs-quadrature"));
}

#[test]
fn help_documents_the_config_keys() {
    let res = run(&["--help"]);
    assert!(res.status.success());
    let text = String::from_utf8_lossy(&res.stdout).into_owned();
    for key in ["rho_db", "epsilon", "outage_model", "key_source", "RELAYKEY_THREADS", "--set"] {
        assert!(text.contains(key), "help misses {key}");
    }
}
