use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cavfeed::experiment::csv_body;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cavfeed"));
    cmd.env_remove("CAVFEED_WORKERS");
    cmd
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cavfeed-cli-{}-{name}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.cfg");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn header_of(csv: &str) -> &str {
    csv.lines().find(|l| !l.starts_with('#')).unwrap()
}

#[test]
fn steady_state_prints_amplitude() {
    let out = run(&["--kind", "steady_state", "--alpha-sq", "4", "--phi", "1"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "-2+0i");
}

#[test]
fn kraus_demo_prints_distributions() {
    let out = run(&["--kind", "kraus_demo", "--out", &scratch("kraus").join("k.csv").to_string_lossy()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("sequential:  {01:0.5, 10:0.5}"), "{text}");
    assert!(text.contains("single shot: {01:0.5, 10:0.5}"), "{text}");
}

#[test]
fn config_errors_exit_with_one() {
    let dir = scratch("errors");
    let cfg = write_config(&dir, "kind = g2\n[cavity]\neta = 1.5\n");
    let out = run(&["--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("eta"), "{err}");

    let cfg = write_config(&dir, "kind = g2\nkind = g2\n");
    assert_eq!(run(&["--config", &cfg]).status.code(), Some(1));
    let cfg = write_config(&dir, "kind = g2\nspeed = 3\n");
    assert_eq!(run(&["--config", &cfg]).status.code(), Some(1));
    assert_eq!(run(&["--config", "/nonexistent/run.cfg"]).status.code(), Some(1));
    assert_eq!(run(&["--kind", "intensity", "--mode", "sideways"]).status.code(), Some(1));
    assert_eq!(run(&["--kind", "intensity", "--trajectories", "many"]).status.code(), Some(1));
    assert_eq!(run(&["--frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&[]).status.code(), Some(1));
}

#[test]
fn runtime_failures_exit_with_two() {
    // The oracle comparison keeps the drive on, which event stepping cannot do.
    let out = run(&["--kind", "oracle_validate", "--mode", "event", "--dt", "0.01", "--trajectories", "10"]);
    assert_eq!(out.status.code(), Some(2));
    let dir = scratch("runtime");
    let cfg = write_config(&dir, "kind = scaling_fit\ninput = /nonexistent/acc.csv\n");
    assert_eq!(run(&["--config", &cfg]).status.code(), Some(2));
}

#[test]
fn failed_run_leaves_no_output() {
    let dir = scratch("partial");
    let out_path = dir.join("fit.csv");
    let cfg = write_config(&dir, "kind = scaling_fit\ninput = /nonexistent/acc.csv\n");
    let out = run(&["--config", &cfg, "--out", &out_path.to_string_lossy()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(fs::read_dir(&dir).unwrap().all(|e| e.unwrap().file_name() == "run.cfg"));
}

#[test]
fn csv_schemas() {
    let dir = scratch("schemas");
    let cases: &[(&str, &str, &str)] = &[
        (
            "intensity",
            "kind = intensity\ntrajectories = 200\n[simulation]\nt_max = 0.1\n",
            "T,I_detected,I_emitted,I_analytic,stderr",
        ),
        (
            "g2",
            "kind = g2\ntrajectories = 200\n[simulation]\nt_max = 0.1\n",
            "T,g2,stderr,n_conditional,n_unconditional",
        ),
        (
            "phase",
            "kind = phase_diagram\ntrajectories = 50\n[sweep]\nphi = 0.5, 1\nt = 0, 0.1\n",
            "phi,t,mean_re_alpha,mean_im_alpha,std_re,std_im",
        ),
        (
            "accuracy",
            "kind = accuracy_time\ntrajectories = 200\n[simulation]\nt_max = 0.1\n",
            "resource,signal,signal_std,sensitivity,delta_phi,uncertainty_mode",
        ),
        (
            "photon",
            "kind = accuracy_photon\ntrajectories = 100\n[simulation]\nt_max = 0.1\n[accuracy]\nwindow = 0, 0.05\n[sweep]\nalpha_sq = 1, 2\n",
            "resource,signal,signal_std,sensitivity,delta_phi,uncertainty_mode",
        ),
    ];
    for (name, config, header) in cases {
        let out_path = dir.join(format!("{name}.csv"));
        let cfg = write_config(&dir, config);
        let out = run(&["--config", &cfg, "--out", &out_path.to_string_lossy(), "--workers", "2"]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        let text = fs::read_to_string(&out_path).unwrap();
        assert_eq!(header_of(&text), *header, "{name}");
        for key in ["# seed = ", "# mode = ", "# trajectories = ", "# wall_time_s = ", "# eta = "] {
            assert!(text.contains(key), "{name} lacks {key}");
        }
        let width = header.split(',').count();
        for line in csv_body(&text).lines().skip(1) {
            assert_eq!(line.split(',').count(), width, "{name}: {line}");
        }
    }
}

#[test]
fn g2_at_pi_reports_zero_and_missing_cells_stay_empty() {
    let out = run(&["--kind", "g2", "--trajectories", "2000", "--t-max", "0.2", "--phi", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for line in csv_body(&text).lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        assert!(cells[1] == "0" || cells[1].is_empty(), "{line}");
        assert_eq!(cells[3], "0");
    }
}

#[test]
fn scaling_fit_reads_accuracy_table() {
    let dir = scratch("fit");
    let table = dir.join("acc.csv");
    let mut text = String::from("# experiment = accuracy_time\nresource,signal,signal_std,sensitivity,delta_phi,uncertainty_mode\n");
    for i in 1..=8 {
        let t = i as f64 * 0.25;
        text.push_str(&format!("{t},1,1,1,{},per_trajectory\n", 2.0 * t.powf(-0.5)));
    }
    text.push_str("2.25,1,1,0,,per_trajectory\n");
    fs::write(&table, text).unwrap();
    let cfg = write_config(&dir, &format!("kind = scaling_fit\ninput = {}\n", table.display()));
    let out_path = dir.join("fit.csv");
    let out = run(&["--config", &cfg, "--out", &out_path.to_string_lossy()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let body = csv_body(&fs::read_to_string(&out_path).unwrap());
    let mut lines = body.lines();
    assert_eq!(lines.next(), Some("exponent,log_prefactor,r_squared,n_points,range_min,range_max"));
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|c| c.parse().unwrap()).collect();
    assert!((row[0] + 0.5).abs() < 1e-12);
    assert!((row[1] - 2f64.ln()).abs() < 1e-12);
    assert_eq!(row[3], 8.0);
}

#[test]
fn flags_override_config() {
    let dir = scratch("override");
    let cfg = write_config(&dir, "kind = steady_state\n[cavity]\nalpha_sq = 9\nphi = 0\n");
    let out = run(&["--config", &cfg]);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "3+0i");
    let out = run(&["--config", &cfg, "--alpha-sq", "4", "--phi", "1"]);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "-2+0i");
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = scratch("workers");
    let cfg = write_config(&dir, "kind = g2\ntrajectories = 3000\nseed = 11\n[simulation]\nt_max = 0.3\n");
    let mut bodies = Vec::new();
    for (i, workers) in ["1", "3"].iter().enumerate() {
        let path = dir.join(format!("g2-{i}.csv"));
        let out = run(&["--config", &cfg, "--workers", workers, "--out", &path.to_string_lossy()]);
        assert_eq!(out.status.code(), Some(0));
        bodies.push(csv_body(&fs::read_to_string(&path).unwrap()));
    }
    let path = dir.join("g2-env.csv");
    let out = bin()
        .args(["--config", &cfg, "--out", &path.to_string_lossy()])
        .env("CAVFEED_WORKERS", "2")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    bodies.push(csv_body(&fs::read_to_string(&path).unwrap()));
    assert_eq!(bodies[0], bodies[1]);
    assert_eq!(bodies[0], bodies[2]);

    let bad = bin().args(["--kind", "steady_state"]).env("CAVFEED_WORKERS", "zero").output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
    let flag_wins = bin()
        .args(["--kind", "steady_state", "--workers", "1"])
        .env("CAVFEED_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(flag_wins.status.code(), Some(0));
}
