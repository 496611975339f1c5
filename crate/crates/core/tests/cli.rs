//! End-to-end CLI checks: exit codes, config error reporting, and the
//! byte-identical CSV rerun guarantee.

use std::fs;
use std::process::Command;

fn heatlab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_heatlab"))
}

fn write_config(dir: &std::path::Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn phi_rerun_is_byte_identical_and_threads_do_not_matter() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{
            "model": {"kind": "brownian_line"},
            "scale_function": {"kind": "power", "beta": 2.0},
            "estimator": {},
            "times": [0.1, 1.0, 10.0],
            "radii": [0.5, 1.0, 2.0],
            "seed": 7
        }"#,
    );
    let mut bodies = Vec::new();
    for (threads, out) in [("1", "out_a"), ("8", "out_b"), ("1", "out_c")] {
        let out_dir = dir.path().join(out);
        let status = heatlab()
            .args(["phi", "--config"])
            .arg(&cfg)
            .args(["--threads", threads, "--out"])
            .arg(&out_dir)
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
        bodies.push(fs::read(out_dir.join("phi.csv")).unwrap());
    }
    assert_eq!(bodies[0], bodies[1], "thread count changed the CSV bytes");
    assert_eq!(bodies[0], bodies[2], "rerun changed the CSV bytes");
    let header = String::from_utf8_lossy(&bodies[0]);
    assert!(header.starts_with("r,t,phi_numeric,phi_closed,rel_err\r\n"));
}

#[test]
fn malformed_config_exits_2_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{
            "model": {"kind": "brownian_line"},
            "geometry": {"u": {"kind": "interval", "a": -1.0, "b": 1.0},
                          "b": {"kind": "interval", "a": -0.5, "b": 0.5}},
            "estimator": {"n_paths": 100},
            "times": [0.1]
        }"#,
    );
    let out = heatlab()
        .args(["estimate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("estimator.dt"), "stderr: {stderr}");
}

#[test]
fn failed_verification_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    // gamma is absurdly large, so c exp(-Phi(gamma r, t)) is far below the
    // true exit probability and the check must fail.
    let cfg = write_config(
        dir.path(),
        r#"{
            "model": {"kind": "brownian_line"},
            "scale_function": {"kind": "power", "beta": 2.0},
            "geometry": {"big_r": 2.0, "x0": 0.0},
            "estimator": {"n_paths": 2000, "dt": 0.01},
            "constants": {"c": 1.0, "gamma": 100.0},
            "times": [0.5],
            "radii": [0.5],
            "seed": 3
        }"#,
    );
    let status = heatlab()
        .args(["verify-p", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
    let summary = fs::read_to_string(dir.path().join("out/summary.json")).unwrap();
    assert!(summary.contains("\"pass\": false"));
}

#[test]
fn exit_prob_csv_matches_summary_seed_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{
            "model": {"kind": "brownian_line"},
            "estimator": {"n_paths": 2000, "dt": 0.01, "bridge_correction": true},
            "times": [0.25],
            "radii": [1.0],
            "seed": 11
        }"#,
    );
    let out_dir = dir.path().join("out");
    let status = heatlab()
        .args(["exit-prob", "--config"])
        .arg(&cfg)
        .args(["--seed", "99", "--out"])
        .arg(&out_dir)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let csv = fs::read_to_string(out_dir.join("exit_prob.csv")).unwrap();
    assert!(csv.starts_with("r,t,estimate,std_error,n,seed\r\n"));
    let summary = fs::read_to_string(out_dir.join("summary.json")).unwrap();
    // --seed overrides the config's seed in the summary.
    assert!(summary.contains("\"seed\": 99"));
}
