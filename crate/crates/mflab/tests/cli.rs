//! End-to-end checks of the command-line interface: exit codes, config echo,
//! and byte-identical reruns.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mflab"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn read_dir_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn curie_weiss_run_passes_and_reruns_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "cw.json",
        r#"{
            "schema": "mflab/1",
            "command": "curie-weiss",
            "potential": {"kind": "curie-weiss", "sigma2": 0.46, "kappa0": 1.0},
            "seed": 1,
            "curie-weiss": {"kappa0": 1.0, "n-list": [16.0, 64.0, 256.0, 1024.0]}
        }"#,
    );
    let out1 = tmp.path().join("run1");
    let st = bin().args(["--config"]).arg(&cfg).arg("--output").arg(&out1).status().unwrap();
    assert!(st.success(), "first run should exit 0");

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out1.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["all_pass"], serde_json::Value::Bool(true));
    let s2 = summary["sigma2-critical"].as_f64().unwrap();
    assert!((0.45..=0.47).contains(&s2), "sigma2-critical = {s2}");

    // Identical rerun must be byte-identical, including the echo.
    let out2 = tmp.path().join("run2");
    let st = bin().args(["--config"]).arg(&cfg).arg("--output").arg(&out2).status().unwrap();
    assert!(st.success());
    let mut a = read_dir_files(&out1);
    let mut b = read_dir_files(&out2);
    // The echoed configs carry the output path, which legitimately differs.
    a.retain(|(n, _)| n != "config.echo.json");
    b.retain(|(n, _)| n != "config.echo.json");
    assert_eq!(a, b, "reruns must produce byte-identical outputs");

    // Re-feeding the echoed config must reproduce the run.
    let out3 = tmp.path().join("run3");
    let st = bin()
        .args(["--config"])
        .arg(out1.join("config.echo.json"))
        .arg("--output")
        .arg(&out3)
        .status()
        .unwrap();
    assert!(st.success(), "echoed config must be a valid input");
    let mut c = read_dir_files(&out3);
    c.retain(|(n, _)| n != "config.echo.json");
    assert_eq!(a, c, "echoed config must reproduce the run");
}

#[test]
fn unknown_key_is_config_error_with_no_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bad.json",
        r#"{
            "schema": "mflab/1",
            "command": "gibbs",
            "potential": {"kind": "quartic1d", "kappa": 1.0},
            "unexpected-knob": 3
        }"#,
    );
    let out = tmp.path().join("out");
    let res = bin().args(["--config"]).arg(&cfg).arg("--output").arg(&out).output().unwrap();
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists(), "a rejected config must not produce outputs");
    let stderr = String::from_utf8(res.stderr).unwrap();
    assert!(stderr.contains("error"), "stderr: {stderr}");
}

#[test]
fn wrong_schema_version_is_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "schema.json",
        r#"{
            "schema": "mflab/0",
            "command": "gibbs",
            "potential": {"kind": "quartic1d", "kappa": 1.0}
        }"#,
    );
    let res = bin().args(["--config"]).arg(&cfg).output().unwrap();
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn diverging_simulation_is_numeric_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "blowup.json",
        r#"{
            "schema": "mflab/1",
            "command": "simulate",
            "potential": {"kind": "quartic1d", "kappa": 1.0},
            "seed": 0,
            "simulate": {"model": "toy", "n": 8, "dt": 10.0, "horizon": 100.0}
        }"#,
    );
    let out = tmp.path().join("out");
    let res = bin().args(["--config"]).arg(&cfg).arg("--output").arg(&out).output().unwrap();
    assert_eq!(res.status.code(), Some(3));
    let stderr = String::from_utf8(res.stderr).unwrap();
    assert!(stderr.contains("dynamics"), "error must name the module: {stderr}");
}

#[test]
fn workers_flag_does_not_change_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "sim.json",
        r#"{
            "schema": "mflab/1",
            "command": "simulate",
            "potential": {"kind": "quartic1d", "kappa": 1.0},
            "seed": 9,
            "simulate": {"model": "toy", "n": 16, "dt": 0.001, "horizon": 1.0, "replicas": 3}
        }"#,
    );
    let out1 = tmp.path().join("w1");
    let out2 = tmp.path().join("w2");
    assert!(bin()
        .args(["--config"])
        .arg(&cfg)
        .arg("--output")
        .arg(&out1)
        .args(["--workers", "1"])
        .status()
        .unwrap()
        .success());
    assert!(bin()
        .args(["--config"])
        .arg(&cfg)
        .arg("--output")
        .arg(&out2)
        .args(["--workers", "4"])
        .status()
        .unwrap()
        .success());
    assert_eq!(
        std::fs::read(out1.join("trajectory.csv")).unwrap(),
        std::fs::read(out2.join("trajectory.csv")).unwrap(),
        "worker count must not affect the produced numbers"
    );
}

#[test]
fn seed_flag_overrides_config_and_lands_in_echo() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "seeded.json",
        r#"{
            "schema": "mflab/1",
            "command": "simulate",
            "potential": {"kind": "quadratic", "kappa": 1.0, "d": 1},
            "seed": 1,
            "simulate": {"model": "toy", "n": 8, "dt": 0.01, "horizon": 0.5}
        }"#,
    );
    let out = tmp.path().join("out");
    assert!(bin()
        .args(["--config"])
        .arg(&cfg)
        .arg("--output")
        .arg(&out)
        .args(["--seed", "42"])
        .status()
        .unwrap()
        .success());
    let echo: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("config.echo.json")).unwrap())
            .unwrap();
    assert_eq!(echo["seed"], serde_json::json!(42));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], serde_json::json!(42));
}

#[test]
fn critical_points_command_reports_double_well() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "cp.json",
        r#"{
            "schema": "mflab/1",
            "command": "critical-points",
            "potential": {"kind": "quartic1d", "kappa": 1.0}
        }"#,
    );
    let out = tmp.path().join("out");
    assert!(bin().args(["--config"]).arg(&cfg).arg("--output").arg(&out).status().unwrap().success());
    let csv = std::fs::read_to_string(out.join("critical_points.csv")).unwrap();
    // Header plus the three critical points of the double well.
    assert_eq!(csv.lines().count(), 4, "{csv}");
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["count"], serde_json::json!(3));
    assert_eq!(summary["minimizer-count"], serde_json::json!(2));
}
