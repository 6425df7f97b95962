//! End-to-end runs of the `ohmic` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn ohmic(dir: &Path, config: &str, name: &str, extra: &[&str]) -> Output {
    let cfg = dir.join(name);
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_ohmic"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap()
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines
        .map(|l| l.split(',').nth(k).unwrap().to_string())
        .collect()
}

const REGIME_MAP: &str = "\
command = regime-map
[problem]
lambda = 2, 4, 6, 8, 10, 12
p = 2
[numerics]
grid_size = 128
t_max = 20
";

#[test]
fn bifurcation_stays_below_the_critical_value() {
    let dir = TempDir::new().unwrap();
    let out = ohmic(
        dir.path(),
        "command = bifurcation\n[problem]\nfamily = exponential\np = 2\n[numerics]\nmu_per_decade = 10\n",
        "bif.ini",
        &[],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("out/branch.csv")).unwrap();
    let lambdas: Vec<f64> = column(&csv, "lambda")
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
    let top = lambdas.iter().copied().fold(0.0, f64::max);
    assert!(top < 8.0 && top > 7.9, "max lambda {top}");
    let svg = fs::read_to_string(dir.path().join("out/branch.svg")).unwrap();
    assert!(svg.contains("stroke-dasharray"));
    assert!(svg.contains("2|∂Ω|² = 8.0000"));
}

#[test]
fn regime_map_labels_and_reruns_are_identical() {
    let dir = TempDir::new().unwrap();
    let out = ohmic(dir.path(), REGIME_MAP, "map.ini", &["--threads", "2"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let first = fs::read(dir.path().join("out/regime_map.csv")).unwrap();
    let labels = column(std::str::from_utf8(&first).unwrap(), "label");
    assert_eq!(
        labels,
        [
            "converged",
            "converged",
            "converged",
            "diverging",
            "blown_up",
            "blown_up"
        ]
    );
    let json_first = fs::read(dir.path().join("out/regime_map.json")).unwrap();

    let again = TempDir::new().unwrap();
    let out = ohmic(again.path(), REGIME_MAP, "map.ini", &[]);
    assert!(out.status.success());
    assert_eq!(
        first,
        fs::read(again.path().join("out/regime_map.csv")).unwrap()
    );
    assert_eq!(
        json_first,
        fs::read(again.path().join("out/regime_map.json")).unwrap()
    );
}

#[test]
fn manifest_hashes_match_the_files() {
    let dir = TempDir::new().unwrap();
    let config = r#"{"command": "evolve",
        "problem": {"lambda": 4, "p": 2, "initial": "bump", "initial_amplitude": 0.5},
        "numerics": {"grid_size": 128, "t_max": 0.1, "snapshots": [0.05, 0.1]}}"#;
    let out = ohmic(dir.path(), config, "run.json", &[]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let root = dir.path().join("out");
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("manifest.json")).unwrap()).unwrap();
    let entries = manifest["artifacts"].as_array().unwrap();
    let paths: Vec<&str> = entries
        .iter()
        .map(|e| e["path"].as_str().unwrap())
        .collect();
    for expected in [
        "trajectory.csv",
        "snapshots/snapshot_001.csv",
        "trajectory.svg",
        "run.json",
    ] {
        assert!(
            paths.contains(&expected),
            "{expected} missing from {paths:?}"
        );
    }
    for e in entries {
        let bytes = fs::read(root.join(e["path"].as_str().unwrap())).unwrap();
        assert_eq!(
            e["sha256"].as_str().unwrap(),
            hex::encode(Sha256::digest(&bytes))
        );
    }
    let run: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("run.json")).unwrap()).unwrap();
    assert_eq!(run["status"]["status"], "max_time_reached");
}

#[test]
fn format_flag_limits_the_outputs() {
    let dir = TempDir::new().unwrap();
    let out = ohmic(dir.path(), REGIME_MAP, "map.ini", &["--format", "json"]);
    assert!(out.status.success());
    assert!(dir.path().join("out/regime_map.json").exists());
    assert!(!dir.path().join("out/regime_map.csv").exists());
}

#[test]
fn config_errors_exit_2_without_artifacts() {
    let cases = [
        ("command = evolve\n[problem]\nlambda = -1\np = 2\n", vec![]),
        ("command = evolve\n[problem]\nlambda = 4\np = 2\nspeed = 3\n", vec![]),
        ("command = evolve\n[problem]\nlambda = 4\np = 2\n", vec!["envelope"]),
        ("{\"command\": \"evolve\", \"problem\": [1]}", vec![]),
        (
            "command = evolve\n[problem]\nlambda = 4\np = 2\nfamily = tabulated\ntable = missing.csv\ntail = power\ntail_exponent = 2\n",
            vec![],
        ),
    ];
    for (config, extra) in cases {
        let dir = TempDir::new().unwrap();
        let out = ohmic(dir.path(), config, "bad.ini", &extra);
        assert_eq!(out.status.code(), Some(2), "{config}");
        assert!(!dir.path().join("out").exists(), "{config}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn numerical_failures_exit_3_without_artifacts() {
    let dir = TempDir::new().unwrap();
    // Below the p = 3 fold the zero state converges, so there is no rate to fit.
    let out = ohmic(
        dir.path(),
        "command = blowup-rate\n[problem]\nlambda = 4\np = 3\n[numerics]\ngrid_size = 128\n",
        "rate.ini",
        &[],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn envelope_reaches_the_steady_root() {
    let dir = TempDir::new().unwrap();
    let out = ohmic(
        dir.path(),
        "command = envelope\n[problem]\nlambda = 5\np = 0.5\n[numerics]\nmu0 = 40\nt_max = 20\nmu_per_decade = 20\n",
        "env.ini",
        &[],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rec: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/envelope.json")).unwrap())
            .unwrap();
    assert_eq!(rec["direction"], "upper");
    assert_eq!(rec["terminal"]["kind"], "reached_root");
}
