use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn spikescan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spikescan"))
        .args(args)
        .env_remove("SPIKESCAN_THREADS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn energy_writes_tables_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = spikescan(&["energy", "--out", path(dir.path())]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["energy_lif.csv", "energy_dsn.csv", "reconciliation.csv", "energy.json", "manifest.json"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let m: Value = serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "energy");
    assert_eq!(m["exit_code"], 0);
    assert_eq!(m["config"]["command"], "energy");
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&spikescan(&["props", "--neuron", "lif-hard"])), 2);
    assert_eq!(code(&spikescan(&["no-such-command"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let out = spikescan(&["props", "--neuron", "quantum", "--property", "long-control", "--out", path(dir.path())]);
    assert_eq!(code(&out), 2);
    let threads = Command::new(env!("CARGO_BIN_EXE_spikescan"))
        .args(["energy", "--out", path(dir.path())])
        .env("SPIKESCAN_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&threads), 2);
}

#[test]
fn fixed_length_neuron_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = spikescan(&[
        "extrapolate",
        "--neuron",
        "psn",
        "--train-t",
        "32",
        "--eval-t",
        "32,64",
        "--epochs",
        "1",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("extrapolate.csv")).unwrap();
    assert!(csv.starts_with("t,loss,error\n"));
    assert!(csv.contains("64,,"));
}

#[test]
fn missing_manifest_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = spikescan(&["replay", path(&dir.path().join("absent.json"))]);
    assert_eq!(code(&out), 4);
}

#[test]
fn props_report_matches_expectation() {
    let dir = tempfile::tempdir().unwrap();
    let out = spikescan(&[
        "props",
        "--neuron",
        "if-soft",
        "--property",
        "short-control",
        "--trials",
        "300",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&std::fs::read(dir.path().join("props.json")).unwrap()).unwrap();
    assert_eq!(v["matches"], true);
    assert_eq!(v["expected"], false);
}

#[test]
fn gen_data_replays_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a.spkn");
    let out = spikescan(&["gen-data", "--dataset", "pixel", "--n", "12", "--seed", "4", "--out", path(&first)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = dir.path().join("a.spkn.manifest.json");
    assert!(manifest.is_file());

    let second = dir.path().join("b.spkn");
    let out = spikescan(&["replay", path(&manifest), "--out", path(&second)]);
    assert_eq!(code(&out), 0);
    let bytes = std::fs::read(&first).unwrap();
    assert_eq!(bytes, std::fs::read(&second).unwrap());
    assert!(bytes.starts_with(b"SPKN1"));

    let tensors = spikescan::neurons::container::load(&first).unwrap();
    let names: Vec<&str> = tensors.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["x", "label"]);
    assert_eq!(tensors[0].1.shape(), &[12, 16, 16]);
}
