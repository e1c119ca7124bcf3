use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_groupext")).args(args).output().expect("binary runs")
}

fn config(name: &str) -> String {
    configs().join(format!("{name}.json")).display().to_string()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn missing_field_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("polya_d1_asym")).unwrap();
    let mut v: Value = serde_json::from_str(&text).unwrap();
    v.as_object_mut().unwrap().remove("psi");
    let path = dir.path().join("broken.json");
    std::fs::write(&path, v.to_string()).unwrap();
    let out = run(&["spectrum", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("psi"));

    std::fs::write(&path, "{ \"symbols\": [").unwrap();
    assert_eq!(run(&["zcount", "--config", path.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn free_group_spectrum_carries_provenance() {
    let v = json(&run(&["spectrum", "--config", &config("free_d2_sym")]));
    assert_eq!(v["command"], "spectrum");
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);
    assert!(v["seed"].is_u64());
    let rho = v["result"]["rho_hat"].as_f64().unwrap();
    assert!((rho / (3f64.sqrt() / 2.0) - 1.0).abs() < 0.02, "{rho}");
}

#[test]
fn output_does_not_depend_on_worker_count() {
    let cfg = config("free_d2_sym");
    let one = run(&["spectrum", "--workers", "1", "--config", &cfg]);
    let three = run(&["spectrum", "--workers", "3", "--config", &cfg]);
    assert!(one.status.success());
    assert_eq!(one.stdout, three.stdout);
    let cfg = config("polya_d1_asym");
    let a = run(&["paths", "--count", "5", "--len", "20", "--workers", "1", "--config", &cfg]);
    let b = run(&["paths", "--count", "5", "--len", "20", "--workers", "2", "--config", &cfg]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn zcount_csv_with_rational_column() {
    let out = run(&["zcount", "--exact", "--config", &config("polya_d1_asym")]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    assert_eq!(lines.next().unwrap(), "n,Z_float,log_Z,Z_rational,states_visited");
    let row2: Vec<&str> = lines.nth(2).unwrap().split(',').collect();
    assert_eq!(row2[0], "2");
    assert_eq!(row2[3], "8/25");
}

#[test]
fn out_directory_receives_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("polya_d1_sym");
    let out = run(&["classify", "--out", dir.path().to_str().unwrap(), "--config", &cfg]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("classify.json")).unwrap()).unwrap();
    assert_eq!(v["result"]["verdict"], "conservative_ergodic");
}

#[test]
fn example_commands_check_the_family() {
    assert_eq!(run(&["example-zd", "--config", &config("free_d2_sym")]).status.code(), Some(2));
    let v = json(&run(&["example-fd", "--config", &config("free_d2_sym")]));
    assert!((v["result"]["rho"].as_f64().unwrap() - 3f64.sqrt() / 2.0).abs() < 1e-12);
    assert!(run(&["example-zd", "--config", &config("polya_d1_asym")]).status.success());
}

#[test]
fn paths_csv_layout() {
    let out = run(&["paths", "--count", "3", "--len", "10", "--seed", "7", "--config", &config("polya_d1_asym")]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# config_hash="));
    assert!(text.contains("seed=7"));
    assert_eq!(text.lines().count(), 2 + 30);
}

#[test]
fn dimension_and_validate_on_asymmetric_walk() {
    let v = json(&run(&["dimension", "--n", "20", "--config", &config("polya_d1_sym")]));
    assert!((v["result"]["delta"].as_f64().unwrap() - 1.0).abs() < 1e-4);
    assert_eq!(v["result"]["amenable_consistent"], true);

    let v = json(&run(&["validate", "--config", &config("polya_d1_asym")]));
    assert_eq!(v["result"]["passed"], true);
}
