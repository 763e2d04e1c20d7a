use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn hipster(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hipster"))
        .env("HIPSTER_OUT_DIR", out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn evolve_zero_levels_echoes_input() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in.csv");
    std::fs::write(&input, "j,weight\n-1,0.25\n0,0.5\n1,0.25\n").unwrap();
    let out = hipster(tmp.path(), &["evolve", "--flavor", "sym", "--n", "0", "--input", input.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let pmf = std::fs::read_to_string(tmp.path().join("evolve/pmf.csv")).unwrap();
    assert_eq!(pmf, "j,weight\n-1,0.25\n0,0.5\n1,0.25\n");
}

#[test]
fn scheme_identity_check_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = hipster(tmp.path(), &["scheme", "--preset", "pme", "--M", "4", "--n", "64", "--identity-check"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&tmp.path().join("scheme"));
    assert_eq!(m["checks"][0]["name"], "identity");
    assert_eq!(m["checks"][0]["pass"], true);
    assert!(tmp.path().join("scheme/snapshot_64.csv").exists());
}

#[test]
fn configuration_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(hipster(tmp.path(), &["evolve", "--q", "1.5"]).status.code(), Some(2));
    let cfg = tmp.path().join("bad.json");
    std::fs::write(&cfg, r#"{"evolve": {"levels": 3}}"#).unwrap();
    let out = hipster(tmp.path(), &["--config", cfg.to_str().unwrap(), "evolve"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("levels"));
}

#[test]
fn failed_checks_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let out = hipster(tmp.path(), &["theorem1", "--n", "100", "--threshold", "0.001"]);
    assert_eq!(out.status.code(), Some(3));
    let m = manifest(&tmp.path().join("theorem1"));
    assert_eq!(m["checks"][0]["pass"], false);
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.json");
    std::fs::write(&cfg, r#"{"seed": 9, "evolve": {"flavor": "sym", "n": 50}}"#).unwrap();
    let out = hipster(tmp.path(), &["--config", cfg.to_str().unwrap(), "evolve", "--n", "20"]);
    assert!(out.status.success());
    let m = manifest(&tmp.path().join("evolve"));
    assert_eq!(m["seed"], 9);
    assert_eq!(m["config"]["params"]["flavor"], "sym");
    assert_eq!(m["config"]["params"]["n"], 20);
}

#[test]
fn simulate_is_deterministic_across_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["simulate", "--rule", "sym", "--n", "9", "--samples", "5000", "--seed", "4"];
    assert!(hipster(a.path(), &[&args[..], &["--threads", "1"]].concat()).status.success());
    assert!(hipster(b.path(), &[&args[..], &["--threads", "3"]].concat()).status.success());
    for name in ["samples.csv", "samples.json"] {
        let x = std::fs::read(a.path().join("simulate").join(name)).unwrap();
        let y = std::fs::read(b.path().join("simulate").join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
}

#[test]
fn manifest_hashes_match_files() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(hipster(tmp.path(), &["couple", "--trials", "10"]).status.success());
    let dir = tmp.path().join("couple");
    let m = manifest(&dir);
    assert_eq!(m["command"], "couple");
    let files = m["files"].as_array().unwrap();
    assert_eq!(files.len(), 3);
    for f in files {
        let bytes = std::fs::read(dir.join(f["name"].as_str().unwrap())).unwrap();
        assert_eq!(f["bytes"].as_u64().unwrap() as usize, bytes.len());
        assert_eq!(f["sha256"].as_str().unwrap(), format!("{:x}", Sha256::digest(&bytes)));
    }
    assert!(m["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));
}

#[test]
fn negative_steps_parse() {
    let tmp = tempfile::tempdir().unwrap();
    let out = hipster(tmp.path(), &["evolve", "--flavor", "general", "--steps", "-1:0.5,2:0.5", "--n", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
