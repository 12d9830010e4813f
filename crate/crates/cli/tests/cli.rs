use std::path::{Path, PathBuf};
use std::process::Command;

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/examples").join(name)
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_o2pac"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .env_remove("O2PAC_OUT_DIR")
        .output()
        .unwrap()
}

#[test]
fn verify_identity_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&example("verify-identity.json"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("PASS verify-identity"));
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("verify-identity.json")).unwrap()).unwrap();
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["schema"], "o2pac.summary");
    assert!(dir.path().join("verify-identity.csv").exists());
}

#[test]
fn peeking_fixture_fails_the_audit() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&example("regret-audit-peeking.json"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("FAIL regret-audit"));
}

#[test]
fn bad_config_exits_with_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{ "schema_version": 1, "command": "coverage", "delta": 1.5 }"#).unwrap();
    let out = run(&cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("delta"));
}

#[test]
fn same_seed_gives_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = example("concentration.json");
    assert_eq!(run(&cfg, a.path(), &["--seed", "9", "--jobs", "1"]).status.code(), Some(0));
    assert_eq!(run(&cfg, b.path(), &["--seed", "9", "--jobs", "3"]).status.code(), Some(0));
    for f in ["concentration.json", "concentration.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}
