//! Exit codes and files of the `dcs` binary.

use std::path::{Path, PathBuf};
use std::process::Command;

fn dcs(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_dcs")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn missing_config_is_a_config_error() {
    let (code, _, err) = dcs(&["eval", "--config", "/nonexistent/x.toml"]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "controller = \"pi\"\n[event]\ncap_fraction = 0.5\n").unwrap();
    let (code, _, err) = dcs(&["eval", "--config", arg(&cfg), "--out", arg(dir.path())]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn eval_of_learner_without_checkpoint_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("desk_safe.toml");
    let (code, _, err) = dcs(&["eval", "--config", arg(&cfg), "--out", arg(dir.path())]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("checkpoint"), "{err}");
}

#[test]
fn pi_eval_writes_trace_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("desk_pi.toml");
    let (code, out, err) = dcs(&["eval", "--config", arg(&cfg), "--out", arg(dir.path())]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("pi"));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("eval_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["controller"], "pi");
    assert!(dir.path().join("trace.csv").exists());
}

#[test]
fn validate_passes_and_catches_energy_bug() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) = dcs(&["validate", "--lp-cases", "500", "--out", arg(dir.path())]);
    assert_eq!(code, 0, "{out}");
    assert!(dir.path().join("validation.json").exists());
    let (code, out, _) = dcs(&["validate", "--lp-cases", "100", "--energy-bug", "0.9"]);
    assert_eq!(code, 1, "{out}");
    assert!(out.contains("FAIL"));
}

#[test]
fn scenario_gen_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("desk_pi.toml");
    let (a, b, c) = (dir.path().join("a.csv"), dir.path().join("b.csv"), dir.path().join("c.csv"));
    for (p, seed) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        let (code, _, err) = dcs(&["scenario", "gen", "--config", arg(&cfg), "--seed", seed, "--out", arg(p)]);
        assert_eq!(code, 0, "{err}");
    }
    let read = |p: &Path| std::fs::read(p).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn sweep_rejects_unordered_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("desk_pi.toml");
    let (code, _, err) = dcs(&[
        "sweep", "--config", arg(&cfg), "--out", arg(dir.path()), "--axis", "duration", "--values", "15,5",
    ]);
    assert_eq!(code, 2, "{err}");
}
