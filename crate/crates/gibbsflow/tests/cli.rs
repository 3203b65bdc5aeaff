use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gibbsflow::config::ExperimentConfig;
use gibbsflow::report::Manifest;

fn gibbsflow(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gibbsflow")).args(args).current_dir(dir).env_remove("GIBBSFLOW_SEED").output().unwrap()
}

fn configs() -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut out: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    out.sort();
    out
}

#[test]
fn shipped_configs_load() {
    let all = configs();
    assert!(!all.is_empty());
    for p in all {
        let cfg = ExperimentConfig::load(&p).unwrap_or_else(|e| panic!("{}: {}", p.display(), e));
        cfg.check().unwrap();
        assert!(cfg.experiment.is_some());
    }
}

#[test]
fn validate_writes_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = gibbsflow(&["validate", "--preset", "SYS-A", "--out", "v"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = Manifest::read(&tmp.path().join("v")).unwrap();
    assert_eq!((m.experiment.as_str(), m.system.as_str(), m.status.as_str()), ("validate", "SYS-A", "ok"));
    assert_eq!(m.config_sha256.len(), 64);
}

#[test]
fn default_output_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let out = gibbsflow(&["eigen", "--preset", "SYS-B"], tmp.path());
    assert!(out.status.success());
    assert!(tmp.path().join("runs/SYS-B/eigen/manifest.json").is_file());
}

#[test]
fn constant_roof_reports_no_contraction() {
    let tmp = tempfile::tempdir().unwrap();
    let out = gibbsflow(&["contraction", "--preset", "SYS-A", "--out", "c"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let m = Manifest::read(&tmp.path().join("c")).unwrap();
    assert!(m.flags.iter().any(|f| f == "no_contraction: constant_roof_detected"), "{:?}", m.flags);
}

#[test]
fn constant_roof_cancellation_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let out = gibbsflow(&["cancellation", "--preset", "SYS-A"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn malformed_config_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.json"), r#"{"experiment":"uni","preset":"SYS-B","params":{"dleta":0.1}}"#).unwrap();
    let out = gibbsflow(&["uni", "--config", "bad.json"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/params/dleta"));

    fs::write(tmp.path().join("gate.json"), r#"{"preset":"SYS-B","params":{"delta":0.3}}"#).unwrap();
    let out = gibbsflow(&["cancellation", "--config", "gate.json"], tmp.path());
    assert_eq!(out.status.code(), Some(1));

    let out = gibbsflow(&["validate", "--preset", "SYS-Z"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bundle_without_runs_fails() {
    let tmp = tempfile::tempdir().unwrap();
    fs::create_dir(tmp.path().join("empty")).unwrap();
    let out = gibbsflow(&["bundle", "empty"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bundle_merges_runs() {
    let tmp = tempfile::tempdir().unwrap();
    for (exp, preset) in [("cohomology", "SYS-A"), ("contraction", "SYS-A"), ("cohomology", "SYS-B")] {
        let out = gibbsflow(&[exp, "--preset", preset], tmp.path());
        assert!(out.status.success(), "{} {}", exp, String::from_utf8_lossy(&out.stderr));
    }
    let out = gibbsflow(&["bundle", "runs", "--out", "b"], tmp.path());
    assert!(out.status.success());
    let table = fs::read_to_string(tmp.path().join("b/trichotomy.dat")).unwrap();
    assert!(table.lines().any(|l| l.starts_with("SYS-A yes") && l.contains("none")), "{}", table);
    assert!(table.lines().any(|l| l.starts_with("SYS-B no")), "{}", table);
}

#[test]
fn seed_comes_from_environment_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"experiment":"gibbs-audit","preset":"SYS-B","seed":1,"params":{"samples":20000,"depth":3}}"#;
    fs::write(tmp.path().join("g.json"), cfg).unwrap();
    let run = |out: &str, seed: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_gibbsflow"));
        cmd.args(["gibbs-audit", "--config", "g.json", "--out", out]).current_dir(tmp.path());
        match seed {
            Some(s) => cmd.env("GIBBSFLOW_SEED", s),
            None => cmd.env_remove("GIBBSFLOW_SEED"),
        };
        let o = cmd.output().unwrap();
        (o.status.code(), fs::read(tmp.path().join(out).join("crosscheck.csv")).ok())
    };
    let a = run("a", None);
    let b = run("b", None);
    let c = run("c", Some("99"));
    assert_eq!(a.0, Some(0));
    assert_eq!(a, b);
    assert_ne!(a.1, c.1);
    assert_eq!(Manifest::read(&tmp.path().join("c")).unwrap().seed, 99);
    assert_eq!(run("d", Some("x")).0, Some(1));
}

#[test]
fn custom_system_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/custom-system.json");
    let out = gibbsflow(&["transversality", "--config", cfg.to_str().unwrap(), "--out", "t"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = Manifest::read(&tmp.path().join("t")).unwrap();
    assert_eq!(m.system, "custom");
}
