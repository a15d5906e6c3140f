use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use patchflow::config::{parse_config, Format};
use patchflow::snapshot::Snapshot;
use patchflow_core::record::parse_csv;

const EQUILIBRIUM: &str = r#"
[simulation]
grid = { n = 32, length = 6.283185307179586 }
mu = 0.1
lambda = 1.0
pressure = { type = "gamma", a = 1.0, gamma = 2.0 }
rho_tilde = 1.0
t_end = 0.2
diagnostic_interval = 0.05

[initial]
kind = "equilibrium"
"#;

const PATCH: &str = r#"
[simulation]
grid = { n = 64, length = 16.0 }
mu = 1.0
lambda = 8.0
pressure = { type = "gamma", a = 1.0, gamma = 2.0 }
rho_tilde = 1.0
t_end = 0.1
diagnostic_interval = 0.02
snapshot_interval = 0.05

[initial]
kind = "patch"
swirl = { center = [8.6, 8.3], amplitude = 0.5, radius = 1.0 }

[initial.patch]
alpha = 2.0
rho_tilde = 1.0
boundary = { x_cos = [8.0, 1.0], y_cos = [8.0], y_sin = [0.0, 1.0] }
"#;

fn bin(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_patchflow"))
        .args(args)
        .env("SNS_OUTPUT_DIR", out)
        .env_remove("SNS_WORKERS")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn equilibrium_run_exits_cleanly_with_zero_functionals() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "eq.toml", EQUILIBRIUM);
    let out = dir.path().join("out");
    let o = bin(&["run", cfg.to_str().unwrap()], &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (hash, rows) = parse_csv(&std::fs::read_to_string(out.join("diagnostics.csv")).unwrap()).unwrap();
    assert_eq!(hash, parse_config(EQUILIBRIUM, Format::Toml).unwrap().hash);
    assert_eq!(rows.len(), 5);
    for r in rows {
        assert_eq!(r.energy, Some(0.0));
        assert_eq!(r.a1, Some(0.0));
    }
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["status"], "completed");
}

#[test]
fn toml_and_json_hash_alike() {
    let toml_cfg = parse_config(PATCH, Format::Toml).unwrap();
    let json = serde_json::to_string_pretty(&toml_cfg.config).unwrap();
    let json_cfg = parse_config(&json, Format::Json).unwrap();
    assert_eq!(toml_cfg.hash, json_cfg.hash);
    assert_eq!(toml_cfg.canonical, json_cfg.canonical);
    assert!(!toml_cfg.canonical.contains(' '));
}

#[test]
fn bad_configs_exit_one_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", &EQUILIBRIUM.replace("mu = 0.1", "mu = 0.1\nmuu = 2"));
    let o = bin(&["run", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("muu") && err.contains("line"), "{err}");

    let cfg = write(dir.path(), "neg.json", r#"{"simulation": 3}"#);
    assert_eq!(code(&bin(&["run", cfg.to_str().unwrap()], &dir.path().join("out"))), 1);
    let cfg = write(dir.path(), "visc.toml", &EQUILIBRIUM.replace("mu = 0.1", "mu = -0.1"));
    assert_eq!(code(&bin(&["run", cfg.to_str().unwrap()], &dir.path().join("out"))), 1);
    assert_eq!(code(&bin(&["run", "/nonexistent.toml"], &dir.path().join("out"))), 1);
    assert_eq!(code(&bin(&["frobnicate"], &dir.path().join("out"))), 1);
}

#[test]
fn patch_runs_are_deterministic_and_resume_continues_them() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "patch.toml", PATCH);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&bin(&["run", cfg.to_str().unwrap()], &a)), 0);
    assert_eq!(code(&bin(&["run", cfg.to_str().unwrap()], &b)), 0);
    let csv_a = std::fs::read(a.join("diagnostics.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read(b.join("diagnostics.csv")).unwrap());
    assert_eq!(std::fs::read(a.join("curve.csv")).unwrap(), std::fs::read(b.join("curve.csv")).unwrap());
    assert!(std::fs::read_to_string(a.join("curve.csv")).unwrap().starts_with("theta,x,y\n"));

    let mut snaps: Vec<PathBuf> = std::fs::read_dir(a.join("snapshots")).unwrap().map(|e| e.unwrap().path()).collect();
    snaps.sort();
    assert_eq!(snaps.len(), 3, "{snaps:?}");
    let mid = &snaps[1];
    let snap = Snapshot::read(mid).unwrap();
    assert!((snap.header.t - 0.05).abs() < 1e-12);
    assert_eq!(Snapshot::from_bytes(&snap.to_bytes()).unwrap().to_bytes(), std::fs::read(mid).unwrap());

    // resume into b, whose csv is cut back to the snapshot time first
    let o = bin(&["resume", mid.to_str().unwrap(), "--config", cfg.to_str().unwrap()], &b);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(csv_a, std::fs::read(b.join("diagnostics.csv")).unwrap());
    let last_a = Snapshot::read(&snaps[2]).unwrap();
    let last_b = Snapshot::read(&b.join("snapshots").join(snaps[2].file_name().unwrap())).unwrap();
    assert_eq!(last_a.state, last_b.state);
    assert_eq!(last_a.markers, last_b.markers);

    // another config must be refused
    let other = write(dir.path(), "other.toml", &PATCH.replace("t_end = 0.1", "t_end = 0.2"));
    let o = bin(&["resume", mid.to_str().unwrap(), "--config", other.to_str().unwrap()], &b);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("hash"));
}

#[test]
fn damaged_snapshots_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("demo");
    let o = bin(&["patch-demo", "--n", "128"], &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let bytes = std::fs::read(out.join("initial.sns")).unwrap();
    let snap = Snapshot::from_bytes(&bytes).unwrap();
    assert_eq!(snap.to_bytes(), bytes);
    assert_eq!(snap.family.as_ref().unwrap().members.len(), 3);
    assert!(Snapshot::from_bytes(&bytes[..bytes.len() - 8]).unwrap_err().contains("payload"));
    assert!(Snapshot::from_bytes(&bytes[..10]).is_err());
    let mut wrong = bytes.clone();
    wrong[0] = b'X';
    assert!(Snapshot::from_bytes(&wrong).unwrap_err().contains("magic"));
    let truncated = write(dir.path(), "cut.sns", "SNSV1");
    assert_eq!(code(&bin(&["resume", truncated.to_str().unwrap()], &out)), 1);

    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("patch_demo.json")).unwrap()).unwrap();
    assert!((report["area"].as_f64().unwrap() - std::f64::consts::PI).abs() < 1e-3);
    assert!(out.join("patch.toml").exists() && out.join("curve.csv").exists());
}

#[test]
fn sweeps_validate_their_nu_list() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "eq.toml", EQUILIBRIUM);
    let ok = write(dir.path(), "one.json", r#"{"base": "eq.toml", "nus": [2.0]}"#);
    let out = dir.path().join("out");
    let o = bin(&["sweep", ok.to_str().unwrap()], &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    assert!(doc["div_fit"].is_null());
    assert_eq!(doc["members"].as_array().unwrap().len(), 1);
    assert!(out.join(doc["members"][0]["diagnostics"].as_str().unwrap()).exists());
    assert!(out.join("convergence.csv").exists());

    for nus in ["[4.0, 2.0]", "[2.0, 2.0]", "[]", "\"ten\""] {
        let bad = write(dir.path(), "bad.json", &format!(r#"{{"base": "eq.toml", "nus": {nus}}}"#));
        assert_eq!(code(&bin(&["sweep", bad.to_str().unwrap()], &out)), 1, "{nus}");
    }
}

#[test]
fn verify_suites() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = bin(&["verify", "spectral-identities", "--seed", "3"], &out);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS parseval"));
    assert_eq!(code(&bin(&["verify", "no-such-suite"], &out)), 1);

    let o = bin(&["verify", "inequalities", "--seed", "8", "--samples", "40"], &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(out.join("verify_inequalities.json").exists());

    // a constants file with a shrunken constant must fail the suite
    let mut c = patchflow_core::corpus::Constants::committed();
    c.clms.value = 1e-6;
    let path = write(dir.path(), "tight.json", &c.to_json());
    let o = bin(&["verify", "inequalities", "--seed", "8", "--samples", "40", "--constants", path.to_str().unwrap()], &out);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL clms"));
}

#[test]
fn step_failure_exits_two_with_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    // a strong vortex and a step far above the CFL limit empty a cell
    let text = PATCH.replace("t_end = 0.1", "t_end = 0.1\nfixed_dt = 0.05").replace("amplitude = 0.5", "amplitude = 50.0");
    let cfg = write(dir.path(), "fast.toml", &text);
    let out = dir.path().join("out");
    let o = bin(&["run", cfg.to_str().unwrap()], &out);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["status"], "failed");
    assert!(summary["error"].is_string());
    let (_, rows) = parse_csv(&std::fs::read_to_string(out.join("diagnostics.csv")).unwrap()).unwrap();
    assert!(!rows.is_empty());
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["smooth.toml", "patch.toml"] {
        let text = std::fs::read_to_string(dir.join(name)).unwrap();
        parse_config(&text, Format::Toml).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    let sweep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(sweep["base"], "patch.toml");
}
