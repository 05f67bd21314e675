use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pme-lab"));
    c.env_remove("PME_LAB_OUTPUT_DIR");
    c
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn version_prints_package_version() {
    let o = bin().arg("version").output().unwrap();
    assert!(o.status.success());
    assert_eq!(
        stdout(&o).trim(),
        format!("pme-lab {}", env!("CARGO_PKG_VERSION"))
    );
}

#[test]
fn list_checks_has_the_documented_ids() {
    let o = bin().args(["list-checks", "--json"]).output().unwrap();
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let ids: Vec<&str> = v
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["id"].as_str().unwrap())
        .collect();
    for id in [
        "est1",
        "thm3",
        "e671",
        "thm6",
        "thm1_case1",
        "thm1_case2",
        "thm1_case3",
        "thm1_case4",
        "ab_diagnostic",
        "bsde_residual",
        "submartingale_z2",
        "submartingale_m",
        "q_integral",
        "flow_z",
        "equivalence_audit",
    ] {
        assert!(ids.contains(&id), "{id}");
    }
    let text = bin().arg("list-checks").output().unwrap();
    assert!(stdout(&text).contains("submartingale_m"));
}

#[test]
fn constant_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args([
            "run",
            bundled("constant-suite.json").to_str().unwrap(),
            "--output-dir",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let r = report(dir.path());
    assert_eq!(r["overall"]["pass"], true);
    assert!(r["checks"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["status"] == "pass"));
    assert!(dir.path().join("checks/00_est1.csv").exists());
}

#[test]
fn regime_gate_is_recorded_and_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["run", bundled("regime-gate.json").to_str().unwrap()])
        .env("PME_LAB_OUTPUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let r = report(dir.path());
    assert_eq!(r["checks"][0]["id"], "thm1_case1");
    assert_eq!(r["checks"][0]["status"], "regime_invalid");
    assert_eq!(r["checks"][0]["regime_valid"], false);
    assert_eq!(r["overall"]["counts"]["regime_invalid"], 2);
}

#[test]
fn unknown_id_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    let text = std::fs::read_to_string(bundled("constant-suite.json"))
        .unwrap()
        .replace("\"thm3\"", "\"thm9\"");
    std::fs::write(&cfg, text).unwrap();
    let o = bin()
        .arg("run")
        .arg(&cfg)
        .arg("--output-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("thm9"));
}

#[test]
fn invalid_field_names_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    let text = std::fs::read_to_string(bundled("constant-suite.json"))
        .unwrap()
        .replace("\"m\": 2.0", "\"m\": -1.0");
    std::fs::write(&cfg, text).unwrap();
    let o = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("fields.one.m"));
}

#[test]
fn failing_check_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("wave.json");
    std::fs::write(
        &cfg,
        r#"{ "scenario": "wave",
             "fields": { "w": { "m": 2.0, "grid": { "lo": 0.0, "hi": 1.0, "points": 31, "boundary": "dirichlet" },
                                "initial": { "kind": "traveling_wave", "speed": 1.0, "shift": 1.5, "margin": 0.2 },
                                "t_final": 0.05 } },
             "checks": [ { "id": "solver_convergence", "field": "w", "points": [31, 63] } ] }"#,
    )
    .unwrap();
    let o = bin()
        .arg("run")
        .arg(&cfg)
        .arg("--output-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert_eq!(report(dir.path())["checks"][0]["status"], "fail");
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = bin()
        .args([
            "run",
            bundled("constant-suite.json").to_str().unwrap(),
            "--output-dir",
        ])
        .arg(blocker.join("out"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
}
