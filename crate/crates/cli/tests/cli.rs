use std::process::Command;

fn peakloc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_peakloc"))
}

#[test]
fn coherence_run_reports_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    std::fs::write(&config, "[coherence]\nsizes = [11, 21]\n").unwrap();
    let out = dir.path().join("out");
    let o = peakloc()
        .args(["coherence", "--seed", "4", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["status"], "ok");
    assert_eq!(v["command"], "coherence");
    assert_eq!(v["seed"], 4);
    let files = v["files"].as_array().unwrap();
    assert_eq!(files.len(), 3);
    for f in files {
        assert!(std::path::Path::new(f.as_str().unwrap()).exists());
    }
    let csv = std::fs::read_to_string(out.join("coherence.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn missing_elevation_path_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = peakloc()
        .arg("elevation")
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(v["status"], "error");
    assert_eq!(v["kind"], "config");
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let o = peakloc().arg("frobnicate").output().unwrap();
    assert!(!o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(v["kind"], "usage");
}

#[test]
fn unreadable_config_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "[sweep\n").unwrap();
    let o = peakloc()
        .args(["sweep", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert!(!o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(v["status"], "error");
}
