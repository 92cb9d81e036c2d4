use std::fs;
use std::process::Command;

fn tbg() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tbg"));
    cmd.env("RUST_LOG", "warn");
    cmd
}

#[test]
fn bands_writes_manifest_and_tagged_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.cfg");
    fs::write(&cfg, "# coarse sampling\nbands.per_segment = 4\nbands.k_grid = 4\n").unwrap();
    let out = dir.path().join("out");
    let status = tbg()
        .args(["bands", "--threads", "1", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(manifest["study"], "bands");
    let files = manifest["files"].as_array().unwrap();
    assert!(files.iter().any(|f| f["path"] == "bands.csv"));
    for f in files {
        let text = fs::read_to_string(out.join(f["path"].as_str().unwrap())).unwrap();
        let mut lines = text.lines();
        let meta = lines.next().unwrap();
        assert!(meta.starts_with("# metadata: {"), "{meta}");
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        let listed: Vec<&str> = f["columns"].as_array().unwrap().iter().map(|c| c.as_str().unwrap()).collect();
        assert_eq!(header, listed);
    }
    let bands = fs::read_to_string(out.join("bands.csv")).unwrap();
    assert_eq!(bands.lines().nth(1), Some("kx,ky,band_index,energy"));
}

#[test]
fn bound_prints_certificate() {
    let out = tbg().args(["bound", "--threads", "1"]).output().unwrap();
    assert!(out.status.success());
    let cert: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(cert["alpha_max"].as_f64().unwrap() > 0.0);
    assert!(cert["ln_bound"].as_f64().is_some());
}

#[test]
fn unknown_config_key_is_rejected_with_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "bands.k_grid = 4\nbands.colour = red\n").unwrap();
    let out = tbg().args(["bands", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");
}
