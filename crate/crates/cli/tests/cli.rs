use std::fs;
use std::path::Path;
use std::process::Command;

use sha2::{Digest, Sha256};

fn fdeg(config: &str, out: &Path) -> std::process::Output {
    let cfg = out.with_extension("json");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_fdeg"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn manifest(out: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn gen_writes_exact_generator() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("gen");
    let o = fdeg(r#"{"command": "gen", "generator": {"d": 1.5, "alpha": 0.8}}"#, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let g: serde_json::Value = serde_json::from_slice(&fs::read(out.join("generator.json")).unwrap()).unwrap();
    let (n, r) = (g["N"].as_f64().unwrap(), g["r"].as_f64().unwrap());
    assert!((n * r.powf(1.5) - 1.0).abs() < 1e-9);
    assert!(g["anchors"][0].is_array());
}

#[test]
fn default_divergence_sweep_increases() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    let o = fdeg(r#"{"command": "sweep-diverge"}"#, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(out.join("divergence.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    assert_eq!(
        headers.iter().collect::<Vec<_>>(),
        ["m", "sup_vm", "seminorm", "eps_m", "q_count", "lp_exact", "lp_quad_lo", "lp_quad_hi", "ratio"]
    );
    let lp: Vec<f64> = rdr.records().map(|r| r.unwrap()[5].parse().unwrap()).collect();
    assert_eq!(lp.len(), 5);
    assert!(lp.windows(2).all(|w| w[1] > w[0]), "{lp:?}");
}

#[test]
fn empty_range_writes_only_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("empty");
    let o = fdeg(r#"{"command": "sweep-diverge", "m_range": []}"#, &out);
    assert!(o.status.success());
    let names: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names, ["manifest.json"]);
    assert_eq!(manifest(&out)["files"].as_array().unwrap().len(), 0);
}

#[test]
fn validation_errors_exit_two_and_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let o = fdeg(r#"{"command": "gen", "generator": {"d": 2.4, "alpha": 0.7}}"#, &tmp.path().join("bad"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("generator.d"));
    let o = fdeg(r#"{"command": "gen", "colour": 3}"#, &tmp.path().join("bad2"));
    assert_eq!(o.status.code(), Some(2));
    let o = fdeg(r#"{"command": "sweep-converge", "generator": {"d": 1.5, "alpha": 0.7}, "p": 2}"#, &tmp.path().join("bad3"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn memory_guard_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let o = fdeg(r#"{"command": "prefractal", "m": 8}"#, &tmp.path().join("big"));
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn manifest_hashes_every_file_and_csv_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"command": "stokes", "m": 1, "k_max": 8, "generator": {"d": 1.2, "alpha": 0.7}}"#;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(fdeg(cfg, &a).status.success());
    assert!(fdeg(cfg, &b).status.success());
    let m = manifest(&a);
    assert_eq!(m["command"], "stokes");
    assert_eq!(m["config"]["k_max"], 8);
    let files = m["files"].as_array().unwrap();
    assert!(files.len() >= 3);
    for f in files {
        let rel = f["path"].as_str().unwrap();
        let bytes = fs::read(a.join(rel)).unwrap();
        let hex: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(f["sha256"].as_str().unwrap(), hex);
        if rel.ends_with(".csv") {
            assert_eq!(bytes, fs::read(b.join(rel)).unwrap(), "{rel}");
        }
    }
}

#[test]
fn threads_and_seed_flags_are_accepted() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    fs::write(&cfg, r#"{"command": "degree", "m": 0}"#).unwrap();
    let out = tmp.path().join("deg");
    let o = Command::new(env!("CARGO_BIN_EXE_fdeg"))
        .args(["--threads", "1", "--seed", "9", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(m["config"]["seed"], 9);
    assert_eq!(m["threads"], 1);
    let rep: serde_json::Value = serde_json::from_slice(&fs::read(out.join("lp_report.json")).unwrap()).unwrap();
    assert_eq!(rep["bracket_contains_exact"], true);
    assert_eq!(rep["homotopy_stable"], true);
}
