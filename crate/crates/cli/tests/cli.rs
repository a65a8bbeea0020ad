use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use compbound::netfwd::DenseNetwork;
use compbound::tensor_store::{load_manifest, read_tensor_file, tensor_path};
use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_compbound")).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Planted 4-layer fixture whose hidden layers compress readily.
fn fixture(dir: &Path) -> PathBuf {
    let fx = dir.join("fx");
    ok(&["synth", "--kind", "lowrank-cov", "--widths", "32,32,32,32,1", "--n", "512", "--seed", "11", "--out", s(&fx)]);
    fx.join("manifest.json")
}

fn network(manifest: &Path) -> DenseNetwork {
    let m = load_manifest(manifest).unwrap();
    let t = read_tensor_file(tensor_path(manifest, &m)).unwrap();
    DenseNetwork::from_manifest(&m, &t).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn threshold_outside_unit_interval_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture(dir.path());
    let out = run(&["tables", "--manifest", s(&m), "--nu", "1.5", "--out", s(&dir.path().join("t"))]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["tables", "--manifest", s(&m), "--nu", "0", "--out", s(&dir.path().join("t"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn exhausted_retries_exit_with_compression_failure() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture(dir.path());
    let out = run(&[
        "compress", "--manifest", s(&m), "--method", "covariance", "--target-r1", "0.05",
        "--max-retries", "0", "--out", s(&dir.path().join("c")),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_inputs_exit_with_prerequisite_code() {
    let dir = tempfile::tempdir().unwrap();
    let cnn = dir.path().join("cnn");
    ok(&["synth", "--kind", "toy-cnn", "--out", s(&cnn)]);
    let out = run(&["compress", "--manifest", s(&cnn.join("manifest.json")), "--method", "rank", "--out", s(&dir.path().join("c"))]);
    assert_eq!(out.status.code(), Some(4));

    let m = fixture(dir.path());
    let out = run(&["bound", "--theorem", "t4lip", "--manifest", s(&m), "--out", s(&dir.path().join("b"))]);
    assert_eq!(out.status.code(), Some(4));
    let out = run(&["bound", "--theorem", "t3", "--out", s(&dir.path().join("b"))]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn missing_manifest_is_not_a_success() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["spectra", "--manifest", s(&dir.path().join("nope.json")), "--out", s(dir.path())]);
    assert!(!out.status.success());
}

#[test]
fn covariance_compression_is_deterministic_and_within_radius() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&["compress", "--manifest", s(&m), "--method", "covariance", "--target-r1", "0.05", "--seed", "4", "--out", s(out)]);
    }
    assert_eq!(std::fs::read(a.join("tensors.cbt")).unwrap(), std::fs::read(b.join("tensors.cbt")).unwrap());
    assert_eq!(std::fs::read(a.join("report.json")).unwrap(), std::fs::read(b.join("report.json")).unwrap());

    let report = json(&a.join("report.json"));
    let r = &report["result"];
    assert!(r["realized_error"].as_f64().unwrap() <= r["r_hat"].as_f64().unwrap() + 1e-9);
    let compressed = network(&a.join("manifest.json"));
    let widths: Vec<usize> = r["widths"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap() as usize).collect();
    assert_eq!(compressed.widths(), widths);
}

#[test]
fn full_rank_compression_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture(dir.path());
    let out = dir.path().join("full");
    ok(&["compress", "--manifest", s(&m), "--method", "rank", "--out", s(&out)]);
    let report = json(&out.join("report.json"));
    assert!(report["result"]["realized_error"].as_f64().unwrap() < 1e-12);
    let (orig, comp) = (network(&m), network(&out.join("manifest.json")));
    for (a, b) in orig.weights().iter().zip(comp.weights()) {
        assert!((a - b).abs().max() < 1e-12);
    }
}

#[test]
fn spectra_writes_plot_data_and_fits() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture(dir.path());
    let out = dir.path().join("sp");
    ok(&["spectra", "--manifest", s(&m), "--out", s(&out)]);
    for l in 1..=4 {
        assert!(out.join(format!("weight_l{l}.txt")).exists());
        assert!(out.join(format!("cov_l{l}.txt")).exists());
    }
    let fits = json(&out.join("fits.json"));
    let alpha = fits["layers"][0]["weight_fit"]["exponent"].as_f64().unwrap();
    assert!((alpha - 1.0).abs() < 0.05);
    let lines = std::fs::read_to_string(out.join("weight_l1.txt")).unwrap();
    assert_eq!(lines.lines().count(), 32);
}

#[test]
fn bound_total_is_sum_of_terms() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture(dir.path());
    let comp = dir.path().join("c");
    ok(&["compress", "--manifest", s(&m), "--method", "covariance", "--target-r1", "0.05", "--out", s(&comp)]);
    let out = dir.path().join("b");
    for t in ["t1", "t3", "t4", "cor1", "sparse"] {
        ok(&[
            "bound", "--theorem", t, "--manifest", s(&m), "--compression", s(&comp.join("report.json")),
            "--main-rad", "0.1", "--out", s(&out),
        ]);
        let r = json(&out.join(format!("bound_{t}.json")));
        let sum: f64 = r["terms"].as_array().unwrap().iter().map(|x| x["value"].as_f64().unwrap()).sum();
        assert!((sum - r["total"].as_f64().unwrap()).abs() <= 1e-12 * sum.max(1.0), "{t}");
        let csv = std::fs::read_to_string(out.join(format!("bound_{t}.csv"))).unwrap();
        assert!(csv.starts_with("theorem,kind,name,value\n"));
    }
}

#[test]
fn explicit_flags_need_no_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b");
    ok(&[
        "bound", "--theorem", "t2", "--n", "10000", "--clip-m", "1", "--b-x", "1", "--widths", "8,8,1",
        "--ranks", "2,1", "--alpha", "1.5", "--v0", "1", "--r2", "1", "--out", s(&out),
    ]);
    let r = json(&out.join("bound_t2.json"));
    assert_eq!(r["theorem"], "t2");
    assert!(r["total"].as_f64().unwrap() > 0.0);
}
