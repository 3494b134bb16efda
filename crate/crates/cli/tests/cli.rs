use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_oampdc");
const SMALL: &[&str] = &["--n-radial", "64", "--n-phi", "256"];

fn oampdc(out: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("OAMPDC_CACHE_DIR")
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) {
    let o = oampdc(out, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn failure(out: &Path, args: &[&str]) -> (i32, String) {
    let o = oampdc(out, args);
    (o.status.code().expect("exit code"), String::from_utf8_lossy(&o.stderr).into_owned())
}

fn report(path: &Path) -> HashMap<String, f64> {
    let text = fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].parse().unwrap())
        })
        .collect()
}

/// Data rows of a two-header CSV.
fn rows(path: &Path) -> Vec<Vec<f64>> {
    let text = fs::read_to_string(path).unwrap();
    text.lines().skip(2).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect()
}

#[test]
fn decompose_writes_normalized_weights_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let args = [&["decompose", "--lp", "7", "--mp", "0", "--geometry", "single", "--gain", "0.8"], SMALL].concat();
    ok(dir.path(), &args);
    let csv = dir.path().join("decompose_eigenvalues.csv");
    let header = fs::read_to_string(&csv).unwrap();
    assert!(header.starts_with("m,n,lambda,Lambda,Lambda_prime\n1,1,1,1,1\n"));
    let data = rows(&csv);
    let sum_prime: f64 = data.iter().map(|r| r[4]).sum();
    assert!((sum_prime - 1.0).abs() < 1e-6, "{sum_prime}");
    for r in &data {
        assert_eq!(r[3], (0.8 * r[2].sqrt()).sinh().powi(2));
    }
    let first = fs::read(&csv).unwrap();
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("decompose_manifest.json")).unwrap()).unwrap();
    for f in manifest["outputs"].as_array().unwrap() {
        assert!(dir.path().join(f.as_str().unwrap()).exists());
    }

    let again = tempfile::tempdir().unwrap();
    ok(again.path(), &[&args[..], &["--threads", "1"]].concat());
    assert_eq!(first, fs::read(again.path().join("decompose_eigenvalues.csv")).unwrap());
    let manifest2: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(again.path().join("decompose_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["setup_hash"], manifest2["setup_hash"]);
    assert_eq!(manifest["setup_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn most_populated_mode_at_the_dark_fringe() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["decompose", "--lp", "7", "--geometry", "gap", "--d-cm", "0.42"]);
    let r = report(&dir.path().join("decompose_report.csv"));
    assert_eq!(r["most_populated_n"], 11.0);
}

#[test]
fn cached_run_matches_cold_run() {
    let cache = tempfile::tempdir().unwrap();
    let cold = tempfile::tempdir().unwrap();
    let args = [&["decompose", "--lp", "3", "--geometry", "gap", "--d-cm", "0.1", "--n-half-width", "60"], SMALL].concat();
    ok(cold.path(), &args);
    let mut hits = Vec::new();
    for _ in 0..2 {
        let out = tempfile::tempdir().unwrap();
        let o = Command::new(BIN).args(&args).arg("--out").arg(out.path()).env("OAMPDC_CACHE_DIR", cache.path()).output().unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(
            fs::read(cold.path().join("decompose_eigenvalues.csv")).unwrap(),
            fs::read(out.path().join("decompose_eigenvalues.csv")).unwrap()
        );
        let m: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.path().join("decompose_manifest.json")).unwrap()).unwrap();
        hits.push(m["cache_hits"].as_u64().unwrap());
    }
    assert_eq!(hits, [0, 1]);
    assert_eq!(fs::read_dir(cache.path()).unwrap().count(), 1);
}

#[test]
fn fringe_extrema_and_vacuum_flatness() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["fringe"]);
    let r = report(&dir.path().join("fringe_report.csv"));
    assert!((r["d_dark"] - 0.42).abs() < 0.05, "{}", r["d_dark"]);
    assert!((r["d_bright"] - 2.52).abs() < 0.15, "{}", r["d_bright"]);
    assert!(r["visibility"] > 1e-2, "{}", r["visibility"]);
    assert_eq!(rows(&dir.path().join("fringe_scan.csv")).len(), 161);

    let vac = tempfile::tempdir().unwrap();
    ok(vac.path(), &["fringe", "--dispersion", "vacuum"]);
    let r = report(&vac.path().join("fringe_report.csv"));
    assert!(r["visibility"] < 1e-5, "{}", r["visibility"]);
}

#[test]
fn empty_gap_range_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, msg) = failure(dir.path(), &["fringe", "--d-start-cm", "1", "--d-end-cm", "0.5"]);
    assert_eq!(code, 2);
    assert!(msg.contains("empty gap range"), "{msg}");
    let (code, _) = failure(dir.path(), &["fringe", "--d-step-cm", "0"]);
    assert_eq!(code, 2);
}

#[test]
fn unresolved_gap_is_a_resolution_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, msg) = failure(dir.path(), &[&["decompose", "--lp", "1", "--geometry", "gap", "--d-cm", "3"], SMALL].concat());
    assert_eq!(code, 4, "{msg}");
    let (code, _) = failure(dir.path(), &[&["fringe", "--method", "decomposed", "--d-end-cm", "3"], SMALL].concat());
    assert_eq!(code, 4);
}

#[test]
fn sensitivity_needs_pump_oam() {
    let dir = tempfile::tempdir().unwrap();
    let (code, msg) = failure(dir.path(), &["sensitivity", "--lp", "0", "--g-exp", "1"]);
    assert_eq!(code, 2);
    assert!(msg.contains("undefined for l_p = 0"), "{msg}");
}

#[test]
fn low_gain_width_for_charge_two() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["sensitivity", "--lp", "2", "--g-exp", "0.001"]);
    let r = report(&dir.path().join("sensitivity_report.csv"));
    let expected = 2.0 * std::f64::consts::PI / 3.0;
    assert!((r["delta_tf"] / expected - 1.0).abs() < 0.01, "{}", r["delta_tf"]);
    let curve = rows(&dir.path().join("sensitivity_curve.csv"));
    assert!(curve.iter().all(|c| c[4] >= r["f_smt_min"] * (1.0 - 1e-12)));
}

#[test]
fn calibration_ratio_for_gaussian_pump() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["calibrate", "--lp", "0", "--mp", "0"]);
    let r = report(&dir.path().join("calibrate_report.csv"));
    assert!((r["ratio"] / 1.211 - 1.0).abs() < 0.15, "{}", r["ratio"]);
    assert_eq!(r["ratio"], r["a_high"] / r["a_low"]);
}

#[test]
fn analytic_zero_gap_is_symmetric() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &[&["analytic", "--lp", "7", "--gaps-cm", "0"], SMALL].concat());
    let data = rows(&dir.path().join("analytic_eigenvalues.csv"));
    let value = |n: i64| data.iter().find(|r| r[1] as i64 == n).map(|r| r[2]);
    for n in 0..=3 {
        let (a, b) = (value(n).unwrap(), value(7 - n).unwrap());
        assert!((a - b).abs() <= 1e-10 * a.max(b), "n={n}");
    }
    assert!(value(3).unwrap() > value(2).unwrap() && value(2).unwrap() > value(1).unwrap());
}

#[test]
fn mode_outside_range_is_an_index_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, msg) = failure(dir.path(), &[&["modes", "--lp", "2", "--mode", "0:900"], SMALL].concat());
    assert_eq!(code, 2);
    assert!(msg.contains("index out of range"), "{msg}");
    ok(dir.path(), &[&["modes", "--lp", "2", "--mode", "0:1", "--mode", "1:0"], SMALL].concat());
    let head = fs::read_to_string(dir.path().join("modes_profiles.csv")).unwrap();
    assert!(head.starts_with("q,m0_n1,m1_n0\n1/m,m^2,m^2\n"));
}

#[test]
fn config_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[setup]\nlp = 7\n\n[grid]\nn_radial = 64\nq_max_rel = 1.5\n").unwrap();
    let (code, msg) = failure(dir.path(), &["decompose", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(msg.contains("run.toml:6:13") && msg.contains("q_max_rel"), "{msg}");

    fs::write(&cfg, "[setup]\nlp = 7\ngeometry = \"wedge\"\n").unwrap();
    let (code, msg) = failure(dir.path(), &["decompose", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(msg.contains("line 3"), "{msg}");

    fs::write(&cfg, "[setup]\nlp = 2\n[grid]\nn_radial = 64\nn_phi = 256\n").unwrap();
    ok(dir.path(), &["intensity", "--config", cfg.to_str().unwrap(), "--lp", "3", "--gain", "0.1"]);
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("intensity_manifest.json")).unwrap()).unwrap();
    assert_eq!(m["setup"]["pump"]["l_p"], 3);
    assert_eq!(m["grid"]["n_radial"], 64);
}

#[test]
fn dove_geometry_adds_the_composed_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &[&["decompose", "--lp", "2", "--geometry", "dove", "--theta", "0.4", "--gain", "0.01"], SMALL].concat());
    let single = rows(&dir.path().join("decompose_eigenvalues.csv"));
    let composed = rows(&dir.path().join("decompose_composed.csv"));
    let c2 = (2.0f64 * 0.4 / 2.0).cos().powi(2);
    let big = |m: f64, n: f64| single.iter().find(|r| r[0] == m && r[1] == n).unwrap()[3];
    let su = composed.iter().find(|r| r[0] == 0.0 && r[1] == 1.0).unwrap()[2];
    let l = big(0.0, 1.0);
    assert!((su / (4.0 * l * (l + 1.0) * c2) - 1.0).abs() < 1e-6);
}
