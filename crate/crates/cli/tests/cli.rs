use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::json;

fn lagflow(args: &[&str], dir: &Path, threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lagflow"));
    cmd.args(args).current_dir(dir);
    match threads {
        Some(t) => cmd.env("LAGFLOW_THREADS", t),
        None => cmd.env_remove("LAGFLOW_THREADS"),
    };
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, value: serde_json::Value) -> String {
    fs::write(dir.join(name), serde_json::to_string_pretty(&value).unwrap()).unwrap();
    name.to_string()
}

fn report_value(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("missing {key}"))
        .to_string()
}

fn csv_column(path: &Path, name: &str) -> Vec<f64> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let col = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(col).unwrap().parse().unwrap()).collect()
}

fn shear(amplitude: f64, t_end: f64) -> serde_json::Value {
    json!({
        "geometry": "torus",
        "generator": {"kind": "shear", "amplitude": amplitude, "wavenumber": 1},
        "flow": {"t_end": t_end, "n": 16, "observe_every": 20, "order": 4}
    })
}

#[test]
fn generate_writes_map_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", shear(0.2, 1.0));
    let out = lagflow(&["generate", "--config", &cfg, "--out", "g"], tmp.path(), None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(tmp.path().join("g/validation.txt")).unwrap();
    let defect: f64 = report_value(&report, "defect_sup").parse().unwrap();
    assert!(defect <= 1e-12);
    assert_eq!(report_value(&report, "is_diffeo"), "true");
    let map = fs::read_to_string(tmp.path().join("g/initial.map")).unwrap();
    assert!(map.starts_with("# lagflow-map n=16\n"));
    assert_eq!(map.lines().count(), 1 + 16 * 16);
}

#[test]
fn identity_report_has_unit_eta() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", shear(0.0, 1.0));
    let out = lagflow(&["generate", "--config", &cfg, "--out", "g"], tmp.path(), None);
    assert!(out.status.success());
    let report = String::from_utf8(out.stdout).unwrap();
    assert_eq!(report_value(&report, "min_eta").parse::<f64>().unwrap(), 1.0);
}

#[test]
fn configuration_errors_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut bad_k = shear(0.2, 1.0);
    bad_k["generator"]["wavenumber"] = json!(0);
    let cfg = write_config(dir, "k0.json", bad_k);
    let out = lagflow(&["generate", "--config", &cfg, "--out", "g"], dir, None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("wavenumber"));

    let mut mismatch = shear(0.2, 1.0);
    mismatch["geometry"] = json!("sphere");
    let cfg = write_config(dir, "mismatch.json", mismatch);
    assert_eq!(lagflow(&["run", "--config", &cfg, "--out", "r"], dir, None).status.code(), Some(2));

    let mut unknown = shear(0.2, 1.0);
    unknown["flow"]["dt"] = json!(0.1);
    let cfg = write_config(dir, "unknown.json", unknown);
    assert_eq!(lagflow(&["run", "--config", &cfg, "--out", "r"], dir, None).status.code(), Some(2));

    let mut cfl = shear(0.2, 1.0);
    cfl["flow"]["cfl"] = json!(0.9);
    let cfg = write_config(dir, "cfl.json", cfl);
    assert_eq!(lagflow(&["run", "--config", &cfg, "--out", "r"], dir, None).status.code(), Some(2));

    assert_eq!(lagflow(&["run", "--config", "missing.json", "--out", "r"], dir, None).status.code(), Some(2));
    let cfg = write_config(dir, "ok.json", shear(0.2, 1.0));
    assert_eq!(lagflow(&["run", "--config", &cfg], dir, None).status.code(), Some(2));
    assert_eq!(lagflow(&["run", "--config", &cfg, "--out", "r"], dir, Some("many")).status.code(), Some(2));
}

#[test]
fn folded_input_map_is_a_geometric_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let n = 16;
    let mut text = format!("# lagflow-map n={n}\n");
    for i in 0..n {
        for j in 0..n {
            let x = i as f64 / n as f64;
            text.push_str(&format!("{i} {j} {:.16e} 0\n", 0.2 * (std::f64::consts::TAU * x).sin()));
        }
    }
    fs::write(dir.join("folded.map"), text).unwrap();
    let mut cfg = shear(0.2, 1.0);
    cfg["input"] = json!("folded.map");
    let cfg = write_config(dir, "c.json", cfg);
    let out = lagflow(&["generate", "--config", &cfg, "--out", "g"], dir, None);
    assert_eq!(out.status.code(), Some(1));
    let report = fs::read_to_string(dir.join("g/validation.txt")).unwrap();
    assert_eq!(report_value(&report, "is_diffeo"), "false");
    assert_eq!(lagflow(&["run", "--config", &cfg, "--out", "r"], dir, None).status.code(), Some(1));
}

#[test]
fn zero_t_end_records_only_the_initial_row() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", shear(0.2, 0.0));
    let out = lagflow(&["run", "--config", &cfg, "--out", "r"], tmp.path(), None);
    assert!(out.status.success());
    let t = csv_column(&tmp.path().join("r/timeseries.csv"), "t");
    assert_eq!(t, vec![0.0]);
    let term = fs::read_to_string(tmp.path().join("r/termination.txt")).unwrap();
    assert_eq!(report_value(&term, "termination"), "reached_end");
}

#[test]
fn runs_are_byte_identical_across_invocations_and_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = write_config(dir, "c.json", shear(0.2, 0.05));
    for (out, threads) in [("a", None), ("b", Some("1")), ("c", Some("3"))] {
        assert!(lagflow(&["run", "--config", &cfg, "--out", out], dir, threads).status.success());
    }
    for file in ["timeseries.csv", "final.map", "termination.txt"] {
        let a = fs::read(dir.join("a").join(file)).unwrap();
        assert_eq!(a, fs::read(dir.join("b").join(file)).unwrap(), "{file}");
        assert_eq!(a, fs::read(dir.join("c").join(file)).unwrap(), "{file}");
    }
    let eta = csv_column(&dir.join("a/timeseries.csv"), "min_eta");
    assert!(eta.windows(2).all(|w| w[1] >= w[0] - 1e-8));
}

#[test]
fn resume_reproduces_the_uninterrupted_run() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut cfg = shear(0.2, 0.05);
    cfg["flow"]["checkpoint_every"] = json!(50);
    let cfg = write_config(dir, "c.json", cfg);
    assert!(lagflow(&["run", "--config", &cfg, "--out", "full"], dir, None).status.success());
    let ckpt = dir.join("full/checkpoints/ckpt_000000050.map");
    let meta = fs::read_to_string(ckpt.with_extension("meta")).unwrap();
    assert!(meta.starts_with("# t=") && meta.trim_end().ends_with("step=50"));
    let out = lagflow(
        &["resume", "--config", &cfg, "--out", "resumed", "--resume", ckpt.to_str().unwrap()],
        dir,
        None,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        fs::read(dir.join("full/final.map")).unwrap(),
        fs::read(dir.join("resumed/final.map")).unwrap()
    );
}

#[test]
fn sphere_run_respects_the_comparison_bound() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = write_config(
        dir,
        "s.json",
        json!({
            "geometry": "sphere",
            "generator": {"kind": "sphere_twist", "amplitude": 0.3},
            "flow": {"t_end": 0.5, "n": 64, "observe_every": 50}
        }),
    );
    let out = lagflow(&["run", "--config", &cfg, "--out", "s"], dir, None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("s/final.twist").exists());
    let csv = dir.join("s/timeseries.csv");
    let eta = csv_column(&csv, "min_eta");
    let bound = csv_column(&csv, "eta_bound");
    assert!(eta.len() > 2);
    assert!(eta.iter().zip(&bound).all(|(e, b)| e >= &(b - 1e-3)));
    assert!(bound.windows(2).all(|w| w[1] > w[0]));
    // density diagnostics are torus-only
    assert_eq!(lagflow(&["diagnose", "density", "--config", &cfg, "--out", "s"], dir, None).status.code(), Some(2));
}

#[test]
fn diagnostics_on_a_flat_history() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut cfg = shear(0.0, 0.01);
    cfg["flow"]["n"] = json!(32);
    cfg["emit_snapshots"] = json!(true);
    cfg["snapshot_stride"] = json!(10);
    cfg["diagnose"] = json!({"center_node": [5, 9], "lambda": 1.0});
    let cfg = write_config(dir, "c.json", cfg);
    assert!(lagflow(&["run", "--config", &cfg, "--out", "r"], dir, None).status.success());
    assert!(lagflow(&["diagnose", "density", "--config", &cfg, "--out", "r"], dir, None).status.success());
    let density = csv_column(&dir.join("r/density.csv"), "density");
    assert!(!density.is_empty());
    assert!(density.iter().all(|d| (d - 1.0).abs() <= 1e-4), "{density:?}");

    assert!(lagflow(&["diagnose", "rescale", "--config", &cfg, "--out", "r"], dir, None).status.success());
    let text = fs::read_to_string(dir.join("r/rescaled.txt")).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(' ').map(|v| v.parse().unwrap()).collect())
        .collect();
    let (ci, cj) = (5.0 / 32.0, 9.0 / 32.0);
    for r in &rows {
        let (x, y) = (r[1] / 32.0, r[2] / 32.0);
        assert!(r[3] <= 0.0);
        for (k, c) in [x - ci, y - cj, x - ci, y - cj].iter().enumerate() {
            assert!((r[4 + k] - c).abs() < 1e-15);
        }
    }
    assert_eq!(rows.len() % (32 * 32), 0);
}
