use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_etherstar")).args(args).output().expect("binary runs")
}

fn json(args: &[&str]) -> (Value, i32) {
    let out = run(args);
    let code = out.status.code().unwrap();
    let v = serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stderr)));
    (v, code)
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

fn small_samples() -> tempfile::NamedTempFile {
    let f = tempfile::NamedTempFile::new().unwrap();
    let cfg = r#"{"seed": 11, "samples": {"reflection": 20, "curvature": 20, "flat_exactness": 100, "phase_gradient": 10,
        "kernel_symmetries": 10, "multiplicity": 50, "focal": 5, "star": 1, "series": 5, "germ": 3}}"#;
    std::fs::write(f.path(), cfg).unwrap();
    f
}

#[test]
fn check_passes_on_both_models() {
    let cfg = small_samples();
    for m in ["flat:1", "sphere"] {
        let (v, code) = json(&["check", "--manifold", m, "--config", cfg.path().to_str().unwrap()]);
        assert_eq!(code, 0, "{v:#}");
        assert_eq!(v["pass"], true);
        assert_eq!(v["seed"], 11);
        assert!(v["rows"].as_array().unwrap().len() > 10);
    }
}

#[test]
fn same_seed_gives_identical_output() {
    let cfg = small_samples();
    let args = ["check", "--manifold", "sphere", "--config", cfg.path().to_str().unwrap()];
    let (a, b) = (run(&args), run(&args));
    assert_eq!(a.stdout, b.stdout);
    let other = run(&["check", "--manifold", "sphere", "--config", cfg.path().to_str().unwrap(), "--seed", "12"]);
    assert_ne!(a.stdout, other.stdout);
}

#[test]
fn flags_override_the_config_file() {
    let f = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(f.path(), r#"{"manifold": "sphere", "hbar": 0.8}"#).unwrap();
    let path = f.path().to_str().unwrap();
    let (v, code) = json(&["quantize-check", "--config", path]);
    assert_eq!((code, v["rows"][0]["hbar"].clone()), (1, Value::from(0.8)));
    let (v, code) = json(&["quantize-check", "--config", path, "--hbar", "0.5"]);
    assert_eq!((code, v["config"]["hbar"].clone()), (0, Value::from(0.5)));
}

#[test]
fn flat_kernel_matches_closed_form() {
    let (v, code) = json(&["kernel", "--x", "0.3,0.1", "--y", "-0.2,0.4", "--points", "0.3,0.1;0.1,0.2;-0.2,0.4"]);
    assert_eq!(code, 0);
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    // z = x: the triangle degenerates and the value is mu^2.
    assert!(num(&rows[0]["phase"]).abs() < 1e-14);
    assert!((num(&rows[0]["amplitude"]) - 4.0).abs() < 1e-12);
    // Phase 2 omega(x - z, y - z) = 0.02 at z = (0.1, 0.2).
    assert!((num(&rows[1]["phase"]) - 0.02).abs() < 1e-12);
    let (re, im) = (num(&rows[1]["re"]), num(&rows[1]["im"]));
    assert!((re - 4.0 * 0.1f64.cos()).abs() < 1e-12 && (im - 4.0 * 0.1f64.sin()).abs() < 1e-12);
    assert!(num(&rows[2]["phase"]).abs() < 1e-14);
}

#[test]
fn sphere_kernel_lists_two_branches() {
    let (v, code) = json(&["kernel", "--manifold", "sphere", "--x", "0.6,0,0.8", "--y", "0,0.6,0.8", "--grid", "0.2:0.6:2,0:1:2"]);
    assert_eq!(code, 0);
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 8);
    for pair in rows.chunks(2) {
        assert_eq!(pair[0]["z_index"], pair[1]["z_index"]);
        assert_eq!((pair[0]["branch"].clone(), pair[1]["branch"].clone()), (Value::from(0), Value::from(1)));
    }
}

#[test]
fn star_methods_agree_on_the_plane() {
    let q = r#"{"terms":[{"mi":[1,0],"re":1}]}"#;
    let p = r#"{"terms":[{"mi":[0,1],"re":1}]}"#;
    for method in ["moyal", "series"] {
        let (v, code) = json(&["star", "--f", q, "--g", p, "--points", "0.5,-0.2", "--hbar", "0.2", "--method", method]);
        assert_eq!(code, 0);
        assert!((num(&v["rows"][0]["re"]) + 0.1).abs() < 1e-14);
        assert!((num(&v["rows"][0]["im"]) - 0.1).abs() < 1e-14);
    }
    let g = r#"{"terms":[{"mi":[0,0],"re":1}],"envelope":{"center":[0,0],"sigma":0.8}}"#;
    let (v, code) = json(&["star", "--f", q, "--g", g, "--points", "0.5,0.2", "--method", "quad"]);
    assert_eq!(code, 0);
    let gauss = (-0.29f64 / 1.28).exp();
    assert!((num(&v["rows"][0]["re"]) - 0.5 * gauss).abs() < 1e-9);
    assert!((num(&v["rows"][0]["im"]) + 0.1 * 0.2 / 0.64 * gauss).abs() < 1e-9);
}

#[test]
fn quantization_on_sphere_and_plane() {
    let (v, code) = json(&["quantize-check", "--manifold", "sphere", "--hbar", "1"]);
    assert_eq!((code, v["pass"].clone()), (0, Value::Bool(true)));
    let (v, code) = json(&["quantize-check", "--manifold", "sphere", "--hbar", "0.8"]);
    assert_eq!(code, 1);
    assert!((num(&v["rows"][0]["distance"]) - 0.5).abs() < 1e-6);
    let (v, code) = json(&["quantize-check", "--manifold", "flat:1", "--hbar", "0.8"]);
    assert_eq!((code, v["rows"][0]["vacuous"].clone()), (0, Value::Bool(true)));
}

#[test]
fn evolution_starts_at_identity_and_matches_reference() {
    let (v, code) = json(&["evolve", "--t", "0,0.5,1,2", "--grid", "-0.5:0.5:2,-0.5:0.5:2", "--oracle"]);
    assert_eq!(code, 0, "{v:#}");
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 16);
    for r in &rows[..4] {
        assert_eq!((num(&r["re"]), num(&r["im"])), (1.0, 0.0));
    }
    assert!(num(&v["max_rel_error"]) < 1e-5);
}

#[test]
fn evolution_flags_focal_times() {
    let (v, code) = json(&["evolve", "--t", "1,3.14159265358979", "--points", "0.2,0.1"]);
    assert_eq!(code, 0);
    assert_eq!(v["rows"][0]["focal"], false);
    assert_eq!(v["rows"][1]["focal"], true);
    assert!(v["rows"][1]["re"].is_null());
}

#[test]
fn usage_errors_exit_with_two() {
    let bad = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(bad.path(), r#"{"manifold": "sphere", "no_such_key": 1}"#).unwrap();
    for args in [
        vec!["check", "--config", bad.path().to_str().unwrap()],
        vec!["check", "--manifold", "torus"],
        vec!["kernel", "--x", "0,0", "--points", "0,0"],
        vec!["kernel", "--manifold", "sphere", "--x", "1,0,0", "--y", "0,1,0", "--points", "0.5,0,0"],
        vec!["evolve", "--t", "1", "--points", "0,0", "--h", "{\"terms\":[{\"mi\":[1,0],\"re\":1}]}", "--oracle"],
        vec!["nonsense"],
    ] {
        assert_eq!(run(&args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn csv_and_json_carry_the_same_rows() {
    let args = ["kernel", "--x", "0.3,0.1", "--y", "-0.2,0.4", "--grid", "-1:1:3,0:1:2"];
    let (v, _) = json(&args);
    let csv_out = run(&[&args[..], &["--format", "csv"]].concat());
    let mut reader = csv::Reader::from_reader(&csv_out.stdout[..]);
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    let rows = v["rows"].as_array().unwrap();
    let records: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(records.len(), rows.len());
    for (rec, row) in records.iter().zip(rows) {
        for (col, cell) in header.iter().zip(rec.iter()) {
            let expected = match &row[col] {
                Value::String(s) => s.clone(),
                Value::Null => String::new(),
                other => other.to_string(),
            };
            assert_eq!(cell, expected, "column {col}");
        }
    }
}

#[test]
fn output_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("q.json");
    let out = run(&["quantize-check", "--manifold", "sphere", "--hbar", "2", "-o", path.to_str().unwrap()]);
    assert!(out.stdout.is_empty());
    let stdout = run(&["quantize-check", "--manifold", "sphere", "--hbar", "2"]).stdout;
    assert_eq!(std::fs::read(&path).unwrap(), stdout);
}
