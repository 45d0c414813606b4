use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn nilspec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nilspec"))
        .args(args)
        .env("NILSPEC_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn json(args: &[&str]) -> (Value, i32) {
    let mut a = args.to_vec();
    a.extend(["--format", "json"]);
    let out = nilspec(&a);
    let code = out.status.code().unwrap_or(-1);
    let text = String::from_utf8(out.stdout).unwrap();
    let v = serde_json::from_str(&text).unwrap_or_else(|e| {
        panic!("{e}: {text}\n{}", String::from_utf8_lossy(&out.stderr))
    });
    (v, code)
}

const ABELIAN: &str = r#"{
  "algebra": {"dim": 2, "labels": ["A", "B"], "brackets": []},
  "lattices": [{"name": "L", "generators": [["1", "0"], ["0", "2"]]}]
}"#;

#[test]
fn lengths_example_four() {
    let (v, code) = json(&["lengths", "IV", "1", "--lambda-max", "7"]);
    assert_eq!(code, 0);
    let e = v["entries"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["length_symbolic"] == "sqrt(4*pi*(7-pi))")
        .expect("helix length present");
    assert_eq!(e["m_total"], 28);
    assert_eq!(e["m_central"], 0);
}

#[test]
fn lengths_abelian_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flat.json");
    fs::write(&path, ABELIAN).unwrap();
    let (v, code) = json(&["lengths", path.to_str().unwrap(), "--window", "2", "--lambda-max", "2.5"]);
    assert_eq!(code, 0);
    let got: Vec<(String, u64)> = v["entries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| (e["length_symbolic"].as_str().unwrap().to_string(), e["m_total"].as_u64().unwrap()))
        .collect();
    // ±A; ±2A, ±B; ±A±B.
    assert_eq!(got, vec![("1".into(), 2), ("2".into(), 4), ("sqrt(5)".into(), 4)]);
}

#[test]
fn example_three_lattices() {
    let mut rows = vec![];
    for lat in ["1", "2"] {
        let (v, _) = json(&["lengths", "III", lat, "--lambda-max", "1", "--window", "4"]);
        let e = v["entries"].as_array().unwrap().iter().find(|e| e["length_symbolic"] == "1").cloned().unwrap();
        let (n, q) = (e["m_noncentral"].as_u64().unwrap(), e["m_quotient_central"].as_u64().unwrap());
        rows.push((n - q, q));
    }
    assert_eq!(rows[0].0, 12);
    assert_eq!(rows[1].0, 12);
    assert_eq!(rows[0].1, 2 * rows[1].1);
}

#[test]
fn compare_verdicts() {
    let (v, code) = json(&["compare", "II", "--mode", "length"]);
    assert_eq!((v["verdict"].as_str(), code), (Some("SAME"), 0));
    let (v, code) = json(&["compare", "IV", "--lambda-max", "7"]);
    assert_eq!((v["verdict"].as_str(), code), (Some("DIFFERENT"), 0));
    let helix = v["rows"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["length_symbolic"] == "sqrt(4*pi*(7-pi))")
        .unwrap();
    assert!(helix["difference_min"].as_i64().unwrap() > 0);
}

#[test]
fn marked_verdicts() {
    let (v, code) = json(&["compare", "V", "--mode", "marked"]);
    assert_eq!((v["verdict"].as_str(), code), (Some("SAME"), 0));
    assert_eq!(v["one_dim_center"]["verdict"], "SAME");
    let (v, code) = json(&["compare", "II", "--mode", "marked"]);
    assert_eq!((v["verdict"].as_str(), code), (Some("DIFFERENT"), 0));
    assert!(v["scan"]["satisfying"].as_array().unwrap().is_empty());
}

#[test]
fn verify_expectations() {
    assert_eq!(nilspec(&["verify", "V", "automorphism"]).status.code(), Some(0));
    assert_eq!(nilspec(&["verify", "II", "jacobi"]).status.code(), Some(0));
    assert_eq!(nilspec(&["verify", "V", "isometry(Psi2)"]).status.code(), Some(1));
    assert_eq!(nilspec(&["verify", "V", "isometry(Psi2)=fail"]).status.code(), Some(0));
    let (v, _) = json(&["verify", "V", "almost-inner(Psi2)", "--window", "2"]);
    assert_eq!(v["checks"][0]["evidence"]["kind"], "GAMMA_ALMOST_INNER");
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(nilspec(&["verify", "V", "bogus"]).status.code(), Some(2));
    assert_eq!(nilspec(&["lengths", "IV", "--window", "0"]).status.code(), Some(2));
    assert_eq!(nilspec(&["lengths", "VI"]).status.code(), Some(2));
    assert_eq!(nilspec(&["lengths", "IV", "3"]).status.code(), Some(2));
    assert_eq!(nilspec(&["compare", "I", "--mode", "marked"]).status.code(), Some(2));
    assert_eq!(nilspec(&["--tol", "0", "catalog"]).status.code(), Some(2));
}

#[test]
fn output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        let out = nilspec(&["lengths", "III", "2", "--window", "2", "--lambda-max", "2", "--format", "json", "--out", p.to_str().unwrap()]);
        assert!(out.status.success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn catalog_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("four.json");
    let out = nilspec(&["catalog", "IV", "--format", "json", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let args = |t: &str| -> Vec<String> {
        ["lengths", t, "2", "--window", "3", "--lambda-max", "3", "--format", "csv"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    };
    let from_file = nilspec(&args(path.to_str().unwrap()).iter().map(String::as_str).collect::<Vec<_>>());
    let builtin = nilspec(&args("IV").iter().map(String::as_str).collect::<Vec<_>>());
    assert!(from_file.status.success());
    assert_eq!(from_file.stdout, builtin.stdout);
    let csv = String::from_utf8(builtin.stdout).unwrap();
    assert!(csv.starts_with("length,length_symbolic,m_total"));
    let table = String::from_utf8(nilspec(&["catalog"]).stdout).unwrap();
    assert!(table.lines().any(|l| l.starts_with("V ") && l.trim_end().ends_with("Yes")));
}

#[test]
fn geodesics() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flat.json");
    fs::write(&path, ABELIAN).unwrap();
    let (v, code) = json(&["geodesic", path.to_str().unwrap(), "--velocity", "3,4", "--gamma", "3,4", "--period", "5"]);
    assert_eq!(code, 0);
    assert_eq!(v["max_speed_drift"].as_f64(), Some(0.0));
    assert!(v["translation_defect"].as_f64().unwrap() < 1e-12);

    let (v, _) = json(&["geodesic", "V", "--seed", "3", "--s-max", "10"]);
    assert!(v["max_speed_drift"].as_f64().unwrap() < 1e-9);

    let (v, code) = json(&["geodesic", "III", "--quotient", "--gamma", "0,0,0,1,1,0", "--shoot", "--starts", "8"]);
    assert_eq!(code, 0);
    let shots = v["shots"].as_array().unwrap();
    assert!(shots.iter().all(|s| (s["lambda"].as_f64().unwrap() - 1.0).abs() < 1e-6));

    let csv = String::from_utf8(nilspec(&["geodesic", "V", "--format", "csv", "--s-max", "1"]).stdout).unwrap();
    assert!(csv.starts_with("s,p1,"));
}
