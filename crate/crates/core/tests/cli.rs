use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn lipext(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lipext"))
        .args(args)
        .output()
        .expect("spawn lipext")
}

fn ok(args: &[&str]) -> String {
    let out = lipext(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn cities() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/cities_table1.csv")
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}

#[test]
fn constants_on_two_points() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "two.csv", "id,x,index\na,0,0\nb,1,2\n");
    let out = dir.path().join("out");
    ok(&["constants", "--data", s(&data), "--out", s(&out)]);
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("constants.json")).unwrap())
            .unwrap();
    assert_eq!(v["coherence"]["value"], 2.0);
    assert_eq!(v["normalization"]["value"], 0.5);
    assert_eq!(v["kq"], 1.0);
    assert_eq!(v["error_bound"], 0.0);
    assert_eq!(v["coherence_ids"], serde_json::json!(["a", "b"]));
}

#[test]
fn constants_on_three_collinear_points() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "three.csv", "id,x,index\na,0,0\nb,1,1\nc,2,2\n");
    let out = dir.path().join("out");
    let stdout = ok(&["constants", "--data", s(&data), "--out", s(&out)]);
    let v: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    // Scaled to [0, 1]: distances halve, so K doubles.
    assert_eq!(v["coherence"]["value"], 2.0);
    assert_eq!(v["bound"], 2.0);
}

#[test]
fn duplicate_point_with_different_values_is_unfittable() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "dup.csv", "id,x,index\na,0,1\nb,0,2\nc,1,3\nd,2,\n");
    let out = dir.path().join("out");
    let r = lipext(&["constants", "--data", s(&data), "--out", s(&out)]);
    assert!(r.status.success());
    let v: serde_json::Value = serde_json::from_slice(&r.stdout).unwrap();
    assert_eq!(v["coherence"]["value"], "inf");

    let r = lipext(&["extend", "--data", s(&data), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(6));
    let err = String::from_utf8(r.stderr).unwrap();
    let line = err.lines().last().unwrap();
    assert!(line.starts_with("error[unfittable]:"), "{line}");
    assert!(line.contains('a') && line.contains('b'), "{line}");
}

#[test]
fn malformed_csv_reports_line_and_exit_code() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "bad.csv", "id,x,index\na,0,1\nb,zz,2\n");
    let r = lipext(&[
        "constants",
        "--data",
        s(&data),
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(r.status.code(), Some(4));
    let err = String::from_utf8(r.stderr).unwrap();
    let line = err.lines().last().unwrap();
    assert!(
        line.starts_with("error[parse]:") && line.contains('3'),
        "{line}"
    );
}

#[test]
fn other_error_categories() {
    let dir = TempDir::new().unwrap();
    let out = s(&dir.path().join("o")).to_string();
    let r = lipext(&["cv", "--data", "/nonexistent/x.csv", "--out", &out]);
    assert_eq!(r.status.code(), Some(7));
    let r = lipext(&["cv", "--out", &out]);
    assert_eq!(r.status.code(), Some(3));
    let data = cities();
    let r = lipext(&[
        "cv",
        "--data",
        s(&data),
        "--train-fraction",
        "1.5",
        "--out",
        &out,
    ]);
    assert_eq!(r.status.code(), Some(3));
    let one = write(&dir, "one.csv", "id,x,index\na,0,1\nb,1,\n");
    let r = lipext(&["constants", "--data", s(&one), "--out", &out]);
    assert_eq!(r.status.code(), Some(5));
    assert!(String::from_utf8(r.stderr)
        .unwrap()
        .starts_with("error[data]:"));
}

#[test]
fn extend_cities_then_predict_round_trip() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    ok(&["extend", "--data", s(&cities()), "--out", s(&out)]);
    let preds = read_csv(&out.join("predictions.csv"));
    let ids: Vec<&str> = preds.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(ids, ["Toronto", "Montreal"]);
    for r in &preds {
        let v: f64 = r[1].parse().unwrap();
        assert!((0.0..=100.0).contains(&v), "{r:?}");
    }

    let model = out.join("model.json");
    ok(&[
        "predict",
        "--model",
        s(&model),
        "--data",
        s(&cities()),
        "--out",
        s(&out),
    ]);
    let again = read_csv(&out.join("predict.csv"));
    for p in &preds {
        let row = again.iter().find(|r| r[0] == p[0]).unwrap();
        assert_eq!(row[1], p[1], "reloaded prediction differs for {}", p[0]);
    }
    // Indexed rows are reproduced by the interpolating extension.
    let ny = again.iter().find(|r| r[0] == "New York").unwrap();
    assert!((ny[1].parse::<f64>().unwrap() - 63.0).abs() < 1e-9);
}

#[test]
fn standard_method_recovers_two_point_case() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "two.csv", "id,x,index\na,0,0\nb,1,2\nq,1,\n");
    let out = dir.path().join("out");
    ok(&[
        "extend",
        "--data",
        s(&data),
        "--method",
        "standard",
        "--out",
        s(&out),
    ]);
    let preds = read_csv(&out.join("predictions.csv"));
    assert_eq!(preds, vec![vec!["q".to_string(), "2".to_string()]]);
}

#[test]
fn extend_without_unindexed_rows_writes_empty_predictions() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "full.csv", "id,x,index\na,0,0\nb,1,2\nc,3,1\n");
    let out = dir.path().join("out");
    let r = lipext(&["extend", "--data", s(&data), "--out", s(&out)]);
    assert!(r.status.success());
    assert!(String::from_utf8(r.stderr).unwrap().contains("WARN"));
    assert!(read_csv(&out.join("predictions.csv")).is_empty());
}

#[test]
fn cv_outputs_and_config_file() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "cfg.json",
        r#"{"method": "whitney", "repeats": 4, "seed": 3, "metric": "manhattan"}"#,
    );
    let out = dir.path().join("out");
    ok(&[
        "cv",
        "--config",
        s(&cfg),
        "--data",
        s(&cities()),
        "--repeats",
        "6",
        "--out",
        s(&out),
    ]);
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("cv_report.json")).unwrap())
            .unwrap();
    assert_eq!(v["method"], "whitney");
    assert_eq!(v["repeats"], 6);
    assert_eq!(read_csv(&out.join("cv_repeats.csv")).len(), 6);

    let bad = write(&dir, "bad.json", r#"{"repeatz": 4}"#);
    let r = lipext(&[
        "cv",
        "--config",
        s(&bad),
        "--data",
        s(&cities()),
        "--out",
        s(&out),
    ]);
    assert_eq!(r.status.code(), Some(3));
}

#[test]
fn optimize_two_point_reaches_one() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "two.csv", "id,x,index\na,0,0\nb,1,2\n");
    let out = dir.path().join("out");
    ok(&["optimize", "--data", s(&data), "--out", s(&out)]);
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("optimize.json")).unwrap()).unwrap();
    assert!((v["best_objective"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(v["identity_objective"], 1.0);
    let phi: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("phi.json")).unwrap()).unwrap();
    let sum: f64 = phi["coefficients"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c.as_f64().unwrap())
        .sum();
    assert!((sum - 1.0).abs() < 1e-12);
}

#[test]
fn rank_with_explicit_phi() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let phi = r#"{"atoms":["sqrt","log1p"],"coefficients":[1.0,2.0]}"#;
    ok(&[
        "rank",
        "--data",
        s(&cities()),
        "--phi",
        phi,
        "--method",
        "mcshane",
        "--out",
        s(&out),
    ]);
    let rows = read_csv(&out.join("ranking.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "1");
    assert_eq!(rows[1][0], "2");
    assert!(rows.iter().all(|r| r[3] == "mcshane"));
    let a: f64 = rows[0][2].parse().unwrap();
    let b: f64 = rows[1][2].parse().unwrap();
    assert!(a >= b);

    let r = lipext(&[
        "rank",
        "--data",
        s(&cities()),
        "--phi",
        "{nope",
        "--out",
        s(&out),
    ]);
    assert_eq!(r.status.code(), Some(3));
}

#[test]
fn threads_env_does_not_change_output() {
    let dir = TempDir::new().unwrap();
    let mut texts = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("t{threads}"));
        let r = Command::new(env!("CARGO_BIN_EXE_lipext"))
            .args([
                "cv",
                "--data",
                s(&cities()),
                "--out",
                s(&out),
                "--phi",
                "optimize",
                "--repeats",
                "4",
            ])
            .env("LIPEXT_THREADS", threads)
            .output()
            .unwrap();
        assert!(r.status.success());
        texts.push(std::fs::read_to_string(out.join("cv_repeats.csv")).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
}
