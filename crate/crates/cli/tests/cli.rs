use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bicausal-ot")).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Value {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    if out.stdout.is_empty() {
        return Value::Null;
    }
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn read(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const ANTICIPATING: &str = r#"{
  "kind": "coupling",
  "left": {"steps": [{"points": [{"label": "0", "coord": ["0"]}]},
                     {"points": [{"label": "-1", "coord": ["-1"]}, {"label": "1", "coord": ["1"]}]}]},
  "right": {"steps": [{"points": [{"label": "a", "coord": ["-1"]}, {"label": "b", "coord": ["1"]}]},
                      {"points": [{"label": "c", "coord": ["0"]}]}]},
  "mass": [
    {"pair": [["0", "-1"], ["a", "c"]], "value": "1/2"},
    {"pair": [["0", "1"], ["b", "c"]], "value": "1/2"}
  ]
}"#;

#[test]
fn stagewise_coupling_checks_bicausal() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen", "fixture", "kr", "--out-dir", "kr"]);
    let doc = ok(dir.path(), &["check", "--bicausal", "--pi", "kr/pi.json"]);
    assert_eq!(doc["verdict"], "bicausal");
    assert_eq!(doc["bicausal"]["holds"], true);
    assert!(doc.get("monge").is_none());
}

#[test]
fn anticipating_coupling_is_rejected_by_the_biadapted_lift() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("pi.json"), ANTICIPATING).unwrap();
    let doc = ok(dir.path(), &["check", "--pi", "pi.json"]);
    assert_eq!(doc["verdict"], "not-bicausal");
    assert_eq!(doc["causal"]["holds"], false);

    let out = run(dir.path(), &["lift", "--biadapted", "--pi", "pi.json"]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["code"], "NOT_BICAUSAL");

    // The static lift accepts any coupling.
    ok(dir.path(), &["lift", "--static", "--pi", "pi.json", "--out", "static.json"]);
    let back = ok(dir.path(), &["project", "--lift", "static.json"]);
    assert_eq!(back["mass"].as_array().unwrap().len(), 2);
}

#[test]
fn random_tree_generation_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| -> Vec<&'static str> {
        vec!["gen", "random-tree", "--seed", "11", "--steps", "3", "--branching", "2", "--denom", "8", "--out-dir", out]
    };
    ok(dir.path(), &args("a"));
    ok(dir.path(), &args("b"));
    for name in ["mu.json", "nu.json", "pi.json"] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        let b = fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
    let mu = read(&dir.path().join("a/mu.json"));
    assert_eq!(mu["mass"].as_array().unwrap().len(), 8);
}

#[test]
fn seed_seven_pipeline_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &["gen", "random-tree", "--seed", "7", "--steps", "2", "--branching", "2", "--denom", "4", "--out-dir", "rt"],
    );
    let kp = ok(d, &["solve", "--problem", "kp", "--cost", "metric:1", "--mu", "rt/mu.json", "--nu", "rt/nu.json"]);
    ok(
        d,
        &[
            "solve",
            "--problem",
            "bc",
            "--cost",
            "metric:1",
            "--mu",
            "rt/mu.json",
            "--nu",
            "rt/nu.json",
            "--out",
            "bc.json",
        ],
    );
    let bc = read(&d.join("bc.json"));
    let value = |v: &Value| bicausal_core::parse_rational(v["value"].as_str().unwrap()).unwrap();
    assert!(value(&kp) <= value(&bc));

    ok(d, &["lift", "--biadapted", "--pi", "rt/pi.json", "--out", "lift.json"]);
    ok(d, &["project", "--lift", "lift.json", "--out", "back.json"]);
    assert_eq!(read(&d.join("back.json"))["mass"], read(&d.join("rt/pi.json"))["mass"]);

    ok(d, &["approx", "--pi", "rt/pi.json", "--csv", "approx.csv", "--out", "approx.json"]);
    let report = read(&d.join("approx.json"));
    assert_eq!(report["all_ok"], true);
    for row in report["rows"].as_array().unwrap() {
        assert_eq!(row["cells_ok"], true);
    }
    let csv = fs::read_to_string(d.join("approx.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);

    for file in ["bc.json", "lift.json", "approx.json"] {
        let v = ok(d, &["verify", file]);
        assert_eq!(v["ok"], true, "{file}");
    }
}

#[test]
fn tampered_artifacts_fail_verification() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "fixture", "f1", "--out-dir", "f1"]);
    ok(
        d,
        &[
            "solve",
            "--problem",
            "bc",
            "--cost",
            "metric:1",
            "--mu",
            "f1/mu.json",
            "--nu",
            "f1/nu.json",
            "--out",
            "bc.json",
        ],
    );
    let mut doc = read(&d.join("bc.json"));
    doc["value"] = Value::from("0/1");
    fs::write(d.join("bad.json"), serde_json::to_string(&doc).unwrap()).unwrap();
    let out = run(d, &["verify", "bad.json"]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["code"], "VERIFICATION_FAILED");
}

#[test]
fn paper_example_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen", "paper-example", "--out-dir", "p"]);
    let doc = ok(dir.path(), &["feasibility", "--mu", "p/mu.json", "--nu", "p/nu.json"]);
    assert_eq!(doc["feasible"], false);
}

#[test]
fn meta_sidecar_is_optional() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "fixture", "aw", "--out-dir", "aw"]);
    ok(d, &["validate", "aw/mu.json", "--out", "v.json", "--meta"]);
    let meta = read(&d.join("v.json.meta.json"));
    assert_eq!(meta["kind"], "meta");
    assert!(meta["created"].is_string());
    ok(d, &["validate", "aw/nu.json", "--out", "w.json"]);
    assert!(!d.join("w.json.meta.json").exists());
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["solve", "--problem", "bc"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["lift", "--pi", "x.json", "--biadapted", "--static"]).status.code(), Some(2));
    let missing = run(dir.path(), &["validate", "nope.json"]);
    assert_eq!(missing.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&missing.stderr).unwrap();
    assert_eq!(err["code"], "IO_ERROR");
}
