use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn crep() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_crep"));
    c.env_remove("CREP_RTOL");
    c
}

fn examples() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/examples")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("crep-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn json_report(args: &[&str]) -> (Output, Value) {
    let out = crep().args(args).args(["--json", "-"]).output().unwrap();
    let v = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    (out, v)
}

fn kappa(v: &Value, name: &str) -> f64 {
    v["condition"][name].as_f64().unwrap()
}

#[test]
fn polar_values() {
    let spec = examples().join("polar.json");
    let (out, v) = json_report(&["analyze", spec.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!((kappa(&v, "kappa_y") - 1.0).abs() < 1e-10);
    assert!(kappa(&v, "kappa_z").abs() < 1e-10);
    assert!((kappa(&v, "kappa_yz") - 1.0).abs() < 1e-10);
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["tool_version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn tucker_spec_matches_closed_form() {
    let spec = examples().join("tucker.json");
    let (out, v) = json_report(&["analyze", spec.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!((kappa(&v, "kappa_y") - 2.0).abs() < 1e-8);
}

#[test]
fn identity_output_gives_norm_of_jx() {
    let spec = examples().join("custom_linearized.json");
    let (out, v) = json_report(&["analyze", spec.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!((kappa(&v, "kappa_y") - 4.0).abs() < 1e-12);
}

#[test]
fn failed_certificate_exits_2() {
    let path = scratch("noncrep.json");
    std::fs::write(
        &path,
        r#"{"kind":"custom_linearized","jx":[[1.0]],"jy":[[0.0]]}"#,
    )
    .unwrap();
    let (out, v) = json_report(&["analyze", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(v["certificate"]["passed"], false);
    assert!(v["condition"]["kappa_y"].is_null());
}

#[test]
fn malformed_spec_names_the_field() {
    let path = scratch("malformed.json");
    std::fs::write(&path, r#"{"kind":"matrix_factorization","m":4,"n":3}"#).unwrap();
    let out = crep()
        .args(["analyze", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("k_rank"));
}

#[test]
fn missing_file_exits_1() {
    let out = crep()
        .args(["analyze", "/nonexistent/spec.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn reports_are_deterministic_apart_from_timing() {
    let spec = examples().join("matrix_factorization.json");
    let run = || {
        let (out, mut v) = json_report(&[
            "analyze",
            spec.to_str().unwrap(),
            "--seed",
            "9",
            "--empirical",
            "8:1e-5",
        ]);
        assert_eq!(out.status.code(), Some(0));
        v.as_object_mut().unwrap().remove("timing_seconds");
        serde_json::to_string(&v).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn report_file_round_trips() {
    let spec = examples().join("polar.json");
    let path = scratch("report.json");
    let out = crep()
        .args([
            "analyze",
            spec.to_str().unwrap(),
            "--empirical",
            "4:1e-4",
            "--json",
        ])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&path).unwrap();
    let report: crep_cli::Report = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string_pretty(&report).unwrap() + "\n", text);
    assert!(report.empirical.is_some());
}

#[test]
fn rtol_from_environment() {
    let spec = examples().join("polar.json");
    let out = crep()
        .env("CREP_RTOL", "1e-9")
        .args(["analyze", spec.to_str().unwrap(), "--json", "-"])
        .output()
        .unwrap();
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["rtol"].as_f64(), Some(1e-9));
    assert_eq!(v["certificate"]["tolerance"].as_f64(), Some(1e-9));
}

#[test]
fn tucker_table_cross_validates() {
    let tensor = examples().join("diag_tensor.json");
    let (out, v) = json_report(&[
        "tucker",
        tensor.to_str().unwrap(),
        "--ranks",
        "2,2",
        "--all-variables",
        "--cross-validate",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let rows = v["rows"].as_array().unwrap();
    let names: Vec<&str> = rows
        .iter()
        .map(|r| r["variable"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["core", "U0", "U1", "all"]);
    assert!((rows[0]["closed_form"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((rows[1]["closed_form"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert!(v["max_relative_difference"].as_f64().unwrap() <= 1e-5);
}

fn write_tensor(name: &str, shape: &[usize], data: &[f64]) -> PathBuf {
    let path = scratch(name);
    let body = serde_json::json!({ "shape": shape, "data": data });
    std::fs::write(&path, body.to_string()).unwrap();
    path
}

#[test]
fn square_factors_have_zero_condition() {
    // Rank (2, 2) 2x2 matrix: both factors square.
    let path = write_tensor("square.json", &[2, 2], &[1.0, 2.0, 3.0, 5.0]);
    let (out, v) = json_report(&[
        "tucker",
        path.to_str().unwrap(),
        "--ranks",
        "2,2",
        "--cross-validate",
    ]);
    assert_eq!(out.status.code(), Some(0));
    for row in v["rows"].as_array().unwrap() {
        assert_eq!(row["closed_form"].as_f64(), Some(0.0));
        assert!(row["general"].as_f64().unwrap().abs() < 1e-8);
    }
}

#[test]
fn nearly_equal_singular_values() {
    // diag(1.0, 0.999) embedded in a 4x3 matrix.
    let mut data = vec![0.0; 12];
    data[0] = 1.0;
    data[4] = 0.999;
    let path = write_tensor("gap.json", &[4, 3], &data);
    let (out, v) = json_report(&[
        "tucker",
        path.to_str().unwrap(),
        "--ranks",
        "2,2",
        "--cross-validate",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let k = v["rows"][0]["closed_form"].as_f64().unwrap();
    assert!((k - 1.0 / 0.999).abs() < 1e-12);
}

#[test]
fn rank_mismatch_is_an_error() {
    let tensor = examples().join("diag_tensor.json");
    let out = crep()
        .args(["tucker", tensor.to_str().unwrap(), "--ranks", "2,1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("multilinear rank"));
}

#[test]
fn quick_suite_passes() {
    let out = crep()
        .args(["verify", "--suite", "quick", "--seed", "42"])
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("[PASS]")).count(), 10);
}

#[test]
fn injected_fault_is_reported() {
    let out = crep()
        .args(["verify", "--suite", "quick", "--inject-fault"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("[FAIL]"));
}

fn schema(name: &str) -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../docs")
        .join(name);
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_keys_match(instance: &Value, schema: &Value) {
    let mut have: Vec<&String> = instance.as_object().unwrap().keys().collect();
    let mut want: Vec<&String> = schema["properties"].as_object().unwrap().keys().collect();
    have.sort();
    want.sort();
    assert_eq!(have, want);
    for (k, sub) in schema["properties"].as_object().unwrap() {
        if sub["type"] == "object" && instance[k].is_object() {
            assert_keys_match(&instance[k], sub);
        }
    }
}

#[test]
fn reports_match_the_shipped_schemas() {
    let spec = examples().join("polar.json");
    let (_, v) = json_report(&["analyze", spec.to_str().unwrap()]);
    let s = schema("report.schema.json");
    assert_eq!(
        v["schema_version"],
        s["properties"]["schema_version"]["const"]
    );
    assert_keys_match(&v, &s);

    let tensor = examples().join("diag_tensor.json");
    let (_, v) = json_report(&[
        "tucker",
        tensor.to_str().unwrap(),
        "--ranks",
        "2,2",
        "--cross-validate",
    ]);
    let s = schema("tucker-report.schema.json");
    assert_keys_match(&v, &s);
    assert_keys_match(&v["rows"][0], &s["properties"]["rows"]["items"]);
}
