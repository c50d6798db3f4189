use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_schouten"))
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    bin().args(args).arg("--config").arg(config).arg("--out").arg(out).output().unwrap()
}

fn write_config(dir: &Path, v: &Value) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, v.to_string()).unwrap();
    p
}

fn report(out: &Path) -> serde_json::Map<String, Value> {
    serde_json::from_str::<Value>(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap().as_object().unwrap().clone()
}

fn schema_errors(report: &serde_json::Map<String, Value>) -> Vec<String> {
    let schema: Value =
        serde_json::from_str(&std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/report.schema.json")).unwrap()).unwrap();
    let compiled = jsonschema::JSONSchema::compile(&schema).unwrap();
    let instance = Value::Object(report.clone());
    let result = compiled.validate(&instance);
    match result {
        Ok(()) => Vec::new(),
        Err(errors) => errors.map(|e| format!("{} at {}", e, e.instance_path)).collect(),
    }
}

fn small_2d() -> Value {
    json!({
        "dimension": 2,
        "bounds": [-1.0, 1.0],
        "resolution": 17,
        "replacement_tensor": "flat",
        "rhs": { "mode": "f", "f": "-1 - z" },
        "subsolution": "0.25 * (x1^2 + x2^2)",
        "k_list": [2]
    })
}

#[test]
fn help_exits_zero() {
    let o = bin().arg("--help").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("Usage"));
}

#[test]
fn missing_config_is_a_validation_error() {
    let o = bin().args(["solve", "--config", "missing.json"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("config not found"));
}

#[test]
fn invalid_configs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut unknown = small_2d();
    unknown["colour"] = json!("blue");
    let mut no_tensor = small_2d();
    no_tensor.as_object_mut().unwrap().remove("replacement_tensor");
    let mut bad_expr = small_2d();
    bad_expr["subsolution"] = json!("x1 + * 2");
    let mut bad_k = small_2d();
    bad_k["k_list"] = json!([4, 2]);
    let mut bad_solver = small_2d();
    bad_solver["solver"] = json!({ "damping": 1.5 });
    let mut unresolved = small_2d();
    unresolved["k_list"] = json!([64]);
    for (cfg, needle) in [
        (unknown, "colour"),
        (no_tensor, "replacement_tensor"),
        (bad_expr, "offset"),
        (bad_k, "increasing"),
        (bad_solver, "damping"),
        (unresolved, "k=64"),
    ] {
        let path = write_config(dir.path(), &cfg);
        let o = run(&["solve"], &path, &dir.path().join("out"));
        let err = String::from_utf8_lossy(&o.stderr).to_string();
        assert_eq!(o.status.code(), Some(2), "{err}");
        assert!(err.contains(needle), "{needle}: {err}");
    }
    let path = write_config(dir.path(), &small_2d());
    let o = run(&["solve", "--k-list", "2,4"], &path, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["homotopy", "--k-list", ""], &path, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn solve_writes_schema_valid_report_and_fields() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &small_2d());
    let out = dir.path().join("out");
    let o = run(&["solve", "--threads", "1"], &path, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(schema_errors(&r), Vec::<String>::new());
    // resolved defaults are embedded
    assert_eq!(r["config.solver.newton_tol"], json!(1e-10));
    assert_eq!(r["config.lambda"], json!("auto"));
    assert_eq!(r["run.threads"], json!(1));
    assert!(r["solve.final_residual"].as_f64().unwrap() <= 1e-10);
    assert_eq!(r["solve.k"], json!(2));
    let csv = std::fs::read_to_string(out.join("fields.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "x1,x2,u,ul,ubar,min_eig,residual");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 17 * 17);
    assert!(rows.iter().all(|r| r.len() == 7 && r[4].is_empty()));
    // first node is a corner: Dirichlet value and zero residual
    assert_eq!(rows[0][2], rows[0][3]);
    assert_eq!(rows[0][6].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn every_subcommand_report_validates() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_2d();
    cfg["k_list"] = json!([1, 2]);
    let path = write_config(dir.path(), &cfg);
    for cmd in ["geometry-check", "verify-barriers", "select-lambda", "homotopy"] {
        let out = dir.path().join(cmd);
        let o = run(&[cmd], &path, &out);
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        let r = report(&out);
        assert_eq!(schema_errors(&r), Vec::<String>::new(), "{cmd}");
        assert_eq!(r["run.command"], json!(cmd));
        assert!(out.join("fields.csv").exists());
    }
}

#[test]
fn failed_checks_exit_three_with_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_2d();
    cfg["supersolution"] = json!("0.25 * (x1^2 + x2^2) - 1");
    let path = write_config(dir.path(), &cfg);
    let out = dir.path().join("out");
    let o = run(&["verify-barriers"], &path, &out);
    assert_eq!(o.status.code(), Some(3));
    let r = report(&out);
    assert_eq!(r["supersolution.ordered"], json!(false));
    assert_eq!(r["run.status"], json!("fail"));
    assert_eq!(schema_errors(&r), Vec::<String>::new());
}

#[test]
fn mms_convergence_on_the_bundled_sphere_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mms");
    let o = run(&["mms-convergence", "--levels", "3"], &bundled("sphere_mms.json"), &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(schema_errors(&r), Vec::<String>::new());
    assert_eq!(r["mms.errors"].as_array().unwrap().len(), 3);
    let orders = r["mms.orders"].as_array().unwrap();
    assert_eq!(orders.len(), 2);
    for o in orders {
        let o = o.as_f64().unwrap();
        assert!((1.7..=2.3).contains(&o), "{o}");
    }
}

#[test]
fn bundled_configs_pass_their_checks() {
    let dir = tempfile::tempdir().unwrap();
    for (cmd, cfg) in [
        ("geometry-check", "sphere_metric.json"),
        ("verify-barriers", "flat_quadratic.json"),
        ("select-lambda", "flat_quadratic.json"),
        ("homotopy", "general_t_2d.json"),
    ] {
        let out = dir.path().join(format!("{cmd}-{cfg}"));
        let o = run(&[cmd], &bundled(cfg), &out);
        assert_eq!(o.status.code(), Some(0), "{cmd} {cfg}: {}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(schema_errors(&report(&out)), Vec::<String>::new());
    }
}

#[test]
fn thread_env_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &small_2d());
    let o = bin().env("SCHOUTEN_THREADS", "many").args(["solve", "--config"]).arg(&path).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let out = dir.path().join("env");
    let o = bin().env("SCHOUTEN_THREADS", "2").args(["solve", "--config"]).arg(&path).arg("--out").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(report(&out)["run.threads"], json!(2));
}

#[test]
fn schema_rejects_malformed_reports() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &small_2d());
    let out = dir.path().join("out");
    assert_eq!(run(&["select-lambda"], &path, &out).status.code(), Some(0));
    let good = report(&out);
    let mut extra = good.clone();
    extra.insert("mystery.key".into(), json!(1));
    assert!(!schema_errors(&extra).is_empty());
    let mut nested = good.clone();
    nested.insert("config".into(), json!({ "dimension": 2 }));
    assert!(!schema_errors(&nested).is_empty());
    let mut missing = good;
    missing.remove("run.status");
    assert!(!schema_errors(&missing).is_empty());
}
