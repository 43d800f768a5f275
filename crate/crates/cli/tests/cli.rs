use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_insider");

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

fn config(name: &str) -> PathBuf {
    repo(&format!("configs/{name}.toml"))
}

fn insider(cmd: &str, cfg: &str, out: &Path, extra: &[&str]) -> Output {
    Command::new(BIN)
        .arg(cmd)
        .arg("--config")
        .arg(config(cfg))
        .arg("--out")
        .arg(out)
        .args(extra)
        .env_remove("INSIDER_OUT")
        .output()
        .expect("spawn insider")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn check_schema(schema: &Value, v: &Value, at: &str) {
    if let Some(t) = schema.get("type") {
        let types: Vec<&str> = match t {
            Value::String(s) => vec![s.as_str()],
            Value::Array(a) => a.iter().map(|x| x.as_str().unwrap()).collect(),
            _ => panic!("bad type in schema"),
        };
        let ok = types.iter().any(|t| match *t {
            "object" => v.is_object(),
            "array" => v.is_array(),
            "string" => v.is_string(),
            "boolean" => v.is_boolean(),
            "null" => v.is_null(),
            "number" => v.is_number(),
            "integer" => v.is_u64() || v.is_i64(),
            _ => false,
        });
        assert!(ok, "{at}: {v} is not {types:?}");
    }
    if let Some(e) = schema.get("enum").and_then(Value::as_array) {
        assert!(e.contains(v), "{at}: {v} not in {e:?}");
    }
    if let Some(req) = schema.get("required").and_then(Value::as_array) {
        for k in req {
            let k = k.as_str().unwrap();
            assert!(v.get(k).is_some(), "{at}: missing key `{k}`");
        }
    }
    if let (Some(props), Some(obj)) = (
        schema.get("properties").and_then(Value::as_object),
        v.as_object(),
    ) {
        for (k, s) in props {
            if let Some(x) = obj.get(k) {
                check_schema(s, x, &format!("{at}.{k}"));
            }
        }
    }
    if let (Some(items), Some(arr)) = (schema.get("items"), v.as_array()) {
        for (i, x) in arr.iter().enumerate() {
            check_schema(items, x, &format!("{at}[{i}]"));
        }
    }
}

fn csv_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect()
}

#[test]
fn validate_reports_mode_and_grid() {
    let dir = TempDir::new().unwrap();
    let o = insider("validate", "brownian-bridge", dir.path(), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = read_json(&dir.path().join("model.json"));
    assert_eq!(m["mode"], "gaussian-dominant");
    assert_eq!(m["horizon_steps"], 50);
    assert_eq!(m["dt"], 0.01);
    assert!(m["lattice_offset"].is_null());
    assert_eq!(m["ok"], true);

    let o = insider("validate", "pure-poisson", dir.path(), &[]);
    assert!(o.status.success());
    let m = read_json(&dir.path().join("model.json"));
    assert_eq!(m["mode"], "pure-lattice");
    assert!(m["lattice_offset"].is_number());
}

#[test]
fn single_path_drift_csv() {
    let dir = TempDir::new().unwrap();
    let o = insider(
        "drift",
        "mixed-theta",
        dir.path(),
        &["--overrides", "mc.n_paths=1"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines = csv_lines(&dir.path().join("drift.csv"));
    assert_eq!(
        lines[0],
        "path_id,t,phi,psi_1,compensator_1,im_residual,denom"
    );
    assert_eq!(lines.len(), 1 + 50);
    for l in &lines[1..] {
        let f: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(f[0], 0.0);
        assert!(f[2].is_finite() && f[3].is_finite());
        assert!(f[4] > 0.0, "compensator must stay positive: {l}");
        assert!(f[6] > 0.0);
    }
    let d = read_json(&dir.path().join("drift.json"));
    assert_eq!(d["n_paths"], 1);
    assert_eq!(d["ok"], true);
}

#[test]
fn path_dump_is_capped() {
    let dir = TempDir::new().unwrap();
    let o = insider(
        "simulate",
        "pure-poisson",
        dir.path(),
        &[
            "--override",
            "mc.n_paths=20",
            "--override",
            "mc.dump_paths=3",
        ],
    );
    assert!(o.status.success());
    let lines = csv_lines(&dir.path().join("paths.csv"));
    assert_eq!(lines[0], "path_id,t,B,count_1,Y");
    assert_eq!(lines.len(), 1 + 3 * 101);
    let s = read_json(&dir.path().join("simulate.json"));
    assert_eq!(s["n_paths"], 20);
    assert_eq!(s["dumped_paths"], 3);
}

#[test]
fn seed_flag_overrides_config() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let args = ["--override", "mc.n_paths=5"];
    insider("simulate", "brownian-bridge", a.path(), &args);
    insider(
        "simulate",
        "brownian-bridge",
        b.path(),
        &[&args[..], &["--seed", "7"]].concat(),
    );
    assert_ne!(
        fs::read(a.path().join("paths.csv")).unwrap(),
        fs::read(b.path().join("paths.csv")).unwrap()
    );
    assert_eq!(read_json(&b.path().join("simulate.json"))["seed"], 7);
}

#[test]
fn output_directory_from_environment() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("nested/out");
    let o = Command::new(BIN)
        .args(["validate", "--config"])
        .arg(config("brownian-bridge"))
        .env("INSIDER_OUT", &out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(out.join("model.json").exists());
}

#[test]
fn configuration_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let o = insider(
        "validate",
        "brownian-bridge",
        dir.path(),
        &["--override", "mc.n_path=3"],
    );
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("n_path"), "{err}");

    let o = insider(
        "validate",
        "brownian-bridge",
        dir.path(),
        &["--override", "market.horizon=0.505"],
    );
    assert_eq!(o.status.code(), Some(2));

    let o = Command::new(BIN)
        .args(["simulate", "--out"])
        .arg(dir.path())
        .env_remove("INSIDER_OUT")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--config"));

    let o = Command::new(BIN)
        .args(["validate", "--config", "/nonexistent/run.toml", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failed_checks_exit_one() {
    // Too few paths for the negative controls to separate.
    let dir = TempDir::new().unwrap();
    let o = insider(
        "verify",
        "brownian-bridge",
        dir.path(),
        &["--override", "mc.n_paths=40"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("checks failed"));
    let v = read_json(&dir.path().join("verify.json"));
    assert_eq!(v["ok"], false);
    assert_eq!(v["attempts"].as_array().unwrap().len(), 3);
}

#[test]
fn artifacts_do_not_depend_on_thread_count() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for (dir, threads) in [(&a, "1"), (&b, "3")] {
        for cmd in ["simulate", "drift", "optimize", "decompose"] {
            let o = insider(
                cmd,
                "pure-poisson",
                dir.path(),
                &["--override", "mc.n_paths=300", "--threads", threads],
            );
            assert!(
                o.status.success(),
                "{cmd}: {}",
                String::from_utf8_lossy(&o.stderr)
            );
        }
    }
    for f in [
        "paths.csv",
        "simulate.json",
        "drift.csv",
        "drift.json",
        "controls.csv",
        "optimize.json",
        "decomposed.csv",
        "decompose.json",
    ] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn pipeline_artifacts_match_schemas() {
    let dir = TempDir::new().unwrap();
    for cmd in [
        "validate",
        "simulate",
        "drift",
        "optimize",
        "decompose",
        "verify",
        "report",
    ] {
        let o = insider(
            cmd,
            "brownian-bridge",
            dir.path(),
            &["--override", "mc.n_paths=1000"],
        );
        assert!(
            o.status.success(),
            "{cmd}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    for name in [
        "model",
        "simulate",
        "drift",
        "optimize",
        "decompose",
        "verify",
        "summary",
    ] {
        let schema = read_json(&repo(&format!("docs/schemas/{name}.schema.json")));
        let v = read_json(&dir.path().join(format!("{name}.json")));
        check_schema(&schema, &v, name);
    }
    let s = read_json(&dir.path().join("summary.json"));
    assert_eq!(s["ok"], true);
    assert_eq!(s["artifacts"]["optimize"]["ok"], true);
    let stages: Vec<&str> = s["stages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_str().unwrap())
        .collect();
    assert_eq!(stages.len(), 6);

    let opt = read_json(&dir.path().join("optimize.json"));
    let values = opt["values"].as_array().unwrap();
    assert!(values
        .iter()
        .any(|v| v["policy"] == "insider-optimal" && v["estimator"] == "drift-formula"));
    assert!(opt["max_foc_residual"].as_f64().unwrap() <= 1e-12);

    let header = &csv_lines(&dir.path().join("decomposed.csv"))[0];
    assert_eq!(header, "path_id,t,B,b_hat,N,M");
    let header = &csv_lines(&dir.path().join("controls.csv"))[0];
    assert_eq!(header, "path_id,t,u_star,residual");
}

#[test]
fn report_tolerates_partial_runs() {
    let dir = TempDir::new().unwrap();
    insider("validate", "brownian-bridge", dir.path(), &[]);
    let o = Command::new(BIN)
        .arg("report")
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    let s = read_json(&dir.path().join("summary.json"));
    assert_eq!(s["stages"], serde_json::json!(["model"]));
    assert_eq!(o.status.code(), Some(if s["ok"] == true { 0 } else { 1 }));
}
