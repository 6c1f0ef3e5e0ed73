use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;
use switchctl::cli::main_with_args;
use switchctl::fixtures;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_switchctl"))
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn write_system(dir: &Path, name: &str, doc: &Value) -> String {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string(doc).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn demo_example1_with_simulation() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ex1");
    let status = bin()
        .args(["demo", "example1", "--simulate", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    for f in ["certificate.json", "reference.json", "trajectory.csv", "events.jsonl", "metrics.json", "report.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,x1,x2,sigma,v\n"));
    let rep = report(&out);
    assert_eq!(rep["status"], "ok");
    assert_eq!(rep["exit_code"], 0);
    assert_eq!(rep["summary"]["simulated_certificate"], "published");
    let metrics: Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert!(metrics["final_error"].as_f64().unwrap() < 0.05);
    // no temporaries left behind
    assert!(fs::read_dir(&out)
        .unwrap()
        .all(|e| !e.unwrap().file_name().to_string_lossy().ends_with(".tmp")));
}

#[test]
fn vertex_without_equilibrium_exits_with_hypothesis_code() {
    let tmp = tempfile::tempdir().unwrap();
    // mode 1 is Hurwitz, so λ = e_1 gives a non-singular A_λ
    let doc = serde_json::json!({
        "n": 2,
        "N": 2,
        "A": [[[-1.0, 0.0], [0.0, -2.0]], [[0.0, 0.0], [0.0, -1.0]]],
        "b": [[1.0, 0.0], [-1.0, 0.0]]
    });
    let sys = write_system(tmp.path(), "sys.json", &doc);
    let out = tmp.path().join("bad");
    let output = bin()
        .args(["design", "--system", &sys, "--lambda", "1,0", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    let rep = report(&out);
    let name = rep["hypothesis"].as_str().unwrap().to_string();
    assert!(
        ["NoEquilibrium", "AssumptionViolated", "NotSingular"].contains(&name.as_str()),
        "{name}"
    );
    assert!(stderr.contains(&name));
    assert_eq!(rep["exit_code"], 2);
}

#[test]
fn design_from_system_file() {
    let tmp = tempfile::tempdir().unwrap();
    let doc = serde_json::to_value(fixtures::example1_system().to_document()).unwrap();
    let sys = write_system(tmp.path(), "ex1.json", &doc);
    let out = tmp.path().join("d");
    let code = main_with_args([
        "switchctl",
        "design",
        "--system",
        &sys,
        "--lambda",
        "1/3,1/3,1/3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let cert: Value = serde_json::from_str(&fs::read_to_string(out.join("certificate.json")).unwrap()).unwrap();
    assert_eq!(cert["report"]["valid"], true);

    let code = main_with_args([
        "switchctl",
        "equilibria",
        "--system",
        &sys,
        "--lambda",
        "1/3,1/3,1/3",
        "--xe-perp",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let eq: Value = serde_json::from_str(&fs::read_to_string(out.join("equilibrium.json")).unwrap()).unwrap();
    assert_eq!(eq["equilibrium"]["x_e"][0].as_f64().unwrap(), 2.0);
    assert_eq!(eq["interior"]["valid"], true);
}

#[test]
fn validate_reports_problems() {
    let tmp = tempfile::tempdir().unwrap();
    let doc = serde_json::json!({ "n": 2, "N": 1, "A": [[[0.0, 1.0]]], "b": [[0.0, 0.0]] });
    let sys = write_system(tmp.path(), "broken.json", &doc);
    let out = tmp.path().join("v");
    let code = main_with_args(["switchctl", "validate", "--system", &sys, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2);
    let v: Value = serde_json::from_str(&fs::read_to_string(out.join("validation.json")).unwrap()).unwrap();
    assert_eq!(v["valid"], false);
}

#[test]
fn io_and_parse_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("e");
    let missing = tmp.path().join("missing.json");
    let code = main_with_args([
        "switchctl",
        "design",
        "--system",
        missing.to_str().unwrap(),
        "--lambda",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
    assert_eq!(report(&out)["exit_code"], 1);
    assert_eq!(main_with_args(["switchctl", "demo", "nope", "--out", out.to_str().unwrap()]), 1);
    assert_eq!(main_with_args(["switchctl", "bogus"]), 1);
    assert_eq!(main_with_args(["switchctl", "--help"]), 0);
    assert_eq!(
        main_with_args(["switchctl", "design", "--demo", "example1", "--lambda", "1/0,1"]),
        1
    );
}

#[test]
fn rate_demo_writes_alpha_curve() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("rate");
    let status = bin()
        .args(["rate", "--demo", "example2", "--r-grid", "0.1:2.5:25", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let csv = fs::read_to_string(out.join("alpha_curve.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("r,beta,epsilon,alpha"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 25);
    assert!(rows.iter().all(|r| r[3] > 0.0));
    assert!(rows.windows(2).all(|w| w[1][0] > w[0][0]));
    let rate: Value = serde_json::from_str(&fs::read_to_string(out.join("rate.json")).unwrap()).unwrap();
    assert_eq!(rate["levels"].as_array().unwrap().len(), 25);
}

#[test]
fn identical_jobs_give_identical_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |dir: &str| {
        let out = tmp.path().join(dir);
        let code = main_with_args([
            "switchctl",
            "simulate",
            "--demo",
            "example2",
            "--horizon",
            "0.5",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        let rate_out = tmp.path().join(format!("{dir}-rate"));
        let code = main_with_args([
            "switchctl",
            "rate",
            "--demo",
            "example2",
            "--r-grid",
            "0.5,1",
            "--out",
            rate_out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        (
            fs::read(out.join("trajectory.csv")).unwrap(),
            fs::read(rate_out.join("alpha_curve.csv")).unwrap(),
        )
    };
    let a = run("a");
    let b = run("b");
    assert!(!a.0.is_empty());
    assert_eq!(a, b);
}

#[test]
fn rate_with_fixed_beta() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("beta");
    let code = main_with_args([
        "switchctl",
        "rate",
        "--demo",
        "example2",
        "--beta",
        "0.05",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let csv = fs::read_to_string(out.join("alpha_curve.csv")).unwrap();
    let row: Vec<f64> = csv.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(row[1], 0.05);
}
