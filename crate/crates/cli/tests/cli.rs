use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn doeng(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_doeng")).args(args).env_remove("DOENG_SUPPORT_CAP").output().expect("run doeng")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn eval_prints_fraction_and_decimal() {
    let m2 = fixture("m2.scm");
    let o = doeng(&["eval", m2.to_str().unwrap(), "-q", "P(Y=1 | do(X=1))"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "5/8 = 0.625");
}

#[test]
fn eval_json_has_exact_fraction() {
    let m2 = fixture("m2.scm");
    let o = doeng(&["eval", m2.to_str().unwrap(), "-q", "P(Y=1 | do(X=0))", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["num"], 1);
    assert_eq!(v["den"], 4);
    assert_eq!(v["method"], "exact");
}

#[test]
fn eval_monte_carlo_is_reproducible() {
    let m2 = fixture("m2.scm");
    let args = ["eval", m2.to_str().unwrap(), "-q", "P(Y=1 | do(X=1))", "--method", "mc", "-n", "20000", "--seed", "7"];
    let a = doeng(&args);
    let b = doeng(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).contains("seed=7"));
}

#[test]
fn query_file_evaluates_each_line() {
    let dir = tempfile::tempdir().unwrap();
    let qf = dir.path().join("q.txt");
    std::fs::write(&qf, "# queries\nP(Y=1 | do(X=1))\n\nP(Y=1 | do(X=0))  # control\n").unwrap();
    let m2 = fixture("m2.scm");
    let o = doeng(&["eval", m2.to_str().unwrap(), "--query-file", qf.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("5/8 = 0.625"));
    assert!(out.contains("1/4 = 0.25"));
}

#[test]
fn parse_error_reports_position_and_exits_2() {
    let m2 = fixture("m2.scm");
    let o = doeng(&["eval", m2.to_str().unwrap(), "-q", "P(Y=1 | do(X=1)"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("1:16"), "{}", stderr(&o));
}

#[test]
fn zero_samples_is_a_usage_error() {
    let m2 = fixture("m2.scm");
    let o = doeng(&["eval", m2.to_str().unwrap(), "-q", "P(Y=1)", "--method", "mc", "-n", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_model_exits_1_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.scm");
    std::fs::write(&bad, "exo U ~ {0: 1/2, 1: 1/2}\nvar X in {0, 1} := and(U, Z)\n").unwrap();
    let o = doeng(&["eval", bad.to_str().unwrap(), "-q", "P(X=1)"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bad.scm:2:"), "{}", stderr(&o));
}

#[test]
fn support_cap_from_environment() {
    let m2 = fixture("m2.scm");
    let o = Command::new(env!("CARGO_BIN_EXE_doeng"))
        .args(["eval", m2.to_str().unwrap(), "-q", "P(Y=1)"])
        .env("DOENG_SUPPORT_CAP", "1")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("cap"));
}

#[test]
fn confounded_adjustment_query_warns() {
    let m2 = fixture("m2.scm");
    let o = doeng(&["eval", m2.to_str().unwrap(), "-q", "ace X -> Y adjust {}"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("9/16"));
    assert!(stderr(&o).contains("warning"));
}

#[test]
fn verify_fixture_reports_aggregate_without_failing() {
    let m2 = fixture("m2.scm");
    let o = doeng(&["verify", m2.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let out = stdout(&o);
    assert!(out.contains("differs: 13/16 vs 5/8"));
    assert!(out.contains("all checks pass"));
}

#[test]
fn verify_random_models() {
    let o = doeng(&["verify", "--random", "20", "--shape", "fig2a", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("type i (X=1): PASS (20 passed"));
}

#[test]
fn verify_requires_a_source() {
    let o = doeng(&["verify"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sample_then_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    let m2 = fixture("m2.scm");
    let o = doeng(&["sample", m2.to_str().unwrap(), "-n", "20000", "--seed", "1", "-o", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("20000 rows (seed 1)"));
    let header = std::fs::read_to_string(&csv).unwrap();
    assert!(header.starts_with("W,X,Y\n"));

    let o = doeng(&[
        "estimate",
        csv.to_str().unwrap(),
        "--x",
        "X",
        "--y",
        "Y",
        "--adjust",
        "W",
        "--compare",
        m2.to_str().unwrap(),
        "--json",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let adjusted = v["adjusted"]["value"].as_f64().unwrap();
    let se = v["stderr"].as_f64().unwrap();
    assert!((adjusted - 0.375).abs() < 5.0 * se, "{adjusted} ± {se}");
    assert_eq!(v["exact_adjusted"]["fraction"], "3/8");
    assert_eq!(v["exact_naive"]["fraction"], "9/16");
}

#[test]
fn estimate_unknown_column_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    std::fs::write(&csv, "W,X,Y\n0,0,0\n0,1,1\n1,0,1\n1,1,0\n").unwrap();
    let o = doeng(&["estimate", csv.to_str().unwrap(), "--x", "X", "--y", "Y", "--adjust", "Q"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Q"));
}
