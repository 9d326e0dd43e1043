use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_spark-sim"));
    c.env_remove("SPARK_SIM_CONFIG");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

// root relaxation (1/2, 1), rounding down is infeasible: needs branching
const BRANCHY: &str = r#"{"sense":"max","cost":[1,2],"constraints":[
  {"coeffs":[2,2],"rhs":3},{"coeffs":[-2,2],"rhs":1}],"integral":true}"#;

#[test]
fn gen_is_deterministic_and_parses_back() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        let o = run(&["gen", "random", "--n", "5", "--m", "7", "--seed", "9", "--out", p.to_str().unwrap()]);
        assert!(o.status.success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let o = run(&["gen", "transportation", "--sources", "2", "--dests", "3"]);
    let text = stdout(&o);
    let p = spark_core::parse_problem(&text).unwrap();
    assert_eq!(p.n(), 6);
    assert_eq!(spark_core::to_json(&p).trim(), text.trim());
    assert_eq!(run(&["gen", "nonsense"]).status.code(), Some(1));
}

#[test]
fn solve_sparse_and_forced_dense() {
    let dir = tempfile::tempdir().unwrap();
    let inv = dir.path().join("inv.json");
    run(&["gen", "investment", "--n", "3", "--seed", "2", "--out", inv.to_str().unwrap()]);
    let o = run(&["solve", inv.to_str().unwrap()]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("verdict    Sparse"), "{s}");
    assert!(s.contains("objective"));
    assert!(s.contains("energy_pj"));
    let o = run(&["solve", inv.to_str().unwrap(), "--no-sa", "--json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["path"], "dense");
    assert_eq!(v["verdict"], "sparse");
}

#[test]
fn solve_csv_has_header_and_row() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "b.json", BRANCHY);
    let o = run(&["solve", &p, "--csv"]);
    let s = stdout(&o);
    let lines: Vec<&str> = s.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("instance,config,row_kind"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "b.json", BRANCHY);
    assert_eq!(run(&["solve", &p]).status.code(), Some(0));
    assert_eq!(run(&["solve", &p, "--node-cap", "1"]).status.code(), Some(3));
    let bad = write(dir.path(), "bad.json", "{\"sense\": \"max\"");
    assert_eq!(run(&["solve", &bad]).status.code(), Some(1));
    assert_eq!(run(&["solve"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn config_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "b.json", BRANCHY);
    let cfg = write(dir.path(), "c.cfg", "solver.node_cap = 1\n");
    let o = bin().args(["solve", &p]).env("SPARK_SIM_CONFIG", &cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
    // a flag beats the file
    let o = bin().args(["solve", &p, "--node-cap", "100"]).env("SPARK_SIM_CONFIG", &cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let broken = write(dir.path(), "d.cfg", "geometry.wheels = 4\n");
    assert_eq!(run(&["solve", &p, "--config", &broken]).status.code(), Some(1));
}

#[test]
fn verify_suite_and_corruption() {
    let o = run(&["verify", "--count", "12"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("pass 12"));
    let o = run(&["verify", "--count", "3", "--corrupt-incumbent"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("vs oracle"));
}

#[test]
fn verify_skips_unbounded_box() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "u.json",
        r#"{"sense":"min","cost":[1,1],"constraints":[{"coeffs":[1,-1],"rhs":3}],"integral":true}"#,
    );
    let o = run(&["verify", &p]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("skipped 1"));
}

#[test]
fn bench_matrix_rows_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(
        dir.path(),
        "m.toml",
        r#"
[[instance]]
kind = "investment"
n = 3
seed = 1

[[instance]]
kind = "random"
n = 3
m = 3
seed = 2

[[instance]]
name = "branchy"
path = "b.json"
"#,
    );
    write(dir.path(), "b.json", BRANCHY);
    let o1 = run(&["bench", &spec]);
    assert!(o1.status.success(), "{}", String::from_utf8_lossy(&o1.stderr));
    let s = stdout(&o1);
    let runs = s.lines().filter(|l| l.contains(",run,")).count();
    let attr = s.lines().filter(|l| l.contains(",attribution,")).count();
    assert_eq!((runs, attr), (9, 3));
    let out = dir.path().join("o.csv");
    run(&["bench", &spec, "--csv", out.to_str().unwrap()]);
    assert_eq!(fs::read_to_string(out).unwrap(), s);
    let empty = write(dir.path(), "e.toml", "");
    let s = stdout(&run(&["bench", &empty]));
    assert_eq!(s.lines().count(), 1);
}
