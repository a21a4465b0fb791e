use std::path::{Path, PathBuf};

use assert_cmd::Command;
use serde_json::Value;

fn ssmcert() -> Command {
    Command::cargo_bin("ssmcert").unwrap()
}

fn run(dir: &Path, args: &[&str]) -> (i32, String, String) {
    let out = ssmcert().current_dir(dir).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn read(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn build(dir: &Path, machine: &str, name: &str) {
    let (code, _, err) = run(dir, &["build", "--machine", machine, "--reduce", "auto", "-o", name]);
    assert_eq!(code, 0, "{err}");
}

#[test]
fn build_named_machines() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) = run(dir.path(), &["build", "--machine", "D_H", "-o", "dh.json"]);
    assert_eq!(code, 0);
    assert!(out.contains("3-type"));
    let a = read(dir.path().join("dh.json"));
    assert_eq!(a["payload"]["matrix"]["rows"], serde_json::json!([[1, 1, 1], [1, 1, 0], [1, 0, 1]]));
    assert_eq!(a["config"]["command"], "build");
    assert_eq!(a["sha256"].as_str().unwrap().len(), 64);

    let (code, out, _) = run(dir.path(), &["build", "--machine", "D_H", "--reduce", "auto", "-o", "dh2.json"]);
    assert_eq!(code, 0);
    assert!(out.contains("2-type"));
    let a = read(dir.path().join("dh2.json"));
    assert_eq!(a["payload"]["matrix"]["rows"], serde_json::json!([[1, 2], [1, 1]]));
}

#[test]
fn build_untrimmed_four_cycle_machine() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, _) = run(dir.path(), &["build", "--cycle-free", "4", "-o", "m4p.json"]);
    assert_eq!(code, 0);
    let a = read(dir.path().join("m4p.json"));
    assert_eq!(a["payload"]["matrix"]["rows"], serde_json::json!([[0, 4, 0, 0], [0, 1, 2, 0], [0, 1, 1, 1], [0, 1, 1, 0]]));
}

#[test]
fn certify_three_verdicts_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    build(d, "D_G", "dg.json");
    build(d, "D_H", "dh.json");

    let (code, out, _) = run(d, &["certify", "--matrix", "dg.json", "--lambda", "3.3", "-o", "c33.json"]);
    assert_eq!(code, 0);
    assert!(out.starts_with("WSM-CERTIFIED"), "{out}");
    let (code, out, _) = run(d, &["verify", "c33.json"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.starts_with("VALID wsm-holds"));

    let (code, out, _) = run(d, &["certify", "--matrix", "dg.json", "--lambda", "3.4", "-o", "c34.json"]);
    assert_eq!(code, 0);
    assert!(out.starts_with("WSM-REFUTED"), "{out}");
    assert_eq!(run(d, &["verify", "c34.json"]).0, 0);

    let (code, out, _) = run(d, &["certify", "--matrix", "dh.json", "--lambda", "3.0", "-o", "c30.json"]);
    assert_eq!(code, 0);
    assert!(out.starts_with("UNDECIDED"), "{out}");
    assert_eq!(read(d.join("c30.json"))["payload"]["verdict"], "UNDECIDED");
    assert_eq!(run(d, &["verify", "c30.json"]).0, 1);
    let (code, _, _) = run(d, &["--strict", "certify", "--matrix", "dh.json", "--lambda", "3.0", "-o", "c30s.json"]);
    assert_eq!(code, 4);
}

#[test]
fn tampered_wsm_certificate_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    build(d, "D_G", "dg.json");
    assert_eq!(run(d, &["certify", "--matrix", "dg.json", "--lambda", "3.3", "-o", "c.json"]).0, 0);
    let mut a = read(d.join("c.json"));
    a["payload"]["certificate"]["x_l"][0] = Value::String("0.6234083".into());
    std::fs::write(d.join("t.json"), serde_json::to_string(&a).unwrap()).unwrap();
    let (code, _, err) = run(d, &["verify", "t.json"]);
    assert_eq!(code, 1);
    assert!(err.contains("INVALID"), "{err}");

    // a payload edit that keeps the mathematics valid still breaks the hash
    let mut a = read(d.join("c.json"));
    a["payload"]["certificate"]["matrix_id"] = Value::String("renamed".into());
    std::fs::write(d.join("h.json"), serde_json::to_string(&a).unwrap()).unwrap();
    let (code, _, err) = run(d, &["verify", "h.json"]);
    assert_eq!(code, 1);
    assert!(err.contains("hash"), "{err}");
}

#[test]
fn ssm_certificate_round_trip_and_tamper() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("t4.json"), r#"{"scale":"counts","t":1,"rows":[[3]]}"#).unwrap();
    let (code, out, err) =
        run(d, &["--budget", "120", "ssm", "--matrix", "t4.json", "--lambda", "1.2", "--d0", "8", "--trace", "trace.csv", "-o", "s.json"]);
    assert_eq!(code, 0, "{err}");
    assert!(out.starts_with("SSM-CERTIFIED"), "{out}");
    let trace = std::fs::read_to_string(d.join("trace.csv")).unwrap();
    assert!(trace.starts_with("round,v,rows,generation_rounds,intervals,per_type,splits,seconds"));
    assert_eq!(run(d, &["verify", "s.json"]).0, 0);

    let mut a = read(d.join("s.json"));
    let tight = a["payload"]["certificate"]["tightest"].as_str().unwrap().to_string();
    // the parent coefficient of the tightest row has a positive net coefficient
    // in its slack, so lowering it below the margin breaks that row
    let parts: Vec<usize> = tight[1..].split('_').map(|s| s.parse().unwrap()).collect();
    let (t, k) = (parts[0], parts[1]);
    a["payload"]["certificate"]["potential"]["b"][t][k] = Value::String("0".into());
    std::fs::write(d.join("bad.json"), serde_json::to_string(&a).unwrap()).unwrap();
    let (code, _, err) = run(d, &["verify", "bad.json"]);
    assert_eq!(code, 1);
    assert!(err.contains("INVALID ["), "{err}");
}

#[test]
fn invalid_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    build(d, "D_H", "dh.json");
    for bad in ["abc", "0.1.2", "-1", "0"] {
        let (code, _, err) = run(d, &["certify", "--matrix", "dh.json", "--lambda", bad, "-o", "x.json"]);
        assert_eq!(code, 2, "lambda {bad}: {err}");
    }
    assert_eq!(run(d, &["certify", "--matrix", "missing.json", "--lambda", "1", "-o", "x.json"]).0, 2);
    assert_eq!(run(d, &["build", "--machine", "D_X", "-o", "x.json"]).0, 2);
    assert_eq!(run(d, &["build", "--cycle-free", "5", "-o", "x.json"]).0, 2);
    assert_eq!(run(d, &["frobnicate"]).0, 2);
}

#[test]
fn oversized_sweep_hits_the_cap() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    build(d, "D_H", "dh.json");
    let (code, _, _) = run(d, &["sweep", "--matrix", "dh.json", "--from", "1", "--to", "2", "--step", "0.00001"]);
    assert_eq!(code, 3);
}

#[test]
fn wsm_sweep_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    build(d, "D_G", "dg.json");
    let (code, out, err) = run(d, &["sweep", "--matrix", "dg.json", "--lambdas", "3.2,3.5", "--csv", "s.csv", "-o", "s.json"]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("3.2 WSM-CERTIFIED"), "{out}");
    assert!(out.contains("3.5 WSM-REFUTED"), "{out}");
    let csv = std::fs::read_to_string(d.join("s.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("lambda,verdict,detail,seconds"));
    assert_eq!(read(d.join("s.json"))["config"]["lambda"], "3.2,3.5");
}

#[test]
fn reduce_and_saw_check() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (code, _, _) = run(d, &["build", "--machine", "D_prime", "-o", "dp.json"]);
    assert_eq!(code, 0);
    let (code, out, _) = run(d, &["reduce", "--matrix", "dp.json", "-o", "dpr.json"]);
    assert_eq!(code, 0);
    assert!(out.contains("reduced 16 types"), "{out}");
    std::fs::write(d.join("p.json"), "[[0,1],[2]]").unwrap();
    std::fs::write(d.join("m.json"), r#"{"scale":"counts","t":3,"rows":[[1,1,1],[1,1,0],[1,0,1]]}"#).unwrap();
    assert_eq!(run(d, &["reduce", "--matrix", "m.json", "--partition", "p.json", "-o", "r.json"]).0, 2);

    let (code, out, _) = run(d, &["saw-check", "--machine", "D_G", "--radius", "5", "--depth", "6", "--random", "3"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("3 SAW tree"));
}
