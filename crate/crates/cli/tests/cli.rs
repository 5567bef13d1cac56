use std::process::{Command, Output};

use serde_json::Value;

fn etbell(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_etbell")).args(args).output().expect("spawn etbell")
}

fn report(args: &[&str]) -> Value {
    let out = etbell(args);
    assert!(
        out.status.success(),
        "{args:?}: {}\n{}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("json report")
}

#[test]
fn mermin_default_reaches_four() {
    let r = report(&["mermin-quantum"]);
    assert_eq!(r["pass"], true);
    assert!((r["mu"].as_f64().unwrap() - 4.0).abs() < 1e-12);
    assert_eq!(r["violates_local_bound"], true);
}

#[test]
fn mermin_custom_settings_stay_local() {
    // all-x settings give |1 + 1 + 1 - 1| = 2
    let r = report(&["mermin-quantum", "--settings", "xxx"]);
    assert!((r["mu"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert_eq!(r["violates_local_bound"], false);
}

#[test]
fn mermin_larger_n() {
    let r = report(&["--n", "5", "mermin-quantum"]);
    assert!((r["mu"].as_f64().unwrap() - 16.0).abs() < 1e-9);
    let r = report(&["--n", "4", "mermin-quantum", "--form", "mabk"]);
    assert!((r["mu"].as_f64().unwrap() - 2f64.powf(2.5)).abs() < 1e-9);
}

#[test]
fn table1_writes_ensemble() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ens.json");
    let r = report(&["lhv", "table1", "--ensemble-out", path.to_str().unwrap()]);
    assert_eq!(r["mu"]["exact"], "4");
    let ens: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(ens["entries"].as_array().unwrap().len(), 496);
}

#[test]
fn search_and_scale() {
    let r = report(&["lhv", "search", "--selection", "independent"]);
    assert_eq!(r["mu_max"]["exact"], "2");
    let r = report(&["lhv", "scale", "--target", "1.5"]);
    assert!((r["mu"].as_f64().unwrap() - 1.5).abs() < 1e-9);
    let out = etbell(&["lhv", "scale", "--target", "4.5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stream_csv_round_trips_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ev.csv");
    let out = etbell(&[
        "--trials", "500", "--seed", "3", "--format", "csv", "--out", path.to_str().unwrap(), "lhv", "stream",
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("trial,party,setting,bin,sign,selected"));
    assert_eq!(text.lines().count(), 1 + 500 * 3);
    let r = report(&["source", "audit", "--in", path.to_str().unwrap()]);
    assert_eq!(r["audit"]["trials"], 500);
}

#[test]
fn audit_verdicts() {
    let r = report(&["--trials", "50000", "source", "audit", "--model", "table1", "--expect", "dependent"]);
    assert_eq!(r["pass"], true);
    let out = etbell(&["--trials", "50000", "source", "audit", "--model", "quantum", "--expect", "dependent"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn network_commands() {
    let r = report(&["network", "dft"]);
    assert_eq!(r["pass"], true);
    let r = report(&["network", "analyzer", "--phases", "0.4,-2.1,1.0"]);
    assert_eq!(r["pass"], true);
    let r = report(&["--n", "6", "network", "cascade"]);
    assert_eq!(r["pass"], true);
    let r = report(&["--levels", "5", "network", "verify"]);
    assert_eq!(r["pass"], true);
    let out = etbell(&["--levels", "3", "network", "analyzer", "--phases", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn decompose_reads_matrix_file() {
    let dir = tempfile::tempdir().unwrap();
    let dft = report(&["--levels", "4", "network", "dft"]);
    let path = dir.path().join("u.json");
    std::fs::write(&path, dft["matrix"].to_string()).unwrap();
    let r = report(&["network", "decompose", "--in", path.to_str().unwrap()]);
    assert!(r["beam_splitters"].as_u64().unwrap() <= 6);
    assert!(r["round_trip_error"].as_f64().unwrap() <= 1e-9);

    // the emitted mesh reads back as a valid network
    let net = dir.path().join("net.json");
    std::fs::write(&net, r["network"].to_string()).unwrap();
    let v = report(&["network", "verify", "--in", net.to_str().unwrap()]);
    assert_eq!(v["pass"], true);

    std::fs::write(&path, "[[[1,0],[1,0]],[[0,0],[1,0]]]").unwrap();
    assert_eq!(etbell(&["network", "decompose", "--in", path.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn source_commands() {
    for cmd in [&["source", "state"][..], &["source", "filter"], &["--trials", "20000", "source", "stream"]] {
        assert_eq!(report(cmd)["pass"], true, "{cmd:?}");
    }
    let out = etbell(&["source", "filter", "--window", "2", "--delta-t", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn csv_format_rejected_for_reports() {
    assert_eq!(etbell(&["--format", "csv", "lhv", "table1"]).status.code(), Some(2));
}
