mod common;

use std::process::Command;

fn robcomm(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_robcomm")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap(), String::from_utf8(out.stderr).unwrap())
}

fn scenario(name: &str) -> String {
    common::scenario_dir().join(name).display().to_string()
}

#[test]
fn check_paths_exit_codes() {
    let (code, out, _) = robcomm(&["check-paths", "--scenario", &scenario("diamond.json")]);
    assert_eq!(code, 0);
    assert!(out.starts_with("circle nC=4 T=6"));
    let (code, out, _) = robcomm(&["check-paths", "--scenario", &scenario("three-paths.json")]);
    assert_eq!(code, 0);
    assert!(out.starts_with("circle nC=6 T=28"));
    let (code, out, _) = robcomm(&["check-paths", "--scenario", &scenario("cut.json")]);
    assert_eq!(code, 1);
    assert!(out.contains("cut vertex 1"));
}

#[test]
fn input_errors_exit_two_with_field_path() {
    let dir = std::env::temp_dir().join(format!("robcomm-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.json");
    let text = std::fs::read_to_string(scenario("diamond.json")).unwrap().replace(r#"["2", "R"]"#, r#"["2", "Q"]"#);
    std::fs::write(&bad, text).unwrap();
    let (code, _, err) = robcomm(&["simulate", "--scenario", bad.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("network.edges[3][1]"), "{err}");
    let (code, _, _) = robcomm(&["simulate", "--scenario", dir.join("missing.json").to_str().unwrap()]);
    assert_eq!(code, 2);
    let (code, _, _) = robcomm(&["simulate"]);
    assert_eq!(code, 2);
    let (code, _, _) = robcomm(&["simulate", "--scenario", &scenario("diamond.json"), "--mode", "hex"]);
    assert_eq!(code, 2);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn machine_format_and_out_dir() {
    let dir = std::env::temp_dir().join(format!("robcomm-out-{}", std::process::id()));
    let (code, out, _) = robcomm(&[
        "simulate",
        "--scenario",
        &scenario("diamond.json"),
        "--format",
        "machine",
        "--out",
        dir.to_str().unwrap(),
        "--seed",
        "9",
    ]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["decoded"], "alpha");
    assert_eq!(v["stage"], 6);
    let trace = std::fs::read_to_string(dir.join("trace.txt")).unwrap();
    assert!(trace.starts_with("seed=9\n"));
    assert!(std::fs::read_to_string(dir.join("summary.txt")).unwrap().contains("decoded=alpha stage=6"));
    assert_eq!(std::fs::read_to_string(dir.join("summary.json")).unwrap(), out);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn verify_eq_prints_exact_slack() {
    let (code, out, _) = robcomm(&["verify-eq", "--scenario", &scenario("farrell.json")]);
    assert_eq!(code, 0);
    assert!(out.contains("posterior after b: w=1/3 w'=2/3"));
    assert!(out.ends_with("OK; receiver payoff 9/4\n"));
    let (code, out, _) = robcomm(&["verify-eq", "--scenario", &scenario("farrell-revealing.json")]);
    assert_eq!(code, 1);
    assert!(out.contains("REJECTED; violated truthful at w': report w' vs w slack=-1"));
}

#[test]
fn randomized_sweep_from_the_command_line() {
    let (code, out, _) = robcomm(&["sweep", "--scenario", &scenario("diamond.json"), "--samples", "300"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("runs=300 failures=0"));
    let (code, out, _) = robcomm(&["sweep", "--scenario", &scenario("cut.json")]);
    assert_eq!(code, 1);
    assert!(out.contains("runs=2 failures=2"));
}
