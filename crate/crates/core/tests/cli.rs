use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_localmix"))
}

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn json(args: &[&str]) -> serde_json::Value {
    let out = bin().args(args).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn verify_bound_reports() {
    let v = json(&[
        "verify-bound",
        "--system",
        &data("systems/lazy_walk_dumbbell6.json"),
        "--horizon",
        "3000",
    ]);
    assert_eq!(v["holds"], true);
    assert_eq!(v["tau"], 34);
    let v = json(&[
        "verify-bound",
        "--system",
        &data("systems/state_dependent_cycle6.json"),
        "--horizon",
        "500",
    ]);
    assert_eq!(v["applicable"], false);
    assert!(v["holds"].is_null());
}

#[test]
fn graph_override_and_inline_specs() {
    let v = json(&[
        "verify-bound",
        "--system",
        r#"{"kind":"homogeneous","matrix":"lazy_walk"}"#,
        "--graph",
        "cycle:7",
        "--horizon",
        "2000",
    ]);
    assert_eq!(v["n"], 7);
    assert_eq!(v["phi_exact"], true);
}

#[test]
fn conductance_and_extract() {
    let v = json(&["conductance", "--graph", "cycle:4"]);
    assert!((v["phi"].as_f64().unwrap() - 0.5).abs() < 1e-9);
    let v = json(&[
        "conductance",
        "--graph",
        "complete:2",
        "--matrix",
        "[[0,1],[1,0]]",
    ]);
    assert!((v["phi"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    let v = json(&[
        "extract",
        "--graph",
        "path:3",
        "--pair",
        r#"{"y":[1,0,0],"z":[0,0,1]}"#,
    ]);
    assert_eq!(v["feasible"], false);
    assert_eq!(v["violated_subset"], serde_json::json!([2]));
    let v = json(&[
        "extract",
        "--graph",
        "path:3",
        "--pair",
        r#"{"y":[1,0,0],"z":[0.5,0.5,0]}"#,
    ]);
    assert_eq!(v["feasible"], true);
}

#[test]
fn lift_build_writes_chain() {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let out = dir.join("lift_cycle5.json");
    let status = bin()
        .args([
            "lift-build",
            "--system",
            r#"{"kind":"homogeneous","graph":{"family":"cycle","size":5},"matrix":"lazy_walk"}"#,
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["chain"]["tau"], 3);
    assert_eq!(v["chain"]["index_order"], "((start * tau) + clock) * n + current");
    assert_eq!(v["upper_holds"], true);
    assert!(v["simulation"].as_array().unwrap().iter().all(|s| s["passed"] == true));
}

#[test]
fn finite_time_modes() {
    let v = json(&[
        "finite-time",
        "--graph",
        "cycle:4",
        "--matrix",
        "[[[0.5,0.5,0,0],[0.5,0.5,0,0],[0,0,0.5,0.5],[0,0,0.5,0.5]],[[0.5,0,0,0.5],[0,0.5,0.5,0],[0,0.5,0.5,0],[0.5,0,0,0.5]]]",
    ]);
    assert_eq!(v["rank_one"], true);
    assert_eq!(v["satisfies_bound"], true);
    let v = json(&["finite-time", "--graph", "path:4", "--trials", "50"]);
    assert_eq!(v["violations"], 0);
}

#[test]
fn errors_exit_nonzero() {
    let out = bin()
        .args(["conductance", "--graph", "cycle:40"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let out = bin()
        .args(["verify-bound", "--system", "/nonexistent.json"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot read"));
    let out = bin()
        .args(["dumbbell-scaling", "--n", "5"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn csv_outputs() {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let csv = dir.join("dhn.csv");
    let status = bin()
        .args(["dhn-demo", "--m", "8,12", "--horizon", "3000", "--csv"])
        .arg(&csv)
        .stdout(std::process::Stdio::null())
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("m,p_switch,tau_dhn,tau_rw,phi,bound\n8,"));
    let trace = dir.join("trace.csv");
    let status = bin()
        .args(["verify-bound", "--system", &data("systems/dhn_cycle12.json"), "--horizon", "100", "--trace"])
        .arg(&trace)
        .stdout(std::process::Stdio::null())
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(text.lines().count(), 102);
    assert!(text.starts_with("t,d\n0,"));
}
