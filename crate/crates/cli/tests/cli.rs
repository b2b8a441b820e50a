use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn blockpd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blockpd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn verify_reports_each_check() {
    let cfg = configs().join("slater_toy.json");
    let out = blockpd(&["verify", "--config", cfg.to_str().unwrap()]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    for name in [
        "convexity",
        "slater",
        "dual_bound",
        "diagonal_dominance",
        "primal_step",
        "dual_step",
    ] {
        assert!(text.contains(name), "missing {name} in\n{text}");
    }

    // no Slater point on quartic10: verify must say so and exit 1
    let cfg = configs().join("quartic10_solve.json");
    let out = blockpd(&["verify", "--config", cfg.to_str().unwrap(), "--json"]);
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v.to_string().contains("slater"));
}

#[test]
fn solve_zero_ticks() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("z");
    let cfg = configs().join("quartic10_solve.json");
    let out = blockpd(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--ticks",
        "0",
        "--seed",
        "3",
        "--out",
        prefix.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("z_seed3.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("z_summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["runs"][0]["seed"], 3);
}

#[test]
fn counterexample_writes_instance() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("ce");
    let out = blockpd(&[
        "counterexample",
        "--epsilon",
        "0.1",
        "--l",
        "10",
        "--out",
        prefix.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("ce_instance.json").exists());
    assert!(dir.path().join("ce_problem.json").exists());

    // L must exceed epsilon
    let out = blockpd(&["counterexample", "--epsilon", "1", "--l", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_config_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{"problem": {"preset": "quartic10"}, "colour": 1}"#,
    )
    .unwrap();
    let out = blockpd(&["solve", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}
