use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn filterlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_filterlab"))
        .args(args)
        .env("FILTERLAB_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn solve_dpre_golden_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = scenarios().join("golden_ratio.json");
    let o = filterlab(&["solve-dpre", "--scenario", scenario.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("1.6180339887"));
    assert!(dir.path().join("dpre_central.csv").exists());
}

#[test]
fn observability_of_alternating_sensor() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = scenarios().join("alternating_observation.json");
    let o = filterlab(&["observability", "--scenario", scenario.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("uniformly observable: true"));
}

#[test]
fn small_scenario_commands_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = scenarios().join("three_sensors.json");
    let (s, d) = (scenario.to_str().unwrap(), dir.path().to_str().unwrap());
    for (cmd, files) in [
        ("simulate", &["per_step.csv", "steady.csv", "results.json", "timing.txt"][..]),
        ("gap", &["gap.csv", "gap.json", "rates.csv"][..]),
        ("rates", &["rates.csv"][..]),
        ("compare-cidf", &["comparison.csv", "comparison.json"][..]),
        ("solve-dpre", &["dpre_central.csv", "dpre_nodes.csv"][..]),
    ] {
        let o = filterlab(&[cmd, "--scenario", s, "--out", d, "--trials", "50"]);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        for f in files {
            assert!(dir.path().join(f).exists(), "{cmd} did not write {f}");
        }
    }
}

#[test]
fn identical_invocations_give_identical_files() {
    let scenario = scenarios().join("three_sensors.json");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = filterlab(&["simulate", "--scenario", scenario.to_str().unwrap(), "--out", d.path().to_str().unwrap(), "--seed", "3"]);
        assert!(o.status.success());
    }
    for f in ["per_step.csv", "steady.csv", "results.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn paper_smoke_run_with_few_trials() {
    let dir = tempfile::tempdir().unwrap();
    let o = filterlab(&["paper", "--trials", "10", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["scenario.json", "graph.json", "weights.csv", "dpre_central.csv", "gap.csv", "rates.csv", "per_step.csv", "steady.csv", "comparison.csv"] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(filterlab(&["simulate", "--unknown"]).status.code(), Some(1));
    assert_eq!(filterlab(&["simulate", "--scenario", d.join("missing.json").to_str().unwrap()]).status.code(), Some(1));

    // A growing state that no sensor sees: the Riccati iteration blows up.
    let blind = d.join("blind.json");
    std::fs::write(
        &blind,
        r#"{"A": [[[2.0, 0.0], [0.0, 0.5]]], "Q": [[[1.0, 0.0], [0.0, 1.0]]], "sensors": [{"C": [[[0.0, 1.0]]], "R": [[[1.0]]]}]}"#,
    )
    .unwrap();
    let o = filterlab(&["solve-dpre", "--scenario", blind.to_str().unwrap(), "--out", d.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));

    let bad = d.join("bad.json");
    std::fs::write(&bad, r#"{"A": [[[1.0]]]}"#).unwrap();
    assert_eq!(filterlab(&["solve-dpre", "--scenario", bad.to_str().unwrap()]).status.code(), Some(1));

    let o = Command::new(env!("CARGO_BIN_EXE_filterlab"))
        .args(["solve-dpre", "--scenario", scenarios().join("golden_ratio.json").to_str().unwrap(), "--out", d.to_str().unwrap()])
        .env("FILTERLAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}
