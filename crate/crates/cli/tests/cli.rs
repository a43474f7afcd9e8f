use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ctmap(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctmap"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn simulated() -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    let out = ctmap(tmp.path(), &["--out-dir", "sim", "simulate", "--trips", "4"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    tmp
}

const GRAPH: [&str; 4] = ["--nodes", "sim/nodes.csv", "--edges", "sim/edges.csv"];

fn with_graph<'a>(head: &[&'a str], tail: &[&'a str]) -> Vec<&'a str> {
    head.iter().chain(GRAPH.iter()).chain(tail).copied().collect()
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = simulated();
    let dir = tmp.path();
    let cases: Vec<Vec<&str>> = vec![
        vec!["simulate", "--trips", "0"],
        vec!["entropy", "--nodes", "sim/nodes.csv", "--edges", "sim/edges.csv", "--budget", "0"],
        with_graph(&["map"], &["--towers", "sim/towers.csv", "--trajectories", "sim/trajectories.csv", "--algorithm", "viterbi"]),
        with_graph(&["map"], &["--towers", "missing.csv", "--trajectories", "sim/trajectories.csv"]),
        vec!["build-graph", "--nodes", "nope.csv", "--edges", "sim/edges.csv"],
        vec!["--jobs", "0", "simulate", "--trips", "1"],
        with_graph(&["evaluate"], &["--paths", "sim/truth.csv"]),
        with_graph(&["evaluate"], &["--paths", "sim/truth.csv", "--truth", "sim/truth.csv", "--epsilons", "0.1,x"]),
        vec!["frobnicate"],
    ];
    for args in cases {
        let out = ctmap(dir, &args);
        assert_eq!(code(&out), 2, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn missing_inputs_are_named() {
    let tmp = simulated();
    let out = ctmap(tmp.path(), &["build-graph", "--nodes", "nowhere/nodes.csv", "--edges", "sim/edges.csv"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere/nodes.csv"));
}

#[test]
fn config_files_override_parameters() {
    let tmp = simulated();
    let dir = tmp.path();
    fs::write(dir.join("bad.cfg"), "# comment\nwarp = 9\n").unwrap();
    let out = ctmap(dir, &["--config", "bad.cfg", "simulate", "--trips", "1"]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.cfg:2") && err.contains("warp"), "{err}");

    fs::write(dir.join("k.cfg"), "k = 3\nnoise = 0\n").unwrap();
    let out = ctmap(
        dir,
        &with_graph(&["--config", "k.cfg", "--out-dir", "m", "map"], &["--towers", "sim/towers.csv", "--trajectories", "sim/trajectories.csv"]),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let sidecar: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("m/paths.json")).unwrap()).unwrap();
    assert_eq!(sidecar["params"]["max_candidates"], 3);
    let manifest = fs::read_to_string(dir.join("m/manifest_map.json")).unwrap();
    assert!(manifest.contains("k.cfg"));
}

#[test]
fn corrupt_input_is_a_runtime_failure_with_a_line_number() {
    let tmp = simulated();
    let dir = tmp.path();
    let mut text = fs::read_to_string(dir.join("sim/trajectories.csv")).unwrap();
    text.push_str("trip9999,notatime,a000_000\n");
    fs::write(dir.join("bad.csv"), &text).unwrap();
    let out = ctmap(dir, &with_graph(&["map"], &["--towers", "sim/towers.csv", "--trajectories", "bad.csv"]));
    assert_eq!(code(&out), 1);
    let lines = text.lines().count();
    assert!(String::from_utf8_lossy(&out.stderr).contains(&format!("line {lines}")));
}

#[test]
fn unmappable_trajectories_are_reported_not_fatal() {
    let tmp = simulated();
    let dir = tmp.path();
    let mut text = fs::read_to_string(dir.join("sim/trajectories.csv")).unwrap();
    text.push_str("ghost,1,no_such_tower\nghost,2,no_such_tower\n");
    fs::create_dir(dir.join("batch")).unwrap();
    fs::write(dir.join("batch/a.csv"), &text).unwrap();
    let out = ctmap(dir, &with_graph(&["--out-dir", "m", "map"], &["--towers", "sim/towers.csv", "--trajectories", "batch"]));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("m/manifest_map.json")).unwrap()).unwrap();
    assert_eq!(manifest["failures"][0]["id"], "ghost");

    fs::write(dir.join("batch/b.csv"), "trajectory_id,timestamp,tower_id\nghost,5,a000_000\nghost,6,a000_000\n").unwrap();
    let out = ctmap(dir, &with_graph(&["--out-dir", "m2", "map"], &["--towers", "sim/towers.csv", "--trajectories", "batch"]));
    assert_eq!(code(&out), 1);

    fs::write(dir.join("only_ghosts.csv"), "trajectory_id,timestamp,tower_id\nghost,1,zz\nghost,2,zz\n").unwrap();
    let out = ctmap(dir, &with_graph(&["--out-dir", "m3", "map"], &["--towers", "sim/towers.csv", "--trajectories", "only_ghosts.csv"]));
    assert_eq!(code(&out), 1);
}

#[test]
fn replay_detects_changed_inputs() {
    let tmp = simulated();
    let dir = tmp.path();
    let out = ctmap(dir, &with_graph(&["--out-dir", "bg", "build-graph"], &[]));
    assert_eq!(code(&out), 0);
    let edges = fs::read_to_string(dir.join("sim/edges.csv")).unwrap();
    let trimmed: String = edges.lines().take(edges.lines().count() - 1).map(|l| format!("{l}\n")).collect();
    fs::write(dir.join("sim/edges.csv"), trimmed).unwrap();
    let out = ctmap(dir, &["--out-dir", "again", "replay", "--manifest", "bg/manifest_build-graph.json"]);
    assert_eq!(code(&out), 1);
    let out = ctmap(dir, &["replay", "--manifest", "nothing.json"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn help_and_version_succeed() {
    let tmp = tempfile::tempdir().unwrap();
    for flag in ["--help", "--version"] {
        assert_eq!(code(&ctmap(tmp.path(), &[flag])), 0);
    }
}
