use std::path::Path;
use std::process::{Command, Output};

fn dalembert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dalembert")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

#[test]
fn simulate_pendulum_writes_the_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = dalembert(&["simulate", "pendulum", "--t-end", "10", "--dt", "1e-3", "--out", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let g = column(&csv, "g_norm");
    assert_eq!(g.len(), 10_001);
    assert!(g.iter().all(|&g| g <= 1e-6));
    assert_eq!(*column(&csv, "t").last().unwrap(), 10.0);
    for f in ["report.txt", "report.json"] {
        assert!(dir.path().join(f).exists());
    }
    let json = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    assert!(json.contains("\"first-integral\""));
}

#[test]
fn reactions_at_a_given_state() {
    let o = dalembert(&["reactions", "pendulum", "--state", "0,-1,2,0"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("lambda = [-1.400000000000e1]"), "{text}");
    assert!(text.contains("N = [0.000000000000e0, 1.400000000000e1]"), "{text}");
}

#[test]
fn knife_edge_skips_embedding_checks() {
    let o = dalembert(&["check-invariants", "knife-edge", "--t-end", "1"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.contains("SKIP  covariance"));
    assert!(text.contains("skipped: nonholonomic"));
    assert!(!text.contains("FAIL "));
}

#[test]
fn failed_check_sets_the_exit_code() {
    let o = dalembert(&["simulate", "pendulum", "--t-end", "1", "--threshold", "first-integral=0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL  first-integral"));
}

#[test]
fn errors_exit_with_two() {
    let o = dalembert(&["simulate", "double-pendulum"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("available: pendulum, spherical-pendulum, rotating-wire-bead, knife-edge"));
    let o = dalembert(&["compare-embeddings", "knife-edge"]);
    assert_eq!(o.status.code(), Some(2));
    let o = dalembert(&["simulate", "pendulum", "--threshold", "speed=1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn off_manifold_file_is_rejected_at_load() {
    let dir = tempfile::tempdir().unwrap();
    let exported = dalembert(&["export", "pendulum"]);
    let text = stdout(&exported).replace("-1.0", "-1.1");
    let path = dir.path().join("bad.json");
    std::fs::write(&path, text).unwrap();
    let o = dalembert(&["simulate", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("initial g residual 0.105 exceeds 1e-8"), "{}", stderr(&o));
}

fn trajectory(dir: &Path, args: &[&str]) -> String {
    let out = dir.to_str().unwrap();
    let mut all = args.to_vec();
    all.extend(["--out", out]);
    let o = dalembert(&all);
    assert!(o.status.success(), "{}", stderr(&o));
    std::fs::read_to_string(dir.join("trajectory.csv")).unwrap()
}

#[test]
fn exported_scenario_reproduces_the_catalog_run_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("spherical.json");
    std::fs::write(&file, stdout(&dalembert(&["export", "spherical-pendulum"]))).unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    let args = ["--t-end", "1"];
    let first = trajectory(&a, &[&["simulate", "spherical-pendulum"][..], &args].concat());
    let again = trajectory(&b, &[&["simulate", "spherical-pendulum"][..], &args].concat());
    let from_file = trajectory(&c, &[&["simulate", file.to_str().unwrap()][..], &args].concat());
    assert_eq!(first, again);
    assert_eq!(first, from_file);
}

#[test]
fn jobs_do_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let one = trajectory(&a, &["check-invariants", "pendulum", "--t-end", "1", "--jobs", "1"]);
    let four = trajectory(&b, &["check-invariants", "pendulum", "--t-end", "1", "--jobs", "4"]);
    assert_eq!(one, four);
    let ra = std::fs::read_to_string(a.join("report.txt")).unwrap();
    let rb = std::fs::read_to_string(b.join("report.txt")).unwrap();
    let body = |r: &str| r.lines().skip(2).map(String::from).collect::<Vec<_>>();
    assert_eq!(body(&ra), body(&rb));
}

#[test]
fn compare_embeddings_passes_on_the_catalog() {
    for name in ["pendulum", "spherical-pendulum", "rotating-wire-bead"] {
        let o = dalembert(&["compare-embeddings", name, "--t-end", "2"]);
        assert!(o.status.success(), "{name}: {}", stdout(&o));
        assert!(stdout(&o).contains("PASS  equivalence"));
    }
}
