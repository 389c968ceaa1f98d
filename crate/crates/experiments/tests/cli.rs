use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adjoint-pde"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&["run", "ex1"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("generated observations"));
    let run = dir.path().join("runs/ex1");
    for f in ["loss_history.csv", "params_final.json", "solution.csv", "summary.json", "observations.csv"] {
        assert!(run.join(f).is_file(), "{f} missing");
    }
    let again = cli(&["run", "ex1"], dir.path());
    assert_eq!(again.status.code(), Some(0));
    assert!(!stderr(&again).contains("generated observations"));
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("ex1.cfg"), "# slower\nlr = 0.01\nmax_iter = 3\n").unwrap();
    let o = cli(
        &["run", "ex1", "--config", "ex1.cfg", "--set", "max_iter=4", "--out", "out"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let hist = fs::read_to_string(dir.path().join("out/loss_history.csv")).unwrap();
    assert_eq!(hist.lines().count(), 1 + 5);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.cfg"), "learning_rate = 1\n").unwrap();
    for args in [
        vec!["run", "ex1", "--config", "bad.cfg"],
        vec!["run", "ex1", "--set", "n_h=1"],
        vec!["run", "ex1", "--set", "lr"],
        vec!["run", "ex7"],
        vec!["run", "ex1", "--config", "missing.cfg"],
        vec!["observe", "ex2", "--set", "alpha=-1"],
    ] {
        let o = cli(&args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
        assert!(stderr(&o).starts_with("error:"));
    }
}

#[test]
fn malformed_observations_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("obs.csv"), "state,node,value\n0,0,nope\n").unwrap();
    let o = cli(&["run", "ex1", "--set", "observations=obs.csv"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn solver_failure_exits_3_with_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let grid = ["--set", "nx=3", "--set", "n_k=3", "--out", "out"];
    let o = cli(&[&["observe", "ex6"][..], &grid].concat(), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = cli(&[&["run", "ex6", "--set", "newton_max_iter=1"][..], &grid].concat(), dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let summary = fs::read_to_string(dir.path().join("out/summary.json")).unwrap();
    assert!(summary.contains("\"failed\""));
    assert!(dir.path().join("out/loss_history.csv").is_file());
}

#[test]
fn observe_then_gradcheck() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&["observe", "ex4", "--set", "n_h=10", "--set", "n_k=3", "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("o/observations.csv")).unwrap();
    assert!(text.starts_with("state,node,value\n"));
    assert_eq!(text.lines().count(), 1 + 4 * 9);

    let g = cli(&["gradcheck", "ex2"], dir.path());
    assert_eq!(g.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&g.stdout).starts_with("PASS ex2"));
}
