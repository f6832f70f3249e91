use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn mpet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpet")).args(args).env("MPET_CONFIG_DIR", configs()).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn derive_prints_hand_checked_values() {
    let o = mpet(&["derive", "--params", "one_network.toml"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("gamma_1 = 0.05"), "{s}");
    assert!(s.contains("gamma_u = 1.525"));
    assert!(s.contains("gamma_v1 = 3.1"));
}

#[test]
fn derive_json_is_valid() {
    let o = mpet(&["derive", "--networks", "2", "--json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v.is_object());
}

#[test]
fn lemmas_all_pass() {
    let o = mpet(&["lemmas"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("1000/1000 passed"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(mpet(&[]).status.code(), Some(2));
    assert_eq!(mpet(&["--bogus"]).status.code(), Some(2));
    assert_eq!(mpet(&["derive", "--params", "missing.toml"]).status.code(), Some(2));
    assert_eq!(mpet(&["sweep", "--config", "one_network.toml"]).status.code(), Some(2));
}

#[test]
fn quiet_silences_logging() {
    let o = mpet(&["--quiet", "solve", "--params", "one_network.toml", "--mesh", "2"]);
    assert!(o.status.success());
    assert!(o.stderr.is_empty(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn assemble_writes_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let o = mpet(&["assemble", "--networks", "2", "--mesh", "2", "-o", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    for f in ["A.mtx", "W.mtx", "B_uv.mtx", "B_p.mtx", "blocks.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
}

#[test]
fn solve_with_both_solvers() {
    for solver in ["direct", "minres"] {
        let o = mpet(&["solve", "--params", "one_network.toml", "--mesh", "2", "--solver", solver]);
        assert!(o.status.success(), "{solver}");
        assert!(stdout(&o).starts_with("dofs,iterations,residual"));
    }
}

#[test]
fn run_writes_trajectory_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.csv");
    let o = mpet(&["run", "--params", "one_network.toml", "--mesh", "2", "--steps", "3", "-o", out.to_str().unwrap()]);
    assert!(o.status.success());
    let s = std::fs::read_to_string(out).unwrap();
    assert_eq!(s.lines().count(), 4);
    assert!(s.starts_with("step,t,"));
}

#[test]
fn sweep_output_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.toml");
    std::fs::write(&cfg, "mesh = [2]\nn = [1, 2]\nk = [1e-4, 1.0]\n").unwrap();
    let run = |jobs: &str| {
        let o = mpet(&["sweep", "--config", cfg.to_str().unwrap(), "--jobs", jobs]);
        assert!(o.status.success());
        o.stdout
    };
    let a = run("1");
    assert_eq!(a, run("2"));
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 5);
}

#[test]
fn constants_table() {
    let o = mpet(&["constants", "--meshes", "2,3"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("nx,h,c0,c1"));
}
