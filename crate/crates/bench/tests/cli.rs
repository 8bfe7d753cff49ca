use std::path::Path;
use std::process::Command;

fn resplit(args: &[&str], cwd: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_resplit"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

#[test]
fn malformed_config_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "seed = 1\nunknown_key = 3\n").unwrap();
    let out = resplit(&["gen", "--config", "bad.toml", "--trials", "1"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(dir.path().join("bad.toml"), "[env.solver]\nrho = -1.0\n").unwrap();
    let out = resplit(&["gen", "--config", "bad.toml", "--trials", "1"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn learned_method_without_checkpoint_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = resplit(
        &["eval", "--method", "atrs", "--trials", "1", "--density", "sparse", "--scale", "short"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn empty_instance_pool_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("empty")).unwrap();
    std::fs::write(dir.path().join("cfg.toml"), "[train.pool]\ndir = \"empty\"\n").unwrap();
    let out = resplit(&["train", "--config", "cfg.toml", "--out", "run"], dir.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn unreachable_scale_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    // a 4 m workspace cannot hold a short-range start/goal pair
    std::fs::write(dir.path().join("cfg.toml"), "[generator]\nworkspace = 4.0\nmax_attempts = 2\n").unwrap();
    let out = resplit(&["gen", "--config", "cfg.toml", "--trials", "1", "--density", "sparse", "--scale", "long"], dir.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn gen_then_fixed_eval_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = resplit(
        &["gen", "--trials", "2", "--density", "sparse", "--scale", "short", "--out", "pool"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let files = std::fs::read_dir(dir.path().join("pool")).unwrap().count();
    assert_eq!(files, 2);
    let out = resplit(
        &["eval", "--method", "fixed", "--trials", "2", "--density", "sparse", "--scale", "short", "--out", "res"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trials = std::fs::read_to_string(dir.path().join("res/trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 3);
    assert!(dir.path().join("res/summary.csv").exists());
}
