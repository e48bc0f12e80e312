//! Every example builds and exits cleanly at small sizes.

use std::path::PathBuf;
use std::process::Command;

/// `target/<profile>/examples`, next to this test's `deps` directory.
fn examples_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(|deps| deps.parent()).unwrap().join("examples")
}

fn run(name: &str, args: &[&str]) {
    let path = examples_dir().join(format!("{name}{}", std::env::consts::EXE_SUFFIX));
    assert!(path.exists(), "{} not built", path.display());
    let out = Command::new(&path).args(args).env("TAEBLP_WORKERS", "2").output().unwrap();
    assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    assert!(!out.stdout.is_empty());
}

#[test]
fn measures_tour() {
    run("measures_tour", &[]);
}

#[test]
fn single_process() {
    run("single_process", &[]);
}

#[test]
fn second_class_particle() {
    run("second_class_particle", &[]);
}

#[test]
fn convexity_labels() {
    run("convexity_labels", &[]);
}

#[test]
fn oracle_verify() {
    run("oracle_verify", &[]);
}

#[test]
fn shock_random_walk() {
    run("shock_random_walk", &["500"]);
}

#[test]
fn variance_identity() {
    run("variance_identity", &["300"]);
}

#[test]
fn covariance_identity() {
    run("covariance_identity", &["300"]);
}

#[test]
fn scaling_scan() {
    run("scaling_scan", &[]);
}
