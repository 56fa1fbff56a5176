use std::fs;
use std::path::PathBuf;

use lohe_core::harness::{run, Model, Scenario};
use lohe_core::Error;

fn shipped() -> Vec<PathBuf> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    v.sort();
    v
}

fn load(name: &str) -> Scenario {
    let p = shipped()
        .into_iter()
        .find(|p| p.file_stem().unwrap() == name)
        .unwrap();
    Scenario::load(&p).unwrap()
}

#[test]
fn every_shipped_scenario_builds() {
    let all = shipped();
    assert!(all.len() >= 8);
    for p in all {
        let s = Scenario::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert_eq!(s.name, p.file_stem().unwrap().to_str().unwrap());
        match s.model {
            Model::Kuramoto => {
                s.kuramoto_state().unwrap();
            }
            _ => {
                s.initial_state().unwrap();
            }
        }
        assert!(!s.declared_checks().is_empty());
    }
}

#[test]
fn lemma41_run_passes() {
    let dir = tempfile::tempdir().unwrap();
    let m = run(&load("lemma41_n2"), dir.path()).unwrap();
    assert!(m.pass, "{}", m.summary());
    let decay = m
        .checks
        .iter()
        .find(|c| c.name == "correlation_decay")
        .unwrap();
    assert!(decay.pass);
}

#[test]
fn reruns_are_bitwise_identical() {
    let mut s = load("random_n4");
    s.dynamics.t = 1.0;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = run(&s, a.path()).unwrap();
    let mb = run(&s, b.path()).unwrap();
    assert_eq!(ma.scenario_hash, mb.scenario_hash);
    let read =
        |m: &lohe_core::harness::RunManifest| fs::read(m.run_dir.join("observables.csv")).unwrap();
    assert_eq!(read(&ma), read(&mb));
    s.seed = Some(1);
    let mc = run(&s, a.path()).unwrap();
    assert_ne!(read(&ma), read(&mc));
}

#[test]
fn solver_failure_keeps_flagged_partial_outputs() {
    let mut s = load("lemma41_n2");
    s.dynamics.dt = 0.01;
    let dir = tempfile::tempdir().unwrap();
    match run(&s, dir.path()) {
        Err(Error::RunFailed { dir, message }) => {
            assert!(message.contains("0.5"), "{message}");
            let report: serde_json::Value =
                serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap())
                    .unwrap();
            assert_eq!(report["pass"], false);
            assert!(report["failure"].is_string());
            assert!(dir.join("observables.csv").exists());
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn kuramoto_scenario_passes() {
    let dir = tempfile::tempdir().unwrap();
    let m = run(&load("kuramoto_pair"), dir.path()).unwrap();
    assert!(m.pass, "{}", m.summary());
    let csv = fs::read_to_string(m.run_dir.join("observables.csv")).unwrap();
    assert!(csv.starts_with("t,theta_1,theta_2\n"));
}
