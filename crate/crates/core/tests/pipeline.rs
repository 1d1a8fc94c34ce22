//! End-to-end runs of the command-line tool and the synthetic corpus.

use std::path::Path;
use std::process::{Command, Output};

use pdrtune::params::ConfigSpace;
use pdrtune::synth::{self, SynthConfig};
use pdrtune::train::Outcome;

fn pdrtune(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdrtune")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = pdrtune(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(pdrtune(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(pdrtune(&[]).status.code(), Some(2));
    assert_eq!(pdrtune(&["space", "--format", "hex"]).status.code(), Some(2));
}

#[test]
fn every_subcommand_has_help() {
    for cmd in ["features", "graph", "coi", "space", "train", "predict", "run", "evaluate", "importance", "synth"] {
        let out = pdrtune(&[cmd, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{cmd} --help");
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"), "{cmd} --help prints usage");
    }
}

#[test]
fn runtime_errors_exit_with_one() {
    let out = pdrtune(&["features", "/nonexistent/circuit.aag"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn space_lists_every_valid_configuration() {
    let text = ok(&["space"]);
    assert_eq!(text.lines().count(), 114);
    assert_eq!(text.lines().next(), Some("pdr"));
    let bits = ok(&["space", "--format", "bits"]);
    for line in bits.lines() {
        let v = line.strip_prefix("grncyfitk=").expect("bit-vector prefix");
        assert!(v.len() == 9 && v.chars().all(|c| c == '0' || c == '1'), "{line}");
    }
}

fn synth_train_predict(dir: &Path) -> (Vec<u8>, Vec<u8>) {
    let corpus = dir.join("corpus");
    let model = dir.join("model");
    ok(&["synth", "--seed", "3", "--n", "12", "--out-dir", s(&corpus)]);
    let data = corpus.join("runtimes.csv");
    ok(&["train", "--seed", "3", "--data", s(&data), "--aigs", s(&corpus), "--out-dir", s(&model), "--epochs", "3"]);
    for f in ["model.ckpt", "normalizer.json", "metrics.csv", "split.csv"] {
        assert!(model.join(f).exists(), "{f} missing");
    }
    let pred = dir.join("pred.csv");
    let aig = corpus.join("synth_000.aig");
    ok(&["predict", s(&aig), "--model", s(&model.join("model.ckpt")), "--top", "114", "--out", s(&pred)]);
    (std::fs::read(pred).unwrap(), std::fs::read(model.join("model.ckpt")).unwrap())
}

#[test]
fn fixed_seed_pipeline_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (pred_a, ckpt_a) = synth_train_predict(a.path());
    let (pred_b, ckpt_b) = synth_train_predict(b.path());
    assert_eq!(ckpt_a, ckpt_b);
    assert_eq!(pred_a, pred_b);
    let text = String::from_utf8(pred_a).unwrap();
    assert_eq!(text.lines().next(), Some("rank,flags,predicted_log_runtime"));
    assert_eq!(text.lines().count(), 115);
}

#[test]
fn run_and_evaluate_with_a_stub_engine() {
    let dir = tempfile::tempdir().unwrap();
    let engine = dir.path().join("engine.sh");
    std::fs::write(&engine, "#!/bin/sh\nshift\ncase \"$*\" in\n  -g) echo 'Property proved' ;;\n  *) sleep 5 ;;\nesac\n").unwrap();
    let aig = dir.path().join("toy.aag");
    std::fs::write(&aig, "aag 1 1 0 1 0\n2\n2\n").unwrap();
    let template = format!("sh {} {{aig}} {{flags}}", engine.display());
    let logs = dir.path().join("logs");
    let base = dir.path().join("base.csv");
    let meth = dir.path().join("method.csv");
    let common = ["--template", &template, "--wall-limit", "0.5", "--log-dir", s(&logs)];
    let mut args = vec!["run", s(&aig), "--baseline", "--out", s(&base)];
    args.extend(common);
    ok(&args);
    let mut args = vec!["run", s(&aig), "--config", "pdr -g", "--config", "pdr -r", "--parallel", "--out", s(&meth)];
    args.extend(common);
    ok(&args);
    let summary = ok(&["evaluate", "--baseline", s(&base), "--method", s(&meth), "--wall-limit", "0.5"]);
    assert!(summary.contains("+1 (n/a)"), "{summary}");

    let mut args = vec!["run", s(&aig), "--template", "exit 7 # {aig} {flags}", "--log-dir", s(&logs), "--out", s(&base)];
    args.extend(["--wall-limit", "5"]);
    assert_eq!(pdrtune(&args).status.code(), Some(1), "an ERROR outcome fails the run");
}

#[test]
fn planted_optimum_is_recoverable_from_the_csv() {
    let data = synth::generate(&SynthConfig { n_circuits: 12, seed: 8, wall_limit: 3600.0 }).unwrap();
    let space = ConfigSpace::enumerate_valid();
    assert_eq!(data.records.len(), 12 * space.len());
    assert!(data.records.iter().all(|r| r.config.is_valid()));
    for ((id, _), f) in data.circuits.iter().zip(&data.features) {
        let rows: Vec<_> = data.records.iter().filter(|r| &r.circuit == id).collect();
        let best_row = rows.iter().min_by(|a, b| a.wall_seconds.total_cmp(&b.wall_seconds)).unwrap();
        if best_row.outcome == Outcome::Timeout {
            continue;
        }
        let best_planted =
            space.iter().min_by(|a, b| data.manifest.log_runtime(id, f, a).total_cmp(&data.manifest.log_runtime(id, f, b))).unwrap();
        assert_eq!(&best_row.config, best_planted, "{id}");
        let expected = data.manifest.log_runtime(id, f, best_planted).exp();
        assert!((best_row.wall_seconds - expected).abs() <= 1e-9 * expected, "{id}");
    }
}
