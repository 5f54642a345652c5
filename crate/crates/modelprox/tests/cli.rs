//! The `modelprox` binary end to end.

use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_modelprox"))
        .args(args)
        .current_dir(dir)
        .env("MODELPROX_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

#[test]
fn generate_then_solve() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&run(&["gen-qip", "--n", "5", "--m", "10", "--seed", "7", "--out", "q.json"], d)), 0);
    let out = run(
        &["solve", "--instance", "q.json", "--model", "m1", "--metric", "bb", "--trace", "t.csv", "--out", "r.json"],
        d,
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let trace = std::fs::read_to_string(d.join("t.csv")).unwrap();
    assert!(trace.starts_with("k,i_k,gamma_k,f,model_error,step_norm,step_norm_H,wall_ms\n"));
    assert!(trace.lines().count() >= 2);
    let result: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(result["model"], "m1");
    assert!(d.join("r.json.timing.json").is_file());
}

#[test]
fn missing_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["gen-qip", "--n", "5", "--out", "q.json"], dir.path());
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(code(&run(&["frobnicate"], dir.path())), 1);
    assert_eq!(code(&run(&["solve", "--instance", "absent.json", "--model", "m1"], dir.path())), 1);
}

#[test]
fn non_convergence_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&run(&["gen-polytope", "--n", "10", "--m", "20", "--p", "2", "--out", "p.json"], d)), 0);
    let out = run(&["solve", "--instance", "p.json", "--model", "taylor", "--max-outer", "2"], d);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("cfg.json"), r#"{"solver":{"tau":4,"max_outer":3}}"#).unwrap();
    std::fs::write(d.join("bad.json"), r#"{"solver":{"tau":4,"typo":1}}"#).unwrap();
    assert_eq!(code(&run(&["gen-qip", "--n", "4", "--m", "16", "--seed", "1", "--out", "q.json"], d)), 0);
    let solve = |extra: &[&str]| {
        let mut args = vec!["solve", "--instance", "q.json", "--model", "taylor", "--trace", "t.csv"];
        args.extend_from_slice(extra);
        run(&args, d)
    };
    assert_eq!(code(&solve(&["--config", "bad.json"])), 1);
    solve(&["--config", "cfg.json"]);
    // Rows as (k, i_k, gamma_k).
    let rows = || -> Vec<(usize, usize, f64)> {
        let text = std::fs::read_to_string(d.join("t.csv")).unwrap();
        text.lines()
            .skip(1)
            .map(|l| {
                let c: Vec<&str> = l.split(',').collect();
                (c[0].parse().unwrap(), c[1].parse().unwrap(), c[2].parse().unwrap())
            })
            .collect()
    };
    // File: τ = 4, at most 3 steps, default γ_k^0 = 2 after the first step.
    let from_file = rows();
    assert!(!from_file.is_empty() && from_file.len() <= 3);
    for &(k, i, g) in &from_file {
        if k >= 1 {
            assert_eq!(g, 4f64.powi(i as i32 + 1) * 2.0);
        }
    }
    // Flags win over the file: τ = 2 and γ_k^0 = 1 throughout.
    solve(&["--config", "cfg.json", "--tau", "2", "--max-outer", "5", "--gamma0", "1"]);
    let from_flags = rows();
    assert!(from_flags.len() <= 5);
    for (_, i, g) in from_flags {
        assert_eq!(g, 2f64.powi(i as i32 + 1));
    }
}

#[test]
fn bench_and_report_agree() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = run(
        &[
            "bench", "--suite", "qip", "--out-dir", "b", "--runs", "2", "--n", "4", "--m", "16", "--models", "m1,taylor",
            "--metrics", "hessian", "--params", "0.01",
        ],
        d,
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("| param | algorithm |"));
    let rerendered = run(&["report", "--dir", "b", "--format", "csv"], d);
    assert_eq!(code(&rerendered), 0);
    assert_eq!(rerendered.stdout, std::fs::read(d.join("b/qip_report.csv")).unwrap());
    assert!(d.join("b/qip_MQN-M1_0.01_0.json").is_file());
    assert!(d.join("b/qip_convergence_0.01.svg").is_file());
}

#[test]
fn check_passes_on_built_ins() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["check"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    assert!(!String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}
