//! File-level runs of the experiment harness.

use std::path::Path;

use gdo_core::harness::{
    self, parse_config, parse_config_str, emit_config, BOUND_FILE, BOUND_HEADER, RESULTS_FILE, RESULTS_HEADER,
    SUMMARY_FILE,
};
use gdo_core::theory::{error_bound, BoundParams};
use gdo_core::Error;

const TINY: &str = r#"{
    "dataset": {"kind": "two_moons", "n": 80, "total_shift": 40},
    "n_given_grid": [2, 3],
    "inter_steps_grid": [0, 1, 2],
    "methods": ["gdo", "gst", "source_only", "target_st"],
    "seeds": [3, 1],
    "hidden": [6],
    "gdo": {"pretrain_epochs": 10, "m": 2, "epochs_per_step": 1, "eval_points": 16,
            "inter_points": 16, "warmup_points": 4}
}"#;

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn run_writes_canonical_results_and_report_reproduces_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(write(dir.path(), "cfg.json", TINY)).unwrap();
    let exp = harness::run_experiment(&cfg, Some(1)).unwrap();
    assert_eq!(exp.outcome.rows.len(), 4 * 2 * 3 * 2);
    assert!(exp.outcome.failures.is_empty());

    let out = dir.path().join("out");
    exp.artifacts.write_to(&out).unwrap();
    let results = std::fs::read_to_string(out.join(RESULTS_FILE)).unwrap();
    assert_eq!(results.lines().next().unwrap(), RESULTS_HEADER.join(","));
    assert!(results.lines().skip(1).all(|l| l.ends_with(",0")), "runtime is zeroed without timing");

    let report = harness::report_from_csv(&results).unwrap();
    assert_eq!(report.get(SUMMARY_FILE), exp.artifacts.get(SUMMARY_FILE));
}

#[test]
fn every_method_in_a_cell_sees_the_same_sequence() {
    let cfg = parse_config_str(TINY).unwrap();
    let rows = harness::run_experiment(&cfg, Some(2)).unwrap().outcome.rows;
    for r in &rows {
        let peers: Vec<_> = rows
            .iter()
            .filter(|o| o.n_given == r.n_given && o.seed == r.seed)
            .map(|o| o.fingerprint.as_str())
            .collect();
        assert!(peers.iter().all(|f| *f == r.fingerprint));
    }
}

#[test]
fn thread_count_does_not_change_output() {
    let cfg = parse_config_str(TINY).unwrap();
    let one = harness::run_experiment(&cfg, Some(1)).unwrap();
    let three = harness::run_experiment(&cfg, Some(3)).unwrap();
    assert_eq!(one.artifacts.get(RESULTS_FILE), three.artifacts.get(RESULTS_FILE));
}

#[test]
fn ablation_matrix_has_one_cell_per_grid_point() {
    let cfg = parse_config_str(TINY).unwrap();
    let exp = harness::run_ablation(&cfg, Some(1)).unwrap();
    let csv = exp.artifacts.get(harness::ABLATION_FILE).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "method,n_given,inter_steps=0,inter_steps=1,inter_steps=2");
    let body: Vec<&str> = lines.collect();
    assert_eq!(body.len(), cfg.methods.len() * cfg.n_given_grid.len());
    for method in &cfg.methods {
        let cells: usize = body
            .iter()
            .filter(|l| l.starts_with(&format!("{},", method.name())))
            .map(|l| l.split(',').count() - 2)
            .sum();
        assert_eq!(cells, cfg.n_given_grid.len() * cfg.inter_steps_grid.len());
    }
}

#[test]
fn theory_bound_csv_matches_recomputation() {
    let cfg = parse_config_str(TINY).unwrap();
    let exp = harness::run_theory(&cfg, Some(1)).unwrap();
    let csv = exp.artifacts.get(BOUND_FILE).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), BOUND_HEADER.join(","));
    let mut count = 0;
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(v.len(), BOUND_HEADER.len());
        let p = BoundParams {
            t: v[0] as usize,
            m: v[1] as usize,
            mu: v[2],
            sigma2: v[3],
            gamma0: v[4],
            epsilon: v[5],
            delta: v[6],
            err0: v[7],
            c: v[8],
        };
        assert_eq!(v[15], error_bound(&p).unwrap());
        count += 1;
    }
    assert_eq!(count, cfg.theory.t_max * cfg.theory.m_values.len());
    assert!(exp.artifacts.get(harness::LYAPUNOV_FILE).is_some());
    assert!(exp.outcome.rows.iter().all(|r| r.method == harness::Method::Gdo));
}

#[test]
fn config_errors_are_categorised() {
    let dir = tempfile::tempdir().unwrap();
    let missing = parse_config(dir.path().join("nope.json")).unwrap_err();
    assert!(matches!(missing, Error::ConfigNotFound(_)));
    assert_eq!(missing.category(), "config-not-found");

    let typo = TINY.replace("\"pretrain_epochs\"", "\"alpah\": 1, \"pretrain_epochs\"");
    let err = parse_config(write(dir.path(), "typo.json", &typo)).unwrap_err();
    assert!(err.to_string().contains("alpah"), "{err}");
    assert!(err.is_config());

    let wrong_type = TINY.replace("\"seeds\": [3, 1]", "\"seeds\": \"3\"");
    let err = parse_config_str(&wrong_type).unwrap_err();
    assert!(err.to_string().contains("seeds"), "{err}");

    let no_data = r#"{"dataset": {"kind": "rotated_mnist", "dir": "/nonexistent"},
        "n_given_grid": [2], "inter_steps_grid": [0], "seeds": [0]}"#;
    let err = parse_config(write(dir.path(), "mnist.json", no_data)).unwrap_err();
    assert_eq!(err.category(), "config-invalid");
}

#[test]
fn emitted_config_parses_to_itself() {
    let cfg = parse_config_str(TINY).unwrap();
    assert_eq!(parse_config_str(&emit_config(&cfg)).unwrap(), cfg);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let text = std::fs::read_to_string(entry.unwrap().path()).unwrap();
        parse_config_str(&text).unwrap();
        seen += 1;
    }
    assert!(seen >= 4);
}
