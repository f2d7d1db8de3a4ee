//! The `gdo` binary end to end, against its embedded server.

use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"{
    "dataset": {"kind": "gaussians", "n": 60, "total_shift": 30},
    "n_given_grid": [2, 3],
    "inter_steps_grid": [0, 1],
    "methods": ["gdo", "source_only"],
    "seeds": [0, 1],
    "hidden": [4],
    "gdo": {"pretrain_epochs": 5, "m": 2, "epochs_per_step": 1, "eval_points": 16,
            "inter_points": 16, "warmup_points": 4}
}"#;

fn gdo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gdo"))
        .args(args)
        .env_remove("GDO_SERVER")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn error_line(o: &Output) -> String {
    stderr(o).lines().find(|l| l.starts_with("error: ")).unwrap_or_default().to_string()
}

fn tiny(dir: &Path) -> String {
    let p = dir.join("tiny.json");
    std::fs::write(&p, TINY).unwrap();
    p.display().to_string()
}

#[test]
fn missing_config_exits_2_with_category() {
    let o = gdo(&["run", "/definitely/not/here.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(error_line(&o).starts_with("error: config-not-found: "), "{}", stderr(&o));
}

#[test]
fn unknown_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, TINY.replace("\"seeds\"", "\"alpah\": 1, \"seeds\"")).unwrap();
    let o = gdo(&["ablate", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let line = error_line(&o);
    assert!(line.starts_with("error: config-invalid: ") && line.contains("alpah"), "{line}");
}

#[test]
fn run_then_report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = gdo(&["--threads", "1", "run", &tiny(dir.path()), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["results.csv", "domains.csv", "summary.csv", "summary.md", "manifest.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();

    let again = dir.path().join("again");
    let o = gdo(&["report", out.join("results.csv").to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(again.join("summary.csv")).unwrap(), summary);
}

#[test]
fn ablate_and_theory_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let out = dir.path().join("ablate");
    let o = gdo(&["ablate", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("ablation.csv")).unwrap();
    let body_cells: usize = csv.lines().skip(1).map(|l| l.split(',').count() - 2).sum();
    assert_eq!(body_cells, 2 * 2 * 2, "methods x n_given x inter_steps");

    let out = dir.path().join("theory");
    let o = gdo(&["theory", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["bound.csv", "lyapunov.csv", "drift.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
}

#[test]
fn fetch_mnist_without_source_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = gdo(&[
        "data",
        "fetch-mnist",
        "--dir",
        dir.path().join("m").to_str().unwrap(),
        "--base-url",
        dir.path().join("empty").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(error_line(&o).starts_with("error: download: "), "{}", stderr(&o));
}

#[test]
fn unreachable_server_is_a_runtime_failure() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let dir = tempfile::tempdir().unwrap();
    let o = gdo(&["--server", &format!("http://{addr}"), "run", &tiny(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(error_line(&o).starts_with("error: service-unreachable: "), "{}", stderr(&o));
}
