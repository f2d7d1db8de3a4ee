//! Config-driven experiments: grids of sequence lengths, interpolation counts,
//! methods and seeds, written out as CSV files plus a JSON manifest.
//!
//! Every operation returns its output files as an in-memory [`Artifacts`]
//! map so callers (the HTTP service, tests) decide where they land.

mod config;
mod data;
mod grid;
pub mod mnist_files;
mod report;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::json;

pub use config::{
    emit_config, parse_config, parse_config_str, DatasetSpec, ExperimentConfig, Method, TheorySpec, DATA_DIR_ENV,
    DEFAULT_MNIST_DIR, MNIST_IMAGES, MNIST_LABELS,
};
pub use data::{load_pool, prepare, PreparedData};
pub use grid::{run_grid, run_method, CellFailure, GridOutcome, ResultRow};
pub use report::{
    ablation_csv, ablation_markdown, ablation_tables, aggregate, domains_csv, parse_results_csv, results_csv,
    summary_csv, summary_markdown, AblationTable, SummaryRow, CI_METHOD, DOMAINS_HEADER, RESULTS_HEADER,
    SUMMARY_HEADER,
};

use crate::theory::{bound_terms, drift_report, BoundParams, LyapunovTrace};
use crate::{Error, Result};

pub const RESULTS_FILE: &str = "results.csv";
pub const DOMAINS_FILE: &str = "domains.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const SUMMARY_MD_FILE: &str = "summary.md";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const ABLATION_FILE: &str = "ablation.csv";
pub const ABLATION_MD_FILE: &str = "ablation.md";
pub const LYAPUNOV_FILE: &str = "lyapunov.csv";
pub const DRIFT_FILE: &str = "drift.json";
pub const BOUND_FILE: &str = "bound.csv";

pub const BOUND_HEADER: [&str; 16] = [
    "T", "m", "mu", "sigma2", "gamma0", "epsilon", "delta", "err0", "c", "kappa", "c1", "c2", "decay", "variance",
    "shift", "bound",
];

pub const LYAPUNOV_HEADER: [&str; 10] = [
    "n_given",
    "inter_steps",
    "seed",
    "index",
    "t",
    "k",
    "err",
    "theta_drift_sq",
    "v",
    "lambda_v",
];

/// Output files by name.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub files: BTreeMap<String, String>,
}

impl Artifacts {
    pub fn insert(&mut self, name: &str, content: String) {
        self.files.insert(name.to_string(), content);
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.files.get(name).map(String::as_str)
    }

    /// Writes every file under `dir`, creating it if needed.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, content) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// Result of a grid-backed operation.
#[derive(Clone, Debug, Default)]
pub struct Experiment {
    pub outcome: GridOutcome,
    pub artifacts: Artifacts,
}

impl Experiment {
    pub fn failed_cells(&self) -> usize {
        self.outcome.failures.len()
    }
}

fn manifest(command: &str, cfg: &ExperimentConfig, outcome: &GridOutcome, extra: serde_json::Value) -> String {
    let created = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0);
    let rows: Vec<_> = outcome
        .rows
        .iter()
        .map(|r| {
            json!({
                "method": r.method,
                "n_given": r.n_given,
                "inter_steps": r.inter_steps,
                "seed": r.seed,
                "sequence_fingerprint": r.fingerprint,
                "runtime_ms": r.runtime_ms,
            })
        })
        .collect();
    let value = json!({
        "tool": "gdo",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "created_unix_ms": created,
        "ci_method": CI_METHOD,
        "config": cfg,
        "rows": rows,
        "failures": outcome.failures,
        "warnings": outcome.warnings,
        "extra": extra,
    });
    serde_json::to_string_pretty(&value).expect("manifest serialises")
}

fn grid_artifacts(command: &str, cfg: &ExperimentConfig, outcome: &GridOutcome, extra: serde_json::Value) -> Artifacts {
    let summary = aggregate(&outcome.rows);
    let mut a = Artifacts::default();
    a.insert(RESULTS_FILE, results_csv(&outcome.rows, cfg.timing));
    a.insert(DOMAINS_FILE, domains_csv(&outcome.rows));
    a.insert(SUMMARY_FILE, summary_csv(&summary));
    a.insert(SUMMARY_MD_FILE, summary_markdown(&summary));
    a.insert(MANIFEST_FILE, manifest(command, cfg, outcome, extra));
    a
}

/// `run`: the full grid, its rows, per-domain accuracies and summary.
pub fn run_experiment(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Experiment> {
    let outcome = run_grid(cfg, threads)?;
    let artifacts = grid_artifacts("run", cfg, &outcome, json!({}));
    Ok(Experiment { outcome, artifacts })
}

/// `ablate`: the grid plus one `n_given × inter_steps` matrix per method.
pub fn run_ablation(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Experiment> {
    let outcome = run_grid(cfg, threads)?;
    let tables = ablation_tables(
        &aggregate(&outcome.rows),
        &cfg.methods,
        &cfg.n_given_grid,
        &cfg.inter_steps_grid,
    );
    let mut artifacts = grid_artifacts("ablate", cfg, &outcome, json!({}));
    artifacts.insert(ABLATION_FILE, ablation_csv(&tables));
    artifacts.insert(ABLATION_MD_FILE, ablation_markdown(&tables));
    Ok(Experiment { outcome, artifacts })
}

/// One row of a bound curve.
pub fn bound_row(p: &BoundParams) -> Result<Vec<String>> {
    let terms = bound_terms(p)?;
    Ok([
        p.t as f64,
        p.m as f64,
        p.mu,
        p.sigma2,
        p.gamma0,
        p.epsilon,
        p.delta,
        p.err0,
        p.c,
        p.kappa(),
        p.c1(),
        p.c2(),
        terms.decay,
        terms.variance,
        terms.shift,
        terms.total(),
    ]
    .iter()
    .map(f64::to_string)
    .collect())
}

/// Bound curves over `T = 1..=t_max`, one per batch count.
pub fn bound_csv(spec: &TheorySpec) -> Result<String> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(BOUND_HEADER).expect("in-memory write");
    for &m in &spec.m_values {
        for t in 1..=spec.t_max {
            let p = BoundParams { m, t, ..spec.bound.clone() };
            w.write_record(bound_row(&p)?).expect("in-memory write");
        }
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv"))
}

/// `theory`: runs the adaptation loop over the grid, then reports the
/// Lyapunov trace and its drift summary per run, and the bound curves.
pub fn run_theory(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Experiment> {
    let spec = &cfg.theory;
    let bound = bound_csv(spec)?;
    let gdo_cfg = ExperimentConfig {
        methods: vec![Method::Gdo],
        ..cfg.clone()
    };
    let outcome = run_grid(&gdo_cfg, threads)?;

    let mut lw = csv::WriterBuilder::new().from_writer(Vec::new());
    lw.write_record(LYAPUNOV_HEADER).expect("in-memory write");
    let mut reports = Vec::new();
    for (row, record) in outcome.rows.iter().zip(&outcome.records) {
        let trace = LyapunovTrace::from_record(record, spec.lambda_v);
        for (i, e) in trace.entries.iter().enumerate() {
            let line = [
                row.n_given.to_string(),
                row.inter_steps.to_string(),
                row.seed.to_string(),
                i.to_string(),
                e.t.to_string(),
                e.k.to_string(),
                e.err.to_string(),
                e.theta_drift_sq.to_string(),
                e.v.to_string(),
                spec.lambda_v.to_string(),
            ];
            lw.write_record(&line).expect("in-memory write");
        }
        let report = match drift_report(&trace, spec.window) {
            Ok(r) => json!({ "report": r }),
            Err(e) => json!({ "error": e.to_string() }),
        };
        reports.push(json!({
            "n_given": row.n_given,
            "inter_steps": row.inter_steps,
            "seed": row.seed,
            "drift": report,
        }));
    }
    let drift = json!({
        "lambda_v": spec.lambda_v,
        "window": spec.window,
        "runs": reports,
    });

    let mut artifacts = grid_artifacts("theory", &gdo_cfg, &outcome, json!({ "theory": spec }));
    artifacts.insert(
        LYAPUNOV_FILE,
        String::from_utf8(lw.into_inner().expect("in-memory flush")).expect("utf-8 csv"),
    );
    artifacts.insert(DRIFT_FILE, serde_json::to_string_pretty(&drift).expect("drift serialises"));
    artifacts.insert(BOUND_FILE, bound);
    Ok(Experiment { outcome, artifacts })
}

/// `report`: re-aggregates a saved results CSV.
pub fn report_from_csv(results: &str) -> Result<Artifacts> {
    let rows = parse_results_csv(results)?;
    let summary = aggregate(&rows);
    let mut a = Artifacts::default();
    a.insert(SUMMARY_FILE, summary_csv(&summary));
    a.insert(SUMMARY_MD_FILE, summary_markdown(&summary));
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        parse_config_str(
            r#"{
                "dataset": {"kind": "gaussians", "n": 60, "total_shift": 30},
                "n_given_grid": [2, 3],
                "inter_steps_grid": [0, 1],
                "methods": ["gdo", "source_only"],
                "seeds": [1, 0],
                "hidden": [4],
                "gdo": {"pretrain_epochs": 5, "m": 2, "epochs_per_step": 1, "eval_points": 16,
                        "inter_points": 16, "warmup_points": 4}
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn grid_rows_are_canonical() {
        let exp = run_experiment(&tiny(), Some(1)).unwrap();
        let rows = &exp.outcome.rows;
        assert_eq!(rows.len(), 2 * 2 * 2 * 2);
        assert!(rows.windows(2).all(|w| w[0].key() < w[1].key()));
        assert!(exp.outcome.failures.is_empty());
        let text = exp.artifacts.get(RESULTS_FILE).unwrap();
        assert_eq!(text.lines().count(), 17);
    }

    #[test]
    fn methods_in_a_cell_share_the_sequence() {
        let exp = run_experiment(&tiny(), Some(1)).unwrap();
        for r in &exp.outcome.rows {
            let twin = exp
                .outcome
                .rows
                .iter()
                .find(|o| o.method != r.method && o.n_given == r.n_given && o.seed == r.seed)
                .unwrap();
            assert_eq!(twin.fingerprint, r.fingerprint);
        }
    }

    #[test]
    fn ablation_and_theory_files() {
        let exp = run_ablation(&tiny(), Some(1)).unwrap();
        assert_eq!(exp.artifacts.get(ABLATION_FILE).unwrap().lines().count(), 1 + 2 * 2);
        let th = run_theory(&tiny(), Some(1)).unwrap();
        let bound = th.artifacts.get(BOUND_FILE).unwrap();
        assert_eq!(bound.lines().next().unwrap(), BOUND_HEADER.join(","));
        assert_eq!(bound.lines().count(), 1 + 3 * 50);
        assert!(th.outcome.rows.iter().all(|r| r.method == Method::Gdo));
        assert!(th.artifacts.get(LYAPUNOV_FILE).unwrap().lines().count() > 1);
    }

    #[test]
    fn report_reproduces_summary() {
        let exp = run_experiment(&tiny(), Some(1)).unwrap();
        let again = report_from_csv(exp.artifacts.get(RESULTS_FILE).unwrap()).unwrap();
        assert_eq!(again.get(SUMMARY_FILE), exp.artifacts.get(SUMMARY_FILE));
    }
}
