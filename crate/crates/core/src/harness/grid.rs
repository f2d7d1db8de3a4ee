use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method};
use super::data::{load_pool, prepare};
use crate::baselines::{gst, source_only, target_self_train};
use crate::domains::{Dataset, DomainSequence};
use crate::gdo::{run_gdo, GdoConfig, RunRecord};
use crate::ndnn::MlpModel;
use crate::theory::err_rate;
use crate::{Error, Result};

/// Outcome of one (method, n_given, inter_steps, seed) run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub method: Method,
    pub n_given: usize,
    pub inter_steps: usize,
    pub seed: u64,
    /// Accuracy on the held-out target points, in `[0, 1]`.
    pub target_acc: f64,
    /// Final-model accuracy on every training domain.
    #[serde(default)]
    pub domain_acc: Vec<f64>,
    #[serde(default)]
    pub shifts: Vec<f64>,
    pub runtime_ms: u64,
    #[serde(default)]
    pub fingerprint: String,
}

impl ResultRow {
    /// Ordering key: cell first, then seed.
    pub fn key(&self) -> (&str, Method, usize, usize, u64) {
        (&self.dataset, self.method, self.n_given, self.inter_steps, self.seed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub method: Method,
    pub n_given: usize,
    pub inter_steps: usize,
    pub seed: u64,
    pub category: String,
    pub error: String,
}

#[derive(Clone, Debug, Default)]
pub struct GridOutcome {
    /// Canonically ordered rows.
    pub rows: Vec<ResultRow>,
    /// Trajectory of each row, index-aligned with `rows`.
    pub records: Vec<RunRecord>,
    pub failures: Vec<CellFailure>,
    pub warnings: Vec<String>,
}

/// Runs one method on a prepared sequence.
pub fn run_method(
    method: Method,
    seq: &DomainSequence,
    hidden: &[usize],
    cfg: &GdoConfig,
) -> Result<(MlpModel, RunRecord)> {
    match method {
        Method::Gdo => run_gdo(seq, hidden, cfg),
        Method::Gst => gst(seq, hidden, cfg),
        Method::SourceOnly => source_only(seq, hidden, cfg),
        Method::TargetSt => target_self_train(seq, hidden, cfg),
    }
}

#[derive(Clone, Copy)]
struct Job {
    method: Method,
    n_given: usize,
    inter_steps: usize,
    seed: u64,
}

fn run_job(cfg: &ExperimentConfig, pool: Option<&Dataset>, job: Job) -> Result<(ResultRow, RunRecord)> {
    let start = Instant::now();
    let data = prepare(&cfg.dataset, pool, job.n_given, job.seed)?;
    let run_cfg = cfg.run_config(job.inter_steps, job.seed);
    let (model, record) = run_method(job.method, &data.sequence, &cfg.hidden_sizes(), &run_cfg)?;
    let target_acc = 1.0 - err_rate(&model, &data.holdout)?;
    let row = ResultRow {
        dataset: cfg.dataset.name().to_string(),
        method: job.method,
        n_given: job.n_given,
        inter_steps: job.inter_steps,
        seed: job.seed,
        target_acc,
        domain_acc: record.domain_accuracy.clone(),
        shifts: data.sequence.shift_params().to_vec(),
        runtime_ms: start.elapsed().as_millis() as u64,
        fingerprint: data.sequence.fingerprint(),
    };
    Ok((row, record))
}

/// Runs every (method, n_given, inter_steps, seed) combination. Cells run in
/// parallel on up to `threads` workers (all cores when `None`); the output
/// order is canonical regardless. A failing cell is recorded and the rest
/// proceed.
pub fn run_grid(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<GridOutcome> {
    cfg.validate()?;
    let pool = load_pool(&cfg.dataset)?;
    let mut methods = cfg.methods.clone();
    methods.sort();
    let mut n_given_grid = cfg.n_given_grid.clone();
    n_given_grid.sort_unstable();
    let mut inter_grid = cfg.inter_steps_grid.clone();
    inter_grid.sort_unstable();
    let mut seeds = cfg.seeds.clone();
    seeds.sort_unstable();

    let mut jobs = Vec::new();
    for &method in &methods {
        for &n_given in &n_given_grid {
            for &inter_steps in &inter_grid {
                for &seed in &seeds {
                    jobs.push(Job {
                        method,
                        n_given,
                        inter_steps,
                        seed,
                    });
                }
            }
        }
    }

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    let workers = builder
        .build()
        .map_err(|e| Error::arg(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<(ResultRow, RunRecord)>> =
        workers.install(|| jobs.par_iter().map(|&job| run_job(cfg, pool.as_ref(), job)).collect());

    let mut out = GridOutcome::default();
    for (job, result) in jobs.iter().zip(results) {
        match result {
            Ok((row, record)) => {
                out.rows.push(row);
                out.records.push(record);
            }
            Err(e) => out.failures.push(CellFailure {
                method: job.method,
                n_given: job.n_given,
                inter_steps: job.inter_steps,
                seed: job.seed,
                category: e.category().to_string(),
                error: e.to_string(),
            }),
        }
    }
    for &method in &methods {
        for &n_given in &n_given_grid {
            for &inter_steps in &inter_grid {
                let present = out
                    .rows
                    .iter()
                    .any(|r| r.method == method && r.n_given == n_given && r.inter_steps == inter_steps);
                if !present {
                    out.warnings.push(format!(
                        "cell method={} n_given={n_given} inter_steps={inter_steps} produced no rows; omitted from summary",
                        method.name()
                    ));
                }
            }
        }
    }
    Ok(out)
}
