//! HTTP/JSON service for gradual domain osmosis experiments.
//!
//! Endpoints:
//!
//! | method | path                    | body                 | reply                |
//! |--------|-------------------------|----------------------|----------------------|
//! | GET    | `/health`               |                      | `{status, version}`  |
//! | POST   | `/v1/config/validate`   | `{config}`           | resolved config      |
//! | POST   | `/v1/jobs`              | `{op, config, threads?}` | 202 job summary  |
//! | GET    | `/v1/jobs`              |                      | job summaries        |
//! | GET    | `/v1/jobs/{id}`         |                      | job status + artifacts |
//! | POST   | `/v1/report`            | `{results_csv}`      | summary artifacts    |
//! | POST   | `/v1/bound`             | bound parameters     | bound terms          |
//! | POST   | `/v1/data/fetch-mnist`  | `{dir, base_url?}`   | file reports         |
//!
//! Errors come back as `{"error": {"category", "message"}}`.

mod fetch;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;

use gdo_client::api::*;
use gdo_core::harness::{self, ExperimentConfig};
use gdo_core::theory::{bound_terms, BoundParams};

pub use fetch::DEFAULT_MNIST_URL;

/// Error reply: a status plus the JSON body every client understands.
#[derive(Debug)]
pub struct AppError(StatusCode, ApiError);

impl AppError {
    fn new(status: StatusCode, category: &str, message: impl Into<String>) -> Self {
        AppError(status, ApiError::new(category, message))
    }
}

impl From<gdo_core::Error> for AppError {
    fn from(e: gdo_core::Error) -> Self {
        let status = match e.category() {
            c if c.starts_with("config-") => StatusCode::BAD_REQUEST,
            "argument" | "format" | "consistency" | "shape" | "contract" => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        AppError(status, ApiError::from_core(&e))
    }
}

impl IntoResponse for AppError {
    fn into_response(self) -> Response {
        (self.0, Json(ErrorBody { error: self.1 })).into_response()
    }
}

type ApiResult<T> = Result<T, AppError>;

/// Shared server state.
#[derive(Clone, Default)]
pub struct AppState {
    inner: Arc<Inner>,
}

#[derive(Default)]
struct Inner {
    jobs: Mutex<Jobs>,
    threads: Option<usize>,
}

#[derive(Default)]
struct Jobs {
    order: Vec<String>,
    by_id: HashMap<String, JobStatus>,
}

impl AppState {
    /// `threads` caps the workers of each job that does not name its own.
    pub fn new(threads: Option<usize>) -> Self {
        Self {
            inner: Arc::new(Inner {
                jobs: Mutex::default(),
                threads,
            }),
        }
    }

    fn update(&self, id: &str, f: impl FnOnce(&mut JobStatus)) {
        let mut jobs = self.inner.jobs.lock().expect("job table poisoned");
        if let Some(job) = jobs.by_id.get_mut(id) {
            f(job);
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/v1/config/validate", post(validate))
        .route("/v1/jobs", post(submit).get(list_jobs))
        .route("/v1/jobs/{id}", get(job))
        .route("/v1/report", post(report))
        .route("/v1/bound", post(bound))
        .route("/v1/data/fetch-mnist", post(fetch_mnist))
        .with_state(state)
}

/// Serves on an already bound listener until the task is dropped.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| AppError::new(StatusCode::BAD_REQUEST, "bad-request", e.to_string()))
}

/// Strict parse of an inline config, including data-file existence.
fn resolve_config(value: &serde_json::Value) -> ApiResult<ExperimentConfig> {
    let cfg = harness::parse_config_str(&value.to_string())?;
    cfg.check_data_files()?;
    Ok(cfg)
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({"status": "ok", "version": env!("CARGO_PKG_VERSION")}))
}

async fn validate(body: Bytes) -> ApiResult<Json<ValidateResponse>> {
    let req: ValidateRequest = parse_body(&body)?;
    Ok(Json(ValidateResponse {
        config: resolve_config(&req.config)?,
    }))
}

async fn submit(State(state): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<JobSummary>)> {
    let req: JobRequest = parse_body(&body)?;
    let cfg = resolve_config(&req.config)?;
    let id = uuid::Uuid::new_v4().to_string();
    let status = JobStatus {
        id: id.clone(),
        op: req.op,
        state: JobState::Queued,
        config: cfg.clone(),
        error: None,
        failures: Vec::new(),
        artifacts: None,
    };
    {
        let mut jobs = state.inner.jobs.lock().expect("job table poisoned");
        jobs.order.push(id.clone());
        jobs.by_id.insert(id.clone(), status);
    }
    let threads = req.threads.or(state.inner.threads);
    let op = req.op;
    let worker = state.clone();
    let job_id = id.clone();
    tokio::task::spawn_blocking(move || {
        worker.update(&job_id, |j| j.state = JobState::Running);
        let result = match op {
            JobOp::Run => harness::run_experiment(&cfg, threads),
            JobOp::Ablate => harness::run_ablation(&cfg, threads),
            JobOp::Theory => harness::run_theory(&cfg, threads),
        };
        worker.update(&job_id, |j| match result {
            Ok(exp) => {
                j.state = JobState::Succeeded;
                j.failures = exp.outcome.failures;
                j.artifacts = Some(exp.artifacts);
            }
            Err(e) => {
                j.state = JobState::Failed;
                j.error = Some(ApiError::from_core(&e));
            }
        });
    });
    Ok((
        StatusCode::ACCEPTED,
        Json(JobSummary {
            id,
            op,
            state: JobState::Queued,
        }),
    ))
}

async fn list_jobs(State(state): State<AppState>) -> Json<Vec<JobSummary>> {
    let jobs = state.inner.jobs.lock().expect("job table poisoned");
    Json(
        jobs.order
            .iter()
            .map(|id| {
                let j = &jobs.by_id[id];
                JobSummary {
                    id: j.id.clone(),
                    op: j.op,
                    state: j.state,
                }
            })
            .collect(),
    )
}

async fn job(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<JobStatus>> {
    let jobs = state.inner.jobs.lock().expect("job table poisoned");
    jobs.by_id
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| AppError::new(StatusCode::NOT_FOUND, "not-found", format!("no job {id}")))
}

async fn report(body: Bytes) -> ApiResult<Json<ReportResponse>> {
    let req: ReportRequest = parse_body(&body)?;
    Ok(Json(ReportResponse {
        artifacts: harness::report_from_csv(&req.results_csv)?,
    }))
}

async fn bound(body: Bytes) -> ApiResult<Json<BoundResponse>> {
    let p: BoundParams = parse_body(&body)?;
    let terms = bound_terms(&p)?;
    Ok(Json(BoundResponse {
        kappa: p.kappa(),
        c1: p.c1(),
        c2: p.c2(),
        bound: terms.total(),
        terms,
    }))
}

async fn fetch_mnist(body: Bytes) -> ApiResult<Json<FetchMnistResponse>> {
    let req: FetchMnistRequest = parse_body(&body)?;
    fetch::fetch_mnist(req).await.map(Json)
}
