//! Thin async client for the gradual domain osmosis service.
//!
//! ```no_run
//! # async fn demo() -> Result<(), gdo_client::ClientError> {
//! let client = gdo_client::Client::new("http://127.0.0.1:8080");
//! let cfg = serde_json::json!({
//!     "dataset": {"kind": "two_moons"},
//!     "n_given_grid": [6], "inter_steps_grid": [2], "seeds": [0]
//! });
//! let job = client.submit(gdo_client::api::JobOp::Run, cfg, None).await?;
//! let done = client.wait(&job.id, std::time::Duration::from_millis(200)).await?;
//! println!("{:?}", done.state);
//! # Ok(()) }
//! ```

pub mod api;

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use api::*;
use gdo_core::theory::BoundParams;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("{}: {}", .error.category, .error.message)]
    Api { status: u16, error: ApiError },

    #[error("transport: {0}")]
    Transport(#[from] reqwest::Error),
}

impl ClientError {
    pub fn category(&self) -> &str {
        match self {
            ClientError::Api { error, .. } => &error.category,
            ClientError::Transport(_) => "service-unreachable",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base: base_url.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T, ClientError> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let error = match resp.json::<ErrorBody>().await {
            Ok(body) => body.error,
            Err(_) => ApiError::new("http", format!("unexpected status {status}")),
        };
        Err(ClientError::Api {
            status: status.as_u16(),
            error,
        })
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        Self::decode(self.http.get(format!("{}{path}", self.base)).send().await?).await
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        Self::decode(self.http.post(format!("{}{path}", self.base)).json(body).send().await?).await
    }

    pub async fn health(&self) -> Result<serde_json::Value, ClientError> {
        self.get("/health").await
    }

    pub async fn validate(&self, config: serde_json::Value) -> Result<ValidateResponse, ClientError> {
        self.post("/v1/config/validate", &ValidateRequest { config }).await
    }

    pub async fn submit(
        &self,
        op: JobOp,
        config: serde_json::Value,
        threads: Option<usize>,
    ) -> Result<JobSummary, ClientError> {
        self.post("/v1/jobs", &JobRequest { op, config, threads }).await
    }

    pub async fn job(&self, id: &str) -> Result<JobStatus, ClientError> {
        self.get(&format!("/v1/jobs/{id}")).await
    }

    pub async fn jobs(&self) -> Result<Vec<JobSummary>, ClientError> {
        self.get("/v1/jobs").await
    }

    /// Polls a job until it finishes.
    pub async fn wait(&self, id: &str, poll: Duration) -> Result<JobStatus, ClientError> {
        loop {
            let status = self.job(id).await?;
            if status.state.is_done() {
                return Ok(status);
            }
            tokio::time::sleep(poll).await;
        }
    }

    pub async fn report(&self, results_csv: String) -> Result<ReportResponse, ClientError> {
        self.post("/v1/report", &ReportRequest { results_csv }).await
    }

    pub async fn bound(&self, params: &BoundParams) -> Result<BoundResponse, ClientError> {
        self.post("/v1/bound", params).await
    }

    pub async fn fetch_mnist(&self, dir: String, base_url: Option<String>) -> Result<FetchMnistResponse, ClientError> {
        self.post("/v1/data/fetch-mnist", &FetchMnistRequest { dir, base_url }).await
    }
}
