//! Request and response bodies of the HTTP API.

use serde::{Deserialize, Serialize};

use gdo_core::harness::mnist_files::FileReport;
use gdo_core::harness::{Artifacts, CellFailure, ExperimentConfig};
use gdo_core::theory::BoundTerms;

/// Grid-backed operations that run as background jobs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobOp {
    Run,
    Ablate,
    Theory,
}

impl JobOp {
    pub fn name(self) -> &'static str {
        match self {
            JobOp::Run => "run",
            JobOp::Ablate => "ablate",
            JobOp::Theory => "theory",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidateRequest {
    pub config: serde_json::Value,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidateResponse {
    /// The config with every default filled in.
    pub config: ExperimentConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JobRequest {
    pub op: JobOp,
    pub config: serde_json::Value,
    /// Worker threads for this job; the server's default when absent.
    #[serde(default)]
    pub threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Succeeded,
    Failed,
}

impl JobState {
    pub fn is_done(self) -> bool {
        matches!(self, JobState::Succeeded | JobState::Failed)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JobStatus {
    pub id: String,
    pub op: JobOp,
    pub state: JobState,
    pub config: ExperimentConfig,
    /// Set when the job as a whole failed.
    #[serde(default)]
    pub error: Option<ApiError>,
    /// Grid cells that failed while the rest completed.
    #[serde(default)]
    pub failures: Vec<CellFailure>,
    #[serde(default)]
    pub artifacts: Option<Artifacts>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JobSummary {
    pub id: String,
    pub op: JobOp,
    pub state: JobState,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportRequest {
    pub results_csv: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportResponse {
    pub artifacts: Artifacts,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundResponse {
    pub kappa: f64,
    pub c1: f64,
    pub c2: f64,
    pub terms: BoundTerms,
    pub bound: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FetchMnistRequest {
    pub dir: String,
    /// Download missing files from `<base_url>/<name>.gz` (or the bare name).
    #[serde(default)]
    pub base_url: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FetchMnistResponse {
    pub dir: String,
    pub downloaded: Vec<String>,
    pub files: Vec<FileReport>,
}

/// Error body of every non-2xx response.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    /// Stable machine-readable category, e.g. `config-invalid`.
    pub category: String,
    pub message: String,
}

impl ApiError {
    pub fn new(category: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            category: category.into(),
            message: message.into(),
        }
    }

    pub fn from_core(e: &gdo_core::Error) -> Self {
        Self::new(e.category(), e.to_string())
    }

    /// Whether the error is the caller's configuration rather than a failure
    /// while running it.
    pub fn is_config(&self) -> bool {
        self.category.starts_with("config-")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ApiError,
}
