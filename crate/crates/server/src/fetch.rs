//! Download, unpack and verify the MNIST IDX files.

use std::io::Read;
use std::path::{Path, PathBuf};

use axum::http::StatusCode;
use flate2::read::GzDecoder;

use gdo_client::api::{FetchMnistRequest, FetchMnistResponse};
use gdo_core::harness::mnist_files::{install, missing_files, verify_dir};

use crate::{AppError, ApiResult};

/// Mirror of the original MNIST distribution.
pub const DEFAULT_MNIST_URL: &str = "https://storage.googleapis.com/cvdf-datasets/mnist";

fn gunzip_if_needed(bytes: Vec<u8>, name: &str) -> ApiResult<Vec<u8>> {
    if !bytes.starts_with(&[0x1f, 0x8b]) {
        return Ok(bytes);
    }
    let mut out = Vec::new();
    GzDecoder::new(bytes.as_slice())
        .read_to_end(&mut out)
        .map_err(|e| AppError::new(StatusCode::BAD_GATEWAY, "format", format!("cannot gunzip {name}: {e}")))?;
    Ok(out)
}

async fn download(http: &reqwest::Client, base: &str, name: &str) -> ApiResult<Vec<u8>> {
    let mut last = String::new();
    for url in [format!("{base}/{name}.gz"), format!("{base}/{name}")] {
        let resp = http
            .get(&url)
            .send()
            .await
            .map_err(|e| AppError::new(StatusCode::BAD_GATEWAY, "download", format!("{url}: {e}")))?;
        if resp.status().is_success() {
            let bytes = resp
                .bytes()
                .await
                .map_err(|e| AppError::new(StatusCode::BAD_GATEWAY, "download", format!("{url}: {e}")))?;
            return Ok(bytes.to_vec());
        }
        last = format!("{url}: HTTP {}", resp.status());
    }
    Err(AppError::new(StatusCode::BAD_GATEWAY, "download", last))
}

fn read_local(base: &Path, name: &str) -> ApiResult<Vec<u8>> {
    for path in [base.join(format!("{name}.gz")), base.join(name)] {
        if path.is_file() {
            return std::fs::read(&path).map_err(|e| gdo_core::Error::Io { path, source: e }.into());
        }
    }
    Err(AppError::new(
        StatusCode::BAD_REQUEST,
        "download",
        format!("{} has neither {name} nor {name}.gz", base.display()),
    ))
}

/// Fetches whatever files `req.dir` lacks, then verifies the directory.
/// `base_url` may be an `http(s)://` URL, a `file://` URL or a local path.
pub async fn fetch_mnist(req: FetchMnistRequest) -> ApiResult<FetchMnistResponse> {
    let dir = PathBuf::from(&req.dir);
    let base = req.base_url.as_deref().unwrap_or(DEFAULT_MNIST_URL).trim_end_matches('/').to_string();
    let mut downloaded = Vec::new();
    let missing = missing_files(&dir);
    if !missing.is_empty() {
        let http = reqwest::Client::new();
        for name in missing {
            let raw = if base.starts_with("http://") || base.starts_with("https://") {
                download(&http, &base, name).await?
            } else {
                read_local(Path::new(base.strip_prefix("file://").unwrap_or(&base)), name)?
            };
            install(&dir, name, &gunzip_if_needed(raw, name)?)?;
            downloaded.push(name.to_string());
        }
    }
    let verify_at = dir.clone();
    let files = tokio::task::spawn_blocking(move || verify_dir(&verify_at))
        .await
        .map_err(|e| AppError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(FetchMnistResponse {
        dir: req.dir,
        downloaded,
        files,
    })
}
