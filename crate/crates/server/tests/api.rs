//! The HTTP API exercised through the client crate.

use std::io::Write;
use std::time::Duration;

use flate2::write::GzEncoder;
use serde_json::json;

use gdo_client::api::{JobOp, JobState};
use gdo_client::{Client, ClientError};
use gdo_core::domains::{encode_idx, Dataset};
use gdo_core::harness::mnist_files::FileStatus;
use gdo_core::harness::{MNIST_IMAGES, MNIST_LABELS, RESULTS_FILE, SUMMARY_FILE};
use gdo_core::ndnn::DenseMatrix;
use gdo_core::theory::{error_bound, BoundParams};

async fn spawn() -> Client {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(gdo_server::serve(listener, gdo_server::AppState::new(Some(1))));
    Client::new(format!("http://{addr}"))
}

fn tiny() -> serde_json::Value {
    json!({
        "dataset": {"kind": "gaussians", "n": 60, "total_shift": 30},
        "n_given_grid": [2],
        "inter_steps_grid": [0, 1],
        "methods": ["gdo", "gst"],
        "seeds": [0],
        "hidden": [4],
        "gdo": {"pretrain_epochs": 5, "m": 2, "epochs_per_step": 1, "eval_points": 16,
                "inter_points": 16, "warmup_points": 4}
    })
}

fn api_error(e: ClientError) -> (u16, String, String) {
    match e {
        ClientError::Api { status, error } => (status, error.category, error.message),
        other => panic!("expected an API error, got {other}"),
    }
}

#[tokio::test]
async fn health_and_validation() {
    let c = spawn().await;
    assert_eq!(c.health().await.unwrap()["status"], "ok");

    let resolved = c.validate(tiny()).await.unwrap().config;
    assert_eq!(resolved.gdo.alpha, 0.1);

    let mut bad = tiny();
    bad["alpah"] = json!(1);
    let (status, category, message) = api_error(c.validate(bad).await.unwrap_err());
    assert_eq!((status, category.as_str()), (400, "config-invalid"));
    assert!(message.contains("alpah"));
}

#[tokio::test]
async fn jobs_run_to_completion() {
    let c = spawn().await;
    let job = c.submit(JobOp::Run, tiny(), None).await.unwrap();
    let done = c.wait(&job.id, Duration::from_millis(20)).await.unwrap();
    assert_eq!(done.state, JobState::Succeeded);
    let artifacts = done.artifacts.unwrap();
    assert_eq!(artifacts.get(RESULTS_FILE).unwrap().lines().count(), 1 + 2 * 2);

    let theory = c.submit(JobOp::Theory, tiny(), Some(1)).await.unwrap();
    let done = c.wait(&theory.id, Duration::from_millis(20)).await.unwrap();
    assert!(done.artifacts.unwrap().get("bound.csv").is_some());

    let listed = c.jobs().await.unwrap();
    assert_eq!(listed.iter().map(|j| j.id.as_str()).collect::<Vec<_>>(), [job.id.as_str(), theory.id.as_str()]);

    let (status, category, _) = api_error(c.job("no-such-job").await.unwrap_err());
    assert_eq!((status, category.as_str()), (404, "not-found"));
}

#[tokio::test]
async fn report_and_bound() {
    let c = spawn().await;
    let csv = "dataset,method,n_given,inter_steps,seed,target_acc,runtime_ms\n\
               two_moons,gdo,2,0,0,0.8,0\ntwo_moons,gdo,2,0,1,0.9,0\n";
    let report = c.report(csv.into()).await.unwrap();
    assert!(report.artifacts.get(SUMMARY_FILE).unwrap().contains("85.0 ± 9.8"));

    let (status, category, _) = api_error(c.report("not,a,results,file\n".into()).await.unwrap_err());
    assert_eq!((status, category.as_str()), (400, "config-invalid"));

    let p = BoundParams {
        mu: 2.0,
        sigma2: 0.5,
        gamma0: 0.5,
        epsilon: 0.1,
        m: 10,
        t: 4,
        delta: 0.05,
        err0: 1.0,
        c: 0.2,
    };
    let b = c.bound(&p).await.unwrap();
    assert_eq!(b.bound, error_bound(&p).unwrap());
    assert_eq!(b.kappa, 0.5);

    let (status, category, _) = api_error(c.bound(&BoundParams { t: 0, ..p }).await.unwrap_err());
    assert_eq!((status, category.as_str()), (422, "argument"));
}

fn idx_fixture() -> (Vec<u8>, Vec<u8>) {
    let x = DenseMatrix::from_vec(2, 4, vec![0.0, 1.0, 0.2, 0.4, 1.0, 0.0, 0.6, 0.8]).unwrap();
    encode_idx(&Dataset::labeled(x, vec![1, 9], 10).unwrap(), 2, 2).unwrap()
}

fn gz(bytes: &[u8]) -> Vec<u8> {
    let mut e = GzEncoder::new(Vec::new(), flate2::Compression::default());
    e.write_all(bytes).unwrap();
    e.finish().unwrap()
}

#[tokio::test]
async fn fetch_mnist_from_local_mirror_then_verify() {
    let c = spawn().await;
    let mirror = tempfile::tempdir().unwrap();
    let (img, lab) = idx_fixture();
    std::fs::write(mirror.path().join(format!("{MNIST_IMAGES}.gz")), gz(&img)).unwrap();
    std::fs::write(mirror.path().join(MNIST_LABELS), &lab).unwrap();
    let target = tempfile::tempdir().unwrap();
    let dir = target.path().join("mnist").display().to_string();

    let first = c.fetch_mnist(dir.clone(), Some(mirror.path().display().to_string())).await.unwrap();
    assert_eq!(first.downloaded.len(), 2);
    assert!(first.files.iter().all(|f| f.status == FileStatus::Pinned));
    assert_eq!(std::fs::read(target.path().join("mnist").join(MNIST_IMAGES)).unwrap(), img);

    // Pre-placed files are verified without any source.
    let again = c.fetch_mnist(dir.clone(), Some("/nonexistent".into())).await.unwrap();
    assert!(again.downloaded.is_empty());
    assert!(again.files.iter().all(|f| f.status == FileStatus::Verified));

    std::fs::write(target.path().join("mnist").join(MNIST_LABELS), [0, 0, 8, 1, 0, 0, 0, 2, 1, 8]).unwrap();
    let (_, category, _) = api_error(c.fetch_mnist(dir, None).await.unwrap_err());
    assert_eq!(category, "consistency");
}

#[tokio::test]
async fn fetch_mnist_over_http() {
    use axum::routing::get;
    let (img, lab) = idx_fixture();
    let (img_gz, lab_gz) = (gz(&img), gz(&lab));
    let mirror = axum::Router::new()
        .route(&format!("/mnist/{MNIST_IMAGES}.gz"), get(move || async move { img_gz.clone() }))
        .route(&format!("/mnist/{MNIST_LABELS}.gz"), get(move || async move { lab_gz.clone() }));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, mirror).await });

    let c = spawn().await;
    let target = tempfile::tempdir().unwrap();
    let reply = c
        .fetch_mnist(target.path().display().to_string(), Some(format!("http://{addr}/mnist/")))
        .await
        .unwrap();
    assert_eq!(reply.downloaded, [MNIST_IMAGES, MNIST_LABELS]);
    assert_eq!(std::fs::read(target.path().join(MNIST_LABELS)).unwrap(), lab);

    let empty = tempfile::tempdir().unwrap();
    let (status, category, _) = api_error(
        c.fetch_mnist(empty.path().display().to_string(), Some(format!("http://{addr}/missing")))
            .await
            .unwrap_err(),
    );
    assert_eq!((status, category.as_str()), (502, "download"));
}

#[tokio::test]
async fn malformed_bodies_are_bad_requests() {
    let c = spawn().await;
    let resp = raw_post(c.base_url(), "/v1/jobs", "{not json").await;
    assert!(resp.starts_with("HTTP/1.1 400"), "{resp}");
    assert!(resp.contains("bad-request"));
}

/// Minimal raw HTTP POST, so the test does not depend on the client's body
/// encoding.
async fn raw_post(base: &str, path: &str, body: &str) -> String {
    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    let host = base.trim_start_matches("http://");
    let mut s = tokio::net::TcpStream::connect(host).await.unwrap();
    let req = format!(
        "POST {path} HTTP/1.1\r\nHost: {host}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    s.write_all(req.as_bytes()).await.unwrap();
    let mut out = String::new();
    s.read_to_string(&mut out).await.unwrap();
    out
}
