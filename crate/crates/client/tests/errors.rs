//! Error decoding against canned HTTP responses.

use tokio::io::{AsyncReadExt, AsyncWriteExt};

use gdo_client::{Client, ClientError};

/// Serves one canned response per connection.
async fn canned(status: &'static str, body: &'static str) -> Client {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        loop {
            let (mut s, _) = listener.accept().await.unwrap();
            let mut buf = [0u8; 4096];
            let _ = s.read(&mut buf).await;
            let resp = format!(
                "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = s.write_all(resp.as_bytes()).await;
        }
    });
    Client::new(format!("http://{addr}/"))
}

#[tokio::test]
async fn api_errors_carry_category() {
    let c = canned("400 Bad Request", r#"{"error": {"category": "config-invalid", "message": "bad key"}}"#).await;
    match c.validate(serde_json::json!({})).await.unwrap_err() {
        ClientError::Api { status, error } => {
            assert_eq!(status, 400);
            assert_eq!(error.category, "config-invalid");
            assert!(error.is_config());
        }
        other => panic!("{other}"),
    }
}

#[tokio::test]
async fn non_json_errors_are_reported_by_status() {
    let c = canned("503 Service Unavailable", "down").await;
    let e = c.health().await.unwrap_err();
    assert_eq!(e.category(), "http");
    assert!(e.to_string().contains("503"));
}

#[tokio::test]
async fn success_bodies_decode() {
    let c = canned("200 OK", r#"[{"id": "a", "op": "run", "state": "running"}]"#).await;
    let jobs = c.jobs().await.unwrap();
    assert_eq!(jobs[0].id, "a");
}

#[tokio::test]
async fn unreachable_service_is_a_transport_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let e = Client::new(format!("http://{addr}")).health().await.unwrap_err();
    assert!(matches!(e, ClientError::Transport(_)));
    assert_eq!(e.category(), "service-unreachable");
}
