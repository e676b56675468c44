use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Body;
use axum::extract::ConnectInfo;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use matra_app::ratelimit::RateLimiter;
use matra_app::server::{router, serve_on, AppState};
use matra_app::store::AnnotationStore;
use matra_testkit::toy::memorized;
use serde_json::{json, Value};
use tempfile::TempDir;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tower::ServiceExt;

struct Service {
    app: Router,
    _dir: TempDir,
}

fn service(rate_limit: u32, max_body: usize) -> Service {
    let dir = tempfile::tempdir().unwrap();
    let state = AppState {
        checkpoint: memorized().clone(),
        store: AnnotationStore::open(dir.path().join("annotations.jsonl")).unwrap(),
        limiter: RateLimiter::per_minute(rate_limit),
    };
    Service {
        app: router(Arc::new(state), max_body),
        _dir: dir,
    }
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<String>) -> (StatusCode, Value) {
    let mut request = Request::builder().method(method).uri(uri);
    if body.is_some() {
        request = request.header(header::CONTENT_TYPE, "application/json");
    }
    let mut request = request.body(body.map_or(Body::empty(), Body::from)).unwrap();
    request.extensions_mut().insert(ConnectInfo(SocketAddr::from(([10, 0, 0, 1], 4000))));
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::Null) };
    (status, value)
}

async fn translit(app: &Router, text: &str, from: &str, to: &str) -> (StatusCode, Value) {
    let body = json!({ "text": text, "source_lang": from, "target_lang": to }).to_string();
    call(app, Method::POST, "/transliterate", Some(body)).await
}

fn record(id: usize, correct: bool) -> Value {
    let mut r = json!({
        "id": format!("r{id}"),
        "source_lang": "english",
        "target_lang": "hindi",
        "input": "ABC",
        "prediction": "कखग",
        "verdict": if correct { "correct" } else { "incorrect" },
        "annotator_id": "tester",
    });
    if !correct {
        r["reference"] = json!("कखघ");
    }
    r
}

#[tokio::test]
async fn health_reports_the_model() {
    let s = service(60, 1024);
    let (status, body) = call(&s.app, Method::GET, "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
    assert_eq!(body["model_config"]["embed_size"], 32);
}

#[tokio::test]
async fn unknown_language_is_a_bad_request() {
    let s = service(60, 1024);
    let (status, body) = translit(&s.app, "ABC", "french", "hindi").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["allowed"], json!(["english", "hindi", "bengali", "tamil", "kannada"]));
    let (status, _) = translit(&s.app, "ABC", "english", "Hindi").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn wrong_script_names_the_character() {
    let s = service(60, 1024);
    let (status, body) = translit(&s.app, "ABC कख", "english", "hindi").await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["character"], "क");
    assert_eq!(body["word_index"], 1);
}

#[tokio::test]
async fn same_language_and_empty_text_are_rejected() {
    let s = service(60, 1024);
    assert_eq!(translit(&s.app, "ABC", "hindi", "hindi").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(translit(&s.app, "  ", "english", "hindi").await.0, StatusCode::BAD_REQUEST);
    let (status, _) = call(&s.app, Method::POST, "/transliterate", Some("{not json".into())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn sentences_keep_their_word_count() {
    let s = service(60, 1024);
    let (status, body) = translit(&s.app, "ABC  BAD\tCAB DABC", "english", "hindi").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["output"], "कखग खकघ गकख घकखग");
    assert!(body.get("intermediate").is_none());
    assert_eq!(body["flags"], json!([]));
}

#[tokio::test]
async fn indic_pairs_show_the_english_pivot() {
    let s = service(60, 1024);
    let (status, body) = translit(&s.app, "कखग खकघ", "hindi", "kannada").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["intermediate"], json!(["ABC", "BAD"]));
    assert_eq!(body["output"], "ಕಖಗ ಖಕಘ");
}

#[tokio::test]
async fn annotations_update_phonetic_accuracy() {
    let s = service(60, 64 * 1024);
    let (status, body) = call(&s.app, Method::GET, "/metrics/phonetic", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!({ "correct_sounding_count": 0, "total_count": 0, "phonetic_accuracy": null }));

    let array = json!([record(1, true), record(2, true), record(3, false)]).to_string();
    let (status, body) = call(&s.app, Method::POST, "/annotations", Some(array)).await;
    assert_eq!((status, body), (StatusCode::CREATED, json!({ "accepted": 3 })));
    let lines = record(4, true).to_string() + "\n";
    let (status, body) = call(&s.app, Method::POST, "/annotations", Some(lines)).await;
    assert_eq!((status, body), (StatusCode::CREATED, json!({ "accepted": 1 })));

    let (_, body) = call(&s.app, Method::GET, "/metrics/phonetic", None).await;
    assert_eq!(body, json!({ "correct_sounding_count": 3, "total_count": 4, "phonetic_accuracy": 0.75 }));
}

#[tokio::test]
async fn a_bad_record_rejects_the_whole_body() {
    let s = service(60, 64 * 1024);
    let mut missing_reference = record(2, false);
    missing_reference.as_object_mut().unwrap().remove("reference");
    let body = format!("{}\n{}\n", record(1, true), missing_reference);
    let (status, _) = call(&s.app, Method::POST, "/annotations", Some(body)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let mut french = record(3, true);
    french["target_lang"] = json!("french");
    let (status, _) = call(&s.app, Method::POST, "/annotations", Some(json!([french]).to_string())).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (_, body) = call(&s.app, Method::GET, "/metrics/phonetic", None).await;
    assert_eq!(body["total_count"], 0);
}

#[tokio::test]
async fn third_request_in_a_minute_is_limited() {
    let s = service(2, 1024);
    assert_eq!(call(&s.app, Method::GET, "/health", None).await.0, StatusCode::OK);
    assert_eq!(call(&s.app, Method::GET, "/health", None).await.0, StatusCode::OK);
    let (status, body) = call(&s.app, Method::GET, "/health", None).await;
    assert_eq!(status, StatusCode::TOO_MANY_REQUESTS);
    assert!(body["retry_after_secs"].as_f64().unwrap() > 0.0);
}

#[tokio::test]
async fn oversized_bodies_are_refused() {
    let s = service(60, 256);
    let (status, _) = translit(&s.app, &"A".repeat(300), "english", "hindi").await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
}

#[tokio::test]
async fn cors_preflight_is_answered() {
    let s = service(60, 1024);
    let request = Request::builder()
        .method(Method::OPTIONS)
        .uri("/transliterate")
        .header(header::ORIGIN, "http://localhost:5173")
        .header(header::ACCESS_CONTROL_REQUEST_METHOD, "POST")
        .body(Body::empty())
        .unwrap();
    let response = s.app.clone().oneshot(request).await.unwrap();
    assert!(response.status().is_success());
    assert_eq!(response.headers()[header::ACCESS_CONTROL_ALLOW_ORIGIN], "*");
}

/// Over a real socket, where the limiter keys on the peer address.
#[tokio::test]
async fn serves_over_tcp() {
    let dir = tempfile::tempdir().unwrap();
    let state = AppState {
        checkpoint: memorized().clone(),
        store: AnnotationStore::open(dir.path().join("a.jsonl")).unwrap(),
        limiter: RateLimiter::per_minute(1),
    };
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(serve_on(listener, Arc::new(state), 1024, async {
        stopped.await.ok();
    }));
    let get = || async move {
        let mut stream = tokio::net::TcpStream::connect(addr).await.unwrap();
        stream
            .write_all(b"GET /health HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n")
            .await
            .unwrap();
        let mut response = String::new();
        stream.read_to_string(&mut response).await.unwrap();
        response
    };
    assert!(get().await.starts_with("HTTP/1.1 200"));
    let limited = get().await;
    assert!(limited.starts_with("HTTP/1.1 429"), "{limited}");
    assert!(limited.to_ascii_lowercase().contains("retry-after:"));
    stop.send(()).unwrap();
    server.await.unwrap().unwrap();
}
