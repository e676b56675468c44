//! The HTTP service: transliteration over a fixed checkpoint plus an
//! annotation store.

use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{ConnectInfo, DefaultBodyLimit, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use matra_core::corpus::LanguageTag;
use matra_core::inference::{transliterate_text, InferenceError, ScriptFlag, TransliterationRequest};
use matra_core::model::ModelConfig;
use matra_core::training::{Checkpoint, TrainMetadata};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::{Any, CorsLayer};

use crate::ratelimit::RateLimiter;
use crate::store::{parse_annotation_body, AnnotationStore, StoreSummary};

pub const DEFAULT_RATE_LIMIT: u32 = 60;
pub const DEFAULT_MAX_BODY_BYTES: usize = 64 * 1024;

#[derive(Clone, Debug)]
pub struct ServeConfig {
    pub addr: SocketAddr,
    pub checkpoint: PathBuf,
    pub annotations: PathBuf,
    /// Requests per minute per client address; at least 1.
    pub rate_limit: u32,
    pub max_body_bytes: usize,
}

pub struct AppState {
    pub checkpoint: Checkpoint,
    pub store: AnnotationStore,
    pub limiter: RateLimiter<IpAddr>,
}

#[derive(Debug)]
struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            body: json!({ "error": message.into() }),
        }
    }

    fn with(mut self, key: &str, value: serde_json::Value) -> Self {
        self.body[key] = value;
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

fn allowed_languages() -> serde_json::Value {
    json!(LanguageTag::ALL.map(LanguageTag::name))
}

fn language(field: &str, value: &str) -> Result<LanguageTag, ApiError> {
    // Only the lower-case names are part of the API, not the aliases the
    // parser also understands.
    LanguageTag::ALL.into_iter().find(|l| l.name() == value).ok_or_else(|| {
        ApiError::new(StatusCode::BAD_REQUEST, format!("unknown {field} {value:?}")).with("allowed", allowed_languages())
    })
}

impl From<InferenceError> for ApiError {
    fn from(e: InferenceError) -> Self {
        let word_index = match &e {
            InferenceError::Word { index, .. } => Some(*index),
            _ => None,
        };
        let api = match e.root() {
            InferenceError::SameLanguage(_) | InferenceError::EmptyText => ApiError::new(StatusCode::BAD_REQUEST, e.to_string()),
            InferenceError::Script { word, character, lang } => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string())
                .with("character", json!(character.to_string()))
                .with("word", json!(word))
                .with("language", json!(lang)),
            InferenceError::TooLong { .. } => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
            _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        };
        match word_index {
            Some(i) => api.with("word_index", json!(i)),
            None => api,
        }
    }
}

#[derive(Serialize)]
struct Health<'a> {
    status: &'static str,
    model_config: &'a ModelConfig,
    metadata: &'a TrainMetadata,
}

async fn health(State(state): State<Arc<AppState>>) -> Response {
    Json(Health {
        status: "ok",
        model_config: state.checkpoint.config(),
        metadata: &state.checkpoint.metadata,
    })
    .into_response()
}

/// Languages arrive as plain strings so that an unknown one is a 400 with
/// the allowed set rather than a generic decode failure.
#[derive(Deserialize)]
struct RawRequest {
    text: String,
    source_lang: String,
    target_lang: String,
}

#[derive(Debug, PartialEq, Serialize, Deserialize)]
pub struct TransliterateResponse {
    pub output: String,
    /// Per-word English pivot forms; only for Indic→Indic requests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intermediate: Option<Vec<String>>,
    pub flags: Vec<ScriptFlag>,
}

fn json_body<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("invalid JSON body: {e}")))
}

async fn transliterate(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<TransliterateResponse>, ApiError> {
    let raw: RawRequest = json_body(&body)?;
    let request = TransliterationRequest {
        text: raw.text,
        source_lang: language("source_lang", &raw.source_lang)?,
        target_lang: language("target_lang", &raw.target_lang)?,
    };
    let result = tokio::task::spawn_blocking(move || transliterate_text(&state.checkpoint, &request))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(TransliterateResponse {
        intermediate: result.intermediate(),
        flags: result.flags(),
        output: result.output,
    }))
}

async fn post_annotations(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let text = std::str::from_utf8(&body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("body is not UTF-8: {e}")))?;
    let records = parse_annotation_body(text).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    let accepted = tokio::task::spawn_blocking(move || state.store.append(&records))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok((StatusCode::CREATED, Json(json!({ "accepted": accepted }))).into_response())
}

async fn phonetic(State(state): State<Arc<AppState>>) -> Json<StoreSummary> {
    Json(StoreSummary::of(&state.store.records()))
}

/// Requests without a peer address (in-process tests) share one bucket.
async fn rate_limit(State(state): State<Arc<AppState>>, request: Request, next: Next) -> Response {
    let ip = request
        .extensions()
        .get::<ConnectInfo<SocketAddr>>()
        .map_or(IpAddr::V4(Ipv4Addr::UNSPECIFIED), |c| c.0.ip());
    match state.limiter.check(ip) {
        Ok(()) => next.run(request).await,
        Err(wait) => {
            let mut response =
                ApiError::new(StatusCode::TOO_MANY_REQUESTS, "rate limit exceeded").with("retry_after_secs", json!(wait.as_secs_f64().ceil())).into_response();
            let secs = HeaderValue::from(wait.as_secs().saturating_add(1));
            response.headers_mut().insert(header::RETRY_AFTER, secs);
            response
        }
    }
}

pub fn router(state: Arc<AppState>, max_body_bytes: usize) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/transliterate", post(transliterate))
        .route("/annotations", post(post_annotations))
        .route("/metrics/phonetic", get(phonetic))
        .layer(DefaultBodyLimit::max(max_body_bytes))
        .layer(middleware::from_fn_with_state(state.clone(), rate_limit))
        .layer(CorsLayer::new().allow_origin(Any).allow_methods(Any).allow_headers(Any))
        .with_state(state)
}

pub async fn serve(config: ServeConfig, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(config.addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    serve_on(listener, Arc::new(state), config.max_body_bytes, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}

/// Serves on an already bound listener until `shutdown` resolves.
pub async fn serve_on(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    max_body_bytes: usize,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let app = router(state, max_body_bytes);
    axum::serve(listener, app.into_make_service_with_connect_info::<SocketAddr>())
        .with_graceful_shutdown(shutdown)
        .await
}
