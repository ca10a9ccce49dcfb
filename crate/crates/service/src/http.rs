//! JSON API under `/api` plus static hosting of the built UI.

use std::future::Future;
use std::path::PathBuf;
use std::sync::Arc;

use amanda_core::dialogue::bundled_kb;
use amanda_core::dialogue::load_kb;
use amanda_core::nlu::{bundled_corpus, IntentClassifier, Language, NluTrainConfig};
use amanda_core::signal::GriffinLimConfig;
use amanda_core::tts::TtsModelParams;
use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

use crate::config::ServiceConfig;
use crate::engine::{ChatEngine, ChatRequest, ServiceError, TtsVoice};
use crate::records::{LogModule, Severity};
use crate::store::{DocumentStore, FileStore};

const BODY_LIMIT: usize = 64 * 1024;

const PLACEHOLDER_PAGE: &str = "<!doctype html><title>amanda</title><p>The chat API is running under /api. No UI build is configured.</p>";

type AppState = Arc<ChatEngine>;

fn error(status: StatusCode, message: &str) -> Response {
    (status, Json(json!({ "error": message }))).into_response()
}

fn service_error(engine: &ChatEngine, e: ServiceError) -> Response {
    match e {
        ServiceError::Validation(m) => error(StatusCode::BAD_REQUEST, &m),
        ServiceError::TooLarge(_) => error(StatusCode::PAYLOAD_TOO_LARGE, "message too long"),
        other => {
            tracing::error!("request failed: {other}");
            let kind = match other {
                ServiceError::Store(_) | ServiceError::Io(_) | ServiceError::Document(_) => "storage failure",
                ServiceError::Tts(_) | ServiceError::Signal(_) => "synthesis failure",
                _ => "processing failure",
            };
            engine.log_security(LogModule::Api, Severity::Error, kind);
            error(StatusCode::INTERNAL_SERVER_ERROR, "internal error")
        }
    }
}

fn parse_body<T: for<'de> Deserialize<'de>>(engine: &ChatEngine, route: &str, body: &Bytes) -> Result<T, Response> {
    serde_json::from_slice(body).map_err(|_| {
        engine.log_security(LogModule::Api, Severity::Warn, format!("malformed body on {route} ({} bytes)", body.len()));
        error(StatusCode::BAD_REQUEST, "malformed request body")
    })
}

async fn blocking<T: Send + 'static>(engine: &AppState, f: impl FnOnce(&ChatEngine) -> T + Send + 'static) -> Result<T, Response> {
    let e = engine.clone();
    tokio::task::spawn_blocking(move || f(&e)).await.map_err(|_| {
        engine.log_security(LogModule::Api, Severity::Error, "worker panicked");
        error(StatusCode::INTERNAL_SERVER_ERROR, "internal error")
    })
}

async fn chat(State(engine): State<AppState>, body: Bytes) -> Response {
    let req: ChatRequest = match parse_body(&engine, "/api/chat", &body) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    match blocking(&engine, move |e| e.chat(&req)).await {
        Ok(Ok(reply)) => Json(reply).into_response(),
        Ok(Err(e)) => service_error(&engine, e),
        Err(resp) => resp,
    }
}

#[derive(Deserialize, Default)]
struct SessionBody {
    #[serde(default)]
    session_id: Option<String>,
    #[serde(default)]
    language: Option<Language>,
}

async fn create_session(State(engine): State<AppState>, body: Bytes) -> Response {
    let req: SessionBody = if body.iter().all(u8::is_ascii_whitespace) {
        SessionBody::default()
    } else {
        match parse_body(&engine, "/api/session", &body) {
            Ok(r) => r,
            Err(resp) => return resp,
        }
    };
    let lang = req.language.unwrap_or(Language::En);
    match blocking(&engine, move |e| e.create_session(req.session_id, lang)).await {
        Ok(Ok(info)) => (StatusCode::CREATED, Json(info)).into_response(),
        Ok(Err(e)) => service_error(&engine, e),
        Err(resp) => resp,
    }
}

async fn history(State(engine): State<AppState>, Path(session_id): Path<String>) -> Response {
    match engine.history(&session_id) {
        Some(records) => Json(records).into_response(),
        None => error(StatusCode::NOT_FOUND, "unknown session"),
    }
}

async fn audio(State(engine): State<AppState>, Path(id): Path<String>) -> Response {
    match blocking(&engine, move |e| e.audio(&id)).await {
        Ok(Ok(Some(bytes))) => {
            ([(header::CONTENT_TYPE, "audio/wav"), (header::CACHE_CONTROL, "public, max-age=31536000, immutable")], bytes)
                .into_response()
        }
        Ok(Ok(None)) => error(StatusCode::NOT_FOUND, "unknown audio id"),
        Ok(Err(e)) => service_error(&engine, e),
        Err(resp) => resp,
    }
}

async fn health(State(engine): State<AppState>) -> Response {
    Json(json!({ "status": "ok", "tts_enabled": engine.tts_enabled() })).into_response()
}

pub fn router(engine: Arc<ChatEngine>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/chat", post(chat))
        .route("/api/session", post(create_session))
        .route("/api/history/{session_id}", get(history))
        .route("/api/audio/{id}", get(audio))
        .route("/api/health", get(health))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(engine);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(|| async { Html(PLACEHOLDER_PAGE) })),
    }
}

/// Builds the engine described by a validated config.
pub fn build_engine(cfg: &ServiceConfig) -> Result<ChatEngine, BuildError> {
    cfg.validate().map_err(|e| BuildError::Config(e.to_string()))?;
    let kb = match &cfg.kb_path {
        Some(p) => load_kb(p).map_err(|e| BuildError::Config(format!("kb: {e}")))?,
        None => bundled_kb(),
    };
    let nlu = match &cfg.nlu_model_path {
        Some(p) => IntentClassifier::load(p).map_err(|e| BuildError::Config(format!("nlu model: {e}")))?,
        None => IntentClassifier::train(&bundled_corpus(), &NluTrainConfig::default()).map_err(|e| BuildError::Runtime(e.to_string()))?,
    };
    let tts = match (&cfg.tts_checkpoint_path, cfg.tts_enabled) {
        (Some(p), true) => Some(TtsVoice {
            params: TtsModelParams::load(p).map_err(|e| BuildError::Config(format!("tts checkpoint: {e}")))?,
            griffin_lim: GriffinLimConfig { iterations: cfg.griffin_lim_iterations, seed: 0 },
        }),
        _ => None,
    };
    let store = FileStore::open(&cfg.store_dir).map_err(|e| BuildError::Runtime(format!("store: {e}")))?;
    let repaired = store.repaired().to_vec();
    let store: Arc<dyn DocumentStore> = Arc::new(store);
    let engine = ChatEngine::new(kb, Arc::new(nlu), cfg.thresholds, store, tts, &cfg.store_dir.join("audio"))
        .map_err(|e| BuildError::Runtime(e.to_string()))?;
    for c in repaired {
        engine.log_security(LogModule::Api, Severity::Warn, format!("dropped torn trailing record in {c}"));
    }
    engine.log_security(LogModule::Api, Severity::Info, "service started");
    Ok(engine)
}

#[derive(Debug, thiserror::Error)]
pub enum BuildError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    engine: Arc<ChatEngine>,
    static_dir: Option<PathBuf>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(engine, static_dir)).with_graceful_shutdown(shutdown).await
}
