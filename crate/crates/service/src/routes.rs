use std::collections::HashMap;
use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use scorpid_core::infer::{sort_detections, BackendError, ImageInput};
use scorpid_core::report::{run_evaluation, EvalRequest, RunError};

use crate::sightings::{NewSighting, SightingError, SightingFilter, Verdict};
use crate::AppState;

pub fn router(state: AppState) -> Router {
    let limit = state.max_body_bytes;
    Router::new()
        .route("/health", get(health))
        .route("/detect", post(detect))
        .route("/classify", post(classify))
        .route("/evaluate", post(evaluate))
        .route("/evaluate/{run_id}", get(get_run))
        .route("/sightings", post(create_sighting).get(list_sightings))
        .route("/sightings/{id}/verdict", put(set_verdict))
        .fallback(|| async { error(StatusCode::NOT_FOUND, "no such route") })
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

fn error(status: StatusCode, message: impl std::fmt::Display) -> Response {
    (status, Json(json!({ "error": message.to_string() }))).into_response()
}

fn backend_status(e: &BackendError) -> StatusCode {
    match e {
        BackendError::Decode(_) => StatusCode::BAD_REQUEST,
        BackendError::UnknownImage(_) => StatusCode::NOT_FOUND,
        _ => StatusCode::BAD_GATEWAY,
    }
}

/// Runs blocking backend work off the async workers.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, Response> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| error(StatusCode::INTERNAL_SERVER_ERROR, e))
}

async fn health(State(state): State<AppState>) -> Response {
    let backend = state.backend.clone();
    let name = backend.name();
    match blocking(move || backend.health()).await {
        Ok(Ok(())) => Json(json!({ "status": "ok", "backend": name })).into_response(),
        Ok(Err(e)) => (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(json!({ "status": "unavailable", "backend": name, "reason": e.to_string() })),
        )
            .into_response(),
        Err(r) => r,
    }
}

fn decodable(body: &[u8]) -> Result<(), Response> {
    if body.is_empty() {
        return Err(error(StatusCode::BAD_REQUEST, "empty body"));
    }
    image::load_from_memory(body)
        .map(drop)
        .map_err(|e| error(StatusCode::BAD_REQUEST, format!("undecodable image: {e}")))
}

fn threshold(params: &HashMap<String, String>) -> Result<f64, Response> {
    let Some(raw) = params.get("threshold") else {
        return Ok(0.5);
    };
    match raw.parse::<f64>() {
        Ok(t) if (0.0..=1.0).contains(&t) => Ok(t),
        _ => Err(error(StatusCode::BAD_REQUEST, format!("threshold `{raw}` must be a number in [0, 1]"))),
    }
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1000.0
}

async fn detect(State(state): State<AppState>, Query(params): Query<HashMap<String, String>>, body: Bytes) -> Response {
    let t = match threshold(&params) {
        Ok(t) => t,
        Err(r) => return r,
    };
    if let Err(r) = decodable(&body) {
        return r;
    }
    let start = Instant::now();
    let backend = state.backend.clone();
    let result = match blocking(move || backend.detect(&ImageInput::Bytes(body.to_vec()))).await {
        Ok(r) => r,
        Err(r) => return r,
    };
    match result {
        Ok(dets) => {
            let mut kept: Vec<_> = dets
                .into_iter()
                .filter(|d| d.score >= t)
                .map(|mut d| {
                    d.image_id.clear();
                    d
                })
                .collect();
            sort_detections(&mut kept);
            Json(json!({ "detections": kept, "latency_ms": elapsed_ms(start) })).into_response()
        }
        Err(e) => error(backend_status(&e), e),
    }
}

async fn classify(State(state): State<AppState>, body: Bytes) -> Response {
    if let Err(r) = decodable(&body) {
        return r;
    }
    let start = Instant::now();
    let backend = state.backend.clone();
    let result = match blocking(move || backend.classify(&ImageInput::Bytes(body.to_vec()))).await {
        Ok(r) => r,
        Err(r) => return r,
    };
    match result {
        Ok(scores) => {
            let mut doc = serde_json::to_value(scores).expect("scores serialize");
            doc["latency_ms"] = json!(elapsed_ms(start));
            Json(doc).into_response()
        }
        Err(e) => error(backend_status(&e), e),
    }
}

fn run_status(e: &RunError) -> StatusCode {
    match e {
        RunError::Backend { source, .. } => match source {
            BackendError::UnknownImage(_) | BackendError::NoGroundTruth(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::BAD_GATEWAY,
        },
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

async fn evaluate(State(state): State<AppState>, body: Bytes) -> Response {
    let req: EvalRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("invalid run request: {e}")),
    };
    let backend = state.backend.clone();
    let outcome = match blocking(move || run_evaluation(&req, Some(backend.as_ref()))).await {
        Ok(o) => o,
        Err(r) => return r,
    };
    let report = match outcome {
        Ok(r) => r,
        Err(e) => return error(run_status(&e), e),
    };
    let n = state.run_counter.fetch_add(1, Ordering::SeqCst) + 1;
    let run_id = format!("run-{n:06}");
    let bytes = Arc::new(report.to_json());
    state
        .runs
        .write()
        .expect("run table lock")
        .insert(run_id.clone(), bytes);
    (
        StatusCode::CREATED,
        [(header::LOCATION, format!("/evaluate/{run_id}"))],
        Json(json!({ "run_id": run_id, "queued": false, "report": report.document })),
    )
        .into_response()
}

async fn get_run(State(state): State<AppState>, Path(run_id): Path<String>) -> Response {
    let stored = state.runs.read().expect("run table lock").get(&run_id).cloned();
    match stored {
        Some(bytes) => ([(header::CONTENT_TYPE, "application/json")], bytes.as_ref().clone()).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("unknown run `{run_id}`")),
    }
}

fn sighting_status(e: &SightingError) -> StatusCode {
    match e {
        SightingError::Unknown(_) => StatusCode::NOT_FOUND,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

async fn create_sighting(State(state): State<AppState>, body: Bytes) -> Response {
    let new: NewSighting = match serde_json::from_slice(&body) {
        Ok(n) => n,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, format!("invalid sighting: {e}")),
    };
    let store = state.sightings.clone();
    match blocking(move || store.create(new)).await {
        Ok(Ok(s)) => (StatusCode::CREATED, Json(s)).into_response(),
        Ok(Err(e)) => error(sighting_status(&e), e),
        Err(r) => r,
    }
}

async fn list_sightings(State(state): State<AppState>, Query(params): Query<HashMap<String, String>>) -> Response {
    let mut filter = SightingFilter::default();
    if let Some(raw) = params.get("since") {
        match raw.parse() {
            Ok(t) => filter.since = Some(t),
            Err(_) => return error(StatusCode::BAD_REQUEST, format!("since `{raw}` must be milliseconds since the epoch")),
        }
    }
    if let Some(raw) = params.get("verdict") {
        match raw.parse::<Verdict>() {
            Ok(v) => filter.verdict = Some(v),
            Err(e) => return error(StatusCode::BAD_REQUEST, e),
        }
    }
    Json(json!({ "sightings": state.sightings.list(&filter) })).into_response()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VerdictBody {
    verdict: Verdict,
    #[serde(default)]
    note: Option<String>,
}

async fn set_verdict(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> Response {
    let Ok(id) = id.parse::<u64>() else {
        return error(StatusCode::NOT_FOUND, format!("unknown sighting `{id}`"));
    };
    let req: VerdictBody = match serde_json::from_slice(&body) {
        Ok(v) => v,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, format!("invalid verdict: {e}")),
    };
    let store = state.sightings.clone();
    match blocking(move || store.set_verdict(id, req.verdict, req.note)).await {
        Ok(Ok(s)) => Json(s).into_response(),
        Ok(Err(e)) => error(sighting_status(&e), e),
        Err(r) => r,
    }
}

