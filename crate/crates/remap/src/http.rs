//! REST and server-sent-event routes over a [`Service`].

use std::convert::Infallible;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::broadcast::error::RecvError;

use crate::service::{
    AblationRequest, HandcraftRequest, ModelFilter, Service, ServiceError, StreamMessage, VariationRequest,
};
use crate::session::SessionError;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: Value,
}

impl ApiError {
    fn bad_request(message: String) -> Self {
        ApiError { status: StatusCode::BAD_REQUEST, body: json!({ "error": "bad_request", "message": message }) }
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let message = e.to_string();
        let (status, code, detail) = match &e {
            ServiceError::UnknownModel(_) | ServiceError::Session(SessionError::UnknownModel(_)) => {
                (StatusCode::NOT_FOUND, "unknown_model", Value::Null)
            }
            ServiceError::UnknownJob(_) | ServiceError::Session(SessionError::UnknownJob(_)) => {
                (StatusCode::NOT_FOUND, "unknown_job", Value::Null)
            }
            ServiceError::UnknownClass(_) => (StatusCode::NOT_FOUND, "unknown_class", Value::Null),
            ServiceError::UnknownProjection(_) => (StatusCode::NOT_FOUND, "unknown_projection", Value::Null),
            ServiceError::NotTrained(_) => (StatusCode::CONFLICT, "not_trained", Value::Null),
            ServiceError::NotQueued(_) | ServiceError::Session(SessionError::NotQueued(_)) => {
                (StatusCode::CONFLICT, "not_queued", Value::Null)
            }
            ServiceError::ShuttingDown => (StatusCode::CONFLICT, "shutting_down", Value::Null),
            ServiceError::InvalidArchitecture(v) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "invalid_architecture", json!({ "violations": v }))
            }
            ServiceError::Edit(edit) => (StatusCode::UNPROCESSABLE_ENTITY, "edit", json!(edit)),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal", Value::Null),
        };
        let mut body = json!({ "error": code, "message": message });
        if !detail.is_null() {
            body["detail"] = detail;
            body["jobs"] = json!([]);
        }
        ApiError { status, body }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(e.to_string()))
}

#[derive(Deserialize)]
struct ReorderRequest {
    job_id: String,
    rank: i64,
}

#[derive(Deserialize)]
struct CancelRequest {
    job_id: String,
}

#[derive(Serialize)]
struct CancelResponse {
    job_id: String,
    #[serde(flatten)]
    outcome: crate::service::CancelOutcome,
}

pub fn router(service: Service) -> Router {
    Router::new()
        .route("/models", get(list_models))
        .route("/models/{id}", get(model_detail))
        .route("/projection/{kind}", get(projection))
        .route("/pareto", get(pareto))
        .route("/class/{c}/accuracies", get(class_accuracies))
        .route("/classes", get(classes))
        .route("/queue", get(queue))
        .route("/events", get(events))
        .route("/ablations", post(ablations))
        .route("/variations", post(variations))
        .route("/handcraft", post(handcraft))
        .route("/queue/reorder", post(reorder))
        .route("/queue/cancel", post(cancel))
        .route("/projections/refit", post(refit))
        .with_state(service)
}

async fn list_models(State(s): State<Service>, Query(filter): Query<ModelFilter>) -> ApiResult<Value> {
    Ok(Json(json!(s.list_models(&filter)?)))
}

async fn model_detail(State(s): State<Service>, Path(id): Path<String>) -> ApiResult<Value> {
    Ok(Json(json!(s.model_detail(&id)?)))
}

async fn projection(State(s): State<Service>, Path(kind): Path<String>) -> ApiResult<Value> {
    Ok(Json(json!(s.projection(&kind)?)))
}

async fn pareto(State(s): State<Service>) -> Json<Value> {
    Json(json!(s.pareto()))
}

async fn class_accuracies(State(s): State<Service>, Path(c): Path<String>) -> ApiResult<Value> {
    let class = c.parse::<usize>().map_err(|_| ApiError::bad_request(format!("class must be an index, got {c:?}")))?;
    Ok(Json(json!(s.class_accuracies(class)?)))
}

async fn classes(State(s): State<Service>) -> Json<Value> {
    Json(json!(s.with_state(|st| st.dataset.class_names.clone())))
}

async fn queue(State(s): State<Service>) -> Json<Value> {
    Json(json!(s.queue()))
}

async fn ablations(State(s): State<Service>, body: Bytes) -> ApiResult<Value> {
    let request: AblationRequest = parse(&body)?;
    Ok(Json(json!(s.spawn_ablations(&request)?)))
}

async fn variations(State(s): State<Service>, body: Bytes) -> ApiResult<Value> {
    let request: VariationRequest = parse(&body)?;
    Ok(Json(json!(s.spawn_variations(&request)?)))
}

async fn handcraft(State(s): State<Service>, body: Bytes) -> ApiResult<Value> {
    let request: HandcraftRequest = parse(&body)?;
    Ok(Json(json!(s.spawn_handcrafted(&request)?)))
}

async fn reorder(State(s): State<Service>, body: Bytes) -> ApiResult<Value> {
    let request: ReorderRequest = parse(&body)?;
    Ok(Json(json!(s.reorder(&request.job_id, request.rank)?)))
}

async fn cancel(State(s): State<Service>, body: Bytes) -> ApiResult<Value> {
    let request: CancelRequest = parse(&body)?;
    let outcome = s.cancel(&request.job_id)?;
    Ok(Json(json!(CancelResponse { job_id: request.job_id, outcome })))
}

async fn refit(State(s): State<Service>) -> ApiResult<Value> {
    let seq = s.refit_projections()?;
    Ok(Json(json!({ "seq": seq })))
}

fn sse_event(message: &StreamMessage) -> Result<SseEvent, Infallible> {
    let name = match message {
        StreamMessage::Snapshot { .. } => "snapshot",
        StreamMessage::Journal { .. } => "journal",
        StreamMessage::Progress { .. } => "progress",
    };
    Ok(SseEvent::default().event(name).data(serde_json::to_string(message).expect("messages serialize")))
}

/// Messages a subscriber sees: a snapshot, then deltas. A subscriber that
/// falls behind gets a fresh snapshot instead of the messages it missed.
pub fn message_stream(service: Service) -> Option<impl Stream<Item = StreamMessage>> {
    let (state, rx) = service.subscribe()?;
    let first = StreamMessage::Snapshot { state: Box::new(state) };
    Some(futures::stream::unfold((Some(first), rx, service), |(pending, mut rx, service)| async move {
        if let Some(message) = pending {
            return Some((message, (None, rx, service)));
        }
        match rx.recv().await {
            Ok(message) => Some((message, (None, rx, service))),
            Err(RecvError::Lagged(n)) => {
                log::warn!("event subscriber fell {n} messages behind; resending a snapshot");
                let (state, rx) = service.subscribe()?;
                Some((StreamMessage::Snapshot { state: Box::new(state) }, (None, rx, service)))
            }
            Err(RecvError::Closed) => None,
        }
    }))
}

async fn events(State(s): State<Service>) -> Result<impl IntoResponse, ApiError> {
    use futures::StreamExt;
    let stream = message_stream(s).ok_or(ApiError::from(ServiceError::ShuttingDown))?;
    Ok(Sse::new(stream.map(|m| sse_event(&m))).keep_alive(KeepAlive::default()))
}
