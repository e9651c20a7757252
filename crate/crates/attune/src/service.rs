//! HTTP JSON API and server-sent event stream over a running engine.

use std::convert::Infallible;
use std::sync::Arc;

use attune_core::agents::{ActionKind, HandlerDescriptor};
use attune_core::intervention::{Decision, InterventionError, InterventionStatus};
use attune_core::routine::export_csv;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tokio_stream::wrappers::BroadcastStream;
use tokio_stream::{Stream, StreamExt};

use crate::engine::{ChatError, RegisterError, Shared};

/// Typed JSON error body: `{"error": {"code": ..., "message": ...}}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({"error": {"code": self.code, "message": self.message}})),
        )
            .into_response()
    }
}

impl From<InterventionError> for ApiError {
    fn from(e: InterventionError) -> Self {
        match e {
            InterventionError::UnknownId(_) => {
                Self::new(StatusCode::NOT_FOUND, "not_found", e.to_string())
            }
            InterventionError::InvalidTransition { .. } => {
                Self::new(StatusCode::CONFLICT, "invalid_transition", e.to_string())
            }
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
        }
    }
}

impl From<ChatError> for ApiError {
    fn from(e: ChatError) -> Self {
        match &e {
            ChatError::UnknownConversation(_) => {
                Self::new(StatusCode::NOT_FOUND, "not_found", e.to_string())
            }
            ChatError::Tca(attune_core::tca::TcaError::EmptyQuery) => {
                Self::bad_request(e.to_string())
            }
            ChatError::Tca(_) => {
                Self::new(StatusCode::BAD_GATEWAY, "model_unavailable", e.to_string())
            }
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Parses a JSON body, mapping rejections to the typed error body.
struct JsonBody<T>(T);

impl<S: Send + Sync, T: serde::de::DeserializeOwned> axum::extract::FromRequest<S> for JsonBody<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        Json::<T>::from_request(req, state)
            .await
            .map(|Json(v)| JsonBody(v))
            .map_err(|e| ApiError::bad_request(e.body_text()))
    }
}

pub fn router(shared: Arc<Shared>) -> Router {
    let protected = Router::new()
        .route("/chat", post(chat))
        .route("/chat/{id}/history", get(history))
        .route("/interventions", get(interventions))
        .route("/interventions/{id}/decision", post(decide))
        .route("/routine", get(routine))
        .route("/stats/latency", get(latency))
        .route("/actions", get(actions))
        .route("/agents/register", post(register))
        .route("/events", get(events))
        .route_layer(middleware::from_fn_with_state(shared.clone(), auth));
    Router::new()
        .route("/healthz", get(|| async { Json(json!({"status": "ok"})) }))
        .merge(protected)
        .with_state(shared)
}

async fn auth(State(shared): State<Arc<Shared>>, req: Request, next: Next) -> Response {
    if let Some(token) = &shared.config.service.bearer_token {
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|t| t == token);
        if !ok {
            return ApiError::new(
                StatusCode::UNAUTHORIZED,
                "unauthorized",
                "missing or wrong bearer token",
            )
            .into_response();
        }
    }
    next.run(req).await
}

#[derive(Deserialize)]
struct ChatBody {
    conversation_id: Option<String>,
    message: String,
}

async fn chat(
    State(shared): State<Arc<Shared>>,
    JsonBody(body): JsonBody<ChatBody>,
) -> ApiResult<Response> {
    let reply = tokio::task::spawn_blocking(move || {
        shared.chat(body.conversation_id.as_deref(), &body.message)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(reply).into_response())
}

async fn history(State(shared): State<Arc<Shared>>, Path(id): Path<String>) -> ApiResult<Response> {
    let conv = shared.conversation(&id).ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "not_found",
            format!("unknown conversation `{id}`"),
        )
    })?;
    Ok(Json(json!({
        "conversation_id": id,
        "turn_count": conv.turn_count,
        "base_tone": conv.base_tone,
        "effective_tone": conv.effective_tone,
        "messages": conv.messages,
    }))
    .into_response())
}

#[derive(Deserialize)]
struct StatusQuery {
    status: Option<String>,
}

async fn interventions(
    State(shared): State<Arc<Shared>>,
    Query(q): Query<StatusQuery>,
) -> ApiResult<Response> {
    let status = match q.status.as_deref() {
        None => None,
        Some(s) => Some(
            InterventionStatus::parse(s)
                .ok_or_else(|| ApiError::bad_request(format!("unknown status `{s}`")))?,
        ),
    };
    let st = shared.lock();
    let items: Vec<_> = st
        .interventions
        .all()
        .iter()
        .filter(|iv| status.is_none_or(|s| iv.status == s))
        .cloned()
        .collect();
    Ok(Json(items).into_response())
}

#[derive(Deserialize)]
struct DecisionBody {
    decision: String,
}

async fn decide(
    State(shared): State<Arc<Shared>>,
    Path(id): Path<String>,
    JsonBody(body): JsonBody<DecisionBody>,
) -> ApiResult<Response> {
    let decision = match body.decision.as_str() {
        "accepted" => Decision::Accepted,
        "rejected" => Decision::Rejected,
        other => {
            return Err(ApiError::bad_request(format!(
                "decision must be \"accepted\" or \"rejected\", got {other:?}"
            )))
        }
    };
    Ok(Json(shared.decide(&id, decision)?).into_response())
}

#[derive(Deserialize)]
struct FormatQuery {
    format: Option<String>,
}

async fn routine(
    State(shared): State<Arc<Shared>>,
    Query(q): Query<FormatQuery>,
) -> ApiResult<Response> {
    let table = shared.lock().routine.clone();
    match q.format.as_deref().unwrap_or("json") {
        "json" => Ok(Json(table).into_response()),
        "csv" => Ok((
            [(header::CONTENT_TYPE, "text/csv; charset=utf-8")],
            export_csv(&table, true),
        )
            .into_response()),
        other => Err(ApiError::bad_request(format!("unknown format `{other}`"))),
    }
}

async fn latency(State(shared): State<Arc<Shared>>) -> Json<serde_json::Value> {
    Json(json!(shared.latency()))
}

async fn actions(State(shared): State<Arc<Shared>>) -> Json<serde_json::Value> {
    let st = shared.lock();
    Json(json!({
        "handlers": st.registry.descriptors(),
        "records": st.actions.records(),
    }))
}

#[derive(Deserialize)]
struct RegisterBody {
    name: String,
    version: String,
    kind: ActionKind,
}

async fn register(
    State(shared): State<Arc<Shared>>,
    JsonBody(body): JsonBody<RegisterBody>,
) -> ApiResult<Response> {
    if body.name.trim().is_empty() {
        return Err(ApiError::bad_request("name must be non-empty"));
    }
    let descriptor = HandlerDescriptor {
        name: body.name,
        version: body.version,
        kind: body.kind,
    };
    shared
        .register_agent(descriptor.clone())
        .map_err(|e @ RegisterError::Registry(_)| {
            ApiError::new(StatusCode::CONFLICT, "duplicate_handler", e.to_string())
        })?;
    Ok((StatusCode::CREATED, Json(descriptor)).into_response())
}

async fn events(
    State(shared): State<Arc<Shared>>,
) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let stream = BroadcastStream::new(shared.events.subscribe()).filter_map(|msg| {
        let e = msg.ok()?;
        let data = serde_json::to_string(&e).ok()?;
        Some(Ok(Event::default().event(e.name()).data(data)))
    });
    Sse::new(stream).keep_alive(KeepAlive::default())
}
