//! HTTP API, version 1. Every JSON body carries `api_version`.

use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use nbitms_core::config::{ConfigError, DeviceDirective};
use nbitms_core::engine::EngineError;
use nbitms_core::state::{AlarmId, AlarmState, StateError};
use nbitms_core::topology::MAP_API_VERSION;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::service::{Service, ServiceError, SubmitError};

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/api/v1/map", get(map))
        .route("/api/v1/objects", get(objects))
        .route("/api/v1/alarms", get(alarms))
        .route("/api/v1/alarms/{id}/ack", post(ack))
        .route("/api/v1/config/{device}/transactions", post(submit))
        .route("/api/v1/config/transactions/{txn_id}", get(transaction))
        .route("/api/v1/eval/report", get(report))
        .route("/api/v1/events", get(events))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint") })
        .with_state(service)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    details: Vec<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            details: Vec::new(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({
            "api_version": MAP_API_VERSION,
            "error": { "code": self.code, "message": self.message, "details": self.details },
        });
        (self.status, Json(body)).into_response()
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "unavailable", e.to_string())
    }
}

fn versioned(mut v: Value) -> Json<Value> {
    if let Value::Object(m) = &mut v {
        m.insert("api_version".into(), MAP_API_VERSION.into());
    }
    Json(v)
}

async fn map(State(s): State<Arc<Service>>) -> Json<Value> {
    Json(serde_json::to_value(&s.views().map).expect("map serializes"))
}

async fn objects(State(s): State<Arc<Service>>) -> Json<Value> {
    let v = s.views();
    versioned(json!({ "taken_at": v.taken_at, "objects": v.objects }))
}

#[derive(Deserialize)]
struct AlarmQuery {
    state: Option<String>,
}

async fn alarms(State(s): State<Arc<Service>>, Query(q): Query<AlarmQuery>) -> Result<Json<Value>, ApiError> {
    let filter: Option<Vec<AlarmState>> = match q.state.as_deref().map(str::to_ascii_uppercase).as_deref() {
        None | Some("") | Some("ALL") => None,
        Some("ACTIVE") => Some(vec![AlarmState::Open, AlarmState::Acknowledged]),
        Some("OPEN") => Some(vec![AlarmState::Open]),
        Some("ACKNOWLEDGED") => Some(vec![AlarmState::Acknowledged]),
        Some("CLOSED") => Some(vec![AlarmState::Closed]),
        Some(other) => {
            return Err(ApiError::bad_request(format!(
                "state must be OPEN, ACKNOWLEDGED, CLOSED, ACTIVE or ALL, got '{other}'"
            )))
        }
    };
    let v = s.views();
    let list: Vec<_> = v
        .alarms
        .iter()
        .filter(|a| filter.as_ref().is_none_or(|f| f.contains(&a.state)))
        .collect();
    Ok(versioned(json!({ "taken_at": v.taken_at, "alarms": list })))
}

#[derive(Deserialize, Default)]
struct AckBody {
    #[serde(default)]
    operator_id: Option<String>,
}

async fn ack(State(s): State<Arc<Service>>, Path(id): Path<String>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let id: AlarmId = id
        .parse()
        .map_err(|_| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no alarm '{id}'")))?;
    let body: AckBody = if body.is_empty() {
        AckBody::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(e.to_string()))?
    };
    let operator = body.operator_id.unwrap_or_else(|| "operator".into());
    match s.acknowledge(id, &operator).await? {
        Ok(alarm) => Ok(versioned(json!({ "alarm": alarm }))),
        Err(EngineError::State(e @ StateError::AlarmNotFound(_))) => {
            Err(ApiError::new(StatusCode::NOT_FOUND, "not_found", e.to_string()))
        }
        Err(EngineError::State(e @ StateError::AlarmClosed(_))) => {
            Err(ApiError::new(StatusCode::CONFLICT, "alarm_closed", e.to_string()))
        }
        Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SubmitBody {
    operator_id: String,
    #[serde(default)]
    command_id: Option<String>,
    directives: Vec<DeviceDirective>,
}

async fn submit(State(s): State<Arc<Service>>, Path(device): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let body: SubmitBody = serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(e.to_string()))?;
    match s.desk.submit(&device, &body.operator_id, body.command_id, body.directives) {
        Ok((txn_id, _)) => Ok((
            StatusCode::ACCEPTED,
            versioned(json!({ "txn_id": txn_id, "status": "QUEUED" })),
        )
            .into_response()),
        Err(SubmitError::UnknownDevice(d)) => {
            Err(ApiError::new(StatusCode::NOT_FOUND, "unknown_device", format!("unknown device '{d}'")))
        }
        Err(SubmitError::Rejected(e)) => {
            let mut err = ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "rejected", e.to_string());
            if let ConfigError::Validation(offences) = &e {
                err.details = offences
                    .iter()
                    .map(|o| format!("directive #{} {}: {}", o.index, o.oid, o.reason))
                    .collect();
            }
            Err(err)
        }
    }
}

async fn transaction(State(s): State<Arc<Service>>, Path(txn_id): Path<String>) -> Result<Json<Value>, ApiError> {
    let entry = s
        .desk
        .get(&txn_id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no transaction '{txn_id}'")))?;
    Ok(versioned(serde_json::to_value(entry).expect("transactions serialize")))
}

async fn report(State(s): State<Arc<Service>>) -> Result<Json<Value>, ApiError> {
    let r = s
        .eval_report()
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "eval", e.to_string()))?;
    Ok(versioned(json!({ "report": r, "text": r.render_text() })))
}

#[derive(Deserialize)]
struct EventsQuery {
    since: Option<u64>,
}

/// Long-lived response, one envelope per line.
async fn events(State(s): State<Arc<Service>>, Query(q): Query<EventsQuery>) -> Response {
    let sub = s.hub.subscribe(q.since);
    let stream = futures::stream::unfold(sub, |mut sub| async move {
        let env = sub.next().await?;
        let mut line = serde_json::to_vec(&env).expect("envelopes serialize");
        line.push(b'\n');
        Some((Ok::<_, std::convert::Infallible>(Bytes::from(line)), sub))
    });
    Response::builder()
        .header(header::CONTENT_TYPE, "application/x-ndjson")
        .header(header::CACHE_CONTROL, "no-cache")
        .body(Body::from_stream(stream))
        .expect("static response parts")
}
