//! REST control API and the ThingSpeak-compatible ingest.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/api/readings/latest` | latest table, motor, actuators, LCD |
//! | GET | `/api/readings?node=&from=&to=&kind=` | journal history |
//! | POST | `/api/motor` | queue a motor command (202) |
//! | GET | `/api/commands`, `/api/commands/{id}` | command journal |
//! | GET | `/api/alarms` | rules, events, actuators |
//! | PUT, DELETE | `/api/alarms/{id}` | rule management |
//! | POST | `/api/alarms/clear` | reset sprinkler and power cutoff |
//! | GET | `/api/uplinks` | gateway uplinks and ingest entries |
//! | GET | `/api/summary` | run summary |
//! | GET | `/update?api_key=&field1=..` | cloud ingest, plain-text id |

use std::collections::HashMap;
use std::path::PathBuf;

use axum::body::Bytes;
use axum::extract::{Path, Query, RawQuery, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use chrono::NaiveDateTime;
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::services::ServeDir;
use wsn_twin::alarms::AlarmRule;
use wsn_twin::clock::parse_iso;
use wsn_twin::nodes::NodeId;
use wsn_twin::sim::{CLOUD_NODE, GATEWAY_NODE};
use wsn_twin::telemetry::{query_records, RecordKind};
use wsn_twin::{Direction, MotorCommand};

use crate::runner::{MotorRejected, Request, SimHandle, Stopped};

pub fn router(sim: SimHandle, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/readings/latest", get(latest))
        .route("/api/readings", get(history))
        .route("/api/motor", post(motor))
        .route("/api/commands", get(commands))
        .route("/api/commands/{id}", get(command))
        .route("/api/alarms", get(alarms))
        .route("/api/alarms/clear", post(clear))
        .route("/api/alarms/{id}", put(put_rule).delete(delete_rule))
        .route("/api/uplinks", get(uplinks))
        .route("/api/summary", get(summary))
        .route("/update", get(ingest))
        .with_state(sim);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

impl IntoResponse for Stopped {
    fn into_response(self) -> Response {
        error(StatusCode::SERVICE_UNAVAILABLE, self.to_string())
    }
}

async fn latest(State(sim): State<SimHandle>) -> Response {
    Json(sim.view().snapshot.clone()).into_response()
}

/// Absent bounds are open.
fn parse_bound(raw: Option<&String>, open: NaiveDateTime) -> Result<NaiveDateTime, String> {
    match raw {
        None => Ok(open),
        Some(s) => parse_iso(s).map_err(|e| format!("{s:?}: {e}")),
    }
}

fn known_node(name: &str) -> bool {
    name == CLOUD_NODE || name == GATEWAY_NODE || name.parse::<NodeId>().is_ok()
}

async fn history(
    State(sim): State<SimHandle>,
    Query(params): Query<HashMap<String, String>>,
) -> Response {
    let Some(node) = params.get("node") else {
        return error(StatusCode::BAD_REQUEST, "query parameter `node` is required");
    };
    if !known_node(node) {
        return error(StatusCode::NOT_FOUND, format!("unknown node {node:?}"));
    }
    let from = match parse_bound(params.get("from"), NaiveDateTime::MIN) {
        Ok(t) => t,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("from: {e}")),
    };
    let to = match parse_bound(params.get("to"), NaiveDateTime::MAX) {
        Ok(t) => t,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("to: {e}")),
    };
    if from > to {
        return error(StatusCode::BAD_REQUEST, "`from` is after `to`");
    }
    let kinds: Vec<RecordKind> = match params.get("kind") {
        Some(list) => {
            let mut kinds = Vec::new();
            for k in list.split(',') {
                match RecordKind::ALL.into_iter().find(|c| c.as_str() == k) {
                    Some(kind) => kinds.push(kind),
                    None => return error(StatusCode::BAD_REQUEST, format!("unknown kind {k:?}")),
                }
            }
            kinds
        }
        None if node.starts_with("node") => {
            RecordKind::ALL.into_iter().filter(|k| k.is_reading()).collect()
        }
        None => RecordKind::ALL.to_vec(),
    };
    let result = sim.with_records(|records| query_records(records, node, from, to));
    match result {
        Ok(records) => {
            let rows: Vec<_> = records.into_iter().filter(|r| kinds.contains(&r.kind)).collect();
            Json(rows).into_response()
        }
        Err(e) => error(StatusCode::BAD_REQUEST, e.to_string()),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MotorBody {
    speed: i64,
    direction: String,
}

fn parse_motor(body: &[u8]) -> Result<MotorCommand, String> {
    let b: MotorBody = serde_json::from_slice(body).map_err(|e| e.to_string())?;
    let speed = u8::try_from(b.speed).map_err(|_| format!("speed {} outside 0..=255", b.speed))?;
    let direction: Direction = b.direction.parse().map_err(|e| format!("{e}"))?;
    Ok(MotorCommand { speed, direction })
}

async fn motor(State(sim): State<SimHandle>, body: Bytes) -> Response {
    let cmd = match parse_motor(&body) {
        Ok(c) => c,
        Err(e) => return error(StatusCode::BAD_REQUEST, e),
    };
    match sim.ask(|reply| Request::Motor { cmd, reply }).await {
        Ok(Ok(id)) => (
            StatusCode::ACCEPTED,
            Json(json!({ "id": id, "status": "pending", "command": cmd })),
        )
            .into_response(),
        Ok(Err(MotorRejected::PowerCutoff)) => error(
            StatusCode::CONFLICT,
            "power cutoff is active; POST /api/alarms/clear first",
        ),
        Ok(Err(MotorRejected::Internal(e))) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
        Err(stopped) => stopped.into_response(),
    }
}

async fn commands(State(sim): State<SimHandle>) -> Response {
    Json(sim.view().snapshot.commands.clone()).into_response()
}

async fn command(State(sim): State<SimHandle>, Path(id): Path<u64>) -> Response {
    match sim.view().snapshot.commands.iter().find(|c| c.id == id) {
        Some(c) => Json(c.clone()).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("no command {id}")),
    }
}

async fn alarms(State(sim): State<SimHandle>) -> Response {
    let view = sim.view();
    let s = &view.snapshot;
    Json(json!({
        "rules": s.rules,
        "events": s.alarm_events,
        "actuators": s.actuators,
    }))
    .into_response()
}

async fn put_rule(State(sim): State<SimHandle>, Path(id): Path<String>, body: Bytes) -> Response {
    let mut doc: Value = match serde_json::from_slice(&body) {
        Ok(v) => v,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    let Some(obj) = doc.as_object_mut() else {
        return error(StatusCode::BAD_REQUEST, "rule must be a JSON object");
    };
    match obj.get("id") {
        None => {
            obj.insert("id".into(), Value::String(id.clone()));
        }
        Some(Value::String(body_id)) if *body_id == id => {}
        Some(other) => {
            return error(
                StatusCode::BAD_REQUEST,
                format!("body id {other} does not match path id {id:?}"),
            )
        }
    }
    let rule: AlarmRule = match serde_json::from_value(doc) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    let stored = rule.clone();
    match sim.ask(|reply| Request::PutRule { rule, reply }).await {
        Ok(Ok(())) => Json(stored).into_response(),
        Ok(Err(issues)) => (StatusCode::BAD_REQUEST, Json(json!({ "error": "invalid rule", "issues": issues }))).into_response(),
        Err(stopped) => stopped.into_response(),
    }
}

async fn delete_rule(State(sim): State<SimHandle>, Path(id): Path<String>) -> Response {
    let name = id.clone();
    match sim.ask(|reply| Request::DeleteRule { id, reply }).await {
        Ok(true) => StatusCode::NO_CONTENT.into_response(),
        Ok(false) => error(StatusCode::NOT_FOUND, format!("no rule {name:?}")),
        Err(stopped) => stopped.into_response(),
    }
}

async fn clear(State(sim): State<SimHandle>) -> Response {
    match sim.ask(|reply| Request::Clear { reply }).await {
        Ok(Ok(before)) => Json(json!({ "before": before, "after": sim.view().snapshot.actuators })).into_response(),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
        Err(stopped) => stopped.into_response(),
    }
}

async fn uplinks(State(sim): State<SimHandle>) -> Response {
    let view = sim.view();
    Json(json!({ "gateway": view.uplinks, "cloud": view.ingest })).into_response()
}

async fn summary(State(sim): State<SimHandle>) -> Response {
    match sim.ask(|reply| Request::Summary { reply }).await {
        Ok(s) => Json(s).into_response(),
        Err(stopped) => stopped.into_response(),
    }
}

async fn ingest(State(sim): State<SimHandle>, RawQuery(query): RawQuery) -> Response {
    let query = query.unwrap_or_default();
    let id = match sim.ask(|reply| Request::Ingest { query, reply }).await {
        Ok(Ok(id)) => id,
        Ok(Err(e)) => return error(StatusCode::INTERNAL_SERVER_ERROR, e),
        Err(stopped) => return stopped.into_response(),
    };
    ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], id.to_string()).into_response()
}
