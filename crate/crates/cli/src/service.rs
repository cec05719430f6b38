//! HTTP/JSON simulation service.
//!
//! Routes, all stateless:
//!
//! * `POST /api/simulate` `{diagram, options?}` compiles and runs a diagram;
//! * `POST /api/validate` `{diagram}` returns the diagnostics array;
//! * `POST /api/convert` `{diagram, to}` re-encodes a diagram as XML or JSON;
//! * `GET /api/blocks` returns the palette.
//!
//! `diagram` is either an interchange JSON object or a string holding XML
//! (or interchange JSON) text. Errors are `{status, code, message, diagnostics}`.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::Semaphore;
use tower_http::services::ServeDir;
use xcosw_core::interchange::from_interchange_value;
use xcosw_core::{
    compile, palette, serialize_xcos_xml, simulate_until, validate, Diagnostic, Diagram, SimError,
    SimulationResult,
};

use crate::{parse_diagram, OptionOverrides};

#[derive(Clone)]
pub struct ServiceConfig {
    /// Simulations allowed to run at once.
    pub jobs: usize,
    /// Wall-clock budget per simulation.
    pub budget: Duration,
    /// Directory served at `/`, if any.
    pub static_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            jobs: std::thread::available_parallelism().map_or(1, |n| n.get()),
            budget: Duration::from_secs(30),
            static_dir: None,
        }
    }
}

#[derive(Clone)]
struct AppState {
    permits: Arc<Semaphore>,
    budget: Duration,
}

pub fn router(config: ServiceConfig) -> Router {
    let state = AppState {
        permits: Arc::new(Semaphore::new(config.jobs.max(1))),
        budget: config.budget,
    };
    let api = Router::new()
        .route("/api/simulate", post(simulate_handler))
        .route("/api/validate", post(validate_handler))
        .route("/api/convert", post(convert_handler))
        .route("/api/blocks", get(blocks_handler))
        .with_state(state);
    match config.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Invalid,
    Error,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Timing {
    pub wall_ms: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SimResponse {
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub diagnostics: Vec<Diagnostic>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<SimulationResult>,
    pub timing: Timing,
}

struct ApiError {
    http: StatusCode,
    status: Status,
    code: &'static str,
    message: String,
    diagnostics: Vec<Diagnostic>,
}

impl ApiError {
    fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            http: StatusCode::BAD_REQUEST,
            status: Status::Error,
            code,
            message: message.into(),
            diagnostics: Vec::new(),
        }
    }

    fn into_response_at(self, started: Instant) -> Response {
        let body = SimResponse {
            status: self.status,
            code: Some(self.code.to_string()),
            message: Some(self.message),
            diagnostics: self.diagnostics,
            result: None,
            timing: elapsed(started),
        };
        (self.http, Json(body)).into_response()
    }
}

fn elapsed(started: Instant) -> Timing {
    Timing {
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimRequest {
    diagram: Value,
    #[serde(default)]
    options: OptionOverrides,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConvertRequest {
    diagram: Value,
    to: crate::DiagramFormat,
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("BAD_REQUEST", e.to_string()))
}

fn diagram_from(v: Value) -> Result<Diagram, ApiError> {
    let bad = |m: String| ApiError::bad_request("BAD_DIAGRAM", m);
    match v {
        Value::String(text) => parse_diagram(text.as_bytes()).map_err(|e| bad(e.to_string())),
        Value::Object(_) => from_interchange_value(v).map_err(|e| bad(format!("JSON: {e}"))),
        _ => Err(bad(
            "diagram must be an interchange object or a string of XML".into(),
        )),
    }
}

async fn simulate_handler(State(state): State<AppState>, body: Bytes) -> Response {
    let started = Instant::now();
    match run_simulation(&state, &body, started).await {
        Ok(r) => r,
        Err(e) => e.into_response_at(started),
    }
}

async fn run_simulation(
    state: &AppState,
    body: &[u8],
    started: Instant,
) -> Result<Response, ApiError> {
    let req: SimRequest = parse_body(body)?;
    let diagram = diagram_from(req.diagram)?;
    let opts = req.options.apply(&diagram.settings);
    opts.validate()
        .map_err(|e| ApiError::bad_request("BAD_OPTIONS", e.to_string()))?;

    let diagnostics = validate(&diagram);
    if diagnostics.iter().any(Diagnostic::is_error) {
        let n = diagnostics.iter().filter(|d| d.is_error()).count();
        return Err(ApiError {
            http: StatusCode::UNPROCESSABLE_ENTITY,
            status: Status::Invalid,
            code: "VALIDATION_FAILED",
            message: format!("diagram has {n} error(s)"),
            diagnostics,
        });
    }

    let _permit = state
        .permits
        .clone()
        .acquire_owned()
        .await
        .expect("semaphore is never closed");
    let deadline = started + state.budget;
    let outcome = tokio::task::spawn_blocking(move || {
        let sys = compile(&diagram)?;
        Ok::<_, RunError>(simulate_until(&sys, &opts, Some(deadline))?)
    })
    .await
    .map_err(|e| ApiError {
        http: StatusCode::INTERNAL_SERVER_ERROR,
        status: Status::Error,
        code: "INTERNAL",
        message: e.to_string(),
        diagnostics: Vec::new(),
    })?;

    match outcome {
        Ok(result) => Ok((
            StatusCode::OK,
            Json(SimResponse {
                status: Status::Ok,
                code: None,
                message: None,
                diagnostics,
                result: Some(result),
                timing: elapsed(started),
            }),
        )
            .into_response()),
        Err(RunError::Sim(SimError::DeadlineExceeded { t })) => Err(ApiError {
            http: StatusCode::REQUEST_TIMEOUT,
            status: Status::Error,
            code: "DEADLINE_EXCEEDED",
            message: format!("simulation exceeded its {:?} budget at t={t}", state.budget),
            diagnostics,
        }),
        Err(e) => Err(ApiError {
            http: StatusCode::UNPROCESSABLE_ENTITY,
            status: Status::Error,
            code: "SIMULATION_FAILED",
            message: e.to_string(),
            diagnostics,
        }),
    }
}

#[derive(Debug, thiserror::Error)]
enum RunError {
    #[error(transparent)]
    Compile(#[from] xcosw_core::CompileError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

async fn validate_handler(body: Bytes) -> Response {
    let started = Instant::now();
    let run = || -> Result<Vec<Diagnostic>, ApiError> {
        let req: SimRequest = parse_body(&body)?;
        Ok(validate(&diagram_from(req.diagram)?))
    };
    match run() {
        Ok(diags) => (StatusCode::OK, Json(diags)).into_response(),
        Err(e) => e.into_response_at(started),
    }
}

async fn convert_handler(body: Bytes) -> Response {
    let started = Instant::now();
    let run = || -> Result<Value, ApiError> {
        let req: ConvertRequest = parse_body(&body)?;
        let d = diagram_from(req.diagram)?;
        Ok(match req.to {
            crate::DiagramFormat::Xml => serde_json::json!({
                "format": "xml",
                "content": String::from_utf8(serialize_xcos_xml(&d)).expect("serializer writes UTF-8"),
            }),
            crate::DiagramFormat::Json => serde_json::json!({
                "format": "json",
                "diagram": xcosw_core::interchange::to_interchange_value(&d),
            }),
        })
    };
    match run() {
        Ok(v) => (StatusCode::OK, Json(v)).into_response(),
        Err(e) => e.into_response_at(started),
    }
}

async fn blocks_handler() -> Json<Value> {
    Json(serde_json::to_value(palette()).expect("palette serializes"))
}
