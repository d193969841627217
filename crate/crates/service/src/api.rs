//! HTTP routes and the JSON error envelope.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use flowshop_core::bench::{generate_instance, UniformTimes};
use flowshop_core::engine::{Algorithm, AlgorithmSpec, EngineError, TimelineDocument};
use flowshop_core::model::RawInstance;
use flowshop_core::{validate_instance, Capacity, Instance, ModelError, Sequence};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::runs::RunManager;
use crate::store::Store;

#[derive(Clone)]
pub struct AppState {
    pub store: Store,
    pub runs: Arc<RunManager>,
}

impl AppState {
    /// Opens (or creates) the data directory and recovers persisted runs.
    pub fn open(dir: impl Into<std::path::PathBuf>, workers: usize) -> std::io::Result<Self> {
        let store = Store::open(dir)?;
        let runs = Arc::new(RunManager::open(store.clone(), workers)?);
        Ok(AppState { store, runs })
    }
}

pub fn app(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/instances", post(create_instance).get(list_instances))
        .route("/instances/{id}", get(get_instance))
        .route("/runs", post(start_run).get(list_runs))
        .route("/runs/{id}", get(get_run).delete(cancel_run))
        .route("/evaluate", post(evaluate))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    detail: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            detail: Value::Null,
        }
    }

    fn validation(message: impl Into<String>) -> Self {
        Self::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "validation_error",
            message,
        )
    }

    fn not_found(what: &str, id: &str) -> Self {
        ApiError {
            detail: json!({ "id": id }),
            ..Self::new(
                StatusCode::NOT_FOUND,
                "not_found",
                format!("{what} `{id}` not found"),
            )
        }
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "internal_error",
            e.to_string(),
        )
    }

    fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "code": self.code, "message": self.message, "detail": self.detail });
        (self.status, Json(body)).into_response()
    }
}

impl From<ModelError> for ApiError {
    fn from(e: ModelError) -> Self {
        let detail = match &e {
            ModelError::NegativeTime {
                job,
                machine,
                value,
            } => {
                json!({ "field": format!("p[{job}][{machine}]"), "value": value })
            }
            ModelError::RowLength {
                row,
                expected,
                found,
            } => {
                json!({ "field": format!("p[{row}]"), "expected": expected, "found": found })
            }
            ModelError::RowCount { expected, found } => {
                json!({ "field": "p", "expected": expected, "found": found })
            }
            ModelError::BufferCount { expected, found } => {
                json!({ "field": "buffers", "expected": expected, "found": found })
            }
            ModelError::InvalidCapacity { stage, value } => {
                json!({ "field": format!("buffers[{stage}]"), "value": value })
            }
            ModelError::NoMachines => json!({ "field": "m" }),
            ModelError::NoJobs => json!({ "field": "n" }),
            ModelError::SequenceLength { expected, found } => {
                json!({ "field": "sequence", "expected": expected, "found": found })
            }
            ModelError::JobOutOfRange { position, job, .. } => {
                json!({ "field": format!("sequence[{position}]"), "value": job })
            }
            ModelError::DuplicateJob { position, job } => {
                json!({ "field": format!("sequence[{position}]"), "value": job })
            }
            ModelError::StageOutOfRange { stage, .. } => {
                json!({ "field": "stage", "value": stage })
            }
            ModelError::Parse(_) => Value::Null,
        };
        ApiError::validation(e.to_string()).with_detail(detail)
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        ApiError::validation(e.to_string())
    }
}

/// Parses a request body; syntax errors are 400, shape errors 422.
fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| {
        let status = if e.is_data() {
            StatusCode::UNPROCESSABLE_ENTITY
        } else {
            StatusCode::BAD_REQUEST
        };
        let code = if e.is_data() {
            "validation_error"
        } else {
            "malformed_json"
        };
        ApiError::new(status, code, e.to_string())
    })
}

fn load_instance(store: &Store, key: &str) -> Result<Instance, ApiError> {
    store
        .get_instance(key)
        .map_err(ApiError::internal)?
        .ok_or_else(|| ApiError::not_found("instance", key))
}

fn with_buffers(inst: Instance, buffers: Option<Vec<Capacity>>) -> Result<Instance, ApiError> {
    match buffers {
        Some(b) => Ok(inst.with_buffers(b)?),
        None => Ok(inst),
    }
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok", "version": env!("CARGO_PKG_VERSION") }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GenerateParams {
    n: usize,
    m: usize,
    #[serde(default = "default_lo")]
    lo: u64,
    #[serde(default = "default_hi")]
    hi: u64,
    #[serde(default)]
    buffers: Option<Vec<Capacity>>,
    #[serde(default)]
    seed: u64,
}

fn default_lo() -> u64 {
    UniformTimes::default().lo
}

fn default_hi() -> u64 {
    UniformTimes::default().hi
}

async fn create_instance(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let doc: Value = parse_body(&body)?;
    let instance = if doc.get("p").is_some() {
        let raw: RawInstance = parse_body(&body)?;
        validate_instance(raw)?
    } else {
        let g: GenerateParams = parse_body(&body)?;
        if g.n < 1 || g.m < 1 {
            return Err(ApiError::validation("n and m must be positive")
                .with_detail(json!({ "field": if g.n < 1 { "n" } else { "m" } })));
        }
        let buffers = g
            .buffers
            .unwrap_or_else(|| vec![Capacity::Unbounded; g.m - 1]);
        let dist = UniformTimes { lo: g.lo, hi: g.hi };
        generate_instance(g.n, g.m, dist, buffers, g.seed).map_err(|e| match e {
            flowshop_core::BenchError::Model(m) => ApiError::from(m),
            other => ApiError::validation(other.to_string()),
        })?
    };
    let key = state
        .store
        .put_instance(&instance)
        .map_err(ApiError::internal)?;
    Ok((StatusCode::CREATED, Json(json!({ "id": key }))).into_response())
}

async fn get_instance(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let text = state
        .store
        .instance_document(&id)
        .map_err(ApiError::internal)?
        .ok_or_else(|| ApiError::not_found("instance", &id))?;
    Ok(([(header::CONTENT_TYPE, "application/json")], text).into_response())
}

async fn list_instances(State(state): State<AppState>) -> Result<Json<Value>, ApiError> {
    let mut out = Vec::new();
    for key in state.store.instance_keys().map_err(ApiError::internal)? {
        if let Some(inst) = state.store.get_instance(&key).map_err(ApiError::internal)? {
            out.push(json!({
                "id": key,
                "name": inst.id(),
                "n": inst.jobs(),
                "m": inst.machines(),
                "buffers": inst.buffers(),
            }));
        }
    }
    Ok(Json(Value::Array(out)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StartRun {
    instance_id: String,
    algorithm: String,
    #[serde(default)]
    buffers: Option<Vec<Capacity>>,
    #[serde(default)]
    config: Value,
    #[serde(default)]
    seed: Option<u64>,
}

/// Rejects configurations that would fail immediately, before queueing.
fn precheck(spec: &AlgorithmSpec, inst: &Instance) -> Result<(), ApiError> {
    let engine = |e: EngineError| ApiError::from(e);
    match spec {
        AlgorithmSpec::Johnson if inst.machines() != 2 => Err(ApiError::validation(format!(
            "Johnson's rule needs exactly 2 machines, instance has {}",
            inst.machines()
        ))),
        AlgorithmSpec::Sa(cfg) => cfg.validate().map_err(|e| engine(e.into())),
        AlgorithmSpec::Gbml(cfg) => {
            cfg.gbml.validate().map_err(|e| engine(e.into()))?;
            let dispatcher = cfg.dispatch.build().map_err(|e| engine(e.into()))?;
            dispatcher
                .attributes
                .check(inst)
                .map_err(|e| engine(e.into()))
        }
        _ => Ok(()),
    }
}

async fn start_run(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: StartRun = parse_body(&body)?;
    let algorithm: Algorithm = req
        .algorithm
        .parse()
        .map_err(|e: EngineError| ApiError::from(e).with_detail(json!({ "field": "algorithm" })))?;
    let instance = load_instance(&state.store, &req.instance_id)?;
    let instance = with_buffers(instance, req.buffers)?;
    let mut spec = AlgorithmSpec::from_json(algorithm, &req.config)
        .map_err(|e| ApiError::from(e).with_detail(json!({ "field": "config" })))?;
    if let Some(seed) = req.seed {
        spec = spec.with_seed(seed);
    }
    precheck(&spec, &instance)?;
    let record = state
        .runs
        .submit(req.instance_id, instance, spec, req.config)
        .map_err(ApiError::internal)?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "run_id": record.id }))).into_response())
}

async fn get_run(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let record = state
        .runs
        .get(&id)
        .ok_or_else(|| ApiError::not_found("run", &id))?;
    Ok(Json(record).into_response())
}

async fn list_runs(State(state): State<AppState>) -> Response {
    Json(state.runs.list()).into_response()
}

async fn cancel_run(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let record = state
        .runs
        .cancel(&id)
        .ok_or_else(|| ApiError::not_found("run", &id))?;
    Ok((StatusCode::ACCEPTED, Json(record)).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EvaluateRequest {
    instance_id: String,
    sequence: Vec<usize>,
    #[serde(default)]
    buffers: Option<Vec<Capacity>>,
}

async fn evaluate(
    State(state): State<AppState>,
    body: Bytes,
) -> Result<Json<TimelineDocument>, ApiError> {
    let req: EvaluateRequest = parse_body(&body)?;
    let instance = with_buffers(load_instance(&state.store, &req.instance_id)?, req.buffers)?;
    let seq = Sequence::new(req.sequence, instance.jobs())?;
    Ok(Json(TimelineDocument::new(&instance, &seq)))
}
