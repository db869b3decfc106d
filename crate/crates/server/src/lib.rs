// SPDX-License-Identifier: Apache-2.0

//! HTTP front end for the decision engine.
//!
//! Decisions are requested with `GET /v1/decide` even though they change
//! activity state; this keeps the wire protocol of the original prototype.
//! Admin writes use `PUT`.

mod config;

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use actipol_core::corpus;
use actipol_core::policy::{self, PolicySet};
use actipol_core::store::{AdminUpdate, DependencySpec, TransitionDependency};
use actipol_core::{
    ActionId, ActivityId, ActivityRecord, DependencyStore, Engine, Error, Fixture, RequestContext, ResponseContext,
};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, put};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

pub use config::{ContinuitySection, ServiceConfig, ENV_PREFIX};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Engine(#[from] Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Reads a policy corpus, as XML or (by `.json` extension) canonical JSON.
pub fn load_policies(path: &Path) -> Result<PolicySet, Error> {
    let text = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        policy::from_canonical_json(&text)
    } else {
        policy::parse_policy_set(&text)
    }
}

pub fn build_engine(cfg: &ServiceConfig) -> Result<Engine, ServiceError> {
    let policies = match &cfg.policy {
        Some(p) => load_policies(p)?,
        None => corpus::default_policy_set(),
    };
    let fixture = match &cfg.fixture {
        Some(p) => Fixture::load(p)?,
        None => corpus::default_fixture(),
    };
    let store = Arc::new(DependencyStore::from_fixture(&fixture)?);
    Ok(Engine::new(policies, store, cfg.engine_config()))
}

pub fn router(engine: Engine) -> Router {
    Router::new()
        .route("/v1/decide", get(decide))
        .route("/v1/activities/{id}", get(activity))
        .route("/v1/admin/activities", put(put_activities))
        .route("/v1/admin/dependencies", put(put_dependencies))
        .route("/v1/reports/continuity/{id}", get(continuity_report))
        .route("/healthz", get(health))
        .with_state(engine)
}

/// Binds `cfg.listen` and serves until the process is stopped.
pub async fn serve(cfg: &ServiceConfig) -> Result<(), ServiceError> {
    let engine = build_engine(cfg)?;
    let listener = tokio::net::TcpListener::bind(&cfg.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(engine)).await?;
    Ok(())
}

/// A server on its own runtime, bound to an ephemeral loopback port.
/// Stops when dropped.
pub struct BackgroundServer {
    addr: std::net::SocketAddr,
    runtime: Option<tokio::runtime::Runtime>,
}

impl BackgroundServer {
    pub fn start(engine: Engine) -> Result<Self, ServiceError> {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let listener = runtime.block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))?;
        let addr = listener.local_addr()?;
        runtime.spawn(async move {
            if let Err(e) = axum::serve(listener, router(engine)).await {
                tracing::error!(error = %e, "background server stopped");
            }
        });
        Ok(Self {
            addr,
            runtime: Some(runtime),
        })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for BackgroundServer {
    fn drop(&mut self) {
        if let Some(rt) = self.runtime.take() {
            rt.shutdown_background();
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            kind: "bad_request",
            message: message.into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, kind) = match &e {
            Error::UnknownActivity(_) => (StatusCode::NOT_FOUND, "unknown_activity"),
            Error::IllegalTransition { .. } => (StatusCode::CONFLICT, "illegal_transition"),
            Error::Busy(_) => (StatusCode::CONFLICT, "busy"),
            Error::InternalAction(_) => (StatusCode::BAD_REQUEST, "internal_action"),
            Error::InvariantViolation(_) => (StatusCode::BAD_REQUEST, "invariant_violation"),
            Error::Parse(_) | Error::JsonSyntax(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Self {
            status,
            kind,
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": self.kind, "message": self.message });
        (self.status, Json(body)).into_response()
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, Error> + Send + 'static) -> Result<T, ApiError> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => Err(ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            kind: "internal",
            message: e.to_string(),
        }),
    }
}

/// Body of a `/v1/decide` response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub decision: String,
    pub activity: String,
    pub state: String,
    pub obligations: Vec<String>,
    pub elapsed_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_id: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub obligation_failures: Vec<String>,
}

impl WireResponse {
    fn new(resp: ResponseContext, elapsed_ms: f64) -> Self {
        let mut obligations = resp.obligations_fulfilled;
        let mut failures: Vec<String> = resp
            .obligation_failures
            .iter()
            .map(|f| format!("{}: {}", f.obligation_id, f.reason))
            .collect();
        for chained in resp.chained {
            obligations.extend(chained.obligations_fulfilled);
            failures.extend(
                chained
                    .obligation_failures
                    .iter()
                    .map(|f| format!("{}: {}", f.obligation_id, f.reason)),
            );
        }
        Self {
            decision: resp.decision.as_str().to_owned(),
            activity: resp.activity.to_string(),
            state: resp.final_activity_state.as_str().to_owned(),
            obligations,
            elapsed_ms,
            reason: resp.reason,
            rule_id: resp.rule_id,
            obligation_failures: failures,
        }
    }
}

async fn decide(
    State(engine): State<Engine>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Json<WireResponse>, ApiError> {
    let started = Instant::now();
    let param = |name: &str| {
        params
            .get(name)
            .filter(|v| !v.is_empty())
            .ok_or_else(|| ApiError::bad_request(format!("missing query parameter `{name}`")))
    };
    let subject = param("subject")?.clone();
    let activity = ActivityId::new(param("activity")?.as_str()).map_err(ApiError::from)?;
    let action: ActionId = param("action")?.parse().map_err(ApiError::from)?;
    let req = RequestContext::new(subject, activity, action);
    let resp = blocking(move || engine.handle_request(&req)).await?;
    Ok(Json(WireResponse::new(resp, started.elapsed().as_secs_f64() * 1e3)))
}

async fn activity(State(engine): State<Engine>, UrlPath(id): UrlPath<String>) -> Result<Json<ActivityRecord>, ApiError> {
    Ok(Json(engine.store().get_activity(&id)?))
}

async fn put_activities(
    State(engine): State<Engine>,
    Json(records): Json<Vec<ActivityRecord>>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let count = records.len();
    let updates = records.into_iter().map(AdminUpdate::Activity).collect();
    blocking(move || engine.admin_update(updates)).await?;
    Ok(Json(json!({ "updated": count })))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DependencyBody {
    #[serde(default)]
    dependencies: Vec<DependencySpec>,
    #[serde(default)]
    transition_dependencies: Vec<TransitionDependency>,
}

async fn put_dependencies(
    State(engine): State<Engine>,
    Json(body): Json<DependencyBody>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let count = body.dependencies.len() + body.transition_dependencies.len();
    let updates = body
        .dependencies
        .into_iter()
        .map(AdminUpdate::Dependency)
        .chain(body.transition_dependencies.into_iter().map(AdminUpdate::TransitionDependency))
        .collect();
    blocking(move || engine.admin_update(updates)).await?;
    Ok(Json(json!({ "updated": count })))
}

async fn continuity_report(State(engine): State<Engine>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    engine.store().get_activity(&id)?;
    match engine.continuity_report(&id) {
        Some(r) => Ok(Json(r).into_response()),
        None => Err(ApiError {
            status: StatusCode::NOT_FOUND,
            kind: "no_report",
            message: format!("no continuity loop has run for `{id}`"),
        }),
    }
}

async fn health(State(engine): State<Engine>) -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "policies": engine.policies().policies.len() }))
}
