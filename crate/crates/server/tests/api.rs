// SPDX-License-Identifier: Apache-2.0

use actipol_server::{build_engine, router, ServiceConfig, WireResponse};
use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app() -> (Router, actipol_core::Engine) {
    let engine = build_engine(&ServiceConfig::default()).unwrap();
    (router(engine.clone()), engine)
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, value)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, Method::GET, uri, None).await
}

#[tokio::test]
async fn health_reports_policy_count() {
    let (app, _) = app();
    assert_eq!(get(&app, "/healthz").await, (StatusCode::OK, json!({"status": "ok", "policies": 4})));
}

#[tokio::test]
async fn start_then_finish() {
    let (app, engine) = app();
    let (status, body) = get(&app, "/v1/decide?subject=u1&activity=sowing&action=startActivity").await;
    assert_eq!(status, StatusCode::OK);
    let wire: WireResponse = serde_json::from_value(body).unwrap();
    assert_eq!(wire.decision, "permit");
    assert_eq!(wire.state, "running");
    assert!(wire.obligations.contains(&"call-continueActivityPolicy".to_owned()));

    let (_, read) = get(&app, "/v1/activities/sowing").await;
    assert_eq!(read["state"], "running");

    engine.wait_continuity("sowing");
    let (status, report) = get(&app, "/v1/reports/continuity/sowing").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(report["stop_reason"], "exhausted");
    assert_eq!(report["iterations"].as_array().unwrap().len(), 10);

    let (status, body) = get(&app, "/v1/decide?subject=u1&activity=sowing&action=finishActivity").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["state"], "inactive");
}

#[tokio::test]
async fn denial_is_a_decided_request() {
    let (app, _) = app();
    let (status, _) = call(
        &app,
        Method::PUT,
        "/v1/admin/activities",
        Some(json!([{"id": "plowing", "state": "running", "mutable": false}])),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let (status, body) = get(&app, "/v1/decide?subject=u1&activity=sowing&action=startActivity").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["decision"], "deny");
    assert_eq!(body["state"], "aborted");
}

#[tokio::test]
async fn request_errors() {
    let (app, _) = app();
    let cases = [
        ("/v1/decide?subject=u1&activity=sowing", StatusCode::BAD_REQUEST),
        ("/v1/decide?subject=u1&activity=sowing&action=fly", StatusCode::BAD_REQUEST),
        ("/v1/decide?subject=u1&activity=sowing&action=continueActivity", StatusCode::BAD_REQUEST),
        ("/v1/decide?subject=u1&activity=ghost&action=startActivity", StatusCode::NOT_FOUND),
        ("/v1/decide?subject=u1&activity=plowing&action=startActivity", StatusCode::CONFLICT),
        ("/v1/activities/ghost", StatusCode::NOT_FOUND),
        ("/v1/reports/continuity/ghost", StatusCode::NOT_FOUND),
        ("/v1/reports/continuity/plowing", StatusCode::NOT_FOUND),
    ];
    for (uri, want) in cases {
        let (status, body) = get(&app, uri).await;
        assert_eq!(status, want, "{uri}: {body}");
        assert!(body["message"].is_string(), "{uri}");
    }
}

#[tokio::test]
async fn admin_dependency_updates() {
    let (app, engine) = app();
    let (status, body) = call(
        &app,
        Method::PUT,
        "/v1/admin/dependencies",
        Some(json!({"dependencies": [
            {"subject": "sowing", "phase": "pre", "dependent": "sowing", "desired_state": "finished"}
        ]})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "invariant_violation");

    let (status, _) = call(
        &app,
        Method::PUT,
        "/v1/admin/dependencies",
        Some(json!({
            "dependencies": [
                {"subject": "fertilizing", "phase": "pre", "dependent": "plowing", "desired_state": "finished"}
            ],
            "transition_dependencies": [
                {"activity": "plowing", "target_state": "finished",
                 "requirements": [{"activity": "soil-sampling", "state": "finished"}]}
            ]
        })),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let deps = engine
        .store()
        .get_dependencies("fertilizing", actipol_core::Phase::Pre)
        .unwrap();
    assert_eq!(deps.len(), 1);
}

#[tokio::test]
async fn reads_do_not_mutate() {
    let (app, engine) = app();
    let version = engine.store().version();
    for _ in 0..3 {
        get(&app, "/v1/activities/sowing").await;
        get(&app, "/healthz").await;
    }
    assert_eq!(engine.store().version(), version);
}
