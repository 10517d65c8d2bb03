use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use glyphmotion::experiment::{confusion_matrix, parse_log};
use glyphmotion::fixture::fixture_font;
use glyphmotion::{parse_font, Letter};
use glyphmotion_service::{router, SessionStore};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, String) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn call_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, text) = call(app, method, uri, body).await;
    (s, serde_json::from_str(&text).unwrap_or(Value::Null))
}

fn memory_app() -> Router {
    router(Arc::new(SessionStore::in_memory(fixture_font())))
}

async fn create(app: &Router, cfg: Value) -> String {
    let (s, v) = call_json(app, "POST", "/api/session", Some(cfg)).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    v["id"].as_str().unwrap().to_string()
}

/// Recovers the displayed letter of a payload by matching it against the
/// prepared font, the way a participant "reads" the stylus.
fn letter_of(samples: &Value) -> Letter {
    let prepared = glyphmotion::preprocess::prepare_default(
        &fixture_font(),
        glyphmotion::PresentationCondition::BASELINE,
    )
    .unwrap();
    let text = samples.to_string();
    let got = glyphmotion::font::parse_samples(text.as_bytes()).unwrap();
    let found = prepared
        .iter()
        .find(|g| g.samples == got)
        .map(|g| g.letter)
        .expect("payload matches a glyph");
    found
}

#[tokio::test]
async fn font_endpoint_serves_the_font_file() {
    let app = memory_app();
    let (s, text) = call(&app, "GET", "/api/font", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(parse_font(text.as_bytes()).unwrap(), fixture_font());
}

#[tokio::test]
async fn invalid_config_names_the_field() {
    let app = memory_app();
    let (s, v) = call_json(
        &app,
        "POST",
        "/api/session",
        Some(json!({"condition": {"target_mean_height": 0.0, "target_duration": 1000.0}})),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "invalid-config");
    assert!(v["field"].as_str().unwrap().contains("target_mean_height"), "{v}");

    let (s, v) = call_json(&app, "POST", "/api/session", Some(json!({"repeats_per_letter": 0}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["field"], "repeats_per_letter");

    let (s, v) = call_json(
        &app,
        "POST",
        "/api/session",
        Some(json!({"participant": {"kind": "synthetic"}})),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["field"], "participant");
}

#[tokio::test]
async fn full_test_session_over_http() {
    let app = memory_app();
    let id = create(&app, json!({"seed": 4})).await;
    let (_, st) = call_json(&app, "GET", &format!("/api/session/{id}"), None).await;
    assert_eq!(st["phase"], "demo");
    assert_eq!(st["trial_count"], 52);

    let (s, _) = call_json(&app, "GET", &format!("/api/session/{id}/report"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);

    let (s, v) = call_json(&app, "POST", &format!("/api/session/{id}/response"), Some(json!({"letter": "a"}))).await;
    assert_eq!((s, v["error"].as_str()), (StatusCode::CONFLICT, Some("no-pending-trial")));

    for k in 0..52 {
        let (s, trial) = call_json(&app, "GET", &format!("/api/session/{id}/trial"), None).await;
        assert_eq!(s, StatusCode::OK);
        assert_eq!(trial["index"], k);
        if k == 0 {
            assert_eq!(trial["height_mm"], 14.0);
            assert_eq!(trial["duration_ms"], 1000.0);
            let samples = trial["samples"].as_array().unwrap();
            assert_eq!(samples.last().unwrap()[0], 1000.0);
            let (s, v) = call_json(&app, "GET", &format!("/api/session/{id}/trial"), None).await;
            assert_eq!((s, v["error"].as_str()), (StatusCode::CONFLICT, Some("response-pending")));
        }
        let letter = letter_of(&trial["samples"]);
        let (s, ack) = call_json(
            &app,
            "POST",
            &format!("/api/session/{id}/response"),
            Some(json!({"letter": letter.to_string()})),
        )
        .await;
        assert_eq!(s, StatusCode::OK);
        assert_eq!(ack, json!({"index": k, "accepted": true}));
    }
    let (s, v) = call_json(&app, "GET", &format!("/api/session/{id}/trial"), None).await;
    assert_eq!((s, v["error"].as_str()), (StatusCode::CONFLICT, Some("session-finished")));

    let (s, rep) = call_json(&app, "GET", &format!("/api/session/{id}/report"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(rep["accuracy"], 100.0);
    assert_eq!(rep["records"].as_array().unwrap().len(), 52);
    let matrix = glyphmotion::experiment::ConfusionMatrix::from_csv(rep["matrix"].as_str().unwrap()).unwrap();
    for l in Letter::all() {
        assert_eq!(matrix.row_sum(l), 2);
    }
}

#[tokio::test]
async fn test_mode_payloads_never_carry_the_label() {
    let app = memory_app();
    let id = create(&app, json!({"seed": 11})).await;
    for _ in 0..52 {
        let (_, trial) = call(&app, "GET", &format!("/api/session/{id}/trial"), None).await;
        let v: Value = serde_json::from_str(&trial).unwrap();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        assert_eq!(keys.len(), 4, "{keys:?}");
        for banned in ["displayed", "letter", "label", "correct"] {
            assert!(!trial.contains(banned), "{banned} in trial payload");
        }
        let (_, ack) = call(
            &app,
            "POST",
            &format!("/api/session/{id}/response"),
            Some(json!({"letter": "e"})),
        )
        .await;
        for banned in ["displayed", "correct"] {
            assert!(!ack.contains(banned), "{banned} in acknowledgment");
        }
    }
}

#[tokio::test]
async fn training_feedback_reveals_after_response() {
    let app = memory_app();
    let id = create(&app, json!({"mode": "training", "seed": 2})).await;
    let (_, st) = call_json(&app, "GET", &format!("/api/session/{id}"), None).await;
    assert_eq!(st["trial_count"], Value::Null);
    let (_, trial) = call(&app, "GET", &format!("/api/session/{id}/trial"), None).await;
    assert!(!trial.contains("displayed"));
    let v: Value = serde_json::from_str(&trial).unwrap();
    let letter = letter_of(&v["samples"]);
    let (_, fb) = call_json(
        &app,
        "POST",
        &format!("/api/session/{id}/response"),
        Some(json!({"letter": letter.to_string()})),
    )
    .await;
    assert_eq!(fb["correct"], true);
    assert_eq!(fb["displayed"], letter.to_string());
    // Training reports are available at any time.
    let (s, _) = call_json(&app, "GET", &format!("/api/session/{id}/report"), None).await;
    assert_eq!(s, StatusCode::OK);
}

#[tokio::test]
async fn zero_length_training_is_finished_immediately() {
    let app = memory_app();
    let id = create(&app, json!({"mode": "training", "training_duration_limit_ms": 0})).await;
    let (s, v) = call_json(&app, "GET", &format!("/api/session/{id}/trial"), None).await;
    assert_eq!((s, v["error"].as_str()), (StatusCode::CONFLICT, Some("session-finished")));
}

#[tokio::test]
async fn bad_letters_and_unknown_sessions() {
    let app = memory_app();
    let id = create(&app, json!({})).await;
    call(&app, "GET", &format!("/api/session/{id}/trial"), None).await;
    for bad in [json!("ß"), json!("ab"), json!("A"), json!(3), json!("")] {
        let (s, v) = call_json(&app, "POST", &format!("/api/session/{id}/response"), Some(json!({"letter": bad}))).await;
        assert_eq!((s, v["error"].as_str()), (StatusCode::BAD_REQUEST, Some("invalid-letter")));
    }
    let (s, v) = call_json(&app, "GET", "/api/session/nope/trial", None).await;
    assert_eq!((s, v["error"].as_str()), (StatusCode::NOT_FOUND, Some("unknown-session")));
}

#[tokio::test]
async fn demo_lists_every_letter_with_label() {
    let app = memory_app();
    let id = create(&app, json!({})).await;
    let (s, v) = call_json(&app, "GET", &format!("/api/session/{id}/demo"), None).await;
    assert_eq!(s, StatusCode::OK);
    let letters = v["letters"].as_array().unwrap();
    assert_eq!(letters.len(), 26);
    assert_eq!(letters[3]["letter"], "d");
    let (_, st) = call_json(&app, "GET", &format!("/api/session/{id}"), None).await;
    assert_eq!(st["cursor"], 0);
}

#[tokio::test]
async fn restart_rebuilds_sessions_from_disk_and_report_matches_log() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(SessionStore::open(fixture_font(), dir.path()).unwrap());
    let app = router(store);
    let id = create(&app, json!({"seed": 8})).await;
    for k in 0..30 {
        call(&app, "GET", &format!("/api/session/{id}/trial"), None).await;
        let guess = Letter::from_index(k % 26).unwrap().to_string();
        call(&app, "POST", &format!("/api/session/{id}/response"), Some(json!({"letter": guess}))).await;
    }
    let log_before = std::fs::read_to_string(dir.path().join(format!("{id}.log.jsonl"))).unwrap();
    assert_eq!(log_before.lines().count(), 30);
    drop(app);

    let restarted = Arc::new(SessionStore::open(fixture_font(), dir.path()).unwrap());
    let app = router(restarted.clone());
    let (_, st) = call_json(&app, "GET", &format!("/api/session/{id}"), None).await;
    assert_eq!(st["cursor"], 30);
    assert_eq!(st["phase"], "running");
    {
        let entry = restarted.get(&id).unwrap();
        let e = entry.lock().unwrap();
        assert_eq!(e.session.records(), parse_log(&log_before).unwrap().as_slice());
    }
    for k in 30..52 {
        let (_, t) = call_json(&app, "GET", &format!("/api/session/{id}/trial"), None).await;
        assert_eq!(t["index"], k);
        let guess = Letter::from_index(k % 26).unwrap().to_string();
        call(&app, "POST", &format!("/api/session/{id}/response"), Some(json!({"letter": guess}))).await;
    }
    let (s, rep) = call_json(&app, "GET", &format!("/api/session/{id}/report"), None).await;
    assert_eq!(s, StatusCode::OK);
    let log = std::fs::read_to_string(dir.path().join(format!("{id}.log.jsonl"))).unwrap();
    let offline = confusion_matrix(&parse_log(&log).unwrap()).unwrap();
    assert_eq!(rep["matrix"].as_str().unwrap(), offline.to_csv());
    assert_eq!(rep["accuracy"].as_f64().unwrap(), offline.accuracy().unwrap());
}

#[tokio::test]
async fn sessions_are_independent_under_concurrency() {
    let app = memory_app();
    let ids: Vec<String> = futures_ids(&app, 8).await;
    let mut handles = Vec::new();
    for id in ids.clone() {
        let app = app.clone();
        handles.push(tokio::spawn(async move {
            for _ in 0..52 {
                let (s, _) = call(&app, "GET", &format!("/api/session/{id}/trial"), None).await;
                assert_eq!(s, StatusCode::OK);
                let (s, _) = call(&app, "POST", &format!("/api/session/{id}/response"), Some(json!({"letter": "o"}))).await;
                assert_eq!(s, StatusCode::OK);
            }
        }));
    }
    for h in handles {
        h.await.unwrap();
    }
    for id in ids {
        let (s, rep) = call_json(&app, "GET", &format!("/api/session/{id}/report"), None).await;
        assert_eq!(s, StatusCode::OK);
        assert_eq!(rep["records"].as_array().unwrap().len(), 52);
    }
}

async fn futures_ids(app: &Router, n: usize) -> Vec<String> {
    let mut ids = Vec::new();
    for seed in 0..n {
        ids.push(create(app, json!({"seed": seed})).await);
    }
    ids
}
