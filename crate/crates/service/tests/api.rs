use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use equicity::engine::GameConfig;
use equicity_service::{router, AppState, ServiceConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn workshop() -> GameConfig {
    GameConfig::load(std::path::Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../core/fixtures/workshop.json")))
        .unwrap()
}

fn app() -> Router {
    router(AppState::new(ServiceConfig::default()).unwrap())
}

async fn call(app: &Router, method: &str, uri: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, String) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let body = body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty);
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn call_json(app: &Router, method: &str, uri: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
    let (status, text) = call(app, method, uri, token, body).await;
    (status, serde_json::from_str(&text).unwrap_or(Value::Null))
}

struct Session {
    id: String,
    master: String,
    actors: Vec<String>,
}

async fn create(app: &Router, config: &GameConfig) -> Session {
    let (status, body) = call_json(app, "POST", "/games", None, Some(serde_json::to_value(config).unwrap())).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    Session {
        id: body["gameId"].as_str().unwrap().to_string(),
        master: body["masterToken"].as_str().unwrap().to_string(),
        actors: body["actorTokens"]
            .as_array()
            .unwrap()
            .iter()
            .map(|a| a["token"].as_str().unwrap().to_string())
            .collect(),
    }
}

/// Each actor resubmits its agenda.
async fn submit_agenda(app: &Router, s: &Session, actor: usize) -> (StatusCode, Value) {
    let (_, me) = call_json(app, "GET", &format!("/games/{}/me", s.id), Some(&s.actors[actor]), None).await;
    let decision = json!({ "interests": me["agenda"], "comment": format!("actor {actor}") });
    call_json(app, "POST", &format!("/games/{}/decisions", s.id), Some(&s.actors[actor]), Some(decision)).await
}

/// Reads an SSE body until `count` events arrived; returns `(id, event, data)`.
async fn read_events(app: &Router, uri: &str, last_id: Option<u64>, count: usize) -> Vec<(u64, String, Value)> {
    let mut req = Request::builder().uri(uri);
    if let Some(id) = last_id {
        req = req.header("last-event-id", id.to_string());
    }
    let resp = app.clone().oneshot(req.body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let mut body = resp.into_body();
    let mut text = String::new();
    let mut out = Vec::new();
    while out.len() < count {
        let frame = tokio::time::timeout(Duration::from_secs(20), body.frame())
            .await
            .expect("event timeout")
            .expect("stream ended")
            .unwrap();
        if let Ok(data) = frame.into_data() {
            text.push_str(std::str::from_utf8(&data).unwrap());
        }
        while let Some(end) = text.find("\n\n") {
            let block: String = text.drain(..end + 2).collect();
            let (mut id, mut event, mut data) = (0, String::new(), Value::Null);
            for line in block.lines() {
                if let Some(v) = line.strip_prefix("id:") {
                    id = v.trim().parse().unwrap();
                } else if let Some(v) = line.strip_prefix("event:") {
                    event = v.trim().to_string();
                } else if let Some(v) = line.strip_prefix("data:") {
                    data = serde_json::from_str(v.trim()).unwrap();
                }
            }
            if !event.is_empty() {
                out.push((id, event, data));
            }
        }
    }
    out
}

#[tokio::test]
async fn submit_increments_pending_and_reads_are_idempotent() {
    let app = app();
    let s = create(&app, &workshop()).await;
    let state_uri = format!("/games/{}/state", s.id);
    let (_, before) = call_json(&app, "GET", &state_uri, Some(&s.master), None).await;
    assert_eq!(before["pending"], 0);
    assert_eq!(before["phase"], "COLLECTING");
    let (status, resp) = submit_agenda(&app, &s, 2).await;
    assert_eq!(status, StatusCode::OK, "{resp}");
    assert_eq!(resp["pending"], 1);
    let (_, a) = call(&app, "GET", &state_uri, Some(&s.actors[0]), None).await;
    let (_, b) = call(&app, "GET", &state_uri, Some(&s.actors[0]), None).await;
    assert_eq!(a, b);
    let after: Value = serde_json::from_str(&a).unwrap();
    assert_eq!(after["pending"], 1);
    assert_eq!(after["submitted"], json!([false, false, true, false, false]));
}

#[tokio::test]
async fn full_round_lifecycle() {
    let app = app();
    let s = create(&app, &workshop()).await;
    for i in 0..5 {
        let (status, resp) = submit_agenda(&app, &s, i).await;
        assert_eq!(status, StatusCode::OK, "{resp}");
        if i == 4 {
            assert_eq!(resp["phase"], "REPORTING");
            assert_eq!(resp["round"], 1);
            assert!(resp["roundError"].is_null());
        }
    }
    let (_, state) = call_json(&app, "GET", &format!("/games/{}/state", s.id), Some(&s.actors[1]), None).await;
    assert_eq!(state["round"], 1);
    assert_eq!(state["history"].as_array().unwrap().len(), 1);
    assert_eq!(state["history"][0]["voxels"], format!("/games/{}/rounds/0", s.id));

    // Results are on screen: no submissions until the master moves on.
    let (status, err) = submit_agenda(&app, &s, 0).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], "WrongPhase");

    let (status, adv) = call_json(&app, "POST", &format!("/games/{}/advance", s.id), Some(&s.master), None).await;
    assert_eq!(status, StatusCode::OK, "{adv}");
    assert_eq!(adv["phase"], "COLLECTING");
    let (status, _) = submit_agenda(&app, &s, 0).await;
    assert_eq!(status, StatusCode::OK);

    let (status, round) = call_json(&app, "GET", &format!("/games/{}/rounds/0", s.id), Some(&s.actors[3]), None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(round["voxels"]["selected"].as_array().unwrap().len() > 100);
    let (status, _) = call_json(&app, "GET", &format!("/games/{}/rounds/1", s.id), Some(&s.actors[3]), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (_, me) = call_json(&app, "GET", &format!("/games/{}/me", s.id), Some(&s.actors[3]), None).await;
    assert_eq!(me["actorId"], "inhabitant");
    assert_eq!(me["gains"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn validation_errors_carry_codes() {
    let app = app();
    let s = create(&app, &workshop()).await;
    let uri = format!("/games/{}/decisions", s.id);
    let mut rows = vec![vec![0.2; 5]; 7];
    rows[3][1] = -0.1;
    let (status, err) = call_json(&app, "POST", &uri, Some(&s.actors[0]), Some(json!({ "interests": rows }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["code"], "ZeroRowOrNegative");

    let zero_colour: Vec<Vec<f64>> = (0..7).map(|_| vec![1.0, 0.0, 1.0, 1.0, 1.0]).collect();
    let (status, err) = call_json(&app, "POST", &uri, Some(&s.actors[0]), Some(json!({ "interests": zero_colour }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["code"], "ZeroRowOrNegative");

    let (status, err) = call_json(&app, "POST", &uri, Some(&s.actors[0]), Some(json!({ "interests": [[1.0]] }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(err["code"].is_string());

    let (status, err) = call_json(&app, "POST", "/games", None, Some(json!({ "version": 1 }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["code"], "ConfigInvalid");

    let (_, state) = call_json(&app, "GET", &format!("/games/{}/state", s.id), Some(&s.master), None).await;
    assert_eq!(state["pending"], 0);
}

#[tokio::test]
async fn tokens_and_scopes() {
    let app = app();
    let s = create(&app, &workshop()).await;
    let base = format!("/games/{}", s.id);
    let (status, body) = call_json(&app, "GET", &format!("{base}/state"), None, None).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::UNAUTHORIZED, Some("Unauthorized")));
    let (status, _) = call_json(&app, "GET", &format!("{base}/state"), Some("nope"), None).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let (status, _) = call_json(&app, "GET", "/games/missing/state", Some(&s.master), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call_json(&app, "GET", &format!("{base}/analytics"), Some(&s.actors[0]), None).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    let (status, _) = call_json(&app, "POST", &format!("{base}/advance"), Some(&s.actors[0]), None).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    let (status, _) = call_json(&app, "GET", &format!("{base}/me"), Some(&s.master), None).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    let (status, _) = call_json(&app, "POST", &format!("{base}/decisions"), Some(&s.master), Some(json!({"interests": []}))).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    // Tokens are bound to their own game.
    let other = create(&app, &workshop()).await;
    let (status, _) = call_json(&app, "GET", &format!("{base}/state"), Some(&other.master), None).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let (status, _) = call_json(&app, "GET", &format!("{base}/state?token={}", s.actors[4]), None, None).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn admin_token_guards_creation() {
    let app = router(
        AppState::new(ServiceConfig {
            admin_token: Some("root".into()),
            ..ServiceConfig::default()
        })
        .unwrap(),
    );
    let config = serde_json::to_value(workshop()).unwrap();
    let (status, _) = call_json(&app, "POST", "/games", None, Some(config.clone())).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let (status, _) = call_json(&app, "POST", "/games", Some("guess"), Some(config.clone())).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    let (status, _) = call_json(&app, "POST", "/games", Some("root"), Some(config)).await;
    assert_eq!(status, StatusCode::CREATED);
}

#[tokio::test]
async fn no_loser_in_player_bodies() {
    let app = app();
    let s = create(&app, &workshop()).await;
    let mut player_bodies = Vec::new();
    for i in 0..5 {
        let (_, me) = call(&app, "GET", &format!("/games/{}/me", s.id), Some(&s.actors[i]), None).await;
        player_bodies.push(me);
        let (_, resp) = submit_agenda(&app, &s, i).await;
        player_bodies.push(resp.to_string());
    }
    for i in 0..5 {
        for path in ["state", "me", "rounds/0"] {
            let (status, body) = call(&app, "GET", &format!("/games/{}/{path}", s.id), Some(&s.actors[i]), None).await;
            assert_eq!(status, StatusCode::OK);
            player_bodies.push(body);
        }
    }
    let events = read_events(&app, &format!("/games/{}/events?token={}", s.id, s.actors[0]), None, 7).await;
    player_bodies.extend(events.iter().map(|e| e.2.to_string()));
    for body in &player_bodies {
        assert!(!body.contains("loser"), "{body}");
        assert!(!body.contains("gainDistances"), "{body}");
    }
    let (_, master_round) = call(&app, "GET", &format!("/games/{}/rounds/0", s.id), Some(&s.master), None).await;
    assert!(master_round.contains("\"loser\""));
}

#[tokio::test]
async fn events_order_and_replay() {
    let app = app();
    let s = create(&app, &workshop()).await;
    let uri = format!("/games/{}/events?token={}", s.id, s.actors[1]);
    let live_a = tokio::spawn({
        let (app, uri) = (app.clone(), uri.clone());
        async move { read_events(&app, &uri, None, 8).await }
    });
    let live_b = tokio::spawn({
        let (app, uri) = (app.clone(), uri.clone());
        async move { read_events(&app, &uri, None, 8).await }
    });
    // Give both subscribers time to attach; the backlog covers a slow start.
    tokio::time::sleep(Duration::from_millis(50)).await;
    for i in 0..5 {
        submit_agenda(&app, &s, i).await;
    }
    call(&app, "POST", &format!("/games/{}/advance", s.id), Some(&s.master), None).await;
    let a = live_a.await.unwrap();
    let b = live_b.await.unwrap();
    assert_eq!(a, b);
    let kinds: Vec<&str> = a.iter().map(|e| e.1.as_str()).collect();
    assert_eq!(
        kinds,
        [
            "ROUND_STARTED",
            "DECISION_RECEIVED",
            "DECISION_RECEIVED",
            "DECISION_RECEIVED",
            "DECISION_RECEIVED",
            "DECISION_RECEIVED",
            "ROUND_COMPLETE",
            "ROUND_STARTED"
        ]
    );
    assert_eq!(a.iter().map(|e| e.0).collect::<Vec<_>>(), (1..=8).collect::<Vec<u64>>());
    let counts: Vec<u64> = a[1..6].iter().map(|e| e.2["count"].as_u64().unwrap()).collect();
    assert_eq!(counts, [1, 2, 3, 4, 5]);
    assert_eq!(a[6].2["round"], 0);
    assert_eq!(a[7].2["round"], 1);

    // A client that saw up to id 3 reconnects and gets exactly the rest.
    let resumed = read_events(&app, &uri, Some(3), 5).await;
    assert_eq!(resumed, a[3..].to_vec());
    let from_query = read_events(&app, &format!("{uri}&lastEventId=6"), None, 2).await;
    assert_eq!(from_query, a[6..].to_vec());
}

#[tokio::test]
async fn event_stream_requires_token() {
    let app = app();
    let s = create(&app, &workshop()).await;
    let (status, _) = call(&app, "GET", &format!("/games/{}/events", s.id), None, None).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn forced_advance_needs_permission() {
    let app = app();
    let s = create(&app, &workshop()).await;
    submit_agenda(&app, &s, 0).await;
    let uri = format!("/games/{}/advance", s.id);
    let (status, err) = call_json(&app, "POST", &uri, Some(&s.master), Some(json!({ "force": true }))).await;
    assert_eq!((status, err["code"].as_str()), (StatusCode::CONFLICT, Some("ForceDisabled")));
    let (status, err) = call_json(&app, "POST", &uri, Some(&s.master), None).await;
    assert_eq!((status, err["code"].as_str()), (StatusCode::CONFLICT, Some("WrongPhase")));

    let mut config = workshop();
    config.allow_forced_advance = true;
    let s = create(&app, &config).await;
    submit_agenda(&app, &s, 0).await;
    let uri = format!("/games/{}/advance", s.id);
    let (status, resp) = call_json(&app, "POST", &uri, Some(&s.master), Some(json!({ "force": true }))).await;
    assert_eq!(status, StatusCode::OK, "{resp}");
    assert_eq!(resp["filled"], json!([1, 2, 3, 4]));
    assert_eq!(resp["phase"], "REPORTING");
}

#[tokio::test]
async fn analytics_and_schemas() {
    let app = app();
    let s = create(&app, &workshop()).await;
    for i in 0..5 {
        submit_agenda(&app, &s, i).await;
    }
    let (status, report) = call_json(&app, "GET", &format!("/games/{}/analytics", s.id), Some(&s.master), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(report["rounds"], 1);
    assert_eq!(report["observations"], 5 * 7 * 5);

    let (status, index) = call_json(&app, "GET", "/schema", None, None).await;
    assert_eq!(status, StatusCode::OK);
    for name in index["schemas"].as_array().unwrap() {
        let (status, schema) = call_json(&app, "GET", name.as_str().unwrap(), None, None).await;
        assert_eq!(status, StatusCode::OK);
        assert!(schema["title"].is_string());
    }
    // Every top-level key of a real config is described by the schema.
    let (_, schema) = call_json(&app, "GET", "/schema/game-config", None, None).await;
    let config = serde_json::to_value(workshop()).unwrap();
    for key in config.as_object().unwrap().keys() {
        assert!(schema["properties"].get(key).is_some(), "{key} missing from schema");
    }
    let (status, _) = call_json(&app, "GET", "/schema/nothing", None, None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn games_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig {
        state_dir: Some(dir.path().to_path_buf()),
        ..ServiceConfig::default()
    };
    let app1 = router(AppState::new(config.clone()).unwrap());
    let s = create(&app1, &workshop()).await;
    for i in 0..5 {
        submit_agenda(&app1, &s, i).await;
    }
    submit_agenda(&app1, &s, 0).await;
    let (_, before) = call(&app1, "GET", &format!("/games/{}/state", s.id), Some(&s.master), None).await;

    let app2 = router(AppState::new(config).unwrap());
    let (status, after) = call(&app2, "GET", &format!("/games/{}/state", s.id), Some(&s.master), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(before, after);
    let (status, _) = call(&app2, "POST", &format!("/games/{}/advance", s.id), Some(&s.master), None).await;
    assert_eq!(status, StatusCode::OK);
}
