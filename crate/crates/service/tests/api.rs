use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use chainsearch::agents::{AgentKind, PlayerFactory};
use chainsearch::embedding::EmbeddingTable;
use chainsearch::llm::ProviderRegistry;
use chainsearch::orchestrator::{Orchestrator, OrchestratorConfig};
use chainsearch::runner::{Clock, MachineRunner};
use chainsearch::store::{EventStore, MemoryStore};
use chainsearch_service::router;

const WORDS: [&str; 12] = [
    "harbor", "door", "boat", "ship", "river", "lake", "pen", "ink", "sail", "dock", "gate", "key",
];

fn app() -> axum::Router {
    let rows = WORDS.iter().enumerate().map(|(i, w)| {
        let a = i as f32 * 0.3;
        (*w, vec![a.cos(), a.sin(), 0.25])
    });
    let table = Arc::new(EmbeddingTable::from_rows(rows).unwrap());
    let runner = MachineRunner::new(PlayerFactory::new(table, ProviderRegistry::new()), Clock::zero());
    let store: Arc<dyn EventStore> = Arc::new(MemoryStore::new());
    router(Arc::new(Orchestrator::new(runner, store, OrchestratorConfig::default())))
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
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
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, value)
}

fn plan(id: &str, condition: Value) -> Value {
    json!({
        "plan_id": id,
        "targets": ["harbor", "door"],
        "games_per_target": 1,
        "condition": condition,
        "channel": "best_guess",
        "seed": 7,
        "rounds_per_game": 2,
        "turns_per_round": 3,
        "machine_agents": [AgentKind::forager(0.2, 3, 5)],
    })
}

#[tokio::test]
async fn human_round_over_http() {
    let app = app();
    let (s, v) = call(&app, "POST", "/experiments", Some(plan("web", json!("human_social")))).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    assert_eq!(v["plan_id"], "web");

    let (s, joined) = call(&app, "POST", "/join", Some(json!({"participant_id": "ann", "plan_id": "web"}))).await;
    assert_eq!(s, StatusCode::OK, "{joined}");
    let token = joined["token"].as_str().unwrap().to_string();
    assert_eq!(joined["status"], "playing");
    assert_eq!(joined["observation"]["turn"], 1);
    assert_eq!(joined["observation"]["signal"]["kind"], "none");

    let (s, obs) = call(&app, "GET", &format!("/observation?token={token}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(obs["game_id"], joined["game_id"]);

    for (turn, word) in [(1, "Boat"), (2, "zzzq"), (3, "lake")] {
        let (s, r) = call(
            &app,
            "POST",
            "/guess",
            Some(json!({"token": token, "guess": word, "turn": turn})),
        )
        .await;
        assert_eq!(s, StatusCode::OK, "{r}");
        assert_eq!(r["turn"], turn);
        if word == "zzzq" {
            assert_eq!(r["score"], 0.0);
        }
    }
    // The round is over, so the token is spent.
    let (s, e) = call(&app, "POST", "/guess", Some(json!({"token": token, "guess": "pen"}))).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    assert_eq!(e["code"], "unknown_session");

    let (s, p) = call(&app, "GET", "/progress?plan_id=web", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(p[0]["human_rounds_complete"], 1);
    assert_eq!(p[0]["guesses"], 3);

    let game_id = joined["game_id"].as_str().unwrap();
    let (s, log) = call(&app, "GET", &format!("/logs/{game_id}"), None).await;
    assert_eq!(s, StatusCode::OK);
    let types: Vec<&str> = log.as_array().unwrap().iter().map(|e| e["type"].as_str().unwrap()).collect();
    assert_eq!(types, ["game_started", "guess_submitted", "guess_submitted", "guess_submitted", "round_completed"]);
}

#[tokio::test]
async fn duplicate_turn_is_rejected() {
    let app = app();
    call(&app, "POST", "/experiments", Some(plan("dup", json!("human_social")))).await;
    let (_, joined) = call(&app, "POST", "/join", Some(json!({"participant_id": "bo"}))).await;
    let token = joined["token"].as_str().unwrap();
    let body = json!({"token": token, "guess": "boat", "turn": 1});
    let (s, _) = call(&app, "POST", "/guess", Some(body.clone())).await;
    assert_eq!(s, StatusCode::OK);
    let (s, e) = call(&app, "POST", "/guess", Some(body)).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(e["code"], "duplicate_submission");
}

#[tokio::test]
async fn machine_plan_runs_on_creation() {
    let app = app();
    let (s, _) = call(&app, "POST", "/experiments", Some(plan("ai", json!("ai_only")))).await;
    assert_eq!(s, StatusCode::CREATED);
    let (_, p) = call(&app, "GET", "/progress", None).await;
    assert_eq!(p[0]["games_complete"], 2);
    assert_eq!(p[0]["guesses"], 12);
    let (s, e) = call(&app, "POST", "/join", Some(json!({"participant_id": "cy", "plan_id": "ai"}))).await;
    assert_eq!(s, StatusCode::GONE);
    assert_eq!(e["code"], "plan_exhausted");
}

#[tokio::test]
async fn advice_flow_and_validation() {
    let app = app();
    let mut p = plan("adv", json!("human_social"));
    p["channel"] = json!("short_advice");
    call(&app, "POST", "/experiments", Some(p)).await;
    let (_, joined) = call(&app, "POST", "/join", Some(json!({"participant_id": "di"}))).await;
    let token = joined["token"].as_str().unwrap();
    let (s, e) = call(&app, "POST", "/advice", Some(json!({"token": token, "advice": "sail"}))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(e["code"], "advice_not_due");
    for w in ["boat", "ship", "lake"] {
        call(&app, "POST", "/guess", Some(json!({"token": token, "guess": w}))).await;
    }
    let (_, v) = call(&app, "GET", &format!("/observation?token={token}"), None).await;
    assert_eq!(v["status"], "awaiting_advice");
    let (s, e) = call(&app, "POST", "/advice", Some(json!({"token": token, "advice": "two words"}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(e["code"], "invalid_advice");
    let (s, ack) = call(&app, "POST", "/advice", Some(json!({"token": token, "advice": "Sail"}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(ack["stored"], "sail");
}

#[tokio::test]
async fn bad_requests_use_error_shape() {
    let app = app();
    let (s, e) = call(&app, "POST", "/experiments", Some(json!({"plan_id": 3}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(e["code"], "bad_request");

    let mut bad = plan("bad", json!("ai_only"));
    bad["targets"] = json!(["notaword"]);
    let (s, e) = call(&app, "POST", "/experiments", Some(bad)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST, "{e}");

    let (s, e) = call(&app, "GET", "/observation", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(e["code"], "bad_request");

    let (s, e) = call(&app, "GET", "/progress?plan_id=nope", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(e["code"], "unknown_plan");
    assert!(e["message"].as_str().unwrap().contains("nope"));

    call(&app, "POST", "/experiments", Some(plan("once", json!("ai_only")))).await;
    let (s, e) = call(&app, "POST", "/experiments", Some(plan("once", json!("ai_only")))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(e["code"], "duplicate_plan");
}

#[tokio::test]
async fn observations_hide_the_target_and_other_players() {
    let app = app();
    call(&app, "POST", "/experiments", Some(plan("blind", json!("hybrid")))).await;
    for n in 0..4 {
        let (s, v) = call(&app, "POST", "/join", Some(json!({"participant_id": format!("p{n}")}))).await;
        if s != StatusCode::OK {
            break;
        }
        let text = v.to_string();
        assert!(!text.contains("agent_kind") && !text.contains("201.69"));
        let game = v["game_id"].as_str().unwrap();
        let (_, log) = call(&app, "GET", &format!("/logs/{game}"), None).await;
        let target = log[0]["config"]["target"].as_str().unwrap();
        assert!(!text.contains(&format!("\"{target}\"")));
        let token = v["token"].as_str().unwrap();
        for w in ["pen", "ink", "key"] {
            let (_, r) = call(&app, "POST", "/guess", Some(json!({"token": token, "guess": w}))).await;
            assert!(!r.to_string().contains("agent_kind"));
        }
    }
}
