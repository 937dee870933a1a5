mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::http::StatusCode;
use common::{chart_svg, five_turns, Api};
use serde_json::json;
use svgreuse_core::fidelity::diff_geometry;
use svgreuse_core::svg::{assign_ids, parse};

fn fixture(rel: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(rel)
}

#[tokio::test]
async fn heuristic_session_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let (messages, provider) = five_turns();
    let api = Api::open(dir.path(), Some(Arc::new(provider)));
    let id = api.create().await;

    let stats = api.post_raw(&format!("/sessions/{id}/reference"), chart_svg("bars-4")).await.json();
    assert!(stats["bytes_after"].as_u64().unwrap() <= stats["bytes_before"].as_u64().unwrap());

    let r = api.post(&format!("/sessions/{id}/decompose"), json!({"mode": "heuristic"})).await;
    assert_eq!(r.status, StatusCode::ACCEPTED);
    let status = api.wait(&id).await;
    assert_eq!(status["stage"], "templated");
    assert_eq!(status["decomposition"]["prototype"], "Bar");
    assert!(status["job"]["fidelity"].as_f64().unwrap() <= 0.005);

    // default render reproduces the reference
    let r = api.post(&format!("/sessions/{id}/render"), json!({})).await;
    assert_eq!(r.status, StatusCode::OK);
    let reference = assign_ids(&parse(chart_svg("bars-4").as_bytes()).unwrap()).unwrap();
    let score = diff_geometry(&reference, &parse(&r.body).unwrap()).score;
    assert!(score <= 0.005, "{score}");

    // a renamed upload needs a mapping before it is rendered
    let view = api.post_raw(&format!("/sessions/{id}/data"), "cat,amount\nN,10\nE,30\nS,20\nW,5\n").await.json();
    assert_eq!(view["mapped"], false);
    let r = api.post(&format!("/sessions/{id}/mapping"), json!({"mapping": {"cat": "category"}})).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST, "{}", r.text());
    let r = api.post(&format!("/sessions/{id}/mapping"), json!({"mapping": {"cat": "category", "amount": "value"}})).await;
    assert_eq!(r.json()["mapped"], true);
    let svg = api.post(&format!("/sessions/{id}/render"), json!({})).await.text();
    assert!(svg.contains(">N<") && svg.contains(">W<"));

    // chat adds a slider, which then drives the render
    let r = api.post(&format!("/sessions/{id}/chat"), json!({"message": messages[0]})).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text());
    let chat = r.json();
    assert_eq!(chat["widgets"].as_array().unwrap().len(), 1);
    assert_eq!(chat["widgets"][0]["widget"], "Slider");
    assert_eq!(chat["widgets"][0]["param_name"], "bar_width");
    let template = api.get(&format!("/sessions/{id}/template")).await.json();
    assert!(template["source"].as_str().unwrap().contains("bar_width"));
    let narrow = api.post(&format!("/sessions/{id}/render"), json!({"params": {"bar_width": 10}})).await.text();
    assert!(narrow.contains(r#"width="10""#));
    assert_eq!(api.get(&format!("/sessions/{id}")).await.json()["stage"], "refined");

    // bookmark and restore the decomposition checkpoint
    let cps = api.get(&format!("/sessions/{id}/checkpoints")).await.json();
    assert_eq!(cps.as_array().unwrap().len(), 2);
    let first = cps[0]["id"].as_u64().unwrap();
    let r = api.post(&format!("/sessions/{id}/checkpoints/{first}/bookmark"), json!({"bookmarked": true})).await;
    assert_eq!(r.json()["bookmarked"], true);
    let restored = api.post(&format!("/sessions/{id}/restore"), json!({"checkpoint_id": first})).await;
    assert_eq!(restored.status, StatusCode::OK);
    assert!(!api.get(&format!("/sessions/{id}/template")).await.json()["source"].as_str().unwrap().contains("bar_width"));

    let bundle = api.get(&format!("/sessions/{id}/export")).await.json();
    for key in ["reference", "markup", "ir", "template", "data", "params"] {
        assert!(!bundle[key].is_null(), "{key}");
    }
    assert!(bundle["data"].as_str().unwrap().starts_with("category,value\n"));
}

#[tokio::test]
async fn replay_decomposition_uses_the_recorded_chain() {
    let dir = tempfile::tempdir().unwrap();
    let api = Api::open(dir.path(), None);
    let id = api.create().await;
    api.post_raw(&format!("/sessions/{id}/reference"), chart_svg("pie-4")).await;
    let transcript = fixture("transcripts/pie-4.chain.tsv");
    let r = api.post(&format!("/sessions/{id}/decompose"), json!({"mode": "replay", "transcript": transcript})).await;
    assert_eq!(r.status, StatusCode::ACCEPTED, "{}", r.text());
    let status = api.wait(&id).await;
    assert_eq!(status["stage"], "templated", "{status}");
    assert_eq!(status["decomposition"]["prototype"], "Pie");
    let exported = api.get(&format!("/sessions/{id}/export")).await.json();
    let golden: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(fixture("golden/pie-4.ir.json")).unwrap()).unwrap();
    assert_eq!(exported["ir"], golden);
}

#[tokio::test]
async fn replay_miss_fails_the_job() {
    let dir = tempfile::tempdir().unwrap();
    let api = Api::open(dir.path(), None);
    let id = api.create().await;
    api.post_raw(&format!("/sessions/{id}/reference"), chart_svg("bars-4")).await;
    let r = api
        .post(&format!("/sessions/{id}/decompose"), json!({"mode": "replay", "transcript": fixture("transcripts/pie-4.chain.tsv")}))
        .await;
    assert_eq!(r.status, StatusCode::ACCEPTED);
    let status = api.wait(&id).await;
    assert_eq!(status["stage"], "created");
    assert_eq!(status["job"]["state"], "failed");
    assert!(status["job"]["error"].as_str().unwrap().contains("no recorded response"));
}

#[tokio::test]
async fn errors_map_to_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    let api = Api::open(dir.path(), None);
    assert_eq!(api.get("/sessions/404/status").await.status, StatusCode::NOT_FOUND);

    let id = api.create().await;
    let r = api.post_raw(&format!("/sessions/{id}/reference"), "<svg><rect></svg>").await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    api.post_raw(&format!("/sessions/{id}/reference"), chart_svg("bars-4")).await;
    let r = api.post_raw(&format!("/sessions/{id}/decompose"), "{mode: heuristic").await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let r = api.post(&format!("/sessions/{id}/decompose"), json!({"mode": "replay"})).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST, "no transcript in the session");
    let r = api.post(&format!("/sessions/{id}/decompose"), json!({"mode": "lmm"})).await;
    assert_eq!(r.status, StatusCode::BAD_GATEWAY, "no model endpoint");
    assert_eq!(api.get(&format!("/sessions/{id}")).await.json()["stage"], "created");

    let id = api.templated("bars-4").await;
    let r = api.post(&format!("/sessions/{id}/restore"), json!({"checkpoint_id": 99})).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    let r = api.post(&format!("/sessions/{id}/render"), json!({"params": {"no_such_param": 1}})).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let r = api.post_raw(&format!("/sessions/{id}/data"), "a,b\n1\n").await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    // chat with neither endpoint nor transcript cannot be answered
    let r = api.post(&format!("/sessions/{id}/chat"), json!({"message": "hi"})).await;
    assert_eq!(r.status, StatusCode::BAD_GATEWAY);
    assert!(r.json()["error"].as_str().unwrap().contains("no recorded response"));
}

#[tokio::test]
async fn sessions_are_independent() {
    let dir = tempfile::tempdir().unwrap();
    let api = Api::open(dir.path(), None);
    let (a, b) = tokio::join!(api.templated("bars-4"), api.templated("pie-4"));
    assert_ne!(a, b);
    let params: BTreeMap<String, f64> = BTreeMap::from([("origin_x".to_string(), 70.0)]);
    api.post(&format!("/sessions/{a}/render"), json!({"params": params})).await;
    assert!(api.get(&format!("/sessions/{b}")).await.json()["params"].as_object().unwrap().is_empty());
}
