mod common;

use std::sync::Arc;

use common::{chart_svg, conflicts_without_mutation, five_turns, forbidden_calls, Api};
use serde_json::json;

#[tokio::test]
async fn out_of_order_calls_conflict_and_change_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let (messages, provider) = five_turns();
    let api = Api::open(dir.path(), Some(Arc::new(provider)));

    let id = api.create().await;
    assert_eq!(conflicts_without_mutation(&api, &id, forbidden_calls("created", &id)).await, Vec::<String>::new());
    api.post_raw(&format!("/sessions/{id}/reference"), chart_svg("bars-4")).await;
    assert_eq!(conflicts_without_mutation(&api, &id, forbidden_calls("created+reference", &id)).await, Vec::<String>::new());

    let id = api.templated("bars-4").await;
    for stage in ["templated", "templated-without-data"] {
        assert_eq!(conflicts_without_mutation(&api, &id, forbidden_calls(stage, &id)).await, Vec::<String>::new());
    }
    let r = api.post(&format!("/sessions/{id}/chat"), json!({"message": messages[0]})).await;
    assert!(r.status.is_success(), "{}", r.text());
    assert_eq!(api.get(&format!("/sessions/{id}")).await.json()["stage"], "refined");
    assert_eq!(conflicts_without_mutation(&api, &id, forbidden_calls("refined", &id)).await, Vec::<String>::new());
}

#[tokio::test]
async fn chat_before_decompose_is_a_conflict() {
    let dir = tempfile::tempdir().unwrap();
    let api = Api::open(dir.path(), None);
    let id = api.create().await;
    let r = api.post(&format!("/sessions/{id}/chat"), json!({"message": "hi"})).await;
    assert_eq!(r.status.as_u16(), 409);
    assert!(r.json()["error"].as_str().unwrap().contains("created"));
}
