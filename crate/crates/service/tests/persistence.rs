mod common;

use std::sync::Arc;

use common::{five_turns, Api};
use serde_json::json;

#[tokio::test]
async fn restart_preserves_renders_and_bookmarks() {
    let dir = tempfile::tempdir().unwrap();
    let (messages, provider) = five_turns();
    let (a, b, render_a, render_b, fp_a) = {
        let api = Api::open(dir.path(), Some(Arc::new(provider)));
        let a = api.templated("bars-4").await;
        let b = api.templated("line-5").await;
        api.post_raw(&format!("/sessions/{a}/data"), "category,value\nA,5\nB,6\nC,7\nD,8\n").await;
        api.post(&format!("/sessions/{a}/chat"), json!({"message": messages[0]})).await;
        api.post(&format!("/sessions/{a}/render"), json!({"params": {"bar_width": 17.25}})).await;
        api.post(&format!("/sessions/{a}/checkpoints/1/bookmark"), json!({"bookmarked": true})).await;
        let render_a = api.post(&format!("/sessions/{a}/render"), json!({})).await.text();
        let render_b = api.post(&format!("/sessions/{b}/render"), json!({})).await.text();
        let fp_a = api.fingerprint(&a).await;
        (a, b, render_a, render_b, fp_a)
    };

    let api = Api::open(dir.path(), None);
    assert_eq!(api.fingerprint(&a).await, fp_a);
    assert_eq!(api.post(&format!("/sessions/{a}/render"), json!({})).await.text(), render_a);
    assert_eq!(api.post(&format!("/sessions/{b}/render"), json!({})).await.text(), render_b);
    let cps = api.get(&format!("/sessions/{a}/checkpoints")).await.json();
    assert_eq!(cps[0]["bookmarked"], true);
    assert_eq!(cps[1]["bookmarked"], false);
    // new sessions do not reuse ids
    let c = api.create().await;
    assert!(c != a && c != b);
}

#[tokio::test]
async fn session_directory_holds_the_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let api = Api::open(dir.path(), None);
    let id = api.templated("bars-4").await;
    let files: Vec<String> = std::fs::read_dir(dir.path().join(&id))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    for f in ["manifest.json", "reference.svg", "reference.dwsvg", "reference.ir.json", "reference.dwt", "reference.csv"] {
        assert!(files.contains(&f.to_string()), "{f} missing from {files:?}");
    }
}
