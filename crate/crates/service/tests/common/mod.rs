//! Shared helpers: an in-process API client and a scripted chat session.
#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use axum::body::{Body, Bytes};
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use svgreuse_core::corpus;
use svgreuse_core::decompose::heuristic_decompose;
use svgreuse_core::dsl::{print_program, TemplateProgram};
use svgreuse_core::lmm::{Provider, ScriptedProvider};
use svgreuse_core::svg::assign_ids;
use svgreuse_core::synth::synthesize_template;
use svgreuse_service::config::Config;
use svgreuse_service::AppState;
use tower::ServiceExt;

pub fn chart_svg(name: &str) -> String {
    corpus::synthetic_corpus().into_iter().find(|c| c.name == name).unwrap().svg
}

/// The template the service synthesizes for a corpus chart.
pub fn chart_program(name: &str) -> TemplateProgram {
    let doc = assign_ids(&corpus::document(&corpus::synthetic_corpus().into_iter().find(|c| c.name == name).unwrap())).unwrap();
    let d = heuristic_decompose(&doc).unwrap();
    synthesize_template(&d.ir, &d.marked).unwrap()
}

pub fn config(dir: &Path) -> Config {
    Config { session_dir: dir.to_path_buf(), ..Config::default() }
}

pub struct Api {
    pub router: Router,
}

pub struct Reply {
    pub status: StatusCode,
    pub body: Bytes,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", self.text()))
    }

    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }
}

impl Api {
    pub fn open(dir: &Path, provider: Option<Arc<dyn Provider>>) -> Api {
        let mut state = AppState::open(config(dir)).unwrap();
        if let Some(p) = provider {
            state = state.with_provider(p);
        }
        Api { router: svgreuse_service::api::router(Arc::new(state)) }
    }

    pub async fn call(&self, method: Method, uri: &str, body: impl Into<Body>) -> Reply {
        let req = Request::builder().method(method).uri(uri).body(body.into()).unwrap();
        let resp = self.router.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let body = resp.into_body().collect().await.unwrap().to_bytes();
        Reply { status, body }
    }

    pub async fn get(&self, uri: &str) -> Reply {
        self.call(Method::GET, uri, Body::empty()).await
    }

    pub async fn post(&self, uri: &str, body: Value) -> Reply {
        self.call(Method::POST, uri, body.to_string()).await
    }

    pub async fn post_raw(&self, uri: &str, body: impl Into<String>) -> Reply {
        self.call(Method::POST, uri, body.into()).await
    }

    pub async fn create(&self) -> String {
        let r = self.post("/sessions", json!({})).await;
        assert_eq!(r.status, StatusCode::CREATED, "{}", r.text());
        r.json()["id"].as_str().unwrap().to_string()
    }

    /// Polls until the decomposition job is no longer running.
    pub async fn wait(&self, id: &str) -> Value {
        for _ in 0..600 {
            let status = self.get(&format!("/sessions/{id}/status")).await.json();
            if status["stage"] != "decomposing" {
                return status;
            }
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
        panic!("decomposition of session {id} did not finish");
    }

    /// A session holding a heuristically decomposed corpus chart.
    pub async fn templated(&self, chart: &str) -> String {
        let id = self.create().await;
        let r = self.post_raw(&format!("/sessions/{id}/reference"), chart_svg(chart)).await;
        assert_eq!(r.status, StatusCode::OK, "{}", r.text());
        let r = self.post(&format!("/sessions/{id}/decompose"), json!({"mode": "heuristic"})).await;
        assert_eq!(r.status, StatusCode::ACCEPTED, "{}", r.text());
        let status = self.wait(&id).await;
        assert_eq!(status["stage"], "templated", "{status}");
        id
    }

    pub async fn fingerprint(&self, id: &str) -> String {
        self.get(&format!("/sessions/{id}")).await.json()["fingerprint"].as_str().unwrap().to_string()
    }
}

fn answer(reply: &str, candidates: &[(&str, &str)]) -> String {
    let candidates: Vec<_> = candidates.iter().map(|(v, p)| json!({"variant": v, "program": p})).collect();
    format!("```json\n{}\n```", json!({"reply": reply, "candidates": candidates}))
}

fn edit(source: &str, from: &str, to: &str) -> String {
    assert!(source.contains(from), "`{from}` not in\n{source}");
    source.replacen(from, to, 1)
}

/// Five chat turns on the bars-4 template, each answered with a candidate
/// built on the program left by the previous turn.
pub fn five_turns() -> (Vec<&'static str>, ScriptedProvider) {
    let p0 = print_program(&chart_program("bars-4"));
    let p1 = edit(
        &edit(&p0, "param origin_y number 270\n", "param origin_y number 270\nparam bar_width number 24 title \"bar width\"\n"),
        "(width (bandwidth x))",
        "(width bar_width)",
    );
    let p3 = edit(
        &edit(&p1, "param bar_width number 24 title \"bar width\"\n", "param bar_width number 24 title \"bar width\"\nparam bar_color color #1f3b73 title \"bar color\"\n"),
        "(fill \"#4e79a7\")",
        "(fill bar_color)",
    );
    let p4 = edit(&p3, "param bar_width number 24", "param bar_width number 30");
    let p5 = edit(&p4, "padding 0.2", "padding 0.4");
    let turns: Vec<(&'static str, String)> = vec![
        ("make the bars thinner", answer("Added a bar width slider.", &[("new-parameters", &p1)])),
        ("what does this chart show?", answer("Four categories; D is the largest.", &[])),
        ("let me pick the bar color", answer("Added a color picker, defaulting to dark blue.", &[("new-parameters", &p3)])),
        ("a little wider by default", answer("The default bar width is now 30.", &[("parameter-updates", &p4)])),
        ("more space between the bars", answer("Increased the band padding.", &[("logic", &p5)])),
    ];
    let mut provider = ScriptedProvider::new();
    let mut messages = Vec::new();
    for (message, response) in turns {
        let key = format!("User request: {message}\n");
        provider = provider.when(move |t| t.contains(&key), response);
        messages.push(message);
    }
    (messages, provider)
}

/// Every call that the session's stage forbids, as (method, path, body).
pub fn forbidden_calls(stage: &str, id: &str) -> Vec<(Method, String, String)> {
    let p = |s: &str| format!("/sessions/{id}/{s}");
    let post = |s: &str, b: Value| (Method::POST, p(s), b.to_string());
    let get = |s: &str| (Method::GET, p(s), String::new());
    let editing = vec![
        get("template"),
        post("mapping", json!({"mapping": {"a": "b"}})),
        post("render", json!({})),
        post("chat", json!({"message": "make the bars thinner"})),
        get("checkpoints"),
        post("checkpoints", json!({"label": "x"})),
        post("checkpoints/1/bookmark", json!({"bookmarked": true})),
        post("restore", json!({"checkpoint_id": 1})),
        get("export"),
    ];
    let reference = (Method::POST, p("reference"), chart_svg("bars-4"));
    let decompose = post("decompose", json!({"mode": "heuristic"}));
    match stage {
        "created" => [vec![decompose], editing].concat(),
        "created+reference" => editing,
        "templated" | "refined" => vec![reference, decompose],
        // mapping needs uploaded data even when the stage allows it
        "templated-without-data" => vec![post("mapping", json!({"mapping": {"a": "b"}}))],
        other => panic!("unknown stage {other}"),
    }
}

/// Runs `calls` and reports each one that did not answer 409 or that
/// changed the session.
pub async fn conflicts_without_mutation(api: &Api, id: &str, calls: Vec<(Method, String, String)>) -> Vec<String> {
    let mut failures = Vec::new();
    for (method, uri, body) in calls {
        let before = api.get(&format!("/sessions/{id}")).await.json();
        let r = api.call(method.clone(), &uri, body).await;
        let after = api.get(&format!("/sessions/{id}")).await.json();
        if r.status != StatusCode::CONFLICT {
            failures.push(format!("{method} {uri}: {} {}", r.status, r.text()));
        }
        if before != after {
            failures.push(format!("{method} {uri} changed the session"));
        }
    }
    failures
}
