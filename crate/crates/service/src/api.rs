//! HTTP routes.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;
use svgreuse_core::dsl::ParamValue;
use svgreuse_core::preprocess::make_thumbnail;
use svgreuse_core::refine::{refine, RefineError};
use svgreuse_core::svg::parse;

use crate::error::ServiceError;
use crate::pipeline::{self, DecomposeMode};
use crate::state::AppState;

type AppResult<T> = Result<T, ServiceError>;
type Shared = State<Arc<AppState>>;

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let body = json!({ "error": self.to_string(), "report": self.report() });
        (status, Json(body)).into_response()
    }
}

/// Parses a JSON body; anything malformed is a 400 with the reason.
fn body<T: DeserializeOwned>(bytes: &Bytes) -> AppResult<T> {
    let bytes: &[u8] = if bytes.iter().all(u8::is_ascii_whitespace) { b"{}" } else { bytes };
    serde_json::from_slice(bytes).map_err(|e| ServiceError::invalid(format!("invalid request body: {e}")))
}

fn svg(text: String) -> Response {
    ([(header::CONTENT_TYPE, "image/svg+xml")], text).into_response()
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/:id", get(session))
        .route("/sessions/:id/reference", post(reference))
        .route("/sessions/:id/decompose", post(decompose))
        .route("/sessions/:id/status", get(status))
        .route("/sessions/:id/template", get(template))
        .route("/sessions/:id/data", post(data))
        .route("/sessions/:id/mapping", post(mapping))
        .route("/sessions/:id/render", post(render))
        .route("/sessions/:id/chat", post(chat))
        .route("/sessions/:id/checkpoints", get(checkpoints).post(checkpoint))
        .route("/sessions/:id/checkpoints/:cid/bookmark", post(bookmark))
        .route("/sessions/:id/restore", post(restore))
        .route("/sessions/:id/export", get(export))
        .with_state(state)
}

async fn create(State(app): Shared) -> AppResult<(StatusCode, Json<serde_json::Value>)> {
    let id = app.create().await?;
    Ok((StatusCode::CREATED, Json(json!({ "id": id }))))
}

async fn session(State(app): Shared, Path(id): Path<String>) -> AppResult<Response> {
    let s = app.get(&id).await?;
    let s = s.read().await;
    Ok(Json(s.view()).into_response())
}

async fn reference(State(app): Shared, Path(id): Path<String>, bytes: Bytes) -> AppResult<Response> {
    let s = app.get(&id).await?;
    let mut s = s.write().await;
    let stats = s.set_reference(&bytes)?;
    s.save()?;
    Ok(Json(stats).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DecomposeBody {
    mode: DecomposeMode,
    #[serde(default)]
    transcript: Option<PathBuf>,
}

async fn decompose(State(app): Shared, Path(id): Path<String>, bytes: Bytes) -> AppResult<Response> {
    let req: DecomposeBody = body(&bytes)?;
    let shared = app.get(&id).await?;
    let mut s = shared.write().await;
    s.can_decompose()?;
    let client = app.decompose_client(&s, req.mode, req.transcript)?;
    let reference = s.begin_decompose(req.mode)?;
    s.save()?;
    drop(s);

    let renderer = app.renderer();
    tokio::spawn(async move {
        let outcome = tokio::task::spawn_blocking(move || {
            pipeline::decompose(&reference, client.as_ref(), renderer.as_deref())
        })
        .await;
        let mut s = shared.write().await;
        match outcome {
            Ok(outcome) => s.finish_decompose(outcome),
            Err(e) => s.finish_decompose(Err(pipeline::PipelineError::Decompose(
                svgreuse_core::decompose::DecomposeError::UnrecognizedStructure(format!("decomposition panicked: {e}")),
            ))),
        }
        let _ = s.save();
    });
    Ok((StatusCode::ACCEPTED, Json(json!({ "stage": "decomposing" }))).into_response())
}

async fn status(State(app): Shared, Path(id): Path<String>) -> AppResult<Response> {
    let s = app.get(&id).await?;
    let s = s.read().await;
    Ok(Json(s.status()).into_response())
}

async fn template(State(app): Shared, Path(id): Path<String>) -> AppResult<Response> {
    let s = app.get(&id).await?;
    let s = s.read().await;
    Ok(Json(s.template()?).into_response())
}

async fn data(State(app): Shared, Path(id): Path<String>, bytes: Bytes) -> AppResult<Response> {
    let s = app.get(&id).await?;
    let mut s = s.write().await;
    let view = s.upload_data(&bytes)?;
    s.save()?;
    Ok(Json(view).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MappingBody {
    mapping: BTreeMap<String, String>,
}

async fn mapping(State(app): Shared, Path(id): Path<String>, bytes: Bytes) -> AppResult<Response> {
    let req: MappingBody = body(&bytes)?;
    let s = app.get(&id).await?;
    let mut s = s.write().await;
    let view = s.set_mapping(req.mapping)?;
    s.save()?;
    Ok(Json(view).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RenderBody {
    #[serde(default)]
    params: BTreeMap<String, ParamValue>,
}

async fn render(State(app): Shared, Path(id): Path<String>, bytes: Bytes) -> AppResult<Response> {
    let req: RenderBody = body(&bytes)?;
    let s = app.get(&id).await?;
    let mut s = s.write().await;
    let out = s.render(req.params)?;
    s.save()?;
    Ok(svg(out))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChatBody {
    message: String,
}

async fn chat(State(app): Shared, Path(id): Path<String>, bytes: Bytes) -> AppResult<Response> {
    let req: ChatBody = body(&bytes)?;
    let shared = app.get(&id).await?;
    let mut s = shared.write().await;
    let inputs = s.chat_inputs()?;
    let client = app.chat_client(&s)?;
    let thumbnail = match app.renderer() {
        Some(r) => {
            let current = s.current_render()?;
            let doc = parse(current.as_bytes()).map_err(|e| ServiceError::Internal(e.to_string()))?;
            make_thumbnail(&doc, 400, Some(r.as_ref())).ok().map(|t| t.png)
        }
        None => None,
    };
    let message = req.message.clone();
    let result = tokio::task::spawn_blocking(move || refine(&inputs.context(thumbnail.as_deref()), &message, &client))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?;
    let result = match result {
        Ok(r) => r,
        Err(RefineError::Model(e)) => return Err(e.into()),
        Err(RefineError::RefinementRejected(report)) => return Err(ServiceError::Rejected(report)),
    };
    let (checkpoint_id, render) = s.apply_chat(&req.message, &result)?;
    s.save()?;
    Ok(Json(json!({
        "reply": result.reply_text,
        "widgets": result.new_widgets,
        "result": result,
        "render": render,
        "checkpoint_id": checkpoint_id,
    }))
    .into_response())
}

async fn checkpoints(State(app): Shared, Path(id): Path<String>) -> AppResult<Response> {
    let s = app.get(&id).await?;
    let s = s.read().await;
    Ok(Json(s.checkpoints()?).into_response())
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct CheckpointBody {
    #[serde(default)]
    label: Option<String>,
}

async fn checkpoint(State(app): Shared, Path(id): Path<String>, bytes: Bytes) -> AppResult<Response> {
    let req: CheckpointBody = body(&bytes)?;
    let s = app.get(&id).await?;
    let mut s = s.write().await;
    let c = s.checkpoint(req.label)?;
    s.save()?;
    Ok((StatusCode::CREATED, Json(c)).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BookmarkBody {
    bookmarked: bool,
}

async fn bookmark(State(app): Shared, Path((id, cid)): Path<(String, u64)>, bytes: Bytes) -> AppResult<Response> {
    let req: BookmarkBody = body(&bytes)?;
    let s = app.get(&id).await?;
    let mut s = s.write().await;
    let c = s.bookmark(cid, req.bookmarked)?;
    s.save()?;
    Ok(Json(c).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RestoreBody {
    checkpoint_id: u64,
}

async fn restore(State(app): Shared, Path(id): Path<String>, bytes: Bytes) -> AppResult<Response> {
    let req: RestoreBody = body(&bytes)?;
    let s = app.get(&id).await?;
    let mut s = s.write().await;
    let out = s.restore(req.checkpoint_id)?;
    s.save()?;
    Ok(svg(out))
}

async fn export(State(app): Shared, Path(id): Path<String>) -> AppResult<Response> {
    let s = app.get(&id).await?;
    let s = s.read().await;
    Ok(Json(s.export()?).into_response())
}
