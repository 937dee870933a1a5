//! Phase two: turning chat requests into small program updates.

mod checkpoint;
mod diff;
mod widgets;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{Checkpoint, CheckpointError, CheckpointLog, Snapshot};
pub use diff::{minimal_change_score, DiffMismatch, Edit, ProgramDiff};
pub use widgets::{materialize_widgets, WidgetKind, WidgetSpec};

use crate::data::Dataset;
use crate::dsl::{evaluate, parse_program, print_program, validate_program, ParamValue, ParameterSpec, TemplateProgram};
use crate::lmm::{LmmError, ModelClient, ModelRequest, PromptPart};
use crate::prompts;
use crate::report::{IssueKind, ValidationReport};
use crate::svg::MarkedUpSvg;

/// Turns of chat history sent with each request.
pub const CHAT_WINDOW: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub speaker: Speaker,
    pub text: String,
}

/// Kinds of update, in order of preference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    NewParameters,
    ParameterUpdates,
    Logic,
    Markup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementResult {
    pub reply_text: String,
    pub program_after: TemplateProgram,
    pub new_params: Vec<ParameterSpec>,
    pub new_widgets: Vec<WidgetSpec>,
    pub diff: ProgramDiff,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<Variant>,
}

#[derive(Debug, Error)]
pub enum RefineError {
    #[error("every proposed change was rejected:\n{0}")]
    RefinementRejected(ValidationReport),
    #[error(transparent)]
    Model(#[from] LmmError),
}

/// What the model sees of the session.
pub struct RefineContext<'a> {
    pub program: &'a TemplateProgram,
    pub params: &'a BTreeMap<String, ParamValue>,
    pub marked: &'a MarkedUpSvg,
    pub data: &'a Dataset,
    pub history: &'a [ChatTurn],
    pub thumbnail: Option<&'a [u8]>,
}

#[derive(Deserialize)]
struct Reply {
    reply: String,
    #[serde(default)]
    candidates: Vec<Candidate>,
}

#[derive(Deserialize)]
struct Candidate {
    variant: Variant,
    program: String,
}

/// Current values that still fit `program`; everything else takes its default.
pub fn carry_params(program: &TemplateProgram, values: &BTreeMap<String, ParamValue>) -> BTreeMap<String, ParamValue> {
    values
        .iter()
        .filter(|(name, v)| program.param(name).is_some_and(|p| p.accepts(v).is_ok()))
        .map(|(n, v)| (n.clone(), v.clone()))
        .collect()
}

fn check_candidate(ctx: &RefineContext<'_>, program: &TemplateProgram) -> ValidationReport {
    let mut report = validate_program(program, ctx.marked, &ctx.data.columns);
    if report.is_valid() {
        if let Err(e) = evaluate(program, ctx.marked, ctx.data, &carry_params(program, ctx.params)) {
            report.push(IssueKind::TypeError, format!("the template fails to render: {e}"));
        }
    }
    report
}

fn history_text(history: &[ChatTurn]) -> String {
    let recent = &history[history.len().saturating_sub(CHAT_WINDOW)..];
    if recent.is_empty() {
        return "(none)".to_string();
    }
    recent
        .iter()
        .map(|t| {
            let who = match t.speaker {
                Speaker::User => "user",
                Speaker::Assistant => "assistant",
            };
            format!("{who}: {}", t.text)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn result(ctx: &RefineContext<'_>, reply_text: String, after: TemplateProgram, variant: Option<Variant>) -> RefinementResult {
    let old: BTreeSet<&str> = ctx.program.params.iter().map(|p| p.name.as_str()).collect();
    let new_params: Vec<ParameterSpec> = after.params.iter().filter(|p| !old.contains(p.name.as_str())).cloned().collect();
    RefinementResult {
        reply_text,
        new_widgets: materialize_widgets(&new_params),
        new_params,
        diff: ProgramDiff::between(ctx.program, &after),
        program_after: after,
        variant,
    }
}

/// Asks the model for candidate updates. The most preferred kind of update
/// with a valid candidate wins; within a kind, the smallest change.
pub fn refine(ctx: &RefineContext<'_>, message: &str, client: &ModelClient) -> Result<RefinementResult, RefineError> {
    let params_json = serde_json::to_string(ctx.params).expect("parameter values serialize");
    let base = prompts::fill(
        prompts::REFINE,
        &[
            ("grammar", prompts::GRAMMAR),
            ("program", print_program(ctx.program).trim_end()),
            ("params", &params_json),
            ("markup", &ctx.marked.to_xml()),
            ("history", &history_text(ctx.history)),
            ("message", message),
        ],
    );
    let mut prompt = base.clone();
    let mut last = ValidationReport::default();
    for attempt in 1..=2 {
        let mut parts = vec![PromptPart::Text(prompt.clone())];
        if let Some(png) = ctx.thumbnail {
            parts.push(PromptPart::png(png.to_vec()));
        }
        let answer = client.complete(&ModelRequest::new(client.model_name.clone(), parts))?;
        last = ValidationReport::default();
        let body = prompts::fenced(&answer, "json").unwrap_or(&answer);
        match serde_json::from_str::<Reply>(body) {
            Err(e) => last.push(IssueKind::TypeError, format!("the answer is not the requested JSON: {e}")),
            Ok(reply) if reply.candidates.is_empty() => {
                return Ok(result(ctx, reply.reply, ctx.program.clone(), None));
            }
            Ok(reply) => {
                let mut best: Option<((usize, usize), Variant, TemplateProgram)> = None;
                for c in reply.candidates {
                    let program = match parse_program(&c.program) {
                        Ok(p) => p,
                        Err(e) => {
                            last.push(IssueKind::TypeError, format!("{:?} candidate does not parse: {e}", c.variant));
                            continue;
                        }
                    };
                    let report = check_candidate(ctx, &program);
                    if !report.is_valid() {
                        last.push(IssueKind::TypeError, format!("{:?} candidate rejected:\n{report}", c.variant));
                        continue;
                    }
                    let score = minimal_change_score(ctx.program, &program);
                    if best.as_ref().map_or(true, |(s, v, _)| (c.variant, score) < (*v, *s)) {
                        best = Some((score, c.variant, program));
                    }
                }
                if let Some((_, variant, program)) = best {
                    return Ok(result(ctx, reply.reply, program, Some(variant)));
                }
            }
        }
        if attempt == 1 {
            prompt = format!("{base}\n\nYour previous answer was rejected:\n{last}\nReturn corrected candidates.");
        }
    }
    Err(RefineError::RefinementRejected(last))
}
