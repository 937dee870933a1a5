//! The three-step model chain: roles and data, enrichment, IR generation.
//!
//! The model sees a simplified copy of the chart. Its markers are read back by
//! element id and re-inserted into the original document, so the markup always
//! strips back to the exact input whatever else the model rewrote.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{sibling_runs, validate_markup, GROUP_KINDS};
use crate::data::{parse_csv, Dataset};
use crate::ir::{parse_ir, serialize_ir, validate_ir, IntermediateRepresentation};
use crate::lmm::{sha256_hex, LmmError, ModelClient, ModelRequest, PromptPart};
use crate::preprocess::PromptView;
use crate::prompts;
use crate::report::{IssueKind, ValidationReport};
use crate::svg::{insert_markers, strip_markers, ElementId, GroupMarker, LayerRole, MarkedUpSvg, SvgDocument};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChainStep {
    RoleAndData,
    Enrichment,
    IrGeneration,
}

impl fmt::Display for ChainStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChainStep::RoleAndData => "role-and-data",
            ChainStep::Enrichment => "enrichment",
            ChainStep::IrGeneration => "ir-generation",
        })
    }
}

#[derive(Debug, Clone)]
pub enum ChainParsed {
    RolesAndData(MarkedUpSvg, Dataset),
    Enriched(MarkedUpSvg),
    Ir(Box<IntermediateRepresentation>),
}

/// One model call. `parsed` is present iff the output passed validation.
#[derive(Debug, Clone)]
pub struct ChainStepResult {
    pub step: ChainStep,
    pub input_digest: String,
    pub output: String,
    pub parsed: Option<ChainParsed>,
}

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("chain step {step} failed after {attempts} attempts: {last_error}")]
    StepFailed { step: ChainStep, attempts: u32, last_error: String },
    #[error(transparent)]
    Model(#[from] LmmError),
}

#[derive(Debug, Clone)]
pub struct ChainOutcome {
    pub marked: MarkedUpSvg,
    pub dataset: Dataset,
    pub ir: IntermediateRepresentation,
    pub steps: Vec<ChainStepResult>,
}

const ATTEMPTS: u32 = 2;

/// Asks once, and once more with the rejection appended.
fn run_step<T>(
    step: ChainStep,
    client: &ModelClient,
    base: &str,
    image: Option<&[u8]>,
    log: &mut Vec<ChainStepResult>,
    mut accept: impl FnMut(&str) -> Result<(T, ChainParsed), String>,
) -> Result<T, ChainError> {
    let mut prompt = base.to_string();
    let mut last_error = String::new();
    for attempt in 1..=ATTEMPTS {
        let mut parts = vec![PromptPart::Text(prompt.clone())];
        if let Some(png) = image {
            parts.push(PromptPart::png(png.to_vec()));
        }
        let request = ModelRequest::new(client.model_name.clone(), parts);
        let output = client.complete(&request)?;
        let mut record =
            ChainStepResult { step, input_digest: request.digest(), output: output.clone(), parsed: None };
        match accept(&output) {
            Ok((value, parsed)) => {
                record.parsed = Some(parsed);
                log.push(record);
                return Ok(value);
            }
            Err(e) => {
                log.push(record);
                last_error = e;
            }
        }
        if attempt < ATTEMPTS {
            prompt = format!("{base}\n\nYour previous answer was rejected:\n{last_error}\nReturn a corrected answer.");
        }
    }
    Err(ChainError::StepFailed { step, attempts: ATTEMPTS, last_error })
}

fn report_error(r: &ValidationReport) -> Result<(), String> {
    if r.is_valid() {
        Ok(())
    } else {
        Err(r.to_string())
    }
}

/// Reads the markers of a model answer and re-applies them to `original` by
/// element id. Members split across parents become several markers.
fn transfer_markers(answer: &str, original: &SvgDocument) -> Result<MarkedUpSvg, String> {
    let body = prompts::fenced(answer, "svg").unwrap_or(answer).trim();
    let marked = MarkedUpSvg::parse(body.as_bytes()).map_err(|e| format!("the svg block is not valid XML: {e}"))?;
    let mut report = ValidationReport::default();
    let known: BTreeSet<ElementId> = original.ids().into_iter().collect();
    let mut groups = Vec::new();
    for m in marked.markers() {
        let name = m.desc.clone().unwrap_or_default();
        let Some(role) = m.role else {
            let raw = m.raw_role.as_deref().unwrap_or("");
            report.push(IssueKind::MalformedMarker, format!("marker `{name}` has invalid role `{raw}`"));
            continue;
        };
        let (members, unknown): (Vec<_>, Vec<_>) = m.member_ids.iter().partition(|id| known.contains(id));
        if !unknown.is_empty() {
            report.push_ids(IssueKind::DanglingId, format!("marker `{name}` holds unknown ids {unknown:?}"), unknown);
        }
        for run in sibling_runs(&original.root, &members) {
            let mut g = GroupMarker::new(role, name.clone(), run);
            g.slot = m.slot.clone();
            g.kind = m.kind.clone();
            groups.push(g);
        }
    }
    report_error(&report)?;
    let rebuilt = insert_markers(original, &groups).map_err(|e| format!("markers cannot be applied: {e}"))?;
    report_error(&validate_markup(&rebuilt, original))?;
    Ok(rebuilt)
}

/// Step one: role assignment merged with data extraction.
pub fn step1_roles_and_data(
    view: &PromptView,
    original: &SvgDocument,
    client: &ModelClient,
    log: &mut Vec<ChainStepResult>,
) -> Result<(MarkedUpSvg, Dataset), ChainError> {
    let stats = format!(
        "{} elements, {} bytes reduced to {}",
        view.stats.element_count, view.stats.bytes_before, view.stats.bytes_after
    );
    let base = prompts::fill(
        prompts::STEP1_ROLES,
        &[
            ("exemplar_svg", prompts::EXEMPLAR_SVG.trim_end()),
            ("exemplar_markup", prompts::EXEMPLAR_MARKUP.trim_end()),
            ("exemplar_csv", prompts::EXEMPLAR_CSV.trim_end()),
            ("stats", &stats),
            ("svg", &view.simplified.to_xml()),
        ],
    );
    let image = view.thumbnail.as_ref().map(|t| t.png.as_slice());
    run_step(ChainStep::RoleAndData, client, &base, image, log, |answer| {
        let marked = transfer_markers(answer, original)?;
        let csv = prompts::fenced(answer, "csv").ok_or("the answer has no csv block")?;
        let dataset = parse_csv(csv.as_bytes()).map_err(|e| format!("the csv block is invalid: {e}"))?;
        Ok(((marked.clone(), dataset.clone()), ChainParsed::RolesAndData(marked, dataset)))
    })
}

/// Step two: descriptions, kinds and slot names. The grouping must not change.
pub fn step2_enrich(
    marked: &MarkedUpSvg,
    client: &ModelClient,
    log: &mut Vec<ChainStepResult>,
) -> Result<MarkedUpSvg, ChainError> {
    let original = strip_markers(marked);
    let before: Vec<(Option<LayerRole>, Vec<ElementId>)> =
        marked.markers().into_iter().map(|m| (m.role, m.member_ids)).collect();
    let base = prompts::fill(prompts::STEP2_ENRICH, &[("markup", &marked.to_xml())]);
    run_step(ChainStep::Enrichment, client, &base, None, log, |answer| {
        let enriched = transfer_markers(answer, &original)?;
        let after = enriched.markers();
        let regrouped: Vec<_> = after.iter().map(|m| (m.role, m.member_ids.clone())).collect();
        if regrouped != before {
            return Err("the grouping or roles changed; keep every marker as it was".to_string());
        }
        let mut report = ValidationReport::default();
        let mut slots = BTreeSet::new();
        for m in &after {
            let at = m.member_ids.first().map(|id| format!(" around id {id}")).unwrap_or_default();
            if m.desc.as_deref().map_or(true, |d| d.trim().is_empty()) {
                report.push_ids(IssueKind::MalformedMarker, format!("marker{at} has no desc"), m.member_ids.clone());
            }
            if m.role == Some(LayerRole::DataDriven) {
                match m.kind.as_deref() {
                    Some(k) if GROUP_KINDS.contains(&k) => {}
                    _ => report.push_ids(
                        IssueKind::MalformedMarker,
                        format!("data-driven marker{at} needs kind mark, axis or legend"),
                        m.member_ids.clone(),
                    ),
                }
            }
            if let Some(s) = &m.slot {
                if !slots.insert(s.clone()) {
                    report.push(IssueKind::MalformedMarker, format!("slot `{s}` is used twice"));
                }
            }
        }
        report_error(&report)?;
        Ok((enriched.clone(), ChainParsed::Enriched(enriched)))
    })
}

/// Drops ids that name no element. Returns how many were removed.
pub fn repair_dangling(ir: &mut IntermediateRepresentation, doc: &MarkedUpSvg) -> usize {
    let known: BTreeSet<ElementId> = doc.document().ids().into_iter().collect();
    let mut removed = 0;
    let mut keep = |ids: &mut Vec<ElementId>| {
        let n = ids.len();
        ids.retain(|id| known.contains(id));
        removed += n - ids.len();
    };
    for m in &mut ir.marks {
        keep(&mut m.member_ids);
    }
    for a in &mut ir.axes {
        keep(&mut a.gridline_ids);
        keep(&mut a.label_ids);
    }
    for l in &mut ir.legends {
        keep(&mut l.label_ids);
    }
    keep(&mut ir.text_layer_ids);
    keep(&mut ir.decorative_layer_ids);
    keep(&mut ir.configuration_layer_ids);
    for l in &mut ir.legends {
        for g in &mut l.channel_groups {
            let n = g.entries.len();
            g.entries.retain(|e| known.contains(&e.swatch_id));
            removed += n - g.entries.len();
        }
    }
    removed
}

/// Step three: the IR, with the step-one dataset embedded.
pub fn step3_generate_ir(
    marked: &MarkedUpSvg,
    dataset: &Dataset,
    client: &ModelClient,
    log: &mut Vec<ChainStepResult>,
) -> Result<IntermediateRepresentation, ChainError> {
    let data_json = serde_json::to_string_pretty(dataset).expect("datasets serialize");
    let base = prompts::fill(
        prompts::STEP3_IR,
        &[("exemplar_ir", prompts::EXEMPLAR_IR.trim_end()), ("markup", &marked.to_xml()), ("dataset", &data_json)],
    );
    run_step(ChainStep::IrGeneration, client, &base, None, log, |answer| {
        let body = prompts::fenced(answer, "json").unwrap_or(answer);
        // the dataset is ours, not the model's
        let mut value: serde_json::Value =
            serde_json::from_str(body).map_err(|e| format!("the json block does not parse: {e}"))?;
        if let Some(obj) = value.as_object_mut() {
            obj.insert("dataset".into(), serde_json::to_value(dataset).expect("datasets serialize"));
        }
        let mut ir = parse_ir(&value.to_string()).map_err(|e| e.to_string())?;
        repair_dangling(&mut ir, marked);
        report_error(&validate_ir(&ir, marked))?;
        Ok((ir.clone(), ChainParsed::Ir(Box::new(ir))))
    })
}

/// Runs all three steps on an id-assigned document.
pub fn run_chain(view: &PromptView, original: &SvgDocument, client: &ModelClient) -> Result<ChainOutcome, ChainError> {
    let mut steps = Vec::new();
    let (grouped, dataset) = step1_roles_and_data(view, original, client, &mut steps)?;
    let marked = step2_enrich(&grouped, client, &mut steps)?;
    let ir = step3_generate_ir(&marked, &dataset, client, &mut steps)?;
    Ok(ChainOutcome { marked, dataset, ir, steps })
}

/// Digest of the chain's final artifacts, for determinism checks.
pub fn outcome_digest(o: &ChainOutcome) -> String {
    sha256_hex(format!("{}\n{}", o.marked.to_xml(), serialize_ir(&o.ir)).as_bytes())
}

/// Step answers derived from the heuristic decomposer, for recording fixtures
/// and running the model path where no endpoint is configured.
pub struct OracleAnswers {
    pub roles_and_data: String,
    pub enrichment: String,
    pub ir: String,
    pub program: Option<String>,
}

impl OracleAnswers {
    pub fn for_document(view: &PromptView, original: &SvgDocument) -> Result<Self, super::DecomposeError> {
        let d = super::heuristic_decompose(original)?;
        let bare: Vec<GroupMarker> = d
            .marked
            .markers()
            .into_iter()
            .filter_map(|m| Some(GroupMarker::new(m.role?, "", m.member_ids)))
            .collect();
        let grouped = insert_markers(&view.simplified, &bare)?;
        let program = crate::synth::synthesize_template(&d.ir, &d.marked).ok().map(|p| crate::dsl::print_program(&p));
        Ok(OracleAnswers {
            roles_and_data: format!(
                "```svg\n{}\n```\n```csv\n{}```\n",
                grouped.to_xml(),
                crate::data::to_csv(&d.dataset)
            ),
            enrichment: format!("```svg\n{}\n```\n", d.marked.to_xml()),
            ir: format!("```json\n{}\n```\n", serialize_ir(&d.ir)),
            program,
        })
    }

    /// A provider answering each prompt kind with the matching answer.
    pub fn provider(self) -> crate::lmm::ScriptedProvider {
        let p = crate::lmm::ScriptedProvider::new()
            .when(|t| t.contains("recover the dataset"), self.roles_and_data)
            .when(|t| t.contains("natural-language description"), self.enrichment)
            .when(|t| t.contains("intermediate representation"), self.ir);
        match self.program {
            Some(program) => p.when(|t| t.contains("reusable chart templates"), format!("```dwt\n{program}```\n")),
            None => p,
        }
    }
}
