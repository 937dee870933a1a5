//! Phase one: from a reference SVG to markup, data and an IR.

mod chain;
mod heuristic;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

pub use chain::{
    outcome_digest, repair_dangling, run_chain, step1_roles_and_data, step2_enrich, step3_generate_ir, ChainError,
    ChainOutcome, ChainParsed, ChainStep, ChainStepResult, OracleAnswers,
};
pub use heuristic::{heuristic_decompose, role_partition, Decomposition};
pub(crate) use heuristic::{fit, numeric, sibling_runs};

use crate::ir::is_structural;
use crate::report::{IssueKind, ValidationReport};
use crate::svg::{strip_markers, ElementId, MarkedUpSvg, MarkupError, SvgDocument, SvgError};

/// Allowed `kind` values on data-driven groups.
pub const GROUP_KINDS: [&str; 3] = ["mark", "axis", "legend"];

#[derive(Debug, Error)]
pub enum DecomposeError {
    #[error("unrecognized structure: {0}")]
    UnrecognizedStructure(String),
    #[error(transparent)]
    Svg(#[from] SvgError),
    #[error(transparent)]
    Markup(#[from] MarkupError),
}

/// Checks marker well-formedness, id preservation and that stripping the
/// markers restores `original` byte for byte.
pub fn validate_markup(marked: &MarkedUpSvg, original: &SvgDocument) -> ValidationReport {
    let mut report = ValidationReport::default();
    let markers = marked.markers();
    for m in &markers {
        let name = m.desc.clone().unwrap_or_else(|| m.tag.clone());
        if m.tag != "dw:group" {
            report.push(IssueKind::MalformedMarker, format!("unknown marker element <{}>", m.tag));
        }
        if m.role.is_none() {
            let raw = m.raw_role.as_deref().unwrap_or("");
            report.push(IssueKind::MalformedMarker, format!("marker `{name}` has invalid role `{raw}`"));
        }
        if let Some(k) = &m.kind {
            if !GROUP_KINDS.contains(&k.as_str()) {
                report.push(IssueKind::MalformedMarker, format!("marker `{name}` has invalid kind `{k}`"));
            }
        }
        if m.covered_ids.is_empty() {
            report.push(IssueKind::MalformedMarker, format!("marker `{name}` is empty"));
        }
        if let Some(Some(parent)) = m.parent_role {
            if m.role.is_some_and(|r| r != parent) {
                report.push_ids(
                    IssueKind::CrossRoleNesting,
                    format!("marker `{name}` nests a different role inside {parent}"),
                    m.member_ids.clone(),
                );
            }
        }
    }

    let mut seen: BTreeMap<ElementId, usize> = BTreeMap::new();
    for e in marked.document().elements().filter(|e| !e.is_marker()) {
        if let Some(id) = e.id() {
            *seen.entry(id).or_default() += 1;
        }
    }
    let expected: BTreeSet<ElementId> = original.ids().into_iter().collect();
    for id in &expected {
        if !seen.contains_key(id) {
            report.push_ids(IssueKind::MissingId, format!("missing id {id}"), vec![*id]);
        }
    }
    for (id, n) in &seen {
        if !expected.contains(id) {
            report.push_ids(IssueKind::DanglingId, format!("unknown id {id}"), vec![*id]);
        }
        if *n > 1 {
            report.push_ids(IssueKind::DuplicateId, format!("id {id} appears {n} times"), vec![*id]);
        }
    }

    let covered: BTreeSet<ElementId> = markers.iter().flat_map(|m| m.covered_ids.iter().copied()).collect();
    let orphans: Vec<ElementId> = marked
        .document()
        .root
        .descendants()
        .skip(1)
        .filter(|e| !e.is_marker() && !is_structural(e))
        .filter_map(|e| e.id())
        .filter(|id| !covered.contains(id))
        .collect();
    if !orphans.is_empty() {
        report.push_ids(IssueKind::OrphanId, format!("{} elements have no role", orphans.len()), orphans);
    }

    if strip_markers(marked).to_xml() != original.to_xml() {
        report.push(IssueKind::InverseViolation, "stripping the markers does not restore the original document");
    }
    report
}
