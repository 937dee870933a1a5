use std::fmt;

use serde::{Deserialize, Serialize};

use crate::svg::ElementId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    OrphanId,
    DanglingId,
    DuplicateId,
    MissingId,
    SchemaMismatch,
    ScaleGap,
    MalformedMarker,
    CrossRoleNesting,
    InverseViolation,
    InvariantViolation,
    UnresolvedIdentifier,
    SlotMismatch,
    TypeError,
    MissingFixedParam,
    InvalidTarget,
}

impl IssueKind {
    /// Warnings are reported but do not make a subject inadmissible.
    pub fn is_warning(self) -> bool {
        matches!(self, IssueKind::CrossRoleNesting)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub kind: IssueKind,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ids: Vec<ElementId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn push(&mut self, kind: IssueKind, message: impl Into<String>) {
        self.issues.push(Issue { kind, message: message.into(), ids: Vec::new() });
    }

    pub fn push_ids(&mut self, kind: IssueKind, message: impl Into<String>, ids: Vec<ElementId>) {
        self.issues.push(Issue { kind, message: message.into(), ids });
    }

    pub fn extend(&mut self, other: ValidationReport) {
        self.issues.extend(other.issues);
    }

    /// True when no error-level issue is present.
    pub fn is_valid(&self) -> bool {
        self.issues.iter().all(|i| i.kind.is_warning())
    }

    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn of_kind(&self, kind: IssueKind) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(move |i| i.kind == kind)
    }

    /// All ids mentioned by issues of `kind`.
    pub fn ids(&self, kind: IssueKind) -> Vec<ElementId> {
        let mut ids: Vec<_> = self.of_kind(kind).flat_map(|i| i.ids.iter().copied()).collect();
        ids.sort();
        ids.dedup();
        ids
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return f.write_str("no issues");
        }
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "- [{:?}] {}", issue.kind, issue.message)?;
        }
        Ok(())
    }
}
