//! Role and slot markers.
//!
//! Markers are `dw:group` elements. The `dw:` prefix is not part of the SVG
//! vocabulary, so a marked-up document is deliberately nonstandard until the
//! markers are stripped again.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Element, ElementId, Node, SvgDocument};

pub const MARKER_PREFIX: &str = "dw:";
pub const MARKER_TAG: &str = "dw:group";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LayerRole {
    DataDriven,
    Text,
    Decorative,
    Configuration,
}

impl LayerRole {
    pub const ALL: [LayerRole; 4] =
        [LayerRole::DataDriven, LayerRole::Text, LayerRole::Decorative, LayerRole::Configuration];

    pub fn as_str(self) -> &'static str {
        match self {
            LayerRole::DataDriven => "data-driven",
            LayerRole::Text => "text",
            LayerRole::Decorative => "decorative",
            LayerRole::Configuration => "configuration",
        }
    }
}

impl fmt::Display for LayerRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LayerRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LayerRole::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown layer role `{s}`"))
    }
}

/// A request to wrap contiguous sibling elements in a marker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupMarker {
    pub role: LayerRole,
    pub label: String,
    pub slot: Option<String>,
    pub kind: Option<String>,
    pub member_ids: Vec<ElementId>,
}

impl GroupMarker {
    pub fn new(role: LayerRole, label: impl Into<String>, member_ids: Vec<ElementId>) -> Self {
        GroupMarker { role, label: label.into(), slot: None, kind: None, member_ids }
    }

    pub fn with_slot(mut self, slot: impl Into<String>) -> Self {
        self.slot = Some(slot.into());
        self
    }

    pub fn with_kind(mut self, kind: impl Into<String>) -> Self {
        self.kind = Some(kind.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MarkupError {
    #[error("unknown element id {0}")]
    UnknownId(ElementId),
    #[error("members {0:?} are not contiguous siblings")]
    NonContiguousMembers(Vec<ElementId>),
    #[error("marker group has no members")]
    EmptyGroup,
}

/// A document that may contain `dw:` markers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkedUpSvg(SvgDocument);

/// A marker as found in a marked-up document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkerInfo {
    /// `None` when the `role` attribute is missing or invalid.
    pub role: Option<LayerRole>,
    pub raw_role: Option<String>,
    pub desc: Option<String>,
    pub slot: Option<String>,
    pub kind: Option<String>,
    pub tag: String,
    /// Ids of direct element children (excluding nested markers).
    pub member_ids: Vec<ElementId>,
    /// Ids of every element below the marker.
    pub covered_ids: Vec<ElementId>,
    /// Role of the nearest enclosing marker, if any.
    pub parent_role: Option<Option<LayerRole>>,
    pub depth: usize,
}

impl MarkedUpSvg {
    /// Wraps a document as-is. Callers are expected to validate it.
    pub fn from_document(doc: SvgDocument) -> Self {
        MarkedUpSvg(doc)
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, super::SvgError> {
        super::parse(bytes).map(MarkedUpSvg)
    }

    pub fn document(&self) -> &SvgDocument {
        &self.0
    }

    pub fn into_document(self) -> SvgDocument {
        self.0
    }

    pub fn to_xml(&self) -> String {
        self.0.to_xml()
    }

    pub fn markers(&self) -> Vec<MarkerInfo> {
        let mut out = Vec::new();
        collect_markers(&self.0.root, None, 0, &mut out);
        out
    }

    pub fn slot(&self, name: &str) -> Option<MarkerInfo> {
        self.markers().into_iter().find(|m| m.slot.as_deref() == Some(name))
    }

    /// Role of the marker enclosing `id`, innermost first.
    pub fn role_of(&self, id: ElementId) -> Option<LayerRole> {
        self.markers()
            .into_iter()
            .filter(|m| m.covered_ids.contains(&id))
            .max_by_key(|m| m.depth)
            .and_then(|m| m.role)
    }
}

fn collect_markers(
    e: &Element,
    parent: Option<Option<LayerRole>>,
    depth: usize,
    out: &mut Vec<MarkerInfo>,
) {
    for child in e.element_children() {
        if child.is_marker() {
            let raw_role = child.attr("role").map(str::to_string);
            let role = raw_role.as_deref().and_then(|r| r.parse().ok());
            let member_ids = child
                .element_children()
                .filter(|c| !c.is_marker())
                .filter_map(Element::id)
                .collect();
            let covered_ids =
                child.descendants().skip(1).filter_map(Element::id).collect();
            out.push(MarkerInfo {
                role,
                raw_role,
                desc: child.attr_unescaped("desc"),
                slot: child.attr_unescaped("slot"),
                kind: child.attr_unescaped("kind"),
                tag: child.tag.clone(),
                member_ids,
                covered_ids,
                parent_role: parent,
                depth,
            });
            collect_markers(child, Some(role), depth + 1, out);
        } else {
            collect_markers(child, parent, depth, out);
        }
    }
}

/// Wraps each group's members in a `dw:group` marker.
///
/// Larger groups are inserted first so that a smaller group nested inside a
/// larger one finds its members under the outer marker.
pub fn insert_markers(
    doc: &SvgDocument,
    groups: &[GroupMarker],
) -> Result<MarkedUpSvg, MarkupError> {
    let mut order: Vec<&GroupMarker> = groups.iter().collect();
    order.sort_by_key(|g| std::cmp::Reverse(g.member_ids.len()));
    let mut root = doc.root.clone();
    for group in order {
        wrap(&mut root, group)?;
    }
    Ok(MarkedUpSvg(doc.with_root(root)))
}

fn wrap(root: &mut Element, group: &GroupMarker) -> Result<(), MarkupError> {
    let first = *group.member_ids.first().ok_or(MarkupError::EmptyGroup)?;
    let mut locations = HashMap::new();
    locate(root, &mut Vec::new(), &mut locations);
    let members: BTreeSet<ElementId> = group.member_ids.iter().copied().collect();
    let mut parent_path: Option<&Vec<usize>> = None;
    let mut indices = Vec::new();
    for id in &members {
        let (path, idx) = locations.get(id).ok_or(MarkupError::UnknownId(*id))?;
        if parent_path.is_some_and(|p| p != path) {
            return Err(MarkupError::NonContiguousMembers(group.member_ids.clone()));
        }
        parent_path = Some(path);
        indices.push(*idx);
    }
    let non_contiguous = || MarkupError::NonContiguousMembers(group.member_ids.clone());
    if members.len() != group.member_ids.len() {
        return Err(non_contiguous());
    }
    let path = parent_path.cloned().ok_or(MarkupError::UnknownId(first))?;
    let parent = element_at(root, &path);
    let lo = *indices.iter().min().unwrap_or(&0);
    let hi = *indices.iter().max().unwrap_or(&0);
    let contiguous = parent.children[lo..=hi].iter().all(|n| match n {
        Node::Element(e) => e.id().is_some_and(|id| members.contains(&id)),
        _ => true,
    });
    if !contiguous {
        return Err(non_contiguous());
    }
    let wrapped: Vec<Node> = parent.children.drain(lo..=hi).collect();
    let mut marker = Element::new(MARKER_TAG);
    marker.set_attr("role", group.role.as_str());
    if !group.label.is_empty() {
        marker.set_attr("desc", &group.label);
    }
    if let Some(slot) = &group.slot {
        marker.set_attr("slot", slot);
    }
    if let Some(kind) = &group.kind {
        marker.set_attr("kind", kind);
    }
    marker.children = wrapped;
    parent.children.insert(lo, Node::Element(marker));
    Ok(())
}

fn locate(e: &Element, path: &mut Vec<usize>, out: &mut HashMap<ElementId, (Vec<usize>, usize)>) {
    for (i, child) in e.children.iter().enumerate() {
        if let Node::Element(c) = child {
            if let Some(id) = c.id() {
                out.insert(id, (path.clone(), i));
            }
            path.push(i);
            locate(c, path, out);
            path.pop();
        }
    }
}

fn element_at<'a>(root: &'a mut Element, path: &[usize]) -> &'a mut Element {
    let mut cur = root;
    for &i in path {
        cur = match &mut cur.children[i] {
            Node::Element(e) => e,
            _ => unreachable!("paths only address elements"),
        };
    }
    cur
}

/// Removes every `dw:` element, splicing its children in its place.
pub fn strip_markers(doc: &MarkedUpSvg) -> SvgDocument {
    let mut root = doc.0.root.clone();
    splice(&mut root);
    doc.0.with_root(root)
}

pub(crate) fn splice(e: &mut Element) {
    let children = std::mem::take(&mut e.children);
    for child in children {
        match child {
            Node::Element(mut c) => {
                splice(&mut c);
                if c.is_marker() {
                    e.children.extend(c.children);
                } else {
                    e.children.push(Node::Element(c));
                }
            }
            other => e.children.push(other),
        }
    }
}
