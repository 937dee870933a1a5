//! Layered intermediate representation of a decomposed chart: global
//! properties, role-tagged layers and the recovered dataset.
//!
//! The text form is canonical JSON (sorted keys, two-space indentation) so
//! equal representations serialize to equal bytes.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::data::{Column, ColumnKind, Dataset, Value};
use crate::report::{IssueKind, ValidationReport};
pub use crate::svg::LayerRole;
use crate::svg::{Element, ElementId, MarkedUpSvg};

pub const IR_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Coordinate {
    Cartesian,
    Polar,
    Customized,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum Prototype {
    Bar,
    Scatterplot,
    Line,
    Area,
    Radar,
    Pie,
    Other(String),
}

impl From<String> for Prototype {
    fn from(s: String) -> Self {
        match s.as_str() {
            "Bar" => Prototype::Bar,
            "Scatterplot" => Prototype::Scatterplot,
            "Line" => Prototype::Line,
            "Area" => Prototype::Area,
            "Radar" => Prototype::Radar,
            "Pie" => Prototype::Pie,
            _ => Prototype::Other(s),
        }
    }
}

impl From<Prototype> for String {
    fn from(p: Prototype) -> String {
        p.to_string()
    }
}

impl fmt::Display for Prototype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Prototype::Bar => "Bar",
            Prototype::Scatterplot => "Scatterplot",
            Prototype::Line => "Line",
            Prototype::Area => "Area",
            Prototype::Radar => "Radar",
            Prototype::Pie => "Pie",
            Prototype::Other(s) => s,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Size {
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl BBox {
    pub fn contains(&self, p: Position) -> bool {
        const SLACK: f64 = 1e-9;
        p.x >= self.x - SLACK
            && p.x <= self.x + self.width + SLACK
            && p.y >= self.y - SLACK
            && p.y <= self.y + self.height + SLACK
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalProperties {
    pub coordinate: Coordinate,
    pub origin: Position,
    pub canvas_bbox: BBox,
    pub prototype: Prototype,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MarkType {
    DeformedPath,
    TrendPath,
    AtomicShapes,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedAttribute {
    pub attribute: String,
    pub field: String,
    pub scale_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkSpec {
    pub mark_type: MarkType,
    pub encoded_attributes: Vec<EncodedAttribute>,
    pub fixed_attributes: BTreeMap<String, String>,
    pub member_ids: Vec<ElementId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    X,
    Y,
    Angular,
    Radial,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub orientation: Orientation,
    pub gridline_ids: Vec<ElementId>,
    pub label_ids: Vec<ElementId>,
    pub scale_id: String,
    /// Whether the axis drives a quantitative scale.
    #[serde(default)]
    pub quantitative: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegendEntry {
    pub value: String,
    pub swatch_id: ElementId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelGroup {
    pub channel: String,
    pub entries: Vec<LegendEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegendSpec {
    pub position: Position,
    pub size: Size,
    pub channel_groups: Vec<ChannelGroup>,
    /// Legend text and frame elements that are not swatches.
    #[serde(default)]
    pub label_ids: Vec<ElementId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntermediateRepresentation {
    pub ir_version: u32,
    pub globals: GlobalProperties,
    pub marks: Vec<MarkSpec>,
    pub axes: Vec<AxisSpec>,
    pub legends: Vec<LegendSpec>,
    pub text_layer_ids: Vec<ElementId>,
    pub decorative_layer_ids: Vec<ElementId>,
    pub configuration_layer_ids: Vec<ElementId>,
    pub dataset: Dataset,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IrError {
    #[error("IR parse error at {path}: {message}")]
    Parse { path: String, message: String },
    #[error("IR invariant violated at {path}: {message}")]
    Invariant { path: String, message: String },
}

impl IntermediateRepresentation {
    /// Ids per role partition. Data-driven ids gather marks, axes and legends.
    pub fn partition(&self, role: LayerRole) -> Vec<ElementId> {
        match role {
            LayerRole::DataDriven => {
                let mut ids = Vec::new();
                for m in &self.marks {
                    ids.extend(&m.member_ids);
                }
                for a in &self.axes {
                    ids.extend(&a.gridline_ids);
                    ids.extend(&a.label_ids);
                }
                for l in &self.legends {
                    ids.extend(l.channel_groups.iter().flat_map(|g| g.entries.iter().map(|e| e.swatch_id)));
                    ids.extend(&l.label_ids);
                }
                ids
            }
            LayerRole::Text => self.text_layer_ids.clone(),
            LayerRole::Decorative => self.decorative_layer_ids.clone(),
            LayerRole::Configuration => self.configuration_layer_ids.clone(),
        }
    }

    pub fn all_ids(&self) -> Vec<ElementId> {
        LayerRole::ALL.iter().flat_map(|r| self.partition(*r)).collect()
    }

    /// Checks the structural invariants that hold independently of any
    /// document.
    pub fn check_invariants(&self) -> Result<(), IrError> {
        let inv = |path: &str, message: String| IrError::Invariant { path: path.to_string(), message };
        if self.ir_version != IR_VERSION {
            return Err(inv("ir_version", format!("unsupported version {}", self.ir_version)));
        }
        let b = &self.globals.canvas_bbox;
        if !(b.width > 0.0) {
            return Err(inv("globals.canvas_bbox.width", format!("must be positive, got {}", b.width)));
        }
        if !(b.height > 0.0) {
            return Err(inv("globals.canvas_bbox.height", format!("must be positive, got {}", b.height)));
        }
        if !b.contains(self.globals.origin) {
            return Err(inv("globals.origin", "origin lies outside the canvas bounding box".into()));
        }
        for (i, m) in self.marks.iter().enumerate() {
            if let Some(e) = m.encoded_attributes.iter().find(|e| m.fixed_attributes.contains_key(&e.attribute)) {
                return Err(inv(
                    &format!("marks[{i}].fixed_attributes"),
                    format!("`{}` is both encoded and fixed", e.attribute),
                ));
            }
        }
        for (i, l) in self.legends.iter().enumerate() {
            if l.size.width < 0.0 || l.size.height < 0.0 {
                return Err(inv(&format!("legends[{i}].size"), "size must be nonnegative".into()));
            }
        }
        self.dataset.check().map_err(|m| inv("dataset", m))
    }
}

/// Canonical JSON text.
pub fn serialize_ir(ir: &IntermediateRepresentation) -> String {
    let value = serde_json::to_value(ir).expect("IR is always representable as JSON");
    let mut text = serde_json::to_string_pretty(&value).expect("JSON values serialize");
    text.push('\n');
    text
}

pub fn parse_ir(text: &str) -> Result<IntermediateRepresentation, IrError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let ir: IntermediateRepresentation = serde_path_to_error::deserialize(de).map_err(|e| IrError::Parse {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    ir.check_invariants()?;
    Ok(ir)
}

/// Tags treated as structural containers: they need no role of their own
/// when they only group other elements.
const CONTAINER_TAGS: &[&str] = &["svg", "g", "a", "switch"];

pub(crate) fn is_structural(e: &Element) -> bool {
    CONTAINER_TAGS.contains(&e.tag.as_str()) && e.element_children().next().is_some()
}

/// Checks an IR against the marked-up document it describes.
pub fn validate_ir(ir: &IntermediateRepresentation, doc: &MarkedUpSvg) -> ValidationReport {
    let mut report = ValidationReport::default();
    if let Err(e) = ir.check_invariants() {
        report.push(IssueKind::InvariantViolation, e.to_string());
    }

    let mut partition_of: HashMap<ElementId, Vec<LayerRole>> = HashMap::new();
    for role in LayerRole::ALL {
        let mut seen = BTreeSet::new();
        for id in ir.partition(role) {
            if seen.insert(id) {
                partition_of.entry(id).or_default().push(role);
            }
        }
    }

    let doc_ids: BTreeSet<ElementId> = doc.document().ids().into_iter().collect();
    let dangling: Vec<_> = partition_of.keys().filter(|id| !doc_ids.contains(id)).copied().collect::<BTreeSet<_>>().into_iter().collect();
    if !dangling.is_empty() {
        report.push_ids(IssueKind::DanglingId, format!("ids absent from the document: {dangling:?}"), dangling);
    }
    let mut duplicates: Vec<_> = partition_of.iter().filter(|(_, r)| r.len() > 1).map(|(id, _)| *id).collect();
    duplicates.sort();
    if !duplicates.is_empty() {
        report.push_ids(IssueKind::DuplicateId, format!("ids in more than one role: {duplicates:?}"), duplicates);
    }

    let mut orphans = Vec::new();
    walk_coverage(&doc.document().root, false, &partition_of, &mut orphans);
    if !orphans.is_empty() {
        report.push_ids(IssueKind::OrphanId, format!("ids without a role: {orphans:?}"), orphans);
    }

    for (i, m) in ir.marks.iter().enumerate() {
        for e in &m.encoded_attributes {
            if ir.dataset.column(&e.field).is_none() {
                report.push(
                    IssueKind::SchemaMismatch,
                    format!("marks[{i}] encodes `{}` from unknown field `{}`", e.attribute, e.field),
                );
            }
            if e.scale_id.is_empty() {
                report.push(IssueKind::ScaleGap, format!("marks[{i}] encodes `{}` without a scale", e.attribute));
            }
        }
    }
    let mark_scales: BTreeSet<&str> =
        ir.marks.iter().flat_map(|m| m.encoded_attributes.iter().map(|e| e.scale_id.as_str())).collect();
    for (i, a) in ir.axes.iter().enumerate() {
        if !mark_scales.contains(a.scale_id.as_str()) {
            report.push(IssueKind::ScaleGap, format!("axes[{i}] scale `{}` is used by no mark", a.scale_id));
        }
        if a.quantitative && a.label_ids.len() < 2 {
            report.push(IssueKind::InvariantViolation, format!("axes[{i}] is quantitative with fewer than 2 labels"));
        }
    }
    for (i, l) in ir.legends.iter().enumerate() {
        for g in &l.channel_groups {
            for e in &g.entries {
                if !doc_ids.contains(&e.swatch_id) {
                    report.push_ids(
                        IssueKind::DanglingId,
                        format!("legends[{i}] swatch {} does not exist", e.swatch_id),
                        vec![e.swatch_id],
                    );
                }
            }
        }
    }
    report
}

fn walk_coverage(
    e: &Element,
    covered: bool,
    partition_of: &HashMap<ElementId, Vec<LayerRole>>,
    orphans: &mut Vec<ElementId>,
) {
    let id = e.id();
    let here = covered || id.is_some_and(|id| partition_of.contains_key(&id));
    if let Some(id) = id {
        if !here && !is_structural(e) {
            orphans.push(id);
        }
    }
    for c in e.element_children() {
        walk_coverage(c, here, partition_of, orphans);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::svg::{assign_ids, parse};

    /// svg(1) > style(2), rect bg(3), text title(4), rect(5), rect(6), text(7)
    fn toy() -> (IntermediateRepresentation, MarkedUpSvg) {
        let doc = assign_ids(
            &parse(
                br#"<svg width="100" height="100"><style/><rect width="100" height="100"/><text>T</text><rect x="10" y="50" width="20" height="50"/><rect x="40" y="20" width="20" height="80"/><text>0</text></svg>"#,
            )
            .unwrap(),
        )
        .unwrap();
        let ir = IntermediateRepresentation {
            ir_version: IR_VERSION,
            globals: GlobalProperties {
                coordinate: Coordinate::Cartesian,
                origin: Position { x: 0.0, y: 100.0 },
                canvas_bbox: BBox { x: 0.0, y: 0.0, width: 100.0, height: 100.0 },
                prototype: Prototype::Bar,
            },
            marks: vec![MarkSpec {
                mark_type: MarkType::AtomicShapes,
                encoded_attributes: vec![EncodedAttribute {
                    attribute: "height".into(),
                    field: "value".into(),
                    scale_id: "y".into(),
                }],
                fixed_attributes: BTreeMap::from([("fill".to_string(), "#333".to_string())]),
                member_ids: vec![ElementId(5), ElementId(6)],
            }],
            axes: vec![AxisSpec {
                orientation: Orientation::Y,
                gridline_ids: vec![],
                label_ids: vec![ElementId(7)],
                scale_id: "y".into(),
                quantitative: false,
            }],
            legends: vec![],
            text_layer_ids: vec![ElementId(4)],
            decorative_layer_ids: vec![ElementId(3)],
            configuration_layer_ids: vec![ElementId(2)],
            dataset: Dataset::new(
                vec![Column::new("value", ColumnKind::Number)],
                vec![vec![Value::Number(50.0)], vec![Value::Number(80.0)]],
            ),
        };
        (ir, MarkedUpSvg::from_document(doc))
    }

    #[test]
    fn complete_ir_is_admissible() {
        let (ir, doc) = toy();
        let report = validate_ir(&ir, &doc);
        assert!(report.is_empty(), "{report}");
    }

    #[test]
    fn omitted_id_is_orphan() {
        let (mut ir, doc) = toy();
        ir.marks[0].member_ids.retain(|id| id.0 != 5);
        let report = validate_ir(&ir, &doc);
        assert_eq!(report.ids(IssueKind::OrphanId), vec![ElementId(5)]);
    }

    #[test]
    fn dangling_and_duplicate_ids() {
        let (mut ir, doc) = toy();
        ir.text_layer_ids.push(ElementId(42));
        ir.decorative_layer_ids.push(ElementId(4));
        let report = validate_ir(&ir, &doc);
        assert_eq!(report.ids(IssueKind::DanglingId), vec![ElementId(42)]);
        assert_eq!(report.ids(IssueKind::DuplicateId), vec![ElementId(4)]);
    }

    #[test]
    fn misspelled_field_is_schema_mismatch() {
        let (mut ir, doc) = toy();
        ir.marks[0].encoded_attributes[0].field = "valu".into();
        let report = validate_ir(&ir, &doc);
        assert_eq!(report.of_kind(IssueKind::SchemaMismatch).count(), 1);
    }

    #[test]
    fn axis_scale_without_mark_is_gap() {
        let (mut ir, doc) = toy();
        ir.axes[0].scale_id = "x".into();
        assert_eq!(validate_ir(&ir, &doc).of_kind(IssueKind::ScaleGap).count(), 1);
    }

    #[test]
    fn round_trip_is_canonical() {
        let (ir, _) = toy();
        let text = serialize_ir(&ir);
        let back = parse_ir(&text).unwrap();
        assert_eq!(back, ir);
        assert_eq!(serialize_ir(&back), text);
        // keys are sorted
        let globals = text.find("\"globals\"").unwrap();
        let axes = text.find("\"axes\"").unwrap();
        assert!(axes < globals);
    }

    #[test]
    fn unknown_coordinate_reports_path() {
        let (ir, _) = toy();
        let text = serialize_ir(&ir).replace("\"Cartesian\"", "\"Spherical\"");
        match parse_ir(&text) {
            Err(IrError::Parse { path, .. }) => assert_eq!(path, "globals.coordinate"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_width_is_invariant_error() {
        let (mut ir, _) = toy();
        ir.globals.canvas_bbox.width = -5.0;
        match parse_ir(&serialize_ir(&ir)) {
            Err(IrError::Invariant { path, .. }) => assert_eq!(path, "globals.canvas_bbox.width"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn other_prototype_round_trips() {
        let (mut ir, _) = toy();
        ir.globals.prototype = Prototype::Other("Sankey".into());
        assert_eq!(parse_ir(&serialize_ir(&ir)).unwrap().globals.prototype, Prototype::Other("Sankey".into()));
    }
}
