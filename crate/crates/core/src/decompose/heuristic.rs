//! Deterministic decomposition of simple charts.
//!
//! Recognizes one data series of a known prototype, inverts its positional
//! encoding through the axis labels (or normalizes to [0, 1] without them)
//! and assigns every remaining element to a non-data role.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::f64::consts::{PI, TAU};

use super::DecomposeError;
use crate::data::{Column, ColumnKind, Dataset, Value};
use crate::geom::{parse_path, parse_points, path_points, tidy, Point, Segment};
use crate::ir::*;
use crate::svg::{assign_ids, insert_markers, Element, ElementId, GroupMarker, LayerRole, MarkedUpSvg, SvgDocument, ID_ATTR};

/// Elements that only configure rendering.
const CONFIG_TAGS: &[&str] = &[
    "style", "defs", "script", "metadata", "title", "desc", "clipPath", "mask", "linearGradient",
    "radialGradient", "filter", "marker", "pattern", "symbol",
];

const EPS: f64 = 0.01;

/// Attributes that carry geometry and are never copied as fixed attributes.
const POSITIONAL: &[&str] =
    &["x", "y", "width", "height", "r", "cx", "cy", "rx", "ry", "x1", "y1", "x2", "y2", "points", "d", ID_ATTR];

#[derive(Debug, Clone)]
struct Label {
    id: ElementId,
    pos: Point,
    content: String,
    number: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
struct LineSeg {
    id: ElementId,
    a: Point,
    b: Point,
}

/// Result of a successful decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub marked: MarkedUpSvg,
    pub dataset: Dataset,
    pub ir: IntermediateRepresentation,
}

pub(crate) fn numeric(s: &str) -> Option<f64> {
    let t: String = s.trim().chars().filter(|c| !matches!(c, ',' | '$' | '%' | '\u{a0}')).collect();
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn fill_of(e: &Element) -> Option<String> {
    e.attr_unescaped("fill")
}

fn has_fill(e: &Element) -> bool {
    fill_of(e).map_or(true, |f| f.trim() != "none" && f.trim() != "transparent")
}

fn label_of(e: &Element) -> Label {
    let x = e.attr_f64("x").unwrap_or(0.0);
    let mut y = e.attr_f64("y").unwrap_or(0.0);
    let centered = matches!(e.attr("dominant-baseline"), Some("middle" | "central"));
    if !centered {
        // baseline-anchored text: move to the visual center of the glyphs
        y -= 0.35 * e.attr_f64("font-size").unwrap_or(11.0);
    }
    let content = e.text_content().trim().to_string();
    Label { id: e.id().expect("ids assigned"), pos: Point::new(x, y), number: numeric(&content), content }
}

/// Least-squares fit `value = a * pixel + b`.
pub(crate) fn fit(pairs: &[(f64, f64)]) -> Option<(f64, f64)> {
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx < 1e-9 {
        return None;
    }
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let a = sxy / sxx;
    Some((a, my - a * mx))
}

/// Largest set of labels sharing one coordinate (`x` when `by_x`).
fn aligned(labels: &[Label], by_x: bool) -> Vec<Label> {
    let key = |l: &Label| if by_x { l.pos.x } else { l.pos.y };
    let mut best: Vec<Label> = Vec::new();
    for l in labels {
        let group: Vec<Label> = labels.iter().filter(|m| (key(m) - key(l)).abs() < 0.5).cloned().collect();
        if group.len() > best.len() {
            best = group;
        }
    }
    if best.len() >= 2 {
        best
    } else {
        Vec::new()
    }
}

fn normalize(values: &[f64]) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min).min(0.0);
    if max - min < 1e-12 {
        return values.iter().map(|_| 1.0).collect();
    }
    values.iter().map(|v| (v - min) / (max - min)).collect()
}

/// Splits ids into maximal runs of adjacent siblings, as required for
/// wrapping each run in one marker.
pub(crate) fn sibling_runs(root: &Element, ids: &[ElementId]) -> Vec<Vec<ElementId>> {
    let wanted: BTreeSet<ElementId> = ids.iter().copied().collect();
    let mut runs = Vec::new();
    fn walk(e: &Element, wanted: &BTreeSet<ElementId>, runs: &mut Vec<Vec<ElementId>>) {
        let mut current: Vec<ElementId> = Vec::new();
        for c in e.element_children() {
            match c.id().filter(|id| wanted.contains(id)) {
                Some(id) => current.push(id),
                None => {
                    if !current.is_empty() {
                        runs.push(std::mem::take(&mut current));
                    }
                    walk(c, wanted, runs);
                }
            }
        }
        if !current.is_empty() {
            runs.push(current);
        }
    }
    walk(root, &wanted, &mut runs);
    runs
}

struct Groups {
    markers: Vec<GroupMarker>,
}

impl Groups {
    fn add(&mut self, root: &Element, role: LayerRole, desc: &str, slot: Option<&str>, kind: Option<&str>, ids: &[ElementId]) {
        for (i, run) in sibling_runs(root, ids).into_iter().enumerate() {
            let mut m = GroupMarker::new(role, desc, run);
            if let Some(s) = slot {
                m = m.with_slot(if i == 0 { s.to_string() } else { format!("{s}-{}", i + 1) });
            }
            if let Some(k) = kind {
                m = m.with_kind(k);
            }
            self.markers.push(m);
        }
    }
}

enum Series {
    Bar(Vec<ElementId>),
    Scatter(Vec<ElementId>),
    Trend { id: ElementId, area: bool, points: Vec<Point>, baseline: Option<f64> },
    Radar { polygon: ElementId, center: Point, radius: f64, spokes: Vec<ElementId>, rings: Vec<ElementId> },
    Pie { sectors: Vec<ElementId>, center: Point },
}

fn line_of(e: &Element) -> LineSeg {
    let g = |n| e.attr_f64(n).unwrap_or(0.0);
    LineSeg { id: e.id().unwrap(), a: Point::new(g("x1"), g("y1")), b: Point::new(g("x2"), g("y2")) }
}

/// `(center, start, end, large, sweep)` of a `M c L p0 A ... p1 Z` sector.
fn sector(d: &str) -> Option<(Point, Point, Point, bool, bool)> {
    match parse_path(d).ok()?.as_slice() {
        [Segment::MoveTo(c), Segment::LineTo(p0), Segment::Arc { to, large, sweep, .. }, Segment::Close] => {
            Some((*c, *p0, *to, *large, *sweep))
        }
        _ => None,
    }
}

fn sector_span(c: Point, p0: Point, p1: Point, large: bool, sweep: bool) -> f64 {
    let a0 = (p0.y - c.y).atan2(p0.x - c.x);
    let a1 = (p1.y - c.y).atan2(p1.x - c.x);
    let mut span = if sweep { a1 - a0 } else { a0 - a1 }.rem_euclid(TAU);
    if span < 1e-9 && large {
        span = TAU;
    }
    span
}

fn same(a: Point, b: Point) -> bool {
    a.dist(b) < 0.5
}

fn detect(shapes: &[&Element], lines: &[LineSeg]) -> Option<Series> {
    // pie: sectors sharing a center
    let sectors: Vec<(&Element, Point)> = shapes
        .iter()
        .filter(|e| e.tag == "path")
        .filter_map(|e| sector(e.attr("d")?).map(|s| (*e, s.0)))
        .collect();
    if sectors.len() >= 2 && sectors.iter().all(|s| same(s.1, sectors[0].1)) {
        return Some(Series::Pie { sectors: sectors.iter().map(|s| s.0.id().unwrap()).collect(), center: sectors[0].1 });
    }

    // radar: filled polygon plus at least three spokes from one point
    let filled: Vec<&&Element> = shapes.iter().filter(|e| e.tag == "polygon" && has_fill(e)).collect();
    if filled.len() == 1 && lines.len() >= 3 {
        let mut ends: Vec<Point> = Vec::new();
        for l in lines {
            ends.push(l.a);
            ends.push(l.b);
        }
        let center = ends.iter().copied().max_by_key(|p| ends.iter().filter(|q| same(*p, **q)).count())?;
        let spokes: Vec<&LineSeg> = lines.iter().filter(|l| same(l.a, center) || same(l.b, center)).collect();
        if spokes.len() >= 3 {
            let radius = spokes.iter().map(|l| l.a.dist(l.b)).fold(0.0, f64::max);
            let rings = shapes
                .iter()
                .filter(|e| e.tag == "polygon" && !has_fill(e))
                .filter(|e| {
                    let pts = e.attr("points").and_then(parse_points).unwrap_or_default();
                    let r0 = pts.first().map(|p| p.dist(center)).unwrap_or(0.0);
                    !pts.is_empty() && pts.iter().all(|p| (p.dist(center) - r0).abs() < 0.5)
                })
                .map(|e| e.id().unwrap())
                .collect();
            return Some(Series::Radar {
                polygon: filled[0].id().unwrap(),
                center,
                radius,
                spokes: spokes.iter().map(|l| l.id).collect(),
                rings,
            });
        }
    }

    // bars: equal-width rects on a common baseline
    let rects: Vec<&&Element> = shapes.iter().filter(|e| e.tag == "rect").collect();
    if rects.len() >= 2 {
        let w0 = rects[0].attr_f64("width").unwrap_or(0.0);
        let bottom = |e: &Element| e.attr_f64("y").unwrap_or(0.0) + e.attr_f64("height").unwrap_or(0.0);
        let b0 = bottom(rects[0]);
        if w0 > 0.0
            && rects.iter().all(|r| (r.attr_f64("width").unwrap_or(0.0) - w0).abs() < EPS && (bottom(r) - b0).abs() < 0.5)
        {
            return Some(Series::Bar(rects.iter().map(|e| e.id().unwrap()).collect()));
        }
    }

    // scatter: equal-radius circles
    let circles: Vec<&&Element> = shapes.iter().filter(|e| e.tag == "circle").collect();
    if circles.len() >= 2 {
        let r0 = circles[0].attr_f64("r").unwrap_or(0.0);
        if circles.iter().all(|c| (c.attr_f64("r").unwrap_or(0.0) - r0).abs() < EPS) {
            return Some(Series::Scatter(circles.iter().map(|e| e.id().unwrap()).collect()));
        }
    }

    // line or area: a single straight-segment path, monotone in x
    let paths: Vec<&&Element> = shapes.iter().filter(|e| e.tag == "path").collect();
    if paths.len() == 1 {
        let e = paths[0];
        let segs = parse_path(e.attr("d")?).ok()?;
        if segs.iter().all(|s| matches!(s, Segment::MoveTo(_) | Segment::LineTo(_) | Segment::Close)) {
            let subs = path_points(e.attr("d")?).ok()?;
            if subs.len() == 1 {
                let closed = subs[0].closed && has_fill(e);
                let mut pts = subs[0].points.clone();
                let mut baseline = None;
                if closed && pts.len() >= 4 {
                    let n = pts.len();
                    let (last, back) = (pts[n - 1], pts[n - 2]);
                    if (last.y - back.y).abs() < EPS && (last.x - pts[0].x).abs() < EPS && (back.x - pts[n - 3].x).abs() < EPS {
                        baseline = Some(last.y);
                        pts.truncate(n - 2);
                    }
                }
                let monotone = pts.windows(2).all(|w| w[1].x > w[0].x);
                if monotone && pts.len() >= 2 && (!closed || baseline.is_some()) {
                    return Some(Series::Trend { id: e.id().unwrap(), area: closed, points: pts, baseline });
                }
            }
        }
    }
    None
}

fn nearest_label<'a>(labels: &'a [Label], used: &mut BTreeSet<ElementId>, score: impl Fn(&Label) -> f64, limit: f64) -> Option<&'a Label> {
    let best = labels
        .iter()
        .filter(|l| !used.contains(&l.id))
        .map(|l| (score(l), l))
        .filter(|(s, _)| *s <= limit)
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, l)| l)?;
    used.insert(best.id);
    Some(best)
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Distance from a label to the rim point of a direction, or infinity when
/// the label lies outside the angular window around it.
fn polar_score(l: &Label, center: Point, angle: f64, window: f64, rim: Point) -> f64 {
    if angle_diff((l.pos.y - center.y).atan2(l.pos.x - center.x), angle) > window {
        return f64::INFINITY;
    }
    l.pos.dist(rim)
}

fn common_attrs(doc: &SvgDocument, ids: &[ElementId]) -> (BTreeMap<String, String>, Vec<String>) {
    let els: Vec<&Element> = ids.iter().filter_map(|id| doc.find(*id)).collect();
    let mut names: Vec<&str> = els.iter().flat_map(|e| e.attributes.iter().map(|a| a.name.as_str())).collect();
    names.sort();
    names.dedup();
    let mut fixed = BTreeMap::new();
    let mut varying = Vec::new();
    for n in names {
        if POSITIONAL.contains(&n) {
            continue;
        }
        let first = els[0].attr_unescaped(n);
        if els.iter().all(|e| e.attr_unescaped(n) == first) {
            if let Some(v) = first {
                fixed.insert(n.to_string(), v);
            }
        } else {
            varying.push(n.to_string());
        }
    }
    (fixed, varying)
}

fn enc(attribute: &str, field: &str, scale: &str) -> EncodedAttribute {
    EncodedAttribute { attribute: attribute.into(), field: field.into(), scale_id: scale.into() }
}

fn table(columns: [(&str, ColumnKind); 2], rows: Vec<(Value, Value)>) -> Dataset {
    Dataset::new(
        columns.iter().map(|(n, k)| Column::new(*n, *k)).collect(),
        rows.into_iter().map(|(a, b)| vec![tidy_value(a), tidy_value(b)]).collect(),
    )
}

fn tidy_value(v: Value) -> Value {
    match v {
        Value::Number(x) => Value::Number(tidy(x)),
        v => v,
    }
}

fn tidy_position(p: Position) -> Position {
    Position { x: tidy(p.x), y: tidy(p.y) }
}

/// Decomposes a chart of one of the supported prototypes. Documents without
/// ids are numbered first.
pub fn heuristic_decompose(doc: &SvgDocument) -> Result<Decomposition, DecomposeError> {
    let doc = if doc.elements().any(|e| e.id().is_some()) { doc.clone() } else { assign_ids(doc)? };
    let (cx0, cy0, cw, ch) = match (doc.view_box(), doc.viewport()) {
        (Some(vb), _) => vb,
        (None, Some((w, h))) => (0.0, 0.0, w, h),
        (None, None) => return Err(DecomposeError::UnrecognizedStructure("the canvas has no size".into())),
    };

    let mut config = Vec::new();
    let mut decorative = Vec::new();
    let mut texts = Vec::new();
    let mut lines = Vec::new();
    let mut shapes: Vec<&Element> = Vec::new();
    fn visit<'a>(
        e: &'a Element,
        size: (f64, f64),
        config: &mut Vec<ElementId>,
        decorative: &mut Vec<ElementId>,
        texts: &mut Vec<&'a Element>,
        lines: &mut Vec<LineSeg>,
        shapes: &mut Vec<&'a Element>,
    ) {
        for c in e.element_children() {
            let id = c.id().expect("ids assigned");
            match c.tag.as_str() {
                t if CONFIG_TAGS.contains(&t) => config.push(id),
                "g" | "a" | "switch" | "svg" if c.element_children().next().is_some() => {
                    visit(c, size, config, decorative, texts, lines, shapes)
                }
                "text" => texts.push(c),
                "line" => lines.push(line_of(c)),
                "rect" if c.attr_f64("width").unwrap_or(0.0) >= 0.9 * size.0
                    && c.attr_f64("height").unwrap_or(0.0) >= 0.9 * size.1 =>
                {
                    decorative.push(id)
                }
                "rect" | "circle" | "ellipse" | "polygon" | "polyline" | "path" => shapes.push(c),
                _ => decorative.push(id),
            }
        }
    }
    visit(&doc.root, (cw, ch), &mut config, &mut decorative, &mut texts, &mut lines, &mut shapes);

    let series = detect(&shapes, &lines)
        .ok_or_else(|| DecomposeError::UnrecognizedStructure("no supported chart series found".into()))?;
    let labels: Vec<Label> = texts.iter().map(|t| label_of(t)).collect();
    let numeric_labels: Vec<Label> = labels.iter().filter(|l| l.number.is_some()).cloned().collect();
    let word_labels: Vec<Label> = labels.iter().filter(|l| l.number.is_none()).cloned().collect();
    let horizontal: Vec<LineSeg> = lines.iter().filter(|l| (l.a.y - l.b.y).abs() < EPS).copied().collect();
    let vertical: Vec<LineSeg> = lines.iter().filter(|l| (l.a.x - l.b.x).abs() < EPS && (l.a.y - l.b.y).abs() >= EPS).copied().collect();

    let mut used: BTreeSet<ElementId> = BTreeSet::new();
    let mut groups = Groups { markers: Vec::new() };
    let root = &doc.root;
    let mut marks = Vec::new();
    let mut axes = Vec::new();
    let mut legends = Vec::new();
    let dataset;
    let coordinate;
    let prototype;
    let origin;

    let value_axis_fit = |used: &mut BTreeSet<ElementId>| -> (Vec<Label>, Option<(f64, f64)>) {
        let col = aligned(&numeric_labels, true);
        let f = fit(&col.iter().map(|l| (l.pos.y, l.number.unwrap())).collect::<Vec<_>>());
        if f.is_some() {
            used.extend(col.iter().map(|l| l.id));
            (col, f)
        } else {
            (Vec::new(), None)
        }
    };

    match &series {
        Series::Bar(ids) | Series::Scatter(ids) => {
            let els: Vec<&Element> = ids.iter().map(|id| doc.find(*id).unwrap()).collect();
            let is_bar = matches!(series, Series::Bar(_));
            let (value_labels, yfit) = value_axis_fit(&mut used);
            let (fixed, varying) = common_attrs(&doc, ids);
            if is_bar {
                let centers: Vec<f64> = els
                    .iter()
                    .map(|e| e.attr_f64("x").unwrap_or(0.0) + e.attr_f64("width").unwrap_or(0.0) / 2.0)
                    .collect();
                let width = els[0].attr_f64("width").unwrap_or(0.0);
                let tops: Vec<f64> = els.iter().map(|e| e.attr_f64("y").unwrap_or(0.0)).collect();
                let baseline = tops[0] + els[0].attr_f64("height").unwrap_or(0.0);
                let values = match yfit {
                    Some((a, b)) => tops.iter().map(|y| a * y + b).collect(),
                    None => normalize(&tops.iter().map(|y| baseline - y).collect::<Vec<_>>()),
                };
                let mut cat_ids = Vec::new();
                let cats: Vec<String> = centers
                    .iter()
                    .enumerate()
                    .map(|(i, c)| match nearest_label(&word_labels, &mut used, |l| (l.pos.x - c).abs(), width / 2.0) {
                        Some(l) => {
                            cat_ids.push(l.id);
                            l.content.clone()
                        }
                        None => format!("c{}", i + 1),
                    })
                    .collect();
                dataset = table(
                    [("category", ColumnKind::String), ("value", ColumnKind::Number)],
                    cats.into_iter().zip(values).map(|(c, v)| (Value::Text(c), Value::Number(v))).collect(),
                );
                let mut encoded = vec![enc("x", "category", "x"), enc("y", "value", "y"), enc("height", "value", "y")];
                if varying.iter().any(|a| a == "fill") {
                    encoded.push(enc("fill", "category", "color"));
                }
                marks.push(MarkSpec { mark_type: MarkType::AtomicShapes, encoded_attributes: encoded, fixed_attributes: fixed, member_ids: ids.clone() });
                groups.add(root, LayerRole::DataDriven, &format!("{} vertical bars", ids.len()), Some("marks"), Some("mark"), ids);
                if !cat_ids.is_empty() {
                    groups.add(root, LayerRole::DataDriven, "category labels", Some("category-labels"), Some("axis"), &cat_ids);
                    axes.push(AxisSpec { orientation: Orientation::X, gridline_ids: vec![], label_ids: cat_ids, scale_id: "x".into(), quantitative: false });
                }
                let xs: Vec<f64> = els.iter().map(|e| e.attr_f64("x").unwrap_or(0.0)).collect();
                let left = horizontal.iter().map(|l| l.a.x.min(l.b.x)).chain(xs).fold(f64::INFINITY, f64::min);
                origin = Position { x: left, y: baseline };
                prototype = Prototype::Bar;
            } else {
                let pts: Vec<Point> = els.iter().map(|e| Point::new(e.attr_f64("cx").unwrap_or(0.0), e.attr_f64("cy").unwrap_or(0.0))).collect();
                let xcol = aligned(&numeric_labels.iter().filter(|l| !used.contains(&l.id)).cloned().collect::<Vec<_>>(), false);
                let xfit = fit(&xcol.iter().map(|l| (l.pos.x, l.number.unwrap())).collect::<Vec<_>>());
                let xs: Vec<f64> = match xfit {
                    Some((a, b)) => pts.iter().map(|p| a * p.x + b).collect(),
                    None => normalize(&pts.iter().map(|p| p.x).collect::<Vec<_>>()),
                };
                let ys: Vec<f64> = match yfit {
                    Some((a, b)) => pts.iter().map(|p| a * p.y + b).collect(),
                    None => normalize(&pts.iter().map(|p| -p.y).collect::<Vec<_>>()),
                };
                dataset = table(
                    [("x", ColumnKind::Number), ("y", ColumnKind::Number)],
                    xs.into_iter().zip(ys).map(|(x, y)| (Value::Number(x), Value::Number(y))).collect(),
                );
                let mut encoded = vec![enc("cx", "x", "x"), enc("cy", "y", "y")];
                if varying.iter().any(|a| a == "fill") {
                    encoded.push(enc("fill", "x", "color"));
                }
                marks.push(MarkSpec { mark_type: MarkType::AtomicShapes, encoded_attributes: encoded, fixed_attributes: fixed, member_ids: ids.clone() });
                groups.add(root, LayerRole::DataDriven, &format!("{} circles", ids.len()), Some("marks"), Some("mark"), ids);
                let mut x_ids: Vec<ElementId> = Vec::new();
                if xfit.is_some() {
                    x_ids = xcol.iter().map(|l| l.id).collect();
                    used.extend(x_ids.iter().copied());
                    groups.add(root, LayerRole::DataDriven, "x axis labels", Some("category-labels"), Some("axis"), &x_ids);
                }
                let vgrid: Vec<ElementId> = vertical.iter().map(|l| l.id).collect();
                if !x_ids.is_empty() || !vgrid.is_empty() {
                    groups.add(root, LayerRole::DataDriven, "vertical gridlines", Some("x-grid"), Some("axis"), &vgrid);
                    axes.push(AxisSpec { orientation: Orientation::X, quantitative: x_ids.len() >= 2, gridline_ids: vgrid, label_ids: x_ids, scale_id: "x".into() });
                }
                let left = horizontal.iter().map(|l| l.a.x.min(l.b.x)).chain(pts.iter().map(|p| p.x)).fold(f64::INFINITY, f64::min);
                let bottom = horizontal.iter().map(|l| l.a.y).chain(pts.iter().map(|p| p.y)).fold(f64::NEG_INFINITY, f64::max);
                origin = Position { x: left, y: bottom };
                prototype = Prototype::Scatterplot;
            }
            let grid: Vec<ElementId> = horizontal.iter().map(|l| l.id).collect();
            let label_ids: Vec<ElementId> = value_labels.iter().map(|l| l.id).collect();
            if !grid.is_empty() || !label_ids.is_empty() {
                groups.add(root, LayerRole::DataDriven, "gridlines", Some("grid"), Some("axis"), &grid);
                groups.add(root, LayerRole::DataDriven, "value axis labels", Some("value-labels"), Some("axis"), &label_ids);
                axes.push(AxisSpec { orientation: Orientation::Y, quantitative: label_ids.len() >= 2, gridline_ids: grid, label_ids, scale_id: "y".into() });
            }
            coordinate = Coordinate::Cartesian;
        }
        Series::Trend { id, area, points, baseline } => {
            let (value_labels, yfit) = value_axis_fit(&mut used);
            let values = match yfit {
                Some((a, b)) => points.iter().map(|p| a * p.y + b).collect(),
                None => normalize(&points.iter().map(|p| -p.y).collect::<Vec<_>>()),
            };
            let half_step = points.windows(2).map(|w| w[1].x - w[0].x).fold(f64::INFINITY, f64::min) / 2.0;
            let mut cat_ids = Vec::new();
            let cats: Vec<String> = points
                .iter()
                .enumerate()
                .map(|(i, p)| match nearest_label(&word_labels, &mut used, |l| (l.pos.x - p.x).abs(), half_step) {
                    Some(l) => {
                        cat_ids.push(l.id);
                        l.content.clone()
                    }
                    None => format!("p{}", i + 1),
                })
                .collect();
            dataset = table(
                [("label", ColumnKind::String), ("value", ColumnKind::Number)],
                cats.into_iter().zip(values).map(|(c, v)| (Value::Text(c), Value::Number(v))).collect(),
            );
            let (fixed, _) = common_attrs(&doc, &[*id]);
            marks.push(MarkSpec {
                mark_type: MarkType::TrendPath,
                encoded_attributes: vec![enc("d", "label", "x"), enc("d", "value", "y")],
                fixed_attributes: fixed,
                member_ids: vec![*id],
            });
            let desc = if *area { format!("area under {} points", points.len()) } else { format!("line through {} points", points.len()) };
            groups.add(root, LayerRole::DataDriven, &desc, Some("marks"), Some("mark"), &[*id]);
            if !cat_ids.is_empty() {
                groups.add(root, LayerRole::DataDriven, "category labels", Some("category-labels"), Some("axis"), &cat_ids);
                axes.push(AxisSpec { orientation: Orientation::X, gridline_ids: vec![], label_ids: cat_ids, scale_id: "x".into(), quantitative: false });
            }
            let grid: Vec<ElementId> = horizontal.iter().map(|l| l.id).collect();
            let label_ids: Vec<ElementId> = value_labels.iter().map(|l| l.id).collect();
            if !grid.is_empty() || !label_ids.is_empty() {
                groups.add(root, LayerRole::DataDriven, "gridlines", Some("grid"), Some("axis"), &grid);
                groups.add(root, LayerRole::DataDriven, "value axis labels", Some("value-labels"), Some("axis"), &label_ids);
                axes.push(AxisSpec { orientation: Orientation::Y, quantitative: label_ids.len() >= 2, gridline_ids: grid, label_ids, scale_id: "y".into() });
            }
            let left = horizontal.iter().map(|l| l.a.x.min(l.b.x)).chain(points.iter().map(|p| p.x)).fold(f64::INFINITY, f64::min);
            let bottom = horizontal.iter().map(|l| l.a.y).chain(points.iter().map(|p| p.y)).chain(*baseline).fold(f64::NEG_INFINITY, f64::max);
            origin = Position { x: left, y: bottom };
            coordinate = Coordinate::Cartesian;
            prototype = if *area { Prototype::Area } else { Prototype::Line };
        }
        Series::Radar { polygon, center, radius, spokes, rings } => {
            let el = doc.find(*polygon).unwrap();
            let pts = el.attr("points").and_then(parse_points).unwrap_or_default();
            let radial: Vec<Label> = numeric_labels.clone();
            let rfit = fit(&radial.iter().map(|l| (l.pos.dist(*center), l.number.unwrap())).collect::<Vec<_>>());
            let values: Vec<f64> = match rfit {
                Some((a, b)) => pts.iter().map(|p| a * p.dist(*center) + b).collect(),
                None => pts.iter().map(|p| p.dist(*center) / radius).collect(),
            };
            let radial_ids: Vec<ElementId> = if rfit.is_some() { radial.iter().map(|l| l.id).collect() } else { vec![] };
            used.extend(radial_ids.iter().copied());
            let slice = TAU / pts.len().max(1) as f64;
            let mut cat_ids = Vec::new();
            let cats: Vec<String> = pts
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let a = (p.y - center.y).atan2(p.x - center.x);
                    let end = Point::new(center.x + radius * a.cos(), center.y + radius * a.sin());
                    let score = |l: &Label| polar_score(l, *center, a, slice / 2.0, end);
                    match nearest_label(&word_labels, &mut used, score, *radius) {
                        Some(l) => {
                            cat_ids.push(l.id);
                            l.content.clone()
                        }
                        None => format!("axis{}", i + 1),
                    }
                })
                .collect();
            dataset = table(
                [("axis", ColumnKind::String), ("value", ColumnKind::Number)],
                cats.into_iter().zip(values).map(|(c, v)| (Value::Text(c), Value::Number(v))).collect(),
            );
            let (fixed, _) = common_attrs(&doc, &[*polygon]);
            marks.push(MarkSpec {
                mark_type: MarkType::TrendPath,
                encoded_attributes: vec![enc("points", "value", "r"), enc("points", "axis", "angle")],
                fixed_attributes: fixed,
                member_ids: vec![*polygon],
            });
            groups.add(root, LayerRole::DataDriven, &format!("radar polygon over {} axes", pts.len()), Some("marks"), Some("mark"), &[*polygon]);
            let mut grid = rings.clone();
            grid.extend(spokes);
            groups.add(root, LayerRole::DataDriven, "rings and spokes", Some("grid"), Some("axis"), &grid);
            groups.add(root, LayerRole::DataDriven, "radial axis labels", Some("value-labels"), Some("axis"), &radial_ids);
            groups.add(root, LayerRole::DataDriven, "axis names", Some("category-labels"), Some("axis"), &cat_ids);
            axes.push(AxisSpec { orientation: Orientation::Radial, quantitative: radial_ids.len() >= 2, gridline_ids: rings.clone(), label_ids: radial_ids, scale_id: "r".into() });
            axes.push(AxisSpec { orientation: Orientation::Angular, quantitative: false, gridline_ids: spokes.clone(), label_ids: cat_ids, scale_id: "angle".into() });
            origin = Position { x: center.x, y: center.y };
            coordinate = Coordinate::Polar;
            prototype = Prototype::Radar;
        }
        Series::Pie { sectors, center } => {
            let mut rows = Vec::new();
            let mut entries = Vec::new();
            let mut label_ids = Vec::new();
            let slice_limit = PI / 2.0;
            for (i, id) in sectors.iter().enumerate() {
                let (c, p0, p1, large, sweep) = sector(doc.find(*id).unwrap().attr("d").unwrap()).unwrap();
                let span = sector_span(c, p0, p1, large, sweep);
                let a0 = (p0.y - c.y).atan2(p0.x - c.x);
                let mid = if sweep { a0 + span / 2.0 } else { a0 - span / 2.0 };
                let radius = c.dist(p0);
                let end = Point::new(c.x + radius * mid.cos(), c.y + radius * mid.sin());
                let window = slice_limit.min(span / 2.0 + 0.05);
                let score = |l: &Label| polar_score(l, *center, mid, window, end);
                let name = match nearest_label(&word_labels, &mut used, score, radius) {
                    Some(l) => {
                        label_ids.push(l.id);
                        l.content.clone()
                    }
                    None => format!("s{}", i + 1),
                };
                entries.push(LegendEntry { value: name.clone(), swatch_id: *id });
                rows.push((Value::Text(name), Value::Number(span / TAU)));
            }
            dataset = table([("label", ColumnKind::String), ("value", ColumnKind::Number)], rows);
            let (fixed, varying) = common_attrs(&doc, sectors);
            let mut encoded = vec![enc("d", "value", "angle")];
            if varying.iter().any(|a| a == "fill") {
                encoded.push(enc("fill", "label", "color"));
            }
            marks.push(MarkSpec { mark_type: MarkType::AtomicShapes, encoded_attributes: encoded, fixed_attributes: fixed, member_ids: sectors.clone() });
            groups.add(root, LayerRole::DataDriven, &format!("{} pie sectors", sectors.len()), Some("marks"), Some("mark"), sectors);
            groups.add(root, LayerRole::DataDriven, "sector labels", Some("category-labels"), Some("legend"), &label_ids);
            if !label_ids.is_empty() {
                let pos: Vec<Point> = labels.iter().filter(|l| label_ids.contains(&l.id)).map(|l| l.pos).collect();
                let bb = crate::geom::bbox(pos).unwrap();
                legends.push(LegendSpec {
                    position: tidy_position(Position { x: bb.0, y: bb.1 }),
                    size: Size { width: tidy(bb.2 - bb.0), height: tidy(bb.3 - bb.1) },
                    channel_groups: vec![ChannelGroup { channel: "fill".into(), entries }],
                    label_ids,
                });
            }
            origin = Position { x: center.x, y: center.y };
            coordinate = Coordinate::Polar;
            prototype = Prototype::Pie;
        }
    }

    // everything not claimed by the series
    let claimed: BTreeSet<ElementId> = groups.markers.iter().flat_map(|m| m.member_ids.iter().copied()).collect();
    let text_ids: Vec<ElementId> = labels.iter().map(|l| l.id).filter(|id| !claimed.contains(id)).collect();
    for s in &shapes {
        let id = s.id().unwrap();
        if !claimed.contains(&id) {
            decorative.push(id);
        }
    }
    for l in &lines {
        if !claimed.contains(&l.id) {
            decorative.push(l.id);
        }
    }
    decorative.sort();
    groups.add(root, LayerRole::Configuration, "styles and definitions", None, None, &config);
    groups.add(root, LayerRole::Decorative, "background and ornaments", None, None, &decorative);
    groups.add(root, LayerRole::Text, "titles and free text", None, None, &text_ids);

    let marked = insert_markers(&doc, &groups.markers)?;
    let ir = IntermediateRepresentation {
        ir_version: IR_VERSION,
        globals: GlobalProperties {
            coordinate,
            origin: tidy_position(origin),
            canvas_bbox: BBox { x: cx0, y: cy0, width: cw, height: ch },
            prototype,
        },
        marks,
        axes,
        legends,
        text_layer_ids: text_ids,
        decorative_layer_ids: decorative,
        configuration_layer_ids: config,
        dataset: dataset.clone(),
    };
    Ok(Decomposition { marked, dataset, ir })
}

/// Ids that each role partition of `ir` claims, for comparing decompositions.
pub fn role_partition(ir: &IntermediateRepresentation) -> HashMap<LayerRole, BTreeSet<ElementId>> {
    LayerRole::ALL.iter().map(|r| (*r, ir.partition(*r).into_iter().collect())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::ir::validate_ir;
    use crate::svg::{parse, strip_markers};

    #[test]
    fn bars_recovered_from_axis() {
        let c = corpus::bar_chart("b", &["A", "B", "C", "D"], &[10.0, 20.0, 30.0, 40.0], 40.0, 10.0, false);
        let d = heuristic_decompose(&corpus::document(&c)).unwrap();
        assert_eq!(d.ir.globals.prototype, Prototype::Bar);
        assert_eq!(d.ir.globals.coordinate, Coordinate::Cartesian);
        let values: Vec<f64> = d.dataset.rows.iter().map(|r| r[1].as_f64().unwrap()).collect();
        for (got, want) in values.iter().zip([10.0, 20.0, 30.0, 40.0]) {
            assert!((got - want).abs() <= 0.01 * 40.0, "{got} vs {want}");
        }
        let cats: Vec<String> = d.dataset.rows.iter().map(|r| r[0].to_string()).collect();
        assert_eq!(cats, ["A", "B", "C", "D"]);
        assert!(validate_ir(&d.ir, &d.marked).is_empty(), "{}", validate_ir(&d.ir, &d.marked));
    }

    #[test]
    fn equal_bars_equal_values() {
        let c = corpus::bar_chart("b", &["w", "x", "y", "z"], &[12.0; 4], 20.0, 5.0, false);
        let d = heuristic_decompose(&corpus::document(&c)).unwrap();
        let v: Vec<f64> = d.dataset.rows.iter().map(|r| r[1].as_f64().unwrap()).collect();
        assert!(v.iter().all(|x| *x == v[0]));
    }

    #[test]
    fn every_corpus_chart_validates_and_strips_back() {
        for c in corpus::synthetic_corpus() {
            let doc = corpus::document(&c);
            let d = heuristic_decompose(&doc).unwrap_or_else(|e| panic!("{}: {e}", c.name));
            assert_eq!(d.ir.globals.prototype, c.prototype, "{}", c.name);
            let report = validate_ir(&d.ir, &d.marked);
            assert!(report.is_empty(), "{}: {report}", c.name);
            assert_eq!(strip_markers(&d.marked).to_xml(), assign_ids(&doc).unwrap().to_xml());
            assert_eq!(d.dataset.rows.len(), c.data.rows.len(), "{}", c.name);
        }
    }

    #[test]
    fn corpus_data_recovered_within_one_percent() {
        for c in corpus::synthetic_corpus() {
            let d = heuristic_decompose(&corpus::document(&c)).unwrap();
            let err = corpus::recovery_error(&c, &d.dataset).unwrap_or_else(|e| panic!("{}: {e}", c.name));
            assert!(err <= 0.01, "{}: {err}", c.name);
        }
    }

    #[test]
    fn pie_is_polar() {
        let c = corpus::pie_chart("p", &["a", "b", "c"], &[1.0, 2.0, 1.0]);
        let d = heuristic_decompose(&corpus::document(&c)).unwrap();
        assert_eq!(d.ir.globals.coordinate, Coordinate::Polar);
        let v: Vec<f64> = d.dataset.rows.iter().map(|r| r[1].as_f64().unwrap()).collect();
        assert!((v[1] - 0.5).abs() < 1e-4, "{v:?}");
    }

    #[test]
    fn free_form_artwork_is_rejected() {
        let doc = parse(
            br#"<svg width="100" height="100"><path d="M10 10 C 40 0 60 90 90 50"/><circle cx="20" cy="70" r="5"/><circle cx="60" cy="20" r="12"/><ellipse cx="50" cy="50" rx="4" ry="9"/></svg>"#,
        )
        .unwrap();
        assert!(matches!(heuristic_decompose(&doc), Err(DecomposeError::UnrecognizedStructure(_))));
    }

    #[test]
    fn pure_decoration_without_series_is_rejected() {
        let doc = parse(br#"<svg width="100" height="100"><rect width="100" height="100"/><text x="5" y="5">hi</text></svg>"#).unwrap();
        assert!(heuristic_decompose(&doc).is_err());
    }
}
