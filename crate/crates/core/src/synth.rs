//! Template synthesis from a decomposition.
//!
//! The deterministic synthesizer covers the recognized prototypes. It derives
//! scales from the mark geometry, binds every mark attribute in the order the
//! reference writes it, and accepts a program only if rendering it with the
//! IR's data reproduces the reference.

use std::collections::BTreeSet;
use std::f64::consts::{PI, TAU};
use std::fmt::Write;

use thiserror::Error;

use crate::data::{ColumnKind, Dataset};
use crate::decompose::{fit, numeric};
use crate::dsl::{evaluate, parse_program, print_program, validate_program, ParameterSpec, TemplateProgram};
use crate::fidelity::diff_geometry;
use crate::geom::{fmt_num, parse_path, parse_points, Point, Segment};
use crate::ir::{AxisSpec, Coordinate, IntermediateRepresentation, Orientation, Prototype};
use crate::lmm::{LmmError, ModelClient, ModelRequest};
use crate::report::{IssueKind, ValidationReport};
use crate::svg::{strip_markers, Element, ElementId, MarkedUpSvg, SvgDocument, ID_ATTR};

/// Largest accepted deviation between a synthesized rendering and the
/// reference, as a fraction of the canvas diagonal.
pub const FIDELITY_TOLERANCE: f64 = 0.005;

const TOL: f64 = 0.01;

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("synthesis failed after {attempts} attempt(s): {report}")]
    SynthesisFailed { attempts: usize, report: ValidationReport },
    #[error(transparent)]
    Model(#[from] LmmError),
}

fn failed(message: impl Into<String>) -> SynthesisError {
    let mut report = ValidationReport::default();
    report.push(IssueKind::InvariantViolation, message);
    SynthesisError::SynthesisFailed { attempts: 1, report }
}

fn quote(s: &str) -> String {
    crate::dsl::quote(s)
}

fn n(v: f64) -> String {
    fmt_num(v)
}

/// `v` written relative to a named anchor, snapping to `anchor ± extent`.
fn anchored(v: f64, name: &str, base: f64, extent: Option<(&str, f64, f64)>) -> String {
    let d = v - base;
    if d.abs() < TOL {
        return name.to_string();
    }
    if let Some((ext, size, dir)) = extent {
        if (d - dir * size).abs() < TOL {
            return format!("({} {name} {ext})", if dir > 0.0 { "+" } else { "-" });
        }
    }
    if d > 0.0 {
        format!("(+ {name} {})", n(d))
    } else {
        format!("(- {name} {})", n(-d))
    }
}

fn g(e: &Element, name: &str) -> f64 {
    e.attr_f64(name).unwrap_or(0.0)
}

/// An `emit` form binding `computed` attributes and copying every other
/// attribute of `reference` literally, in the reference's order.
fn emit_like(reference: &Element, computed: &[(&str, String)]) -> String {
    let mut out = format!("(emit {}", reference.tag);
    let mut done = BTreeSet::new();
    for a in &reference.attributes {
        if a.name == ID_ATTR {
            continue;
        }
        match computed.iter().find(|c| c.0 == a.name) {
            Some((name, e)) => {
                let _ = write!(out, " ({name} {e})");
                done.insert(*name);
            }
            None => {
                let v = reference.attr_unescaped(&a.name).unwrap_or_default();
                let _ = write!(out, " ({} {})", a.name, quote(&v));
            }
        }
    }
    for (name, e) in computed {
        if !done.contains(name) {
            let _ = write!(out, " ({name} {e})");
        }
    }
    out.push(')');
    out
}

/// Layout facts shared by every prototype.
struct Frame {
    origin: Point,
    width: f64,
    height: f64,
}

struct Synth<'a> {
    ir: &'a IntermediateRepresentation,
    marked: &'a MarkedUpSvg,
    doc: &'a SvgDocument,
    data: &'a Dataset,
    params: Vec<ParameterSpec>,
    body: String,
}

impl<'a> Synth<'a> {
    fn el(&self, id: ElementId) -> Result<&'a Element, SynthesisError> {
        self.doc.find(id).ok_or_else(|| failed(format!("IR names element {id} which the markup lacks")))
    }

    fn els(&self, ids: &[ElementId]) -> Result<Vec<&'a Element>, SynthesisError> {
        ids.iter().map(|id| self.el(*id)).collect()
    }

    /// Slot whose marker holds exactly `ids`.
    fn slot_of(&self, ids: &[ElementId]) -> Option<String> {
        let want: BTreeSet<ElementId> = ids.iter().copied().collect();
        self.marked
            .markers()
            .into_iter()
            .find(|m| m.slot.is_some() && m.member_ids.iter().copied().collect::<BTreeSet<_>>() == want)
            .and_then(|m| m.slot)
    }

    fn axis(&self, o: Orientation) -> Option<&'a AxisSpec> {
        self.ir.axes.iter().find(|a| a.orientation == o)
    }

    /// Numeric tick labels of an axis as `(element, value)`.
    fn tick_values(&self, axis: Option<&AxisSpec>) -> Vec<(&'a Element, f64)> {
        axis.map(|a| {
            a.label_ids
                .iter()
                .filter_map(|id| self.doc.find(*id))
                .filter_map(|e| numeric(&e.text_content()).map(|v| (e, v)))
                .collect()
        })
        .unwrap_or_default()
    }

    fn column(&self, i: usize) -> Result<(String, Vec<f64>, Vec<String>), SynthesisError> {
        let col = self.data.columns.get(i).ok_or_else(|| failed(format!("dataset lacks column {}", i + 1)))?;
        let nums = self.data.rows.iter().filter_map(|r| r[i].as_f64()).collect();
        let texts = self.data.rows.iter().map(|r| r[i].to_string()).collect();
        Ok((col.name.clone(), nums, texts))
    }

    /// Declares a choice parameter selecting a column of the same kind as
    /// column `i`, and returns the `(field-of ...)` reference to it.
    fn field_param(&mut self, name: &str, i: usize) -> Result<String, SynthesisError> {
        let col = self.data.columns.get(i).ok_or_else(|| failed(format!("dataset lacks column {}", i + 1)))?;
        let options = self.data.columns.iter().filter(|c| c.kind == col.kind).map(|c| c.name.clone()).collect();
        self.params.push(ParameterSpec::choice(name, &col.name, options).with_title(&format!("{} field", name.trim_end_matches("_field"))));
        Ok(format!("(field-of {name})"))
    }

    fn line(&mut self, s: String) {
        self.body.push_str(&s);
        self.body.push('\n');
    }

    fn cartesian_frame(&self, marks: &[Point]) -> Frame {
        let o = Point::new(self.ir.globals.origin.x, self.ir.globals.origin.y);
        let mut pts: Vec<Point> = marks.to_vec();
        for a in &self.ir.axes {
            for e in a.gridline_ids.iter().filter_map(|id| self.doc.find(*id)) {
                pts.push(Point::new(g(e, "x1"), g(e, "y1")));
                pts.push(Point::new(g(e, "x2"), g(e, "y2")));
            }
        }
        let right = pts.iter().map(|p| p.x).fold(o.x, f64::max);
        let top = pts.iter().map(|p| p.y).fold(o.y, f64::min);
        Frame { origin: o, width: right - o.x, height: o.y - top }
    }

    fn head(&mut self, f: &Frame) {
        let r4 = |v: f64| (v * 1e4).round() / 1e4;
        let f = &Frame { origin: Point::new(r4(f.origin.x), r4(f.origin.y)), width: r4(f.width), height: r4(f.height) };
        self.params.insert(0, ParameterSpec::number("origin_y", f.origin.y));
        self.params.insert(0, ParameterSpec::number("origin_x", f.origin.x));
        self.params.insert(0, ParameterSpec::number("chart_height", f.height));
        self.params.insert(0, ParameterSpec::number("chart_width", f.width));
    }

    /// Linear scale `value -> pixel` fitted to the marks, falling back to
    /// the tick labels when the data has a single distinct value. Returns
    /// the fitted map and the domain covering data, ticks and `extra`.
    fn linear(
        &self,
        values: &[f64],
        pixels: &[f64],
        ticks: &[(f64, f64)],
        extra: &[f64],
    ) -> Result<((f64, f64), (f64, f64)), SynthesisError> {
        let pairs: Vec<(f64, f64)> = values.iter().copied().zip(pixels.iter().copied()).collect();
        let map = fit(&pairs).or_else(|| fit(ticks)).ok_or_else(|| failed("cannot infer a linear scale"))?;
        let all = values.iter().chain(ticks.iter().map(|t| &t.0)).chain(extra);
        let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
        let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
        if !(lo < hi) {
            return Err(failed("linear domain is degenerate"));
        }
        // round outward so the printed domain still covers the data
        Ok((map, ((lo * 1e4 + 1e-6).floor() / 1e4, (hi * 1e4 - 1e-6).ceil() / 1e4)))
    }

    fn y_ticks(&self) -> Vec<(f64, f64)> {
        self.tick_values(self.axis(Orientation::Y))
            .into_iter()
            .map(|(e, v)| {
                let mut y = g(e, "y");
                if !matches!(e.attr("dominant-baseline"), Some("middle" | "central")) {
                    y -= 0.35 * e.attr_f64("font-size").unwrap_or(11.0);
                }
                (v, y)
            })
            .collect()
    }

    fn x_ticks(&self) -> Vec<(f64, f64)> {
        self.tick_values(self.axis(Orientation::X)).into_iter().map(|(e, v)| (v, g(e, "x"))).collect()
    }

    fn scale_y(&mut self, f: &Frame, map: (f64, f64), dom: (f64, f64)) {
        let (a, b) = (map.0, map.1);
        let r0 = anchored(a * dom.0 + b, "origin_y", f.origin.y, Some(("chart_height", f.height, -1.0)));
        let r1 = anchored(a * dom.1 + b, "origin_y", f.origin.y, Some(("chart_height", f.height, -1.0)));
        self.line(format!("scale y linear domain {} {} range {r0} {r1}", n(dom.0), n(dom.1)));
    }

    fn scale_x(&mut self, f: &Frame, map: (f64, f64), dom: (f64, f64)) {
        let (a, b) = (map.0, map.1);
        let r0 = anchored(a * dom.0 + b, "origin_x", f.origin.x, Some(("chart_width", f.width, 1.0)));
        let r1 = anchored(a * dom.1 + b, "origin_x", f.origin.x, Some(("chart_width", f.width, 1.0)));
        self.line(format!("scale x linear domain {} {} range {r0} {r1}", n(dom.0), n(dom.1)));
    }

    /// Ordinal color scale over `key` when the members' fills differ.
    fn color_scale(&mut self, members: &[&Element], keys: &[String], key: &str) -> Option<String> {
        let fills: Vec<Option<String>> = members.iter().map(|e| e.attr_unescaped("fill")).collect();
        if fills.iter().all(|f| f == &fills[0]) || fills.iter().any(Option::is_none) {
            return None;
        }
        let mut seen = Vec::new();
        let mut palette = Vec::new();
        for (k, f) in keys.iter().zip(&fills) {
            if !seen.contains(k) {
                seen.push(k.clone());
                palette.push(quote(f.as_deref().unwrap()));
            }
        }
        self.line(format!("scale color ordinal-color domain {key} range {}", palette.join(" ")));
        Some(format!("(scale color {key})"))
    }

    /// Regenerates per-row labels at a constant offset from `anchor`
    /// (a per-row x expression with pixel values `anchor_px`).
    fn row_labels(&mut self, axis: Option<&AxisSpec>, anchor: &str, anchor_px: &[f64], text: &str, f: &Frame) -> Result<(), SynthesisError> {
        let Some(axis) = axis else { return Ok(()) };
        let labels = self.els(&axis.label_ids)?;
        if labels.len() != anchor_px.len() || labels.is_empty() {
            return Ok(());
        }
        let Some(slot) = self.slot_of(&axis.label_ids) else { return Ok(()) };
        let dx = g(labels[0], "x") - anchor_px[0];
        let y = g(labels[0], "y");
        let uniform = labels.iter().zip(anchor_px).all(|(l, a)| (g(l, "x") - a - dx).abs() < TOL && (g(l, "y") - y).abs() < TOL);
        if !uniform {
            return Ok(());
        }
        let x = if dx.abs() < TOL { anchor.to_string() } else { format!("(+ {anchor} {})", n(dx)) };
        let y = anchored(y, "origin_y", f.origin.y, Some(("chart_height", f.height, -1.0)));
        let emit = emit_like(labels[0], &[("x", x), ("y", y), ("@text", text.to_string())]);
        self.line(format!("render (replace-slot {slot} (for-each-row {emit}))"));
        Ok(())
    }

    fn bar(&mut self) -> Result<Frame, SynthesisError> {
        let mark = &self.ir.marks[0];
        let bars = self.els(&mark.member_ids)?;
        if bars.len() != self.data.rows.len() {
            return Err(failed(format!("{} bars for {} rows", bars.len(), self.data.rows.len())));
        }
        let slot = self.slot_of(&mark.member_ids).ok_or_else(|| failed("bars are not in a slot"))?;
        let xs: Vec<f64> = bars.iter().map(|b| g(b, "x")).collect();
        let tops: Vec<f64> = bars.iter().map(|b| g(b, "y")).collect();
        let w = g(bars[0], "width");
        let baseline = tops[0] + g(bars[0], "height");
        let corners: Vec<Point> = bars.iter().flat_map(|b| [Point::new(g(b, "x") + w, g(b, "y")), Point::new(g(b, "x"), baseline)]).collect();
        let f = self.cartesian_frame(&corners);

        let xf = self.field_param("x_field", 0)?;
        let yf = self.field_param("y_field", 1)?;
        let (_, values, _) = self.column(1)?;
        let (_, _, cats) = self.column(0)?;

        let (step, p) = if bars.len() >= 2 {
            let step = xs[1] - xs[0];
            (step, 1.0 - w / step)
        } else {
            (w / 0.8, 0.2)
        };
        if !(0.0..1.0).contains(&p) || step <= 0.0 {
            return Err(failed("bars overlap or are not ordered left to right"));
        }
        let r0 = xs[0] - p * step;
        let r1 = r0 + step * (bars.len() as f64 + p);
        let ext = Some(("chart_width", f.width, 1.0));
        self.line(format!(
            "scale x band domain {xf} range {} {} padding {}",
            anchored(r0, "origin_x", f.origin.x, ext),
            anchored(r1, "origin_x", f.origin.x, ext),
            n(p)
        ));
        let ticks = self.y_ticks();
        // the baseline value belongs in the domain so zero-height bars render
        let base_value = fit(&values.iter().copied().zip(tops.iter().copied()).collect::<Vec<_>>())
            .or_else(|| fit(&ticks))
            .map(|(a, b)| (baseline - b) / a);
        let extra: Vec<f64> = base_value.into_iter().collect();
        let (map, dom) = if values.iter().all(|v| *v == values[0]) && ticks.len() < 2 {
            // one distinct value and no ticks: anchor it at the baseline
            let v = values[0];
            if v == 0.0 {
                return Err(failed("cannot scale all-zero bars"));
            }
            let a = (tops[0] - baseline) / v;
            ((a, baseline), (0.0_f64.min(v), v.max(0.0)))
        } else {
            self.linear(&values, &tops, &ticks, &extra)?
        };
        self.scale_y(&f, map, dom);
        let fill = self.color_scale(&bars, &cats, &xf);

        let base = anchored(baseline, "origin_y", f.origin.y, Some(("chart_height", f.height, -1.0)));
        let mut computed = vec![
            ("x", format!("(scale x {xf})")),
            ("y", format!("(scale y {yf})")),
            ("width", "(bandwidth x)".to_string()),
            ("height", format!("(- {base} (scale y {yf}))")),
        ];
        if let Some(fill) = fill {
            computed.push(("fill", fill));
        }
        let emit = emit_like(bars[0], &computed);
        self.line(format!("render (replace-slot {slot} (for-each-row {emit}))"));
        self.row_labels(self.axis(Orientation::X), &format!("(scale x {xf})"), &xs, &xf, &f)?;
        Ok(f)
    }

    fn scatter(&mut self) -> Result<Frame, SynthesisError> {
        let mark = &self.ir.marks[0];
        let dots = self.els(&mark.member_ids)?;
        if dots.len() != self.data.rows.len() {
            return Err(failed(format!("{} circles for {} rows", dots.len(), self.data.rows.len())));
        }
        let slot = self.slot_of(&mark.member_ids).ok_or_else(|| failed("circles are not in a slot"))?;
        let cx: Vec<f64> = dots.iter().map(|d| g(d, "cx")).collect();
        let cy: Vec<f64> = dots.iter().map(|d| g(d, "cy")).collect();
        let centers: Vec<Point> = cx.iter().zip(&cy).map(|(x, y)| Point::new(*x, *y)).collect();
        let f = self.cartesian_frame(&centers);
        let xf = self.field_param("x_field", 0)?;
        let yf = self.field_param("y_field", 1)?;
        let (_, xv, _) = self.column(0)?;
        let (_, yv, xkeys) = self.column(1)?;
        let (xmap, xdom) = self.linear(&xv, &cx, &self.x_ticks(), &[])?;
        let (ymap, ydom) = self.linear(&yv, &cy, &self.y_ticks(), &[])?;
        self.scale_x(&f, xmap, xdom);
        self.scale_y(&f, ymap, ydom);
        let mut computed = vec![("cx", format!("(scale x {xf})")), ("cy", format!("(scale y {yf})"))];
        if let Some(fill) = self.color_scale(&dots, &xkeys, &xf) {
            computed.push(("fill", fill));
        }
        let emit = emit_like(dots[0], &computed);
        self.line(format!("render (replace-slot {slot} (for-each-row {emit}))"));
        Ok(f)
    }

    fn trend(&mut self, area: bool) -> Result<Frame, SynthesisError> {
        let mark = &self.ir.marks[0];
        let [id] = mark.member_ids.as_slice() else {
            return Err(failed("a trend mark must be a single path"));
        };
        let path = self.el(*id)?;
        let segs = parse_path(path.attr("d").unwrap_or("")).map_err(|e| failed(e.to_string()))?;
        let mut pts: Vec<Point> = segs
            .iter()
            .filter_map(|s| match s {
                Segment::MoveTo(p) | Segment::LineTo(p) => Some(*p),
                _ => None,
            })
            .collect();
        let mut base = None;
        if area {
            if pts.len() < 4 {
                return Err(failed("area outline is too short"));
            }
            base = Some(pts[pts.len() - 1].y);
            pts.truncate(pts.len() - 2);
        }
        let rows = self.data.rows.len();
        if pts.len() != rows {
            return Err(failed(format!("{} vertices for {rows} rows", pts.len())));
        }
        let f = self.cartesian_frame(&pts);
        let xf = self.field_param("x_field", 0)?;
        let yf = self.field_param("y_field", 1)?;
        let (_, values, _) = self.column(1)?;

        let count = rows as f64;
        let (r0, p, step) = if rows >= 2 {
            let step = pts[1].x - pts[0].x;
            let p = (pts[0].x - f.origin.x) / step;
            if (0.0..1.0).contains(&p) {
                (f.origin.x, p, step)
            } else {
                (pts[0].x - 0.5 * step, 0.5, step)
            }
        } else {
            let half = (pts[0].x - f.origin.x).max(1.0);
            (pts[0].x - half, 0.5, 2.0 * half)
        };
        let r1 = r0 + step * (count - 1.0 + 2.0 * p);
        let ext = Some(("chart_width", f.width, 1.0));
        self.line(format!(
            "scale x point domain {xf} range {} {} padding {}",
            anchored(r0, "origin_x", f.origin.x, ext),
            anchored(r1, "origin_x", f.origin.x, ext),
            n(p)
        ));
        let ys: Vec<f64> = pts.iter().map(|p| p.y).collect();
        let (map, dom) = self.linear(&values, &ys, &self.y_ticks(), &[])?;
        self.scale_y(&f, map, dom);
        let x = format!("(scale x {xf})");
        let y = format!("(scale y {yf})");
        let mut d = format!("(each (if (= index 0) \"M\" \" L\") {x} \" \" {y})");
        if let Some(b) = base {
            let b = anchored(b, "origin_y", f.origin.y, Some(("chart_height", f.height, -1.0)));
            let _ = write!(d, " \" L\" (last {x}) \" \" {b} \" L\" (first {x}) \" \" {b} \" Z\"");
        }
        self.line(format!("render (path (element {id}) d {d})"));
        let xs: Vec<f64> = pts.iter().map(|p| p.x).collect();
        self.row_labels(self.axis(Orientation::X), &x, &xs, &xf, &f)?;
        Ok(f)
    }

    /// Per-row labels placed at a constant multiple of the radius along
    /// `angle`, when the reference labels follow that pattern.
    fn polar_labels(&mut self, label_ids: &[ElementId], center: Point, radius: f64, angles: &[f64], angle: &str, text: &str) -> Result<(), SynthesisError> {
        let labels = self.els(label_ids)?;
        if labels.len() != angles.len() || labels.is_empty() || radius <= 0.0 {
            return Ok(());
        }
        let Some(slot) = self.slot_of(label_ids) else { return Ok(()) };
        let pos = |l: &Element| Point::new(g(l, "x"), g(l, "y"));
        let k = pos(labels[0]).dist(center) / radius;
        let fits = labels.iter().zip(angles).all(|(l, a)| {
            let want = Point::new(center.x + k * radius * a.cos(), center.y + k * radius * a.sin());
            pos(l).dist(want) < 0.05
        });
        if !fits {
            return Ok(());
        }
        let k = n(k);
        let x = format!("(+ origin_x (* {k} (/ chart_width 2) (cos {angle})))");
        let y = format!("(+ origin_y (* {k} (/ chart_width 2) (sin {angle})))");
        let emit = emit_like(labels[0], &[("x", x), ("y", y), ("@text", text.to_string())]);
        self.line(format!("render (replace-slot {slot} (for-each-row {emit}))"));
        Ok(())
    }

    fn radar(&mut self) -> Result<Frame, SynthesisError> {
        let mark = &self.ir.marks[0];
        let [id] = mark.member_ids.as_slice() else {
            return Err(failed("a radar mark must be a single polygon"));
        };
        let poly = self.el(*id)?;
        let pts = poly.attr("points").and_then(parse_points).ok_or_else(|| failed("radar polygon has no points"))?;
        let rows = self.data.rows.len();
        if pts.len() != rows {
            return Err(failed(format!("{} vertices for {rows} rows", pts.len())));
        }
        let c = Point::new(self.ir.globals.origin.x, self.ir.globals.origin.y);
        let spokes = self.axis(Orientation::Angular).map(|a| a.gridline_ids.clone()).unwrap_or_default();
        let radius = self
            .els(&spokes)?
            .iter()
            .map(|l| Point::new(g(l, "x1"), g(l, "y1")).dist(Point::new(g(l, "x2"), g(l, "y2"))))
            .chain(pts.iter().map(|p| p.dist(c)))
            .fold(0.0, f64::max);
        let f = Frame { origin: c, width: 2.0 * radius, height: 2.0 * radius };
        let af = self.field_param("angle_field", 0)?;
        let rf = self.field_param("radius_field", 1)?;
        let (_, values, _) = self.column(1)?;

        let slice = TAU / rows as f64;
        let start_angle = pts
            .iter()
            .enumerate()
            .find(|(_, p)| p.dist(c) > 1e-6)
            .map(|(i, p)| (p.y - c.y).atan2(p.x - c.x) - slice * i as f64)
            .unwrap_or(-PI / 2.0);
        let start = if (start_angle.rem_euclid(TAU) - 1.5 * PI).abs() < 1e-4 { "(* -0.5 pi)".to_string() } else { n(start_angle) };
        let angle = format!("(+ {start} (/ (* 2 pi index) row_count))");

        let ticks: Vec<(f64, f64)> = self
            .tick_values(self.axis(Orientation::Radial))
            .into_iter()
            .map(|(e, v)| (v, Point::new(g(e, "x"), g(e, "y")).dist(c)))
            .collect();
        let dists: Vec<f64> = pts.iter().map(|p| p.dist(c)).collect();
        let ((a, b), dom) = self.linear(&values, &dists, &ticks, &[0.0])?;
        let range = |v: f64| if (v - radius).abs() < TOL { "(/ chart_width 2)".to_string() } else { n(v) };
        self.line(format!("scale r linear domain {} {} range {} {}", n(dom.0), n(dom.1), range(a * dom.0 + b), range(a * dom.1 + b)));

        let r = format!("(scale r {rf})");
        self.line(format!(
            "render (path (element {id}) points (each (if (= index 0) \"\" \" \") (+ origin_x (* {r} (cos {angle}))) \",\" (+ origin_y (* {r} (sin {angle})))))"
        ));
        let angles: Vec<f64> = (0..rows).map(|i| start_angle + slice * i as f64).collect();
        if let Some(axis) = self.axis(Orientation::Angular) {
            let ids = axis.label_ids.clone();
            self.polar_labels(&ids, c, radius, &angles, &angle, &af)?;
        }
        Ok(f)
    }

    fn pie(&mut self) -> Result<Frame, SynthesisError> {
        let mark = &self.ir.marks[0];
        let sectors = self.els(&mark.member_ids)?;
        let rows = self.data.rows.len();
        if sectors.len() != rows {
            return Err(failed(format!("{} sectors for {rows} rows", sectors.len())));
        }
        let slot = self.slot_of(&mark.member_ids).ok_or_else(|| failed("sectors are not in a slot"))?;
        let c = Point::new(self.ir.globals.origin.x, self.ir.globals.origin.y);
        let first = parse_path(sectors[0].attr("d").unwrap_or("")).map_err(|e| failed(e.to_string()))?;
        let (p0, sweep) = match first.as_slice() {
            [Segment::MoveTo(_), Segment::LineTo(p0), Segment::Arc { sweep, .. }, Segment::Close] => (*p0, *sweep),
            _ => return Err(failed("sector paths must read M L A Z")),
        };
        if !sweep {
            return Err(failed("counter-clockwise pies are not supported"));
        }
        let radius = p0.dist(c);
        let f = Frame { origin: c, width: 2.0 * radius, height: 2.0 * radius };
        let lf = self.field_param("label_field", 0)?;
        let vf = self.field_param("value_field", 1)?;
        let (_, values, _) = self.column(1)?;
        let (_, _, labels) = self.column(0)?;
        let a0 = (p0.y - c.y).atan2(p0.x - c.x);
        let start = if (a0 + PI / 2.0).abs() < 1e-4 { "(* -0.5 pi)".to_string() } else { n(a0) };
        let at = |share: &str| format!("(+ {start} (/ (* 2 pi {share}) (sum {vf})))");
        let from = at(&format!("(cumsum {vf})"));
        let to = at(&format!("(+ (cumsum {vf}) {vf})"));
        let mid = at(&format!("(+ (cumsum {vf}) (/ {vf} 2))"));
        let rad = "(/ chart_width 2)";
        let mut computed = Vec::new();
        if let Some(fill) = self.color_scale(&sectors, &labels, &lf) {
            computed.push(("fill", fill));
        }
        let emit = emit_like(sectors[0], &computed);
        // the path directive binds d itself
        let emit = emit.replacen(&format!(" (d {})", quote(&sectors[0].attr_unescaped("d").unwrap_or_default())), "", 1);
        self.line(format!(
            "render (replace-slot {slot} (for-each-row (path {emit} d \"M\" origin_x \" \" origin_y \" L\" (+ origin_x (* {rad} (cos {from}))) \" \" (+ origin_y (* {rad} (sin {from}))) \" A\" {rad} \" \" {rad} \" 0 \" (if (> (/ {vf} (sum {vf})) 0.5) 1 0) \" 1 \" (+ origin_x (* {rad} (cos {to}))) \" \" (+ origin_y (* {rad} (sin {to}))) \" Z\")))"
        ));
        let total: f64 = values.iter().sum();
        if total > 0.0 {
            let mut acc = 0.0;
            let angles: Vec<f64> = values
                .iter()
                .map(|v| {
                    let m = a0 + TAU * (acc + v / 2.0) / total;
                    acc += v;
                    m
                })
                .collect();
            if let Some(legend) = self.ir.legends.first() {
                let ids = legend.label_ids.clone();
                self.polar_labels(&ids, c, radius, &angles, &mid, &lf)?;
            }
        }
        Ok(f)
    }
}

/// Builds a template that re-renders the reference from `ir.dataset`.
pub fn synthesize_template(ir: &IntermediateRepresentation, marked: &MarkedUpSvg) -> Result<TemplateProgram, SynthesisError> {
    let mut s = Synth { ir, marked, doc: marked.document(), data: &ir.dataset, params: Vec::new(), body: String::new() };
    let frame = if ir.dataset.rows.is_empty() || ir.marks.is_empty() {
        identity_frame(ir)
    } else {
        match ir.globals.prototype {
            Prototype::Bar => s.bar()?,
            Prototype::Scatterplot => s.scatter()?,
            Prototype::Line => s.trend(false)?,
            Prototype::Area => s.trend(true)?,
            Prototype::Radar => s.radar()?,
            Prototype::Pie => s.pie()?,
            Prototype::Other(ref p) => return Err(failed(format!("no deterministic synthesis for prototype `{p}`"))),
        }
    };
    s.head(&frame);
    let head = TemplateProgram { params: s.params.clone(), required_schema: if ir.dataset.rows.is_empty() { vec![] } else { ir.dataset.columns.clone() }, ..Default::default() };
    let source = format!("{}{}", print_program(&head), s.body);
    let program = parse_program(&source).map_err(|e| failed(format!("synthesized source does not parse: {e}")))?;
    check_program(&program, ir, marked).map_err(|report| SynthesisError::SynthesisFailed { attempts: 1, report })?;
    Ok(program)
}

fn identity_frame(ir: &IntermediateRepresentation) -> Frame {
    let o = ir.globals.origin;
    let b = ir.globals.canvas_bbox;
    match ir.globals.coordinate {
        Coordinate::Polar => {
            let r = (o.x - b.x).min(b.x + b.width - o.x).min(o.y - b.y).min(b.y + b.height - o.y).max(0.0);
            Frame { origin: Point::new(o.x, o.y), width: 2.0 * r, height: 2.0 * r }
        }
        _ => Frame { origin: Point::new(o.x, o.y), width: b.x + b.width - o.x, height: o.y - b.y },
    }
}

/// Validates `program` and checks that it reproduces the reference.
pub fn check_program(program: &TemplateProgram, ir: &IntermediateRepresentation, marked: &MarkedUpSvg) -> Result<(), ValidationReport> {
    let report = validate_program(program, marked, &ir.dataset.columns);
    if !report.is_valid() {
        return Err(report);
    }
    let mut report = ValidationReport::default();
    match evaluate(program, marked, &ir.dataset, &Default::default()) {
        Err(e) => report.push(IssueKind::InvariantViolation, format!("rendering failed: {e}")),
        Ok(out) => {
            let score = diff_geometry(&strip_markers(marked), &out);
            if !score.within(FIDELITY_TOLERANCE) {
                report.push(
                    IssueKind::InvariantViolation,
                    format!(
                        "rendering deviates by {:.4} of the diagonal at element {}{}",
                        score.score,
                        score.worst.as_deref().unwrap_or("?"),
                        score.notes.first().map(|n| format!(" ({n})")).unwrap_or_default()
                    ),
                );
            }
        }
    }
    if report.is_empty() {
        Ok(())
    } else {
        Err(report)
    }
}

/// Column kinds as the prompt spells them.
fn schema_text(data: &Dataset) -> String {
    data.columns
        .iter()
        .map(|c| format!("{} ({})", c.name, if c.kind == ColumnKind::Number { "number" } else { "string" }))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Model-backed synthesis for inputs the deterministic synthesizer rejects.
/// The prompt carries the grammar, one exemplar, the IR and the markup; an
/// invalid answer is retried once with the validation report appended.
pub fn synthesize_with_model(
    ir: &IntermediateRepresentation,
    marked: &MarkedUpSvg,
    client: &ModelClient,
) -> Result<TemplateProgram, SynthesisError> {
    let base = crate::prompts::fill(
        crate::prompts::SYNTHESIZE,
        &[
            ("grammar", crate::prompts::GRAMMAR),
            ("exemplar", crate::prompts::EXEMPLAR_PROGRAM),
            ("ir", &crate::ir::serialize_ir(ir)),
            ("markup", &marked.to_xml()),
            ("schema", &schema_text(&ir.dataset)),
        ],
    );
    let mut prompt = base.clone();
    let mut last = ValidationReport::default();
    for attempt in 1..=2 {
        let reply = client.complete(&ModelRequest::text(client.model_name.clone(), prompt.clone()))?;
        let source = crate::prompts::fenced(&reply, "dwt").unwrap_or(reply.as_str()).to_string();
        last = match parse_program(&source) {
            Err(e) => {
                let mut r = ValidationReport::default();
                r.push(IssueKind::TypeError, format!("program does not parse: {e}"));
                r
            }
            Ok(p) => match check_program(&p, ir, marked) {
                Ok(()) => return Ok(p),
                Err(r) => r,
            },
        };
        if attempt == 1 {
            prompt = format!("{base}\n\nYour previous program was rejected:\n{last}\nReturn a corrected program.");
        }
    }
    Err(SynthesisError::SynthesisFailed { attempts: 2, report: last })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::decompose::heuristic_decompose;

    #[test]
    fn bars_get_band_and_linear_scales() {
        let c = corpus::bar_chart("b", &["A", "B", "C", "D"], &[10.0, 20.0, 30.0, 40.0], 40.0, 10.0, false);
        let d = heuristic_decompose(&corpus::document(&c)).unwrap();
        let p = synthesize_template(&d.ir, &d.marked).unwrap();
        use crate::dsl::ScaleKind;
        assert_eq!(p.scale("x").unwrap().kind, ScaleKind::Band);
        assert_eq!(p.scale("y").unwrap().kind, ScaleKind::Linear);
        assert!(p.param("x_field").is_some() && p.param("y_field").is_some());
    }

    #[test]
    fn every_corpus_chart_round_trips() {
        for c in corpus::synthetic_corpus() {
            let d = heuristic_decompose(&corpus::document(&c)).unwrap();
            let p = synthesize_template(&d.ir, &d.marked).unwrap_or_else(|e| panic!("{}: {e}", c.name));
            let out = evaluate(&p, &d.marked, &c.data, &Default::default()).unwrap();
            let score = diff_geometry(&strip_markers(&d.marked), &out);
            assert!(score.within(FIDELITY_TOLERANCE), "{}: {score:?}", c.name);
        }
    }

    #[test]
    fn zero_rows_give_identity() {
        let c = corpus::bar_chart("b", &["A", "B"], &[1.0, 2.0], 2.0, 1.0, false);
        let mut d = heuristic_decompose(&corpus::document(&c)).unwrap();
        d.ir.dataset.rows.clear();
        let p = synthesize_template(&d.ir, &d.marked).unwrap();
        assert!(p.directives.is_empty());
        let out = evaluate(&p, &d.marked, &d.ir.dataset, &Default::default()).unwrap();
        assert_eq!(out.to_xml(), strip_markers(&d.marked).to_xml());
    }

    #[test]
    fn unknown_prototype_fails() {
        let c = corpus::bar_chart("b", &["A", "B"], &[1.0, 2.0], 2.0, 1.0, false);
        let mut d = heuristic_decompose(&corpus::document(&c)).unwrap();
        d.ir.globals.prototype = Prototype::Other("Sankey".into());
        assert!(matches!(synthesize_template(&d.ir, &d.marked), Err(SynthesisError::SynthesisFailed { .. })));
    }
}
