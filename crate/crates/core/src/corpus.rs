//! Synthetic charts with known data, rendered by the template evaluator.
//!
//! Each chart is drawn from a skeleton SVG whose placeholder groups (grid,
//! value-axis labels, category labels, marks) are slots filled by a generator
//! template. The output carries no ids or markers.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::data::{Column, ColumnKind, Dataset, Value};
use crate::dsl::{evaluate, parse_program};
use crate::geom::fmt_num;
use crate::ir::Prototype;
use crate::svg::{assign_ids, insert_markers, parse, strip_ids, ElementId, GroupMarker, LayerRole, SvgDocument};

pub const WIDTH: f64 = 480.0;
pub const HEIGHT: f64 = 320.0;
/// Plot area of Cartesian charts: origin at the bottom-left corner.
pub const PLOT: (f64, f64, f64, f64) = (60.0, 270.0, 380.0, 220.0);
/// Center and radius of polar charts.
pub const POLAR: (f64, f64, f64) = (240.0, 170.0, 110.0);

const PALETTE: [&str; 6] = ["#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948"];

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusChart {
    pub name: String,
    pub prototype: Prototype,
    pub svg: String,
    /// Data the chart was drawn from.
    pub data: Dataset,
    /// What an ideal decomposition recovers. Equal to `data` except for pies,
    /// whose values are recovered as fractions of the whole.
    pub expected: Dataset,
    /// Axis range of each numeric column, used to express recovery error.
    pub ranges: Vec<(String, f64, f64)>,
}

fn skeleton(title: &str, mark_tag: &str) -> String {
    let (w, h) = (fmt_num(WIDTH), fmt_num(HEIGHT));
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <style>text {{ font-family: sans-serif; font-size: 11px; }}</style>\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"#ffffff\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{title}</text>\n\
         <g class=\"grid\"><line/></g>\n\
         <g class=\"axis value\"><text/></g>\n\
         <g class=\"axis category\"><text/></g>\n\
         <g class=\"marks\"><{mark_tag}/></g>\n\
         </svg>\n",
        fmt_num(WIDTH / 2.0)
    )
}

const SLOTS: [&str; 4] = ["grid", "value-labels", "category-labels", "marks"];

/// Renders `program` over the skeleton and returns plain SVG text.
fn render(title: &str, mark_tag: &str, program: &str, data: &Dataset) -> String {
    let doc = assign_ids(&parse(skeleton(title, mark_tag).as_bytes()).expect("skeleton parses")).expect("fresh ids");
    // placeholders are the only children of the four class groups, in order
    let placeholders: Vec<ElementId> = doc
        .elements()
        .filter(|e| e.tag == "g")
        .filter_map(|g| g.element_children().next().and_then(|c| c.id()))
        .collect();
    let groups: Vec<GroupMarker> = SLOTS
        .iter()
        .zip(&placeholders)
        .map(|(slot, id)| GroupMarker::new(LayerRole::DataDriven, *slot, vec![*id]).with_slot(*slot))
        .collect();
    let marked = insert_markers(&doc, &groups).expect("placeholders are wrappable");
    let program = parse_program(program).unwrap_or_else(|e| panic!("generator template: {e}\n{program}"));
    let out = evaluate(&program, &marked, data, &BTreeMap::new()).unwrap_or_else(|e| panic!("generator: {e}"));
    strip_ids(&out).to_xml()
}

fn head(origin: (f64, f64), size: (f64, f64)) -> String {
    format!(
        "template 1\nparam chart_width number {}\nparam chart_height number {}\nparam origin_x number {}\nparam origin_y number {}\n",
        fmt_num(size.0),
        fmt_num(size.1),
        fmt_num(origin.0),
        fmt_num(origin.1)
    )
}

fn ticks(max: f64, step: f64) -> Vec<f64> {
    let n = (max / step).round() as usize;
    (0..=n).map(|i| i as f64 * step).collect()
}

fn ticks_between(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}

/// Horizontal gridlines and value labels at the given ticks of scale `y`.
fn value_axis(ticks: &[f64]) -> String {
    let mut grid = String::from("render (replace-slot grid");
    let mut labels = String::from("render (replace-slot value-labels");
    for t in ticks {
        let t = fmt_num(*t);
        grid.push_str(&format!(
            "\n  (emit line (x1 origin_x) (x2 (+ origin_x chart_width)) (y1 (scale y {t})) (y2 (scale y {t})) (stroke \"#dddddd\"))"
        ));
        labels.push_str(&format!(
            "\n  (emit text (x (- origin_x 6)) (y (scale y {t})) (text-anchor \"end\") (dominant-baseline \"middle\") (@text \"{t}\"))"
        ));
    }
    format!("{grid})\n{labels})\n")
}

fn categorical(name: &str, labels: &[&str], values: &[f64]) -> Dataset {
    Dataset::new(
        vec![Column::new(name, ColumnKind::String), Column::new("value", ColumnKind::Number)],
        labels.iter().zip(values).map(|(l, v)| vec![Value::Text(l.to_string()), Value::Number(*v)]).collect(),
    )
}

pub fn bar_chart(name: &str, categories: &[&str], values: &[f64], ymax: f64, step: f64, colored: bool) -> CorpusChart {
    let data = categorical("category", categories, values);
    let (ox, oy, cw, ch) = PLOT;
    let fill = if colored { "(scale color (field category))" } else { "\"#4e79a7\"" };
    let mut program = head((ox, oy), (cw, ch));
    program.push_str(&format!(
        "column category string\ncolumn value number\n\
         scale x band domain (field category) range origin_x (+ origin_x chart_width) padding 0.2\n\
         scale y linear domain 0 {} range origin_y (- origin_y chart_height)\n\
         scale color ordinal-color domain (field category) range {}\n",
        fmt_num(ymax),
        PALETTE.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ")
    ));
    program.push_str(&value_axis(&ticks(ymax, step)));
    program.push_str(
        "render (replace-slot category-labels (for-each-row (emit text\n\
           (x (+ (scale x (field category)) (/ (bandwidth x) 2))) (y (+ origin_y 16)) (text-anchor \"middle\") (@text (field category)))))\n",
    );
    program.push_str(&format!(
        "render (replace-slot marks (for-each-row (emit rect\n\
           (x (scale x (field category))) (y (scale y (field value))) (width (bandwidth x))\n\
           (height (- origin_y (scale y (field value)))) (fill {fill}))))\n"
    ));
    CorpusChart {
        name: name.into(),
        prototype: Prototype::Bar,
        svg: render(name, "rect", &program, &data),
        expected: data.clone(),
        data,
        ranges: vec![("value".into(), 0.0, ymax)],
    }
}

pub fn scatter_chart(
    name: &str,
    points: &[(f64, f64)],
    xdom: (f64, f64, f64),
    ydom: (f64, f64, f64),
) -> CorpusChart {
    let data = Dataset::new(
        vec![Column::new("x", ColumnKind::Number), Column::new("y", ColumnKind::Number)],
        points.iter().map(|(x, y)| vec![Value::Number(*x), Value::Number(*y)]).collect(),
    );
    let (ox, oy, cw, ch) = PLOT;
    let mut program = head((ox, oy), (cw, ch));
    program.push_str(&format!(
        "column x number\ncolumn y number\n\
         scale x linear domain {} {} range origin_x (+ origin_x chart_width)\n\
         scale y linear domain {} {} range origin_y (- origin_y chart_height)\n",
        fmt_num(xdom.0),
        fmt_num(xdom.1),
        fmt_num(ydom.0),
        fmt_num(ydom.1)
    ));
    program.push_str(&value_axis(&ticks_between(ydom.0, ydom.1, ydom.2)));
    program.push_str("render (replace-slot category-labels");
    for t in ticks_between(xdom.0, xdom.1, xdom.2) {
        let t = fmt_num(t);
        program.push_str(&format!(
            "\n  (emit text (x (scale x {t})) (y (+ origin_y 16)) (text-anchor \"middle\") (@text \"{t}\"))"
        ));
    }
    program.push_str(")\n");
    program.push_str(
        "render (replace-slot marks (for-each-row (emit circle\n\
           (cx (scale x (field x))) (cy (scale y (field y))) (r 4) (fill \"#e15759\") (fill-opacity \"0.8\"))))\n",
    );
    CorpusChart {
        name: name.into(),
        prototype: Prototype::Scatterplot,
        svg: render(name, "circle", &program, &data),
        expected: data.clone(),
        data,
        ranges: vec![("x".into(), xdom.0, xdom.1), ("y".into(), ydom.0, ydom.1)],
    }
}

pub fn line_chart(name: &str, labels: &[&str], values: &[f64], ymax: f64, step: f64, area: bool) -> CorpusChart {
    let data = categorical("label", labels, values);
    let (ox, oy, cw, ch) = PLOT;
    let mut program = head((ox, oy), (cw, ch));
    program.push_str(&format!(
        "column label string\ncolumn value number\n\
         scale x point domain (field label) range origin_x (+ origin_x chart_width) padding 0.5\n\
         scale y linear domain 0 {} range origin_y (- origin_y chart_height)\n",
        fmt_num(ymax)
    ));
    program.push_str(&value_axis(&ticks(ymax, step)));
    program.push_str(
        "render (replace-slot category-labels (for-each-row (emit text\n\
           (x (scale x (field label))) (y (+ origin_y 16)) (text-anchor \"middle\") (@text (field label)))))\n",
    );
    let trace = "(each (if (= index 0) \"M\" \" L\") (scale x (field label)) \" \" (scale y (field value)))";
    let (attrs, tail) = if area {
        (
            "(fill \"#76b7b2\") (fill-opacity \"0.5\") (stroke \"#59a14f\")",
            " \" L\" (last (scale x (field label))) \" \" origin_y \" L\" (first (scale x (field label))) \" \" origin_y \" Z\"",
        )
    } else {
        ("(fill \"none\") (stroke \"#4e79a7\") (stroke-width 2)", "")
    };
    program.push_str(&format!("render (replace-slot marks (path (emit path {attrs}) d {trace}{tail}))\n"));
    CorpusChart {
        name: name.into(),
        prototype: if area { Prototype::Area } else { Prototype::Line },
        svg: render(name, "path", &program, &data),
        expected: data.clone(),
        data,
        ranges: vec![("value".into(), 0.0, ymax)],
    }
}

fn polar_head() -> String {
    let (cx, cy, r) = POLAR;
    head((cx, cy), (2.0 * r, 2.0 * r))
}

/// Angle of row `index` in a radar chart, starting at twelve o'clock.
const RADAR_ANGLE: &str = "(+ (* -0.5 pi) (/ (* 2 pi index) row_count))";

pub fn radar_chart(name: &str, axes: &[&str], values: &[f64], vmax: f64) -> CorpusChart {
    let data = categorical("axis", axes, values);
    let (cx, cy, r) = POLAR;
    let n = axes.len();
    let angle = |i: usize| -PI / 2.0 + 2.0 * PI * i as f64 / n as f64;
    let mut program = polar_head();
    program.push_str(&format!(
        "column axis string\ncolumn value number\nscale r linear domain 0 {} range 0 (/ chart_width 2)\n",
        fmt_num(vmax)
    ));
    program.push_str("render (replace-slot grid");
    for k in 1..=4 {
        let rr = r * k as f64 / 4.0;
        let pts: Vec<String> = (0..n)
            .map(|i| format!("{},{}", fmt_num(cx + rr * angle(i).cos()), fmt_num(cy + rr * angle(i).sin())))
            .collect();
        program.push_str(&format!("\n  (emit polygon (points \"{}\") (fill \"none\") (stroke \"#cccccc\"))", pts.join(" ")));
    }
    for i in 0..n {
        program.push_str(&format!(
            "\n  (emit line (x1 origin_x) (y1 origin_y) (x2 {}) (y2 {}) (stroke \"#cccccc\"))",
            fmt_num(cx + r * angle(i).cos()),
            fmt_num(cy + r * angle(i).sin())
        ));
    }
    program.push_str(")\nrender (replace-slot value-labels");
    for k in 1..=4 {
        let v = vmax * k as f64 / 4.0;
        program.push_str(&format!(
            "\n  (emit text (x origin_x) (y (- origin_y (scale r {}))) (dx 3) (dominant-baseline \"middle\") (@text \"{}\"))",
            fmt_num(v),
            fmt_num(v)
        ));
    }
    program.push_str(&format!(
        ")\nrender (replace-slot category-labels (for-each-row (emit text\n\
           (x (+ origin_x (* 1.15 (/ chart_width 2) (cos {RADAR_ANGLE}))))\n\
           (y (+ origin_y (* 1.15 (/ chart_width 2) (sin {RADAR_ANGLE}))))\n\
           (text-anchor \"middle\") (dominant-baseline \"middle\") (@text (field axis)))))\n\
         render (replace-slot marks (path (emit polygon (fill \"#4e79a7\") (fill-opacity \"0.35\") (stroke \"#4e79a7\")) points\n\
           (each (if (= index 0) \"\" \" \")\n\
             (+ origin_x (* (scale r (field value)) (cos {RADAR_ANGLE}))) \",\"\n\
             (+ origin_y (* (scale r (field value)) (sin {RADAR_ANGLE}))))))\n"
    ));
    CorpusChart {
        name: name.into(),
        prototype: Prototype::Radar,
        svg: render(name, "polygon", &program, &data),
        expected: data.clone(),
        data,
        ranges: vec![("value".into(), 0.0, vmax)],
    }
}

pub fn pie_chart(name: &str, labels: &[&str], values: &[f64]) -> CorpusChart {
    let data = categorical("label", labels, values);
    let total: f64 = values.iter().sum();
    let fractions: Vec<f64> = values.iter().map(|v| v / total).collect();
    let expected = categorical("label", labels, &fractions);
    let mut program = polar_head();
    program.push_str(&format!(
        "column label string\ncolumn value number\nscale color ordinal-color domain (field label) range {}\n",
        PALETTE.join(" ")
    ));
    let a0 = "(+ (* -0.5 pi) (/ (* 2 pi (cumsum (field value))) (sum (field value))))";
    let a1 = "(+ (* -0.5 pi) (/ (* 2 pi (+ (cumsum (field value)) (field value))) (sum (field value))))";
    let mid = "(+ (* -0.5 pi) (/ (* 2 pi (+ (cumsum (field value)) (/ (field value) 2))) (sum (field value))))";
    let rad = "(/ chart_width 2)";
    program.push_str(&format!(
        "render (replace-slot category-labels (for-each-row (emit text\n\
           (x (+ origin_x (* 1.2 {rad} (cos {mid})))) (y (+ origin_y (* 1.2 {rad} (sin {mid}))))\n\
           (text-anchor \"middle\") (dominant-baseline \"middle\") (@text (field label)))))\n\
         render (replace-slot marks (for-each-row (path (emit path (fill (scale color (field label))) (stroke \"#ffffff\")) d\n\
           \"M\" origin_x \" \" origin_y\n\
           \" L\" (+ origin_x (* {rad} (cos {a0}))) \" \" (+ origin_y (* {rad} (sin {a0})))\n\
           \" A\" {rad} \" \" {rad} \" 0 \" (if (> (/ (field value) (sum (field value))) 0.5) 1 0) \" 1 \"\n\
           (+ origin_x (* {rad} (cos {a1}))) \" \" (+ origin_y (* {rad} (sin {a1}))) \" Z\")))\n"
    ));
    CorpusChart {
        name: name.into(),
        prototype: Prototype::Pie,
        svg: render(name, "path", &program, &data),
        data,
        expected,
        ranges: vec![("value".into(), 0.0, 1.0)],
    }
}

/// The fixed synthetic corpus: two or more charts per prototype.
pub fn synthetic_corpus() -> Vec<CorpusChart> {
    let months = ["Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug"];
    vec![
        bar_chart("bars-4", &["A", "B", "C", "D"], &[10.0, 20.0, 30.0, 40.0], 40.0, 10.0, false),
        bar_chart("bars-7", &["N", "NE", "E", "SE", "S", "SW", "W"], &[62.0, 18.5, 77.25, 40.0, 93.0, 5.0, 51.75], 100.0, 20.0, false),
        bar_chart("bars-colored", &["red", "orange", "pink", "teal", "green"], &[3.2, 7.9, 5.5, 1.4, 6.6], 8.0, 2.0, true),
        bar_chart("bars-flat", &["w", "x", "y", "z"], &[12.0, 12.0, 12.0, 12.0], 20.0, 5.0, false),
        scatter_chart(
            "scatter-12",
            &[(1.0, 3.0), (2.5, 4.2), (3.0, 2.0), (4.2, 6.1), (5.0, 5.5), (6.3, 7.9), (7.1, 6.0), (8.0, 9.2), (8.8, 4.4), (9.5, 8.8), (0.5, 0.9), (6.0, 1.5)],
            (0.0, 10.0, 2.0),
            (0.0, 10.0, 2.0),
        ),
        scatter_chart(
            "scatter-negative",
            &[(-40.0, 12.0), (-25.0, -8.0), (-5.0, 30.0), (0.0, 0.0), (12.0, -22.0), (28.0, 18.0), (35.0, 41.0), (47.0, -35.0)],
            (-50.0, 50.0, 25.0),
            (-40.0, 50.0, 10.0),
        ),
        line_chart("line-8", &months, &[12.0, 19.0, 15.0, 27.0, 31.0, 24.0, 36.0, 33.0], 40.0, 10.0, false),
        line_chart("line-5", &months[..5], &[0.42, 0.57, 0.31, 0.88, 0.75], 1.0, 0.25, false),
        line_chart("area-6", &months[..6], &[150.0, 230.0, 180.0, 290.0, 260.0, 310.0], 400.0, 100.0, true),
        radar_chart("radar-5", &["speed", "power", "range", "armor", "agility"], &[80.0, 55.0, 90.0, 40.0, 70.0], 100.0),
        radar_chart("radar-7", &["a", "b", "c", "d", "e", "f", "g"], &[3.0, 4.5, 2.0, 5.0, 1.5, 4.0, 3.5], 5.0),
        pie_chart("pie-4", &["rent", "food", "travel", "other"], &[40.0, 25.0, 20.0, 15.0]),
        pie_chart("pie-6", &["a", "b", "c", "d", "e", "f"], &[5.0, 62.0, 9.0, 11.0, 7.0, 6.0]),
    ]
}

/// Document for a corpus chart.
pub fn document(chart: &CorpusChart) -> SvgDocument {
    parse(chart.svg.as_bytes()).expect("corpus charts are well-formed")
}

/// Largest recovery error over the numeric columns of `recovered`, as a
/// fraction of each column's axis range. Columns are matched by position
/// since a decomposition names them itself. Text columns must match exactly.
pub fn recovery_error(chart: &CorpusChart, recovered: &Dataset) -> Result<f64, String> {
    let want = &chart.expected;
    if recovered.rows.len() != want.rows.len() || recovered.columns.len() != want.columns.len() {
        return Err(format!(
            "shape {}x{} differs from {}x{}",
            recovered.rows.len(),
            recovered.columns.len(),
            want.rows.len(),
            want.columns.len()
        ));
    }
    let mut worst: f64 = 0.0;
    for (i, col) in want.columns.iter().enumerate() {
        let range = chart.ranges.iter().find(|r| r.0 == col.name).map(|r| r.2 - r.1);
        for (r, (a, b)) in want.rows.iter().zip(&recovered.rows).enumerate() {
            match (a[i].as_f64(), b[i].as_f64(), range) {
                (Some(x), Some(y), Some(span)) => worst = worst.max((x - y).abs() / span),
                _ if a[i].to_string() == b[i].to_string() => {}
                _ => return Err(format!("row {r} column {}: `{}` vs `{}`", col.name, a[i], b[i])),
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_covers_every_prototype() {
        let corpus = synthetic_corpus();
        assert!(corpus.len() >= 10);
        for p in [Prototype::Bar, Prototype::Scatterplot, Prototype::Line, Prototype::Area, Prototype::Radar, Prototype::Pie] {
            assert!(corpus.iter().any(|c| c.prototype == p), "{p:?}");
        }
    }

    #[test]
    fn bars_4_geometry() {
        let c = bar_chart("b", &["A", "B", "C", "D"], &[10.0, 20.0, 30.0, 40.0], 40.0, 10.0, false);
        let doc = document(&c);
        let heights: Vec<f64> = doc.elements().filter(|e| e.tag == "rect").skip(1).map(|e| e.attr_f64("height").unwrap()).collect();
        // 220 px of plot height over a 0..40 domain
        assert_eq!(heights, vec![55.0, 110.0, 165.0, 220.0]);
        assert!(!c.svg.contains("data-dw-id"));
        assert!(!c.svg.contains("dw:"));
    }

    #[test]
    fn pie_arcs_close_the_circle() {
        let c = pie_chart("p", &["a", "b"], &[3.0, 1.0]);
        let doc = document(&c);
        let ds: Vec<&str> = doc.elements().filter(|e| e.tag == "path").map(|e| e.attr("d").unwrap()).collect();
        assert_eq!(ds.len(), 2);
        // first sector spans 270 degrees, so it takes the large arc
        assert!(ds[0].contains(" 0 1 1 "), "{}", ds[0]);
        assert!(ds[1].contains(" 0 0 1 "), "{}", ds[1]);
    }
}
