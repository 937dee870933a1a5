//! Geometric comparison of two renderings.

use serde::{Deserialize, Serialize};

use crate::geom::{parse_points, path_points, Point};
use crate::svg::{Element, ElementId, SvgDocument, ID_ATTR};

/// Attributes compared positionally rather than textually.
const GEOMETRIC_ATTRS: [&str; 17] = [
    "x", "y", "width", "height", "r", "rx", "ry", "cx", "cy", "x1", "y1", "x2", "y2", "points", "d",
    "transform", ID_ATTR,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttrMismatch {
    /// Id of the element in the first document, or its pre-order index when
    /// it has no id.
    pub element: String,
    pub attribute: String,
    pub left: Option<String>,
    pub right: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityScore {
    /// Largest positional deviation as a fraction of the canvas diagonal;
    /// 1 when the element sets cannot be matched.
    pub score: f64,
    /// Element with the largest deviation.
    pub worst: Option<String>,
    pub attribute_mismatches: Vec<AttrMismatch>,
    pub notes: Vec<String>,
}

impl FidelityScore {
    pub fn within(&self, tolerance: f64) -> bool {
        self.score <= tolerance
    }
}

struct Flat<'a> {
    el: &'a Element,
    index: usize,
    /// Accumulated translation from ancestors and the element itself.
    offset: Point,
}

fn translation(e: &Element) -> Point {
    let Some(t) = e.attr("transform") else {
        return Point::new(0.0, 0.0);
    };
    let t = t.trim();
    let Some(inner) = t.strip_prefix("translate(").and_then(|s| s.strip_suffix(')')) else {
        return Point::new(0.0, 0.0);
    };
    let nums: Vec<f64> = inner
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .filter_map(|s| s.parse().ok())
        .collect();
    match nums.as_slice() {
        [x] => Point::new(*x, 0.0),
        [x, y] => Point::new(*x, *y),
        _ => Point::new(0.0, 0.0),
    }
}

fn flatten_tree<'a>(e: &'a Element, offset: Point, out: &mut Vec<Flat<'a>>) {
    let t = translation(e);
    let offset = Point::new(offset.x + t.x, offset.y + t.y);
    out.push(Flat { el: e, index: out.len(), offset });
    for c in e.element_children() {
        flatten_tree(c, offset, out);
    }
}

fn key_points(f: &Flat<'_>) -> Vec<Point> {
    let e = f.el;
    let g = |n: &str| e.attr_f64(n).unwrap_or(0.0);
    let pts = match e.tag.as_str() {
        "rect" | "image" | "use" | "foreignObject" => {
            let (x, y, w, h) = (g("x"), g("y"), g("width"), g("height"));
            vec![Point::new(x, y), Point::new(x + w, y), Point::new(x + w, y + h), Point::new(x, y + h)]
        }
        "circle" | "ellipse" => {
            let (cx, cy) = (g("cx"), g("cy"));
            let (rx, ry) = if e.tag == "circle" { (g("r"), g("r")) } else { (g("rx"), g("ry")) };
            vec![Point::new(cx - rx, cy), Point::new(cx + rx, cy), Point::new(cx, cy - ry), Point::new(cx, cy + ry)]
        }
        "line" => vec![Point::new(g("x1"), g("y1")), Point::new(g("x2"), g("y2"))],
        "polyline" | "polygon" => e.attr("points").and_then(parse_points).unwrap_or_default(),
        "path" => e
            .attr("d")
            .and_then(|d| path_points(d).ok())
            .map(|subs| subs.into_iter().flat_map(|s| s.points).collect())
            .unwrap_or_default(),
        "text" | "tspan" => match (e.attr_f64("x"), e.attr_f64("y")) {
            (None, None) => vec![],
            _ => vec![Point::new(g("x"), g("y"))],
        },
        _ => vec![],
    };
    pts.into_iter().map(|p| Point::new(p.x + f.offset.x, p.y + f.offset.y)).collect()
}

fn directed_hausdorff(a: &[Point], b: &[Point]) -> f64 {
    a.iter()
        .map(|p| b.iter().map(|q| p.dist(*q)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

fn deviation(a: &[Point], b: &[Point], pointwise: bool) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return 0.0,
        (true, false) | (false, true) => return f64::INFINITY,
        _ => {}
    }
    if pointwise && a.len() == b.len() {
        return a.iter().zip(b).map(|(p, q)| p.dist(*q)).fold(0.0, f64::max);
    }
    directed_hausdorff(a, b).max(directed_hausdorff(b, a))
}

fn label(f: &Flat<'_>) -> String {
    match f.el.id() {
        Some(id) => id.to_string(),
        None => format!("#{}", f.index),
    }
}

/// Matches elements by `data-dw-id`, then by tag and document order, and
/// reports the largest positional deviation normalized by `a`'s diagonal.
pub fn diff_geometry(a: &SvgDocument, b: &SvgDocument) -> FidelityScore {
    let mut fa = Vec::new();
    let mut fb = Vec::new();
    flatten_tree(&a.root, Point::new(0.0, 0.0), &mut fa);
    flatten_tree(&b.root, Point::new(0.0, 0.0), &mut fb);
    fa.retain(|f| !f.el.is_marker());
    fb.retain(|f| !f.el.is_marker());

    let mut result = FidelityScore { score: 0.0, worst: None, attribute_mismatches: Vec::new(), notes: Vec::new() };
    if fa.len() != fb.len() {
        result.score = 1.0;
        result.notes.push(format!("element count differs: {} vs {}", fa.len(), fb.len()));
        return result;
    }

    let mut taken = vec![false; fb.len()];
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let mut unmatched = Vec::new();
    for (i, x) in fa.iter().enumerate() {
        let hit = x.el.id().and_then(|id: ElementId| fb.iter().position(|y| y.el.id() == Some(id)));
        match hit {
            Some(j) if !taken[j] && fb[j].el.tag == x.el.tag => {
                taken[j] = true;
                pairs.push((i, j));
            }
            _ => unmatched.push(i),
        }
    }
    for i in unmatched {
        let tag = &fa[i].el.tag;
        match (0..fb.len()).find(|&j| !taken[j] && &fb[j].el.tag == tag) {
            Some(j) => {
                taken[j] = true;
                pairs.push((i, j));
            }
            None => {
                result.score = 1.0;
                result.notes.push(format!("no counterpart for <{tag}> {}", label(&fa[i])));
                return result;
            }
        }
    }
    pairs.sort();

    let diagonal = a.diagonal();
    for (i, j) in pairs {
        let (x, y) = (&fa[i], &fb[j]);
        let pointwise = !matches!(x.el.tag.as_str(), "path");
        let dev = deviation(&key_points(x), &key_points(y), pointwise);
        let normalized = (dev / diagonal).min(1.0);
        if normalized > result.score || (result.worst.is_none() && normalized > 0.0) {
            result.score = result.score.max(normalized);
            result.worst = Some(label(x));
        }
        let mut names: Vec<&str> = x.el.attributes.iter().chain(&y.el.attributes).map(|a| a.name.as_str()).collect();
        names.sort();
        names.dedup();
        for n in names {
            if GEOMETRIC_ATTRS.contains(&n) {
                continue;
            }
            let (l, r) = (x.el.attr_unescaped(n), y.el.attr_unescaped(n));
            if l != r {
                result.attribute_mismatches.push(AttrMismatch { element: label(x), attribute: n.into(), left: l, right: r });
            }
        }
        let (tl, tr) = (direct_text(x.el), direct_text(y.el));
        if tl != tr {
            result.attribute_mismatches.push(AttrMismatch {
                element: label(x),
                attribute: "#text".into(),
                left: Some(tl),
                right: Some(tr),
            });
        }
    }
    result
}

fn direct_text(e: &Element) -> String {
    e.children
        .iter()
        .filter_map(|n| match n {
            crate::svg::Node::Text(t) => Some(crate::svg::unescape(t)),
            crate::svg::Node::CData(t) => Some(t.clone()),
            _ => None,
        })
        .collect::<String>()
        .trim()
        .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::svg::parse;

    fn doc(s: &str) -> SvgDocument {
        parse(s.as_bytes()).unwrap()
    }

    #[test]
    fn identical_is_zero() {
        let a = doc(r#"<svg width="600" height="800"><rect x="1" y="2" width="3" height="4"/><path d="M0 0 C10 0 10 10 0 10"/></svg>"#);
        let s = diff_geometry(&a, &a);
        assert_eq!(s.score, 0.0);
        assert!(s.attribute_mismatches.is_empty());
    }

    #[test]
    fn shifted_rect() {
        let a = doc(r#"<svg width="600" height="800"><rect x="10" y="10" width="5" height="5"/></svg>"#);
        let b = doc(r#"<svg width="600" height="800"><rect x="15" y="10" width="5" height="5"/></svg>"#);
        let s = diff_geometry(&a, &b);
        assert!((s.score - 0.005).abs() < 1e-12, "{}", s.score);
    }

    #[test]
    fn count_mismatch() {
        let a = doc(r#"<svg width="10" height="10"><rect/><rect/></svg>"#);
        let b = doc(r#"<svg width="10" height="10"><rect/></svg>"#);
        let s = diff_geometry(&a, &b);
        assert_eq!(s.score, 1.0);
        assert_eq!(s.notes.len(), 1);
    }

    #[test]
    fn matches_by_id_before_order() {
        let a = doc(r#"<svg width="600" height="800"><rect data-dw-id="1" x="0"/><rect data-dw-id="2" x="50"/></svg>"#);
        let b = doc(r#"<svg width="600" height="800"><rect data-dw-id="2" x="50"/><rect data-dw-id="1" x="0"/></svg>"#);
        assert_eq!(diff_geometry(&a, &b).score, 0.0);
    }

    #[test]
    fn attributes_and_translate() {
        let a = doc(r#"<svg width="600" height="800"><g transform="translate(5,0)"><rect fill="red"/></g></svg>"#);
        let b = doc(r#"<svg width="600" height="800"><g><rect x="5" fill="blue"/></g></svg>"#);
        let s = diff_geometry(&a, &b);
        assert!(s.score < 1e-12);
        assert_eq!(s.attribute_mismatches.len(), 1);
        assert_eq!(s.attribute_mismatches[0].attribute, "fill");
    }
}
