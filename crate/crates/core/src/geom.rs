//! Points, SVG path data and number formatting shared by the pipeline stages.

use std::f64::consts::PI;
use std::fmt::Write as _;

use thiserror::Error;

/// Samples taken per curved segment when flattening.
pub const CURVE_SAMPLES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(self, o: Point) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }

    fn lerp(self, o: Point, t: f64) -> Point {
        Point::new(self.x + (o.x - self.x) * t, self.y + (o.y - self.y) * t)
    }
}

/// Distance from `p` to the closed segment `a`–`b`.
pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.dist(Point::new(a.x + t * dx, a.y + t * dy))
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("path parse error at offset {offset}: {message}")]
pub struct PathParseError {
    pub offset: usize,
    pub message: String,
}

/// Absolute path segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Segment {
    MoveTo(Point),
    LineTo(Point),
    Cubic(Point, Point, Point),
    Quad(Point, Point),
    Arc { rx: f64, ry: f64, rotation: f64, large: bool, sweep: bool, to: Point },
    Close,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subpath {
    pub points: Vec<Point>,
    pub closed: bool,
}

struct PathLexer<'a> {
    s: &'a [u8],
    pos: usize,
}

impl<'a> PathLexer<'a> {
    fn skip_sep(&mut self) {
        while self.pos < self.s.len() && (self.s[self.pos].is_ascii_whitespace() || self.s[self.pos] == b',') {
            self.pos += 1;
        }
    }

    fn err(&self, message: &str) -> PathParseError {
        PathParseError { offset: self.pos, message: message.to_string() }
    }

    fn at_number(&mut self) -> bool {
        self.skip_sep();
        self.pos < self.s.len() && matches!(self.s[self.pos], b'0'..=b'9' | b'.' | b'-' | b'+')
    }

    fn number(&mut self) -> Result<f64, PathParseError> {
        self.skip_sep();
        let start = self.pos;
        let s = self.s;
        let mut i = self.pos;
        if i < s.len() && (s[i] == b'-' || s[i] == b'+') {
            i += 1;
        }
        let mut digits = 0;
        while i < s.len() && s[i].is_ascii_digit() {
            i += 1;
            digits += 1;
        }
        if i < s.len() && s[i] == b'.' {
            i += 1;
            while i < s.len() && s[i].is_ascii_digit() {
                i += 1;
                digits += 1;
            }
        }
        if digits == 0 {
            return Err(self.err("expected a number"));
        }
        if i < s.len() && (s[i] == b'e' || s[i] == b'E') {
            let mut j = i + 1;
            if j < s.len() && (s[j] == b'-' || s[j] == b'+') {
                j += 1;
            }
            if j < s.len() && s[j].is_ascii_digit() {
                while j < s.len() && s[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        self.pos = i;
        std::str::from_utf8(&s[start..i])
            .ok()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| PathParseError { offset: start, message: "invalid number".into() })
    }

    fn flag(&mut self) -> Result<bool, PathParseError> {
        self.skip_sep();
        match self.s.get(self.pos) {
            Some(b'0') => {
                self.pos += 1;
                Ok(false)
            }
            Some(b'1') => {
                self.pos += 1;
                Ok(true)
            }
            _ => Err(self.err("expected an arc flag")),
        }
    }

    fn point(&mut self) -> Result<Point, PathParseError> {
        Ok(Point::new(self.number()?, self.number()?))
    }
}

/// Parses path data into absolute segments.
pub fn parse_path(d: &str) -> Result<Vec<Segment>, PathParseError> {
    let mut lx = PathLexer { s: d.as_bytes(), pos: 0 };
    let mut out = Vec::new();
    let mut cur = Point::new(0.0, 0.0);
    let mut start = cur;
    let mut last_ctrl: Option<(u8, Point)> = None;
    let mut cmd: Option<u8> = None;
    loop {
        lx.skip_sep();
        if lx.pos >= lx.s.len() {
            break;
        }
        let c = lx.s[lx.pos];
        if c.is_ascii_alphabetic() {
            if !b"MmLlHhVvCcSsQqTtAaZz".contains(&c) {
                return Err(lx.err("unknown path command"));
            }
            lx.pos += 1;
            cmd = Some(c);
        } else if cmd.is_none() {
            return Err(lx.err("path must start with a command"));
        } else if matches!(cmd, Some(b'Z' | b'z')) {
            return Err(lx.err("unexpected number after close"));
        }
        let op = cmd.unwrap_or(b'M');
        let rel = op.is_ascii_lowercase();
        let base = if rel { cur } else { Point::new(0.0, 0.0) };
        let offset = |p: Point| Point::new(p.x + base.x, p.y + base.y);
        match op.to_ascii_uppercase() {
            b'M' => {
                cur = offset(lx.point()?);
                start = cur;
                out.push(Segment::MoveTo(cur));
                // subsequent pairs are implicit line-tos
                cmd = Some(if rel { b'l' } else { b'L' });
                last_ctrl = None;
            }
            b'L' => {
                cur = offset(lx.point()?);
                out.push(Segment::LineTo(cur));
                last_ctrl = None;
            }
            b'H' => {
                let x = lx.number()?;
                cur = Point::new(if rel { cur.x + x } else { x }, cur.y);
                out.push(Segment::LineTo(cur));
                last_ctrl = None;
            }
            b'V' => {
                let y = lx.number()?;
                cur = Point::new(cur.x, if rel { cur.y + y } else { y });
                out.push(Segment::LineTo(cur));
                last_ctrl = None;
            }
            b'C' => {
                let c1 = offset(lx.point()?);
                let c2 = offset(lx.point()?);
                let to = offset(lx.point()?);
                out.push(Segment::Cubic(c1, c2, to));
                last_ctrl = Some((b'C', c2));
                cur = to;
            }
            b'S' => {
                let c1 = match last_ctrl {
                    Some((b'C', c)) => Point::new(2.0 * cur.x - c.x, 2.0 * cur.y - c.y),
                    _ => cur,
                };
                let c2 = offset(lx.point()?);
                let to = offset(lx.point()?);
                out.push(Segment::Cubic(c1, c2, to));
                last_ctrl = Some((b'C', c2));
                cur = to;
            }
            b'Q' => {
                let c = offset(lx.point()?);
                let to = offset(lx.point()?);
                out.push(Segment::Quad(c, to));
                last_ctrl = Some((b'Q', c));
                cur = to;
            }
            b'T' => {
                let c = match last_ctrl {
                    Some((b'Q', c)) => Point::new(2.0 * cur.x - c.x, 2.0 * cur.y - c.y),
                    _ => cur,
                };
                let to = offset(lx.point()?);
                out.push(Segment::Quad(c, to));
                last_ctrl = Some((b'Q', c));
                cur = to;
            }
            b'A' => {
                let rx = lx.number()?;
                let ry = lx.number()?;
                let rotation = lx.number()?;
                let large = lx.flag()?;
                let sweep = lx.flag()?;
                let to = offset(lx.point()?);
                out.push(Segment::Arc { rx, ry, rotation, large, sweep, to });
                last_ctrl = None;
                cur = to;
            }
            b'Z' => {
                out.push(Segment::Close);
                cur = start;
                last_ctrl = None;
                continue;
            }
            _ => unreachable!(),
        }
        if !lx.at_number() && lx.pos < lx.s.len() && !lx.s[lx.pos].is_ascii_alphabetic() {
            return Err(lx.err("unexpected character"));
        }
    }
    Ok(out)
}

/// Flattens segments into polylines; curves contribute [`CURVE_SAMPLES`]
/// points each.
pub fn flatten(segments: &[Segment]) -> Vec<Subpath> {
    let mut subpaths: Vec<Subpath> = Vec::new();
    let mut cur = Point::new(0.0, 0.0);
    let mut open: Option<Subpath> = None;
    for seg in segments {
        match *seg {
            Segment::MoveTo(p) => {
                subpaths.extend(open.take());
                open = Some(Subpath { points: vec![p], closed: false });
                cur = p;
                continue;
            }
            Segment::Close => {
                if let Some(mut sp) = open.take() {
                    sp.closed = true;
                    // drawing may continue from the start point
                    cur = sp.points[0];
                    subpaths.push(sp);
                }
                continue;
            }
            _ => {}
        }
        let sp = open.get_or_insert_with(|| Subpath { points: vec![cur], closed: false });
        match *seg {
            Segment::LineTo(p) => {
                sp.points.push(p);
                cur = p;
            }
            Segment::Cubic(c1, c2, to) => {
                let from = cur;
                for i in 1..=CURVE_SAMPLES {
                    let t = i as f64 / CURVE_SAMPLES as f64;
                    let mt = 1.0 - t;
                    sp.points.push(Point::new(
                        mt * mt * mt * from.x + 3.0 * mt * mt * t * c1.x + 3.0 * mt * t * t * c2.x + t * t * t * to.x,
                        mt * mt * mt * from.y + 3.0 * mt * mt * t * c1.y + 3.0 * mt * t * t * c2.y + t * t * t * to.y,
                    ));
                }
                cur = to;
            }
            Segment::Quad(c, to) => {
                let from = cur;
                for i in 1..=CURVE_SAMPLES {
                    let t = i as f64 / CURVE_SAMPLES as f64;
                    sp.points.push(from.lerp(c, t).lerp(c.lerp(to, t), t));
                }
                cur = to;
            }
            Segment::Arc { rx, ry, rotation, large, sweep, to } => {
                sp.points.extend(arc_points(cur, rx, ry, rotation, large, sweep, to));
                cur = to;
            }
            Segment::MoveTo(_) | Segment::Close => unreachable!(),
        }
    }
    subpaths.extend(open);
    subpaths
}

/// Samples an endpoint-parameterized elliptical arc (excluding `from`).
fn arc_points(from: Point, rx: f64, ry: f64, rotation: f64, large: bool, sweep: bool, to: Point) -> Vec<Point> {
    let (mut rx, mut ry) = (rx.abs(), ry.abs());
    if rx == 0.0 || ry == 0.0 || from == to {
        return vec![to];
    }
    let phi = rotation.to_radians();
    let (sin_phi, cos_phi) = phi.sin_cos();
    let dx = (from.x - to.x) / 2.0;
    let dy = (from.y - to.y) / 2.0;
    let x1 = cos_phi * dx + sin_phi * dy;
    let y1 = -sin_phi * dx + cos_phi * dy;
    let lambda = (x1 * x1) / (rx * rx) + (y1 * y1) / (ry * ry);
    if lambda > 1.0 {
        rx *= lambda.sqrt();
        ry *= lambda.sqrt();
    }
    let num = rx * rx * ry * ry - rx * rx * y1 * y1 - ry * ry * x1 * x1;
    let den = rx * rx * y1 * y1 + ry * ry * x1 * x1;
    let mut coef = (num / den).max(0.0).sqrt();
    if large == sweep {
        coef = -coef;
    }
    let cxp = coef * rx * y1 / ry;
    let cyp = -coef * ry * x1 / rx;
    let cx = cos_phi * cxp - sin_phi * cyp + (from.x + to.x) / 2.0;
    let cy = sin_phi * cxp + cos_phi * cyp + (from.y + to.y) / 2.0;
    let angle = |ux: f64, uy: f64, vx: f64, vy: f64| (ux * vy - uy * vx).atan2(ux * vx + uy * vy);
    let theta1 = angle(1.0, 0.0, (x1 - cxp) / rx, (y1 - cyp) / ry);
    let mut delta = angle((x1 - cxp) / rx, (y1 - cyp) / ry, (-x1 - cxp) / rx, (-y1 - cyp) / ry);
    if !sweep && delta > 0.0 {
        delta -= 2.0 * PI;
    } else if sweep && delta < 0.0 {
        delta += 2.0 * PI;
    }
    (1..=CURVE_SAMPLES)
        .map(|i| {
            if i == CURVE_SAMPLES {
                return to;
            }
            let t = theta1 + delta * i as f64 / CURVE_SAMPLES as f64;
            let (s, c) = t.sin_cos();
            Point::new(cx + rx * c * cos_phi - ry * s * sin_phi, cy + rx * c * sin_phi + ry * s * cos_phi)
        })
        .collect()
}

/// Flattened points of path data.
pub fn path_points(d: &str) -> Result<Vec<Subpath>, PathParseError> {
    parse_path(d).map(|s| flatten(&s))
}

/// Emits subpaths as `M x y L x y ... Z` path data.
pub fn format_polyline_path(subpaths: &[Subpath]) -> String {
    let mut out = String::new();
    for sp in subpaths {
        for (i, p) in sp.points.iter().enumerate() {
            if !out.is_empty() {
                out.push(' ');
            }
            let _ = write!(out, "{}{} {}", if i == 0 { 'M' } else { 'L' }, fmt_num(p.x), fmt_num(p.y));
        }
        if sp.closed {
            out.push_str(" Z");
        }
    }
    out
}

/// Applies `p -> (sx * p.x + tx, sy * p.y + ty)` to every coordinate of the
/// path and emits it in absolute form.
pub fn transform_path(d: &str, sx: f64, sy: f64, tx: f64, ty: f64) -> Result<String, PathParseError> {
    let map = |p: Point| Point::new(sx * p.x + tx, sy * p.y + ty);
    let mut out = String::new();
    let mut push = |s: String| {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&s);
    };
    let pt = |p: Point| format!("{} {}", fmt_num(p.x), fmt_num(p.y));
    for seg in parse_path(d)? {
        match seg {
            Segment::MoveTo(p) => push(format!("M{}", pt(map(p)))),
            Segment::LineTo(p) => push(format!("L{}", pt(map(p)))),
            Segment::Cubic(a, b, c) => push(format!("C{} {} {}", pt(map(a)), pt(map(b)), pt(map(c)))),
            Segment::Quad(a, b) => push(format!("Q{} {}", pt(map(a)), pt(map(b)))),
            Segment::Arc { rx, ry, rotation, large, sweep, to } => {
                // exact for axis-aligned ellipses
                let mirrored = (sx < 0.0) != (sy < 0.0);
                push(format!(
                    "A{} {} {} {} {} {}",
                    fmt_num((rx * sx).abs()),
                    fmt_num((ry * sy).abs()),
                    fmt_num(rotation),
                    u8::from(large),
                    u8::from(sweep != mirrored),
                    pt(map(to))
                ))
            }
            Segment::Close => push("Z".to_string()),
        }
    }
    Ok(out)
}

/// Bounding box `(min_x, min_y, max_x, max_y)` of a point set.
pub fn bbox(points: impl IntoIterator<Item = Point>) -> Option<(f64, f64, f64, f64)> {
    points.into_iter().fold(None, |acc, p| {
        Some(match acc {
            None => (p.x, p.y, p.x, p.y),
            Some((a, b, c, d)) => (a.min(p.x), b.min(p.y), c.max(p.x), d.max(p.y)),
        })
    })
}

/// Parses a `points` attribute.
pub fn parse_points(s: &str) -> Option<Vec<Point>> {
    let nums: Vec<f64> = s
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().ok())
        .collect::<Option<_>>()?;
    if nums.len() % 2 != 0 {
        return None;
    }
    Some(nums.chunks(2).map(|c| Point::new(c[0], c[1])).collect())
}

/// Drops floating-point residue such as `30.000000000000004` by rounding
/// to twelve significant digits.
pub fn tidy(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.11e}").parse().unwrap_or(v)
}

/// Shortest round-trip decimal after rounding to at most four places.
pub fn fmt_num(v: f64) -> String {
    let r = (v * 1e4).round() / 1e4;
    if r == 0.0 {
        return "0".to_string();
    }
    format!("{r}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats_numbers() {
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(-0.00001), "0");
        assert_eq!(fmt_num(0.1 + 0.2), "0.3");
        assert_eq!(fmt_num(12.345678), "12.3457");
        assert_eq!(tidy(30.000000000000004), 30.0);
        assert_eq!(tidy(247.98780000000002), 247.9878);
        assert_eq!(tidy(-1e-300), -1e-300);
        assert_eq!(tidy(0.1 + 0.2), 0.3);
        assert_eq!(fmt_num(-3.5), "-3.5");
    }

    #[test]
    fn parses_compact_and_relative_forms() {
        let segs = parse_path("M1.5.5l1-1h2v-3z").unwrap();
        assert_eq!(
            segs,
            vec![
                Segment::MoveTo(Point::new(1.5, 0.5)),
                Segment::LineTo(Point::new(2.5, -0.5)),
                Segment::LineTo(Point::new(4.5, -0.5)),
                Segment::LineTo(Point::new(4.5, -3.5)),
                Segment::Close,
            ]
        );
    }

    #[test]
    fn implicit_lineto_after_move() {
        let segs = parse_path("M0 0 1 1 2 2").unwrap();
        assert_eq!(segs.len(), 3);
        assert_eq!(segs[2], Segment::LineTo(Point::new(2.0, 2.0)));
    }

    #[test]
    fn compact_arc_flags() {
        let segs = parse_path("M0 0a5 5 0 015 5").unwrap();
        assert_eq!(
            segs[1],
            Segment::Arc { rx: 5.0, ry: 5.0, rotation: 0.0, large: false, sweep: true, to: Point::new(5.0, 5.0) }
        );
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_path("X 1 2").is_err());
        assert!(parse_path("10 10").is_err());
        assert!(parse_path("M 1").is_err());
    }

    #[test]
    fn cubic_flattens_to_sixteen_samples() {
        let sp = path_points("M0 0 C0 10 10 10 10 0").unwrap();
        assert_eq!(sp[0].points.len(), 1 + CURVE_SAMPLES);
        assert_eq!(*sp[0].points.last().unwrap(), Point::new(10.0, 0.0));
    }

    #[test]
    fn semicircle_arc_stays_on_circle() {
        let sp = path_points("M0 0 A5 5 0 0 1 10 0").unwrap();
        for p in &sp[0].points {
            assert!((p.dist(Point::new(5.0, 0.0)) - 5.0).abs() < 1e-9);
        }
        // sweep=1 goes through negative y in SVG's y-down frame
        assert!(sp[0].points[8].y < 0.0);
    }

    #[test]
    fn transform_scales_about_origin() {
        assert_eq!(transform_path("M0 10 L5 20 Z", 1.0, 2.0, 3.0, -10.0).unwrap(), "M3 10 L8 30 Z");
    }

    #[test]
    fn segment_distance() {
        let d = point_segment_distance(Point::new(5.0, 5.0), Point::new(0.0, 0.0), Point::new(10.0, 0.0));
        assert_eq!(d, 5.0);
        let d = point_segment_distance(Point::new(13.0, 4.0), Point::new(0.0, 0.0), Point::new(10.0, 0.0));
        assert_eq!(d, 5.0);
    }
}
