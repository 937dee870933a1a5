//! Prompt views: a reduced copy of an id-assigned reference that keeps every
//! identity but drops detail a model does not need. The original document is
//! never modified.

use std::io::Write as _;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{self, point_segment_distance, PathParseError, Point, Subpath};
use crate::svg::{Element, Node, SvgDocument, ID_ATTR};

/// Attribute listing the ids of elements dropped while emptying a
/// descriptive element, so the prompt view still mentions every id.
pub const ELIDED_ATTR: &str = "data-dw-elided";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Elements whose content is emptied.
    pub descriptive_elements: Vec<String>,
    /// Elements whose `text` descendants are emptied.
    pub text_emptying_containers: Vec<String>,
    pub geometric_attributes: Vec<String>,
    pub decimal_places: u32,
    /// RDP epsilon as a fraction of the canvas diagonal.
    pub path_tolerance: f64,
    pub thumbnail_max_width: u32,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            descriptive_elements: ["style", "filter", "script", "metadata"].map(String::from).to_vec(),
            text_emptying_containers: vec!["clipPath".to_string()],
            geometric_attributes: ["x", "y", "width", "height", "r", "cx", "cy", "points", "d", "transform"]
                .map(String::from)
                .to_vec(),
            decimal_places: 2,
            path_tolerance: 0.002,
            thumbnail_max_width: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewStats {
    pub element_count: usize,
    pub bytes_before: usize,
    pub bytes_after: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Thumbnail {
    pub width: u32,
    pub height: u32,
    pub png: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptView {
    pub simplified: SvgDocument,
    pub thumbnail: Option<Thumbnail>,
    pub stats: ViewStats,
}

/// Builds the prompt view of an id-assigned document.
pub fn build_prompt_view(
    doc: &SvgDocument,
    config: &PreprocessConfig,
    renderer: Option<&dyn Renderer>,
) -> PromptView {
    let reduced = reduce_noise_with(doc, config);
    let epsilon = config.path_tolerance * doc.diagonal();
    let mut root = reduced.root.clone();
    simplify_paths_in(&mut root, epsilon, config.decimal_places);
    let simplified =
        round_numeric_with(&reduced.with_root(root), config.decimal_places, &config.geometric_attributes);
    let thumbnail = make_thumbnail(doc, config.thumbnail_max_width, renderer).ok();
    PromptView {
        stats: ViewStats {
            element_count: doc.elements().count(),
            bytes_before: doc.to_xml().len(),
            bytes_after: simplified.to_xml().len(),
        },
        simplified,
        thumbnail,
    }
}

pub fn reduce_noise(doc: &SvgDocument) -> SvgDocument {
    reduce_noise_with(doc, &PreprocessConfig::default())
}

/// Empties the content of descriptive elements, keeping the elements and
/// their attributes.
pub fn reduce_noise_with(doc: &SvgDocument, config: &PreprocessConfig) -> SvgDocument {
    fn walk(e: &mut Element, config: &PreprocessConfig, in_text_container: bool) {
        let empty_all = config.descriptive_elements.iter().any(|t| *t == e.tag);
        let empty_text = in_text_container && e.tag == "text";
        if (empty_all || empty_text) && !e.children.is_empty() {
            let elided: Vec<String> = e
                .descendants()
                .skip(1)
                .filter_map(|d| d.attr(ID_ATTR).map(str::to_string))
                .collect();
            e.children.clear();
            if !elided.is_empty() {
                e.set_attr(ELIDED_ATTR, &elided.join(" "));
            }
            return;
        }
        let inside = in_text_container || config.text_emptying_containers.iter().any(|t| *t == e.tag);
        for c in e.children.iter_mut().filter_map(Node::as_element_mut) {
            walk(c, config, inside);
        }
    }
    let mut root = doc.root.clone();
    walk(&mut root, config, false);
    doc.with_root(root)
}

pub fn round_numeric(doc: &SvgDocument, places: u32) -> SvgDocument {
    round_numeric_with(doc, places, &PreprocessConfig::default().geometric_attributes)
}

/// Rounds numeric tokens of geometric attributes half-to-even.
pub fn round_numeric_with(doc: &SvgDocument, places: u32, attributes: &[String]) -> SvgDocument {
    fn walk(e: &mut Element, places: u32, attributes: &[String]) {
        for a in e.attributes.iter_mut() {
            if attributes.iter().any(|n| *n == a.name) {
                a.value = round_tokens(&a.value, places);
            }
        }
        for c in e.children.iter_mut().filter_map(Node::as_element_mut) {
            walk(c, places, attributes);
        }
    }
    let mut root = doc.root.clone();
    walk(&mut root, places, attributes);
    doc.with_root(root)
}

/// Rewrites every numeric token in `s`. Tokens without a fraction or
/// exponent are left verbatim (arc flags like `011` stay intact).
pub fn round_tokens(s: &str, places: u32) -> String {
    let b = s.as_bytes();
    let mut out = String::with_capacity(s.len());
    let mut i = 0;
    while i < b.len() {
        let starts_number = b[i].is_ascii_digit()
            || (b[i] == b'.' && b.get(i + 1).is_some_and(u8::is_ascii_digit))
            || ((b[i] == b'-' || b[i] == b'+')
                && (b.get(i + 1).is_some_and(u8::is_ascii_digit)
                    || (b.get(i + 1) == Some(&b'.') && b.get(i + 2).is_some_and(u8::is_ascii_digit))));
        if !starts_number || (b[i].is_ascii_digit() && is_identifier_tail(b, i)) {
            out.push(b[i] as char);
            i += 1;
            continue;
        }
        let end = scan_number(b, i);
        let rounded = round_decimal(&s[i..end], places);
        // `1.5.25` style packing needs a separator once `.25` becomes `0.2`
        if out.ends_with(|c: char| c.is_ascii_digit() || c == '.') && !rounded.starts_with(['-', '+']) {
            out.push(' ');
        }
        out.push_str(&rounded);
        i = end;
    }
    out
}

fn is_identifier_tail(b: &[u8], i: usize) -> bool {
    // e.g. `rotate3d(`: a digit glued to a word that is not a path command
    let mut j = i;
    while j > 0 && b[j - 1].is_ascii_alphabetic() {
        j -= 1;
    }
    i - j > 1
}

fn scan_number(b: &[u8], start: usize) -> usize {
    let mut i = start;
    if b[i] == b'-' || b[i] == b'+' {
        i += 1;
    }
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    if i < b.len() && b[i] == b'.' {
        i += 1;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        let mut j = i + 1;
        if j < b.len() && (b[j] == b'-' || b[j] == b'+') {
            j += 1;
        }
        if j < b.len() && b[j].is_ascii_digit() {
            while j < b.len() && b[j].is_ascii_digit() {
                j += 1;
            }
            i = j;
        }
    }
    i
}

/// Rounds one decimal literal half-to-even on its digit string, avoiding
/// binary floating-point artifacts.
pub fn round_decimal(token: &str, places: u32) -> String {
    let (negative, body) = match token.as_bytes().first() {
        Some(b'-') => (true, &token[1..]),
        Some(b'+') => (false, &token[1..]),
        _ => (false, token),
    };
    let (mantissa, exponent) = match body.find(['e', 'E']) {
        Some(i) => (&body[..i], body[i + 1..].parse::<i64>().unwrap_or(0)),
        None => (body, 0),
    };
    if !mantissa.contains('.') && exponent == 0 && !body.contains(['e', 'E']) {
        return token.to_string();
    }
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    let mut digits: Vec<u8> = int_part.bytes().chain(frac_part.bytes()).map(|c| c - b'0').collect();
    // position of the decimal point within `digits`
    let mut point = int_part.len() as i64 + exponent;
    if point < 0 {
        let pad = (-point) as usize;
        digits.splice(0..0, std::iter::repeat(0).take(pad));
        point = 0;
    }
    let point = point as usize;
    if digits.len() < point {
        digits.resize(point, 0);
    }
    let cut = point + places as usize;
    if digits.len() > cut {
        let first_dropped = digits[cut];
        let rest_nonzero = digits[cut + 1..].iter().any(|&d| d != 0);
        let last_kept_odd = cut > 0 && digits[cut - 1] % 2 == 1;
        digits.truncate(cut);
        let round_up = first_dropped > 5 || (first_dropped == 5 && (rest_nonzero || last_kept_odd));
        if round_up {
            let mut k = cut;
            loop {
                if k == 0 {
                    digits.insert(0, 1);
                    return format_digits(negative, &digits, point + 1);
                }
                k -= 1;
                if digits[k] == 9 {
                    digits[k] = 0;
                } else {
                    digits[k] += 1;
                    break;
                }
            }
        }
    }
    format_digits(negative, &digits, point)
}

fn format_digits(negative: bool, digits: &[u8], point: usize) -> String {
    let int: String = digits[..point].iter().map(|d| (b'0' + d) as char).collect();
    let int = int.trim_start_matches('0');
    let frac: String = digits[point..].iter().map(|d| (b'0' + d) as char).collect();
    let frac = frac.trim_end_matches('0');
    let int = if int.is_empty() { "0" } else { int };
    if int == "0" && frac.is_empty() {
        return "0".to_string();
    }
    let sign = if negative { "-" } else { "" };
    if frac.is_empty() {
        format!("{sign}{int}")
    } else {
        format!("{sign}{int}.{frac}")
    }
}

/// Simplifies path data: curves are flattened, then each subpath is reduced
/// with Ramer–Douglas–Peucker at `tolerance × diagonal`.
pub fn simplify_path(d: &str, tolerance: f64, diagonal: f64) -> Result<String, PathParseError> {
    let epsilon = tolerance * diagonal;
    let subpaths = geom::path_points(d)?;
    let reduced: Vec<Subpath> = subpaths
        .into_iter()
        .map(|sp| Subpath { points: rdp(&sp.points, epsilon), closed: sp.closed })
        .collect();
    Ok(geom::format_polyline_path(&reduced))
}

/// Ramer–Douglas–Peucker over point-to-segment distances; keeps both
/// endpoints.
pub fn rdp(points: &[Point], epsilon: f64) -> Vec<Point> {
    if points.len() < 3 {
        return points.to_vec();
    }
    let mut keep = vec![false; points.len()];
    keep[0] = true;
    keep[points.len() - 1] = true;
    let mut stack = vec![(0usize, points.len() - 1)];
    while let Some((start, end)) = stack.pop() {
        if end <= start + 1 {
            continue;
        }
        let (mut far, mut far_dist) = (start, -1.0);
        for i in start + 1..end {
            let d = point_segment_distance(points[i], points[start], points[end]);
            if d > far_dist {
                far = i;
                far_dist = d;
            }
        }
        if far_dist > epsilon {
            keep[far] = true;
            stack.push((start, far));
            stack.push((far, end));
        }
    }
    points.iter().zip(keep).filter(|(_, k)| *k).map(|(p, _)| *p).collect()
}

fn simplify_paths_in(e: &mut Element, epsilon: f64, places: u32) {
    if e.tag == "path" {
        if let Some(d) = e.attr_unescaped("d") {
            if let Ok(subpaths) = geom::path_points(&d) {
                let reduced: Vec<Subpath> = subpaths
                    .into_iter()
                    .map(|sp| Subpath { points: rdp(&sp.points, epsilon), closed: sp.closed })
                    .collect();
                let candidate = round_tokens(&geom::format_polyline_path(&reduced), places);
                if candidate.len() < round_tokens(&d, places).len() {
                    e.set_attr("d", &candidate);
                }
            }
        }
    }
    for c in e.children.iter_mut().filter_map(Node::as_element_mut) {
        simplify_paths_in(c, epsilon, places);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ThumbnailError {
    #[error("no renderer configured")]
    RendererUnavailable,
    #[error("document has no resolvable viewport")]
    NoViewport,
    #[error("renderer failed: {0}")]
    RenderFailed(String),
}

/// Rasterizes SVG text to PNG bytes at the requested size.
pub trait Renderer: Send + Sync {
    fn render_png(&self, svg: &str, width: u32, height: u32) -> Result<Vec<u8>, ThumbnailError>;
}

/// Runs an external rasterizer: `<command> --width W --height H`, SVG on
/// stdin, PNG on stdout.
#[derive(Debug, Clone)]
pub struct CommandRenderer {
    pub command: String,
}

impl Renderer for CommandRenderer {
    fn render_png(&self, svg: &str, width: u32, height: u32) -> Result<Vec<u8>, ThumbnailError> {
        let mut child = Command::new(&self.command)
            .args(["--width", &width.to_string(), "--height", &height.to_string()])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| ThumbnailError::RenderFailed(e.to_string()))?;
        if let Some(mut stdin) = child.stdin.take() {
            stdin
                .write_all(svg.as_bytes())
                .map_err(|e| ThumbnailError::RenderFailed(e.to_string()))?;
        }
        let out = child.wait_with_output().map_err(|e| ThumbnailError::RenderFailed(e.to_string()))?;
        if !out.status.success() {
            return Err(ThumbnailError::RenderFailed(String::from_utf8_lossy(&out.stderr).into_owned()));
        }
        Ok(out.stdout)
    }
}

/// Proportional size capped at `max_width`; never upscales.
pub fn thumbnail_size(doc: &SvgDocument, max_width: u32) -> Option<(u32, u32)> {
    let (w, h) = doc.viewport()?;
    let width = w.min(max_width as f64);
    let height = h * width / w;
    Some((width.round().max(1.0) as u32, height.round().max(1.0) as u32))
}

pub fn make_thumbnail(
    doc: &SvgDocument,
    max_width: u32,
    renderer: Option<&dyn Renderer>,
) -> Result<Thumbnail, ThumbnailError> {
    let (width, height) = thumbnail_size(doc, max_width).ok_or(ThumbnailError::NoViewport)?;
    let renderer = renderer.ok_or(ThumbnailError::RendererUnavailable)?;
    let png = renderer.render_png(&doc.to_xml(), width, height)?;
    Ok(Thumbnail { width, height, png })
}
