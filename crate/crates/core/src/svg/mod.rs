//! Lossless SVG document model.
//!
//! The tree keeps attribute values exactly as they appear in the source
//! (escaped form, original order) so that serializing a parsed document
//! renders identically to the input. Whitespace between attributes inside
//! a start tag is normalized to a single space.

mod markers;
mod parser;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use markers::{
    insert_markers, strip_markers, GroupMarker, LayerRole, MarkedUpSvg, MarkerInfo, MarkupError,
    MARKER_PREFIX, MARKER_TAG,
};
pub use parser::parse;

/// Attribute carrying the injected element identity.
pub const ID_ATTR: &str = "data-dw-id";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SvgError {
    #[error("malformed XML at offset {offset}: {message}")]
    MalformedXml { offset: usize, message: String },
    #[error("root element is <{0}>, expected <svg>")]
    NotAnSvg(String),
    #[error("document already carries {ID_ATTR}=\"{0}\"")]
    IdCollision(String),
}

/// Positive identity number assigned in pre-order.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ElementId(pub u32);

impl fmt::Display for ElementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attribute {
    pub name: String,
    /// Raw (still escaped) value.
    pub value: String,
    pub quote: char,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    Element(Element),
    /// Raw character data, entities left unexpanded.
    Text(String),
    Comment(String),
    CData(String),
    ProcessingInstruction(String),
}

impl Node {
    pub fn as_element(&self) -> Option<&Element> {
        match self {
            Node::Element(e) => Some(e),
            _ => None,
        }
    }

    pub fn as_element_mut(&mut self) -> Option<&mut Element> {
        match self {
            Node::Element(e) => Some(e),
            _ => None,
        }
    }

    pub fn is_blank_text(&self) -> bool {
        matches!(self, Node::Text(t) if t.trim().is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Element {
    pub tag: String,
    pub attributes: Vec<Attribute>,
    pub children: Vec<Node>,
}

impl Element {
    pub fn new(tag: impl Into<String>) -> Self {
        Element { tag: tag.into(), attributes: Vec::new(), children: Vec::new() }
    }

    /// Raw attribute value.
    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attributes.iter().find(|a| a.name == name).map(|a| a.value.as_str())
    }

    /// Attribute value with the predefined XML entities expanded.
    pub fn attr_unescaped(&self, name: &str) -> Option<String> {
        self.attr(name).map(unescape)
    }

    pub fn attr_f64(&self, name: &str) -> Option<f64> {
        let raw = self.attr(name)?.trim();
        let raw = raw.strip_suffix("px").unwrap_or(raw);
        raw.parse::<f64>().ok().filter(|v| v.is_finite())
    }

    /// Sets an attribute from an unescaped value, keeping its position if it
    /// already exists.
    pub fn set_attr(&mut self, name: &str, value: &str) {
        let escaped = escape_attr(value);
        match self.attributes.iter_mut().find(|a| a.name == name) {
            Some(a) => {
                a.value = escaped;
                a.quote = '"';
            }
            None => self.attributes.push(Attribute {
                name: name.to_string(),
                value: escaped,
                quote: '"',
            }),
        }
    }

    pub fn remove_attr(&mut self, name: &str) -> Option<Attribute> {
        let idx = self.attributes.iter().position(|a| a.name == name)?;
        Some(self.attributes.remove(idx))
    }

    pub fn id(&self) -> Option<ElementId> {
        self.attr(ID_ATTR)?.trim().parse().ok().map(ElementId)
    }

    pub fn is_marker(&self) -> bool {
        self.tag.starts_with(MARKER_PREFIX)
    }

    pub fn element_children(&self) -> impl Iterator<Item = &Element> {
        self.children.iter().filter_map(Node::as_element)
    }

    /// Pre-order traversal including `self`.
    pub fn descendants(&self) -> Descendants<'_> {
        Descendants { stack: vec![self] }
    }

    pub fn find(&self, id: ElementId) -> Option<&Element> {
        self.descendants().find(|e| e.id() == Some(id))
    }

    pub fn find_mut(&mut self, id: ElementId) -> Option<&mut Element> {
        if self.id() == Some(id) {
            return Some(self);
        }
        self.children
            .iter_mut()
            .filter_map(Node::as_element_mut)
            .find_map(|c| c.find_mut(id))
    }

    /// Concatenated unescaped character data of this element's subtree.
    pub fn text_content(&self) -> String {
        let mut out = String::new();
        collect_text(self, &mut out);
        out
    }

    fn write_to(&self, out: &mut String) {
        out.push('<');
        out.push_str(&self.tag);
        for a in &self.attributes {
            out.push(' ');
            out.push_str(&a.name);
            out.push('=');
            out.push(a.quote);
            out.push_str(&a.value);
            out.push(a.quote);
        }
        if self.children.is_empty() {
            out.push_str("/>");
            return;
        }
        out.push('>');
        for child in &self.children {
            match child {
                Node::Element(e) => e.write_to(out),
                Node::Text(t) => out.push_str(t),
                Node::Comment(c) => {
                    out.push_str("<!--");
                    out.push_str(c);
                    out.push_str("-->");
                }
                Node::CData(c) => {
                    out.push_str("<![CDATA[");
                    out.push_str(c);
                    out.push_str("]]>");
                }
                Node::ProcessingInstruction(p) => {
                    out.push_str("<?");
                    out.push_str(p);
                    out.push_str("?>");
                }
            }
        }
        out.push_str("</");
        out.push_str(&self.tag);
        out.push('>');
    }

    pub fn to_xml(&self) -> String {
        let mut out = String::new();
        self.write_to(&mut out);
        out
    }
}

fn collect_text(e: &Element, out: &mut String) {
    for child in &e.children {
        match child {
            Node::Text(t) => out.push_str(&unescape(t)),
            Node::CData(t) => out.push_str(t),
            Node::Element(c) => collect_text(c, out),
            _ => {}
        }
    }
}

pub struct Descendants<'a> {
    stack: Vec<&'a Element>,
}

impl<'a> Iterator for Descendants<'a> {
    type Item = &'a Element;

    fn next(&mut self) -> Option<&'a Element> {
        let next = self.stack.pop()?;
        self.stack.extend(next.element_children().collect::<Vec<_>>().into_iter().rev());
        Some(next)
    }
}

/// A parsed SVG document. `source_bytes` is the verbatim input the tree was
/// originally parsed from and is carried unchanged through transformations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SvgDocument {
    pub prolog: String,
    pub root: Element,
    pub epilog: String,
    source: Arc<[u8]>,
}

impl SvgDocument {
    pub(crate) fn from_parts(prolog: String, root: Element, epilog: String, source: &[u8]) -> Self {
        SvgDocument { prolog, root, epilog, source: Arc::from(source) }
    }

    pub fn source_bytes(&self) -> &[u8] {
        &self.source
    }

    /// Replaces the root tree, keeping prolog, epilog and source bytes.
    pub fn with_root(&self, root: Element) -> Self {
        SvgDocument { root, ..self.clone() }
    }

    pub fn to_xml(&self) -> String {
        let mut out = String::with_capacity(self.source.len() + 64);
        out.push_str(&self.prolog);
        self.root.write_to(&mut out);
        out.push_str(&self.epilog);
        out
    }

    pub fn elements(&self) -> Descendants<'_> {
        self.root.descendants()
    }

    pub fn find(&self, id: ElementId) -> Option<&Element> {
        self.root.find(id)
    }

    pub fn ids(&self) -> Vec<ElementId> {
        self.elements().filter_map(Element::id).collect()
    }

    pub fn max_id(&self) -> u32 {
        self.ids().into_iter().map(|i| i.0).max().unwrap_or(0)
    }

    /// Canvas size from `width`/`height`, falling back to the `viewBox`.
    pub fn viewport(&self) -> Option<(f64, f64)> {
        let vb = self.view_box();
        let w = self.root.attr_f64("width").or(vb.map(|v| v.2));
        let h = self.root.attr_f64("height").or(vb.map(|v| v.3));
        match (w, h) {
            (Some(w), Some(h)) if w > 0.0 && h > 0.0 => Some((w, h)),
            _ => None,
        }
    }

    pub fn view_box(&self) -> Option<(f64, f64, f64, f64)> {
        let raw = self.root.attr("viewBox")?;
        let nums: Vec<f64> = raw
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<Result<_, _>>()
            .ok()?;
        match nums.as_slice() {
            [x, y, w, h] => Some((*x, *y, *w, *h)),
            _ => None,
        }
    }

    pub fn diagonal(&self) -> f64 {
        let (w, h) = self.viewport().unwrap_or((1.0, 1.0));
        (w * w + h * h).sqrt()
    }
}

/// Assigns `data-dw-id` to every element in pre-order, starting at 1.
pub fn assign_ids(doc: &SvgDocument) -> Result<SvgDocument, SvgError> {
    if let Some(existing) = doc.elements().find_map(|e| e.attr(ID_ATTR)) {
        return Err(SvgError::IdCollision(existing.to_string()));
    }
    let mut root = doc.root.clone();
    let mut next = 1u32;
    number(&mut root, &mut next);
    Ok(doc.with_root(root))
}

fn number(e: &mut Element, next: &mut u32) {
    e.set_attr(ID_ATTR, &next.to_string());
    *next += 1;
    for child in e.children.iter_mut().filter_map(Node::as_element_mut) {
        number(child, next);
    }
}

/// Removes every `data-dw-id` attribute.
pub fn strip_ids(doc: &SvgDocument) -> SvgDocument {
    fn walk(e: &mut Element) {
        e.remove_attr(ID_ATTR);
        for c in e.children.iter_mut().filter_map(Node::as_element_mut) {
            walk(c);
        }
    }
    let mut root = doc.root.clone();
    walk(&mut root);
    doc.with_root(root)
}

pub fn escape_attr(v: &str) -> String {
    let mut out = String::with_capacity(v.len());
    for c in v.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

pub fn escape_text(v: &str) -> String {
    let mut out = String::with_capacity(v.len());
    for c in v.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            _ => out.push(c),
        }
    }
    out
}

pub fn unescape(v: &str) -> String {
    if !v.contains('&') {
        return v.to_string();
    }
    let mut out = String::with_capacity(v.len());
    let mut rest = v;
    while let Some(i) = rest.find('&') {
        out.push_str(&rest[..i]);
        rest = &rest[i..];
        let Some(end) = rest.find(';') else { break };
        let entity = &rest[1..end];
        let decoded = match entity {
            "amp" => Some('&'),
            "lt" => Some('<'),
            "gt" => Some('>'),
            "quot" => Some('"'),
            "apos" => Some('\''),
            _ if entity.starts_with("#x") => {
                u32::from_str_radix(&entity[2..], 16).ok().and_then(char::from_u32)
            }
            _ if entity.starts_with('#') => entity[1..].parse().ok().and_then(char::from_u32),
            _ => None,
        };
        match decoded {
            Some(c) => {
                out.push(c);
                rest = &rest[end + 1..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assigns_ids_in_pre_order() {
        let doc = parse(b"<svg><g><rect/></g><text/></svg>").unwrap();
        let doc = assign_ids(&doc).unwrap();
        let tags: Vec<_> =
            doc.elements().map(|e| (e.tag.clone(), e.id().unwrap().0)).collect();
        assert_eq!(
            tags,
            vec![
                ("svg".to_string(), 1),
                ("g".to_string(), 2),
                ("rect".to_string(), 3),
                ("text".to_string(), 4)
            ]
        );
    }

    #[test]
    fn single_root_gets_id_one() {
        let doc = assign_ids(&parse(b"<svg/>").unwrap()).unwrap();
        assert_eq!(doc.root.id(), Some(ElementId(1)));
    }

    #[test]
    fn existing_id_collides() {
        let doc = parse(br#"<svg><rect data-dw-id="7"/></svg>"#).unwrap();
        assert_eq!(assign_ids(&doc), Err(SvgError::IdCollision("7".into())));
    }

    #[test]
    fn strip_ids_restores_source() {
        let src = r#"<svg width="10"><rect x="1"/></svg>"#;
        let doc = parse(src.as_bytes()).unwrap();
        assert_eq!(strip_ids(&assign_ids(&doc).unwrap()).to_xml(), src);
    }

    #[test]
    fn unescape_entities() {
        assert_eq!(unescape("a &amp; b &#65;&#x42; &bogus;"), "a & b AB &bogus;");
    }

    #[test]
    fn viewport_falls_back_to_view_box() {
        let doc = parse(br#"<svg viewBox="0 0 800 600"/>"#).unwrap();
        assert_eq!(doc.viewport(), Some((800.0, 600.0)));
        assert_eq!(doc.diagonal(), 1000.0);
    }
}
