use super::{Attribute, Element, Node, SvgDocument, SvgError};

/// Parses an SVG document, keeping everything needed to serialize it back.
pub fn parse(bytes: &[u8]) -> Result<SvgDocument, SvgError> {
    let src = std::str::from_utf8(bytes).map_err(|e| SvgError::MalformedXml {
        offset: e.valid_up_to(),
        message: "invalid UTF-8".into(),
    })?;
    let mut p = Parser { src, pos: 0 };
    let root_start = p.skip_misc(true)?;
    let root = p.element()?;
    let root_end = p.pos;
    p.skip_misc(false)?;
    if p.pos != src.len() {
        return Err(p.error("content after the root element"));
    }
    if root.tag != "svg" {
        return Err(SvgError::NotAnSvg(root.tag));
    }
    Ok(SvgDocument::from_parts(
        src[..root_start].to_string(),
        root,
        src[root_end..].to_string(),
        bytes,
    ))
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, message: &str) -> SvgError {
        SvgError::MalformedXml { offset: self.pos, message: message.to_string() }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn eof(&self) -> SvgError {
        SvgError::MalformedXml { offset: self.src.len(), message: "unexpected end of input".into() }
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn skip_ws(&mut self) -> bool {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
        self.pos > start
    }

    /// Consumes text up to and including `end`; returns the text before it.
    fn until(&mut self, end: &str) -> Result<&'a str, SvgError> {
        match self.rest().find(end) {
            Some(i) => {
                let s = &self.rest()[..i];
                self.pos += i + end.len();
                Ok(s)
            }
            None => Err(self.eof()),
        }
    }

    /// Skips whitespace, comments, processing instructions and (in the prolog)
    /// a doctype. Returns the offset where skipping stopped.
    fn skip_misc(&mut self, prolog: bool) -> Result<usize, SvgError> {
        loop {
            self.skip_ws();
            let rest = self.rest();
            if rest.starts_with("<?") {
                self.pos += 2;
                self.until("?>")?;
            } else if rest.starts_with("<!--") {
                self.pos += 4;
                self.until("-->")?;
            } else if prolog && rest.starts_with("<!DOCTYPE") {
                self.doctype()?;
            } else {
                if prolog && !rest.starts_with('<') {
                    return Err(if rest.is_empty() {
                        self.eof()
                    } else {
                        self.error("expected a root element")
                    });
                }
                return Ok(self.pos);
            }
        }
    }

    fn doctype(&mut self) -> Result<(), SvgError> {
        let mut depth = 0i32;
        while let Some(c) = self.peek() {
            self.pos += c.len_utf8();
            match c {
                '[' => depth += 1,
                ']' => depth -= 1,
                '>' if depth <= 0 => return Ok(()),
                _ => {}
            }
        }
        Err(self.eof())
    }

    fn name(&mut self) -> Result<&'a str, SvgError> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_alphanumeric() || matches!(c, '_' | '-' | '.' | ':') || !c.is_ascii() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
        if self.pos == start {
            if self.pos >= self.src.len() {
                return Err(self.eof());
            }
            return Err(self.error("expected a name"));
        }
        Ok(&self.src[start..self.pos])
    }

    fn expect(&mut self, s: &str) -> Result<(), SvgError> {
        if self.rest().starts_with(s) {
            self.pos += s.len();
            Ok(())
        } else if self.rest().is_empty() {
            Err(self.eof())
        } else {
            Err(self.error(&format!("expected `{s}`")))
        }
    }

    fn element(&mut self) -> Result<Element, SvgError> {
        self.expect("<")?;
        let tag = self.name()?.to_string();
        let mut el = Element::new(tag);
        loop {
            let had_ws = self.skip_ws();
            let rest = self.rest();
            if rest.is_empty() {
                return Err(self.eof());
            }
            if rest.starts_with("/>") {
                self.pos += 2;
                return Ok(el);
            }
            if rest.starts_with('>') {
                self.pos += 1;
                break;
            }
            if !had_ws {
                return Err(self.error("expected whitespace before attribute"));
            }
            let attr_pos = self.pos;
            let name = self.name()?.to_string();
            self.skip_ws();
            self.expect("=")?;
            self.skip_ws();
            let quote = match self.peek() {
                Some(q @ ('"' | '\'')) => q,
                Some(_) => return Err(self.error("expected a quoted attribute value")),
                None => return Err(self.eof()),
            };
            self.pos += 1;
            let value = self.until(&quote.to_string())?;
            if value.contains('<') {
                return Err(self.error("`<` in attribute value"));
            }
            if el.attributes.iter().any(|a| a.name == name) {
                return Err(SvgError::MalformedXml {
                    offset: attr_pos,
                    message: format!("duplicate attribute `{name}`"),
                });
            }
            el.attributes.push(Attribute { name, value: value.to_string(), quote });
        }
        loop {
            let rest = self.rest();
            if rest.is_empty() {
                return Err(self.eof());
            }
            if rest.starts_with("</") {
                self.pos += 2;
                let close_pos = self.pos;
                let name = self.name()?;
                if name != el.tag {
                    return Err(SvgError::MalformedXml {
                        offset: close_pos,
                        message: format!("mismatched close tag `{name}` for `{}`", el.tag),
                    });
                }
                self.skip_ws();
                self.expect(">")?;
                return Ok(el);
            } else if rest.starts_with("<!--") {
                self.pos += 4;
                el.children.push(Node::Comment(self.until("-->")?.to_string()));
            } else if rest.starts_with("<![CDATA[") {
                self.pos += 9;
                el.children.push(Node::CData(self.until("]]>")?.to_string()));
            } else if rest.starts_with("<?") {
                self.pos += 2;
                el.children.push(Node::ProcessingInstruction(self.until("?>")?.to_string()));
            } else if rest.starts_with('<') {
                el.children.push(Node::Element(self.element()?));
            } else {
                let end = rest.find('<').unwrap_or(rest.len());
                el.children.push(Node::Text(rest[..end].to_string()));
                self.pos += end;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_svg() {
        let doc = parse(b"<svg/>").unwrap();
        assert_eq!(doc.root.tag, "svg");
        assert!(doc.root.children.is_empty());
    }

    #[test]
    fn children_in_document_order() {
        let doc = parse(br#"<svg><rect x="1"/><circle/></svg>"#).unwrap();
        let tags: Vec<_> = doc.root.element_children().map(|e| e.tag.as_str()).collect();
        assert_eq!(tags, ["rect", "circle"]);
    }

    #[test]
    fn truncated_input_reports_offset() {
        match parse(b"<svg><rect") {
            Err(SvgError::MalformedXml { offset, .. }) => assert_eq!(offset, 10),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_svg_root() {
        assert_eq!(parse(b"<html/>"), Err(SvgError::NotAnSvg("html".into())));
    }

    #[test]
    fn mismatched_close_tag() {
        assert!(matches!(
            parse(b"<svg><g></rect></svg>"),
            Err(SvgError::MalformedXml { offset: 10, .. })
        ));
    }

    #[test]
    fn duplicate_attribute_rejected() {
        assert!(matches!(
            parse(br#"<svg x="1" x="2"/>"#),
            Err(SvgError::MalformedXml { offset: 11, .. })
        ));
    }

    #[test]
    fn round_trips_prolog_comments_and_values() {
        let src = "<?xml version=\"1.0\"?>\n<!DOCTYPE svg [<!ENTITY a \"b\">]>\n\
            <svg xmlns=\"http://www.w3.org/2000/svg\" viewBox='0 0 10 10'>\n  \
            <!-- note --><style><![CDATA[.a{fill:red}]]></style>\n  \
            <path d=\"M 1  2\n L 3 4\" class=\"a\"/><text x=\"1\">a &amp; b</text>\n</svg>\n";
        let doc = parse(src.as_bytes()).unwrap();
        assert_eq!(doc.to_xml(), src);
        assert_eq!(doc.source_bytes(), src.as_bytes());
    }

    #[test]
    fn attribute_whitespace_normalized() {
        let doc = parse(b"<svg\n   a=\"1\"\tb = '2' ></svg>").unwrap();
        assert_eq!(doc.to_xml(), "<svg a=\"1\" b='2'/>");
    }
}
