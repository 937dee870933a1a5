//! Template source reader.
//!
//! A program is a sequence of line-oriented statements. Each statement starts
//! with a keyword (`template`, `param`, `column`, `scale`, `render`) and ends
//! at the first newline outside parentheses, so s-expression bodies may span
//! several lines. `;` starts a comment.

use std::collections::HashSet;

use thiserror::Error;

use super::ast::*;
use crate::data::{Column, ColumnKind};
use crate::svg::ElementId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DslError {
    #[error("syntax error at {line}:{col}: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("unknown directive `{name}` at {line}:{col}")]
    UnknownDirective { line: usize, col: usize, name: String },
    #[error("duplicate parameter `{name}` at {line}:{col}")]
    DuplicateParam { line: usize, col: usize, name: String },
    #[error("unknown identifier `{name}` at {line}:{col}")]
    UnknownIdentifier { line: usize, col: usize, name: String },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Str(String),
    Color(String),
    Ident(String),
}

#[derive(Debug, Clone, PartialEq)]
enum SExprKind {
    Atom(Tok),
    List(Vec<SExpr>),
}

#[derive(Debug, Clone, PartialEq)]
struct SExpr {
    kind: SExprKind,
    line: usize,
    col: usize,
}

impl SExpr {
    fn ident(&self) -> Option<&str> {
        match &self.kind {
            SExprKind::Atom(Tok::Ident(s)) => Some(s),
            _ => None,
        }
    }

    /// Identifier or string literal.
    fn name(&self) -> Option<&str> {
        match &self.kind {
            SExprKind::Atom(Tok::Ident(s) | Tok::Str(s)) => Some(s),
            _ => None,
        }
    }

    fn num(&self) -> Option<f64> {
        match &self.kind {
            SExprKind::Atom(Tok::Num(v)) => Some(*v),
            _ => None,
        }
    }

    fn list(&self) -> Option<&[SExpr]> {
        match &self.kind {
            SExprKind::List(items) => Some(items),
            _ => None,
        }
    }

    fn head(&self) -> Option<&str> {
        self.list()?.first()?.ident()
    }

    fn err(&self, message: impl Into<String>) -> DslError {
        DslError::Syntax { line: self.line, col: self.col, message: message.into() }
    }
}

struct Reader<'a> {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    col: usize,
    _src: &'a str,
}

enum Lexeme {
    Open,
    Close,
    Newline,
    Atom(Tok),
}

impl<'a> Reader<'a> {
    fn new(src: &'a str) -> Self {
        Reader { chars: src.chars().collect(), pos: 0, line: 1, col: 1, _src: src }
    }

    fn bump(&mut self) -> Option<char> {
        let c = *self.chars.get(self.pos)?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn next(&mut self) -> Result<Option<(Lexeme, usize, usize)>, DslError> {
        loop {
            match self.peek() {
                None => return Ok(None),
                Some('\n') => {
                    let at = (self.line, self.col);
                    self.bump();
                    return Ok(Some((Lexeme::Newline, at.0, at.1)));
                }
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some(';') => {
                    while self.peek().is_some_and(|c| c != '\n') {
                        self.bump();
                    }
                }
                Some(_) => break,
            }
        }
        let (line, col) = (self.line, self.col);
        let c = self.bump().expect("peeked");
        let lexeme = match c {
            '(' => Lexeme::Open,
            ')' => Lexeme::Close,
            '"' => {
                let mut s = String::new();
                loop {
                    match self.bump() {
                        None => {
                            return Err(DslError::Syntax { line, col, message: "unterminated string".into() })
                        }
                        Some('"') => break,
                        Some('\\') => match self.bump() {
                            Some('n') => s.push('\n'),
                            Some('t') => s.push('\t'),
                            Some(c @ ('"' | '\\')) => s.push(c),
                            _ => {
                                return Err(DslError::Syntax {
                                    line: self.line,
                                    col: self.col,
                                    message: "invalid escape".into(),
                                })
                            }
                        },
                        Some(c) => s.push(c),
                    }
                }
                Lexeme::Atom(Tok::Str(s))
            }
            _ => {
                let mut s = String::from(c);
                while let Some(c) = self.peek() {
                    if c.is_whitespace() || matches!(c, '(' | ')' | '"' | ';') {
                        break;
                    }
                    s.push(c);
                    self.bump();
                }
                Lexeme::Atom(classify(s))
            }
        };
        Ok(Some((lexeme, line, col)))
    }
}

fn classify(s: String) -> Tok {
    if s.starts_with('#') && s.len() > 1 {
        return Tok::Color(s);
    }
    let numeric_start = s.starts_with(|c: char| c.is_ascii_digit() || c == '.')
        || (s.len() > 1 && s.starts_with(['-', '+']) && s[1..].starts_with(|c: char| c.is_ascii_digit() || c == '.'));
    if numeric_start {
        if let Ok(v) = s.parse::<f64>() {
            if v.is_finite() {
                return Tok::Num(v);
            }
        }
    }
    Tok::Ident(s)
}

/// Reads all statements, each a list of s-expressions.
fn read_statements(src: &str) -> Result<Vec<Vec<SExpr>>, DslError> {
    let mut reader = Reader::new(src);
    let mut statements = Vec::new();
    let mut current: Vec<SExpr> = Vec::new();
    // stack of open lists with their positions
    let mut stack: Vec<(Vec<SExpr>, usize, usize)> = Vec::new();
    while let Some((lexeme, line, col)) = reader.next()? {
        match lexeme {
            Lexeme::Newline => {
                if stack.is_empty() && !current.is_empty() {
                    statements.push(std::mem::take(&mut current));
                }
            }
            Lexeme::Open => stack.push((Vec::new(), line, col)),
            Lexeme::Close => {
                let (items, l, c) = stack
                    .pop()
                    .ok_or(DslError::Syntax { line, col, message: "unbalanced `)`".into() })?;
                let e = SExpr { kind: SExprKind::List(items), line: l, col: c };
                match stack.last_mut() {
                    Some(parent) => parent.0.push(e),
                    None => current.push(e),
                }
            }
            Lexeme::Atom(tok) => {
                let e = SExpr { kind: SExprKind::Atom(tok), line, col };
                match stack.last_mut() {
                    Some(parent) => parent.0.push(e),
                    None => current.push(e),
                }
            }
        }
    }
    if let Some((_, line, col)) = stack.pop() {
        return Err(DslError::Syntax { line, col, message: "unclosed `(`".into() });
    }
    if !current.is_empty() {
        statements.push(current);
    }
    Ok(statements)
}

struct Scope {
    params: HashSet<String>,
    scales: HashSet<String>,
}

pub fn parse_program(src: &str) -> Result<TemplateProgram, DslError> {
    let statements = read_statements(src)?;
    let mut program = TemplateProgram::default();

    // declarations first, so uses may precede them textually
    let mut scope = Scope { params: HashSet::new(), scales: HashSet::new() };
    for st in &statements {
        match st[0].ident() {
            Some("param") => {
                let name = st.get(1).and_then(SExpr::ident).ok_or_else(|| st[0].err("expected a parameter name"))?;
                if LOOP_VARS.contains(&name) || name == "pi" {
                    return Err(st[1].err(format!("`{name}` is reserved")));
                }
                if !scope.params.insert(name.to_string()) {
                    return Err(DslError::DuplicateParam { line: st[1].line, col: st[1].col, name: name.into() });
                }
            }
            Some("scale") => {
                let id = st.get(1).and_then(SExpr::ident).ok_or_else(|| st[0].err("expected a scale id"))?;
                if !scope.scales.insert(id.to_string()) {
                    return Err(st[1].err(format!("duplicate scale `{id}`")));
                }
            }
            _ => {}
        }
    }

    for (i, st) in statements.iter().enumerate() {
        let kw = &st[0];
        match kw.ident() {
            Some("template") => {
                if i != 0 || st.len() != 2 || st[1].num() != Some(1.0) {
                    return Err(kw.err("expected `template 1` as the first statement"));
                }
            }
            Some("param") => program.params.push(param(st)?),
            Some("column") => {
                let (Some(name), Some(kind)) = (st.get(1).and_then(SExpr::name), st.get(2).and_then(SExpr::ident))
                else {
                    return Err(kw.err("expected `column NAME number|string`"));
                };
                let kind = match kind {
                    "number" => ColumnKind::Number,
                    "string" => ColumnKind::String,
                    _ => return Err(st[2].err("column kind must be `number` or `string`")),
                };
                if st.len() != 3 {
                    return Err(kw.err("trailing tokens after column"));
                }
                if program.required_schema.iter().any(|c| c.name == name) {
                    return Err(st[1].err(format!("duplicate column `{name}`")));
                }
                program.required_schema.push(Column::new(name, kind));
            }
            Some("scale") => program.scales.push(scale(st, &scope)?),
            Some("render") => {
                if st.len() != 2 {
                    return Err(kw.err("`render` takes exactly one directive"));
                }
                program.directives.push(directive(&st[1], &scope)?);
            }
            Some(other) => return Err(kw.err(format!("unknown statement `{other}`"))),
            None => return Err(kw.err("expected a statement keyword")),
        }
    }
    Ok(program)
}

fn param(st: &[SExpr]) -> Result<ParameterSpec, DslError> {
    let kw = &st[0];
    let name = st[1].ident().expect("checked in declaration pass").to_string();
    let kind_tok = st.get(2).ok_or_else(|| kw.err("expected a parameter kind"))?;
    let kind = kind_tok
        .ident()
        .and_then(ParamKind::from_keyword)
        .ok_or_else(|| kind_tok.err("parameter kind must be number, color, text or choice"))?;
    let default_tok = st.get(3).ok_or_else(|| kw.err("expected a default value"))?;
    let default = match (kind, &default_tok.kind) {
        (ParamKind::Number, SExprKind::Atom(Tok::Num(v))) => ParamValue::Number(*v),
        (ParamKind::Number, _) => return Err(default_tok.err("number parameter needs a numeric default")),
        (_, SExprKind::Atom(Tok::Color(s) | Tok::Str(s) | Tok::Ident(s))) => ParamValue::Text(s.clone()),
        _ => return Err(default_tok.err("expected a text default")),
    };
    let mut spec = ParameterSpec { name, kind, default, range: None, options: Vec::new(), title: None };
    let mut i = 4;
    while i < st.len() {
        match st[i].ident() {
            Some("range") => {
                let nums: Option<Vec<f64>> = st.get(i + 1..i + 4).map(|s| s.iter().map(SExpr::num).collect()).flatten();
                let nums = nums.ok_or_else(|| st[i].err("`range` expects MIN MAX STEP"))?;
                spec.range = Some(NumberRange { min: nums[0], max: nums[1], step: nums[2] });
                i += 4;
            }
            Some("options") => {
                let list = st.get(i + 1).and_then(SExpr::list).ok_or_else(|| st[i].err("`options` expects a list"))?;
                spec.options = list
                    .iter()
                    .map(|o| o.name().map(str::to_string).ok_or_else(|| o.err("option must be a name")))
                    .collect::<Result<_, _>>()?;
                i += 2;
            }
            Some("title") => {
                let t = st.get(i + 1).and_then(SExpr::name).ok_or_else(|| st[i].err("`title` expects a string"))?;
                spec.title = Some(t.to_string());
                i += 2;
            }
            _ => return Err(st[i].err("expected `range`, `options` or `title`")),
        }
    }
    Ok(spec)
}

fn scale(st: &[SExpr], scope: &Scope) -> Result<ScaleDef, DslError> {
    let kw = &st[0];
    let id = st[1].ident().expect("checked in declaration pass").to_string();
    let kind_tok = st.get(2).ok_or_else(|| kw.err("expected a scale kind"))?;
    let kind = kind_tok
        .ident()
        .and_then(ScaleKind::from_keyword)
        .ok_or_else(|| kind_tok.err("scale kind must be linear, band, point or ordinal-color"))?;
    let mut domain_items: Option<&[SExpr]> = None;
    let mut range_items: Option<&[SExpr]> = None;
    let mut padding = 0.0;
    let mut i = 3;
    while i < st.len() {
        let section_end = |from: usize| {
            (from..st.len())
                .find(|&j| matches!(st[j].ident(), Some("domain" | "range" | "padding")))
                .unwrap_or(st.len())
        };
        match st[i].ident() {
            Some("domain") => {
                let end = section_end(i + 1);
                domain_items = Some(&st[i + 1..end]);
                i = end;
            }
            Some("range") => {
                let end = section_end(i + 1);
                range_items = Some(&st[i + 1..end]);
                i = end;
            }
            Some("padding") => {
                padding = st.get(i + 1).and_then(SExpr::num).ok_or_else(|| st[i].err("`padding` expects a number"))?;
                i += 2;
            }
            _ => return Err(st[i].err("expected `domain`, `range` or `padding`")),
        }
    }
    let domain_items = domain_items.ok_or_else(|| kw.err("scale needs a `domain`"))?;
    let range_items = range_items.ok_or_else(|| kw.err("scale needs a `range`"))?;
    let domain = match domain_items {
        [single] if matches!(single.head(), Some("field" | "field-of")) => match expr(single, scope)? {
            Expr::Field(f) => ScaleDomain::Field(f),
            _ => unreachable!(),
        },
        items => ScaleDomain::Values(items.iter().map(|e| expr(e, scope)).collect::<Result<_, _>>()?),
    };
    let range = range_items.iter().map(|e| expr(e, scope)).collect::<Result<_, _>>()?;
    Ok(ScaleDef { id, kind, domain, range, padding })
}

fn expr(e: &SExpr, scope: &Scope) -> Result<Expr, DslError> {
    let items = match &e.kind {
        SExprKind::Atom(Tok::Num(v)) => return Ok(Expr::Num(*v)),
        SExprKind::Atom(Tok::Str(s)) => return Ok(Expr::Str(s.clone())),
        SExprKind::Atom(Tok::Color(s)) => return Ok(Expr::Color(s.clone())),
        SExprKind::Atom(Tok::Ident(name)) => {
            if name == "pi" || LOOP_VARS.contains(&name.as_str()) || scope.params.contains(name) {
                return Ok(Expr::Ident(name.clone()));
            }
            return Err(DslError::UnknownIdentifier { line: e.line, col: e.col, name: name.clone() });
        }
        SExprKind::List(items) => items,
    };
    let head = items.first().and_then(SExpr::ident).ok_or_else(|| e.err("expected an operator"))?;
    let args = &items[1..];
    let exprs = |args: &[SExpr]| args.iter().map(|a| expr(a, scope)).collect::<Result<Vec<_>, _>>();
    let want = |n: usize| {
        if args.len() == n {
            Ok(())
        } else {
            Err(e.err(format!("`{head}` takes {n} argument(s)")))
        }
    };
    let scale_ref = |a: &SExpr| -> Result<String, DslError> {
        let id = a.ident().ok_or_else(|| a.err("expected a scale id"))?;
        if scope.scales.contains(id) {
            Ok(id.to_string())
        } else {
            Err(DslError::UnknownIdentifier { line: a.line, col: a.col, name: id.to_string() })
        }
    };
    Ok(match head {
        "field" => {
            want(1)?;
            Expr::Field(FieldRef::Column(args[0].name().ok_or_else(|| args[0].err("expected a column"))?.to_string()))
        }
        "field-of" => {
            want(1)?;
            let p = args[0].ident().ok_or_else(|| args[0].err("expected a parameter"))?;
            if !scope.params.contains(p) {
                return Err(DslError::UnknownIdentifier { line: args[0].line, col: args[0].col, name: p.into() });
            }
            Expr::Field(FieldRef::Param(p.to_string()))
        }
        "scale" => {
            want(2)?;
            Expr::Scale(scale_ref(&args[0])?, Box::new(expr(&args[1], scope)?))
        }
        "bandwidth" => {
            want(1)?;
            Expr::Bandwidth(scale_ref(&args[0])?)
        }
        "+" | "-" | "*" | "/" => {
            if args.is_empty() || (head != "-" && args.len() < 2) {
                return Err(e.err(format!("`{head}` needs more operands")));
            }
            let op = match head {
                "+" => ArithOp::Add,
                "-" => ArithOp::Sub,
                "*" => ArithOp::Mul,
                _ => ArithOp::Div,
            };
            Expr::Arith(op, exprs(args)?)
        }
        "concat" => Expr::Concat(exprs(args)?),
        "if" => {
            want(3)?;
            let mut v = exprs(args)?.into_iter();
            let (c, a, b) = (v.next().unwrap(), v.next().unwrap(), v.next().unwrap());
            Expr::If(Box::new(c), Box::new(a), Box::new(b))
        }
        _ => {
            if let Some(op) = CmpOp::from_symbol(head) {
                want(2)?;
                let mut v = exprs(args)?.into_iter();
                return Ok(Expr::Compare(op, Box::new(v.next().unwrap()), Box::new(v.next().unwrap())));
            }
            let f = Func::from_name(head).ok_or_else(|| items[0].err(format!("unknown function `{head}`")))?;
            want(f.arity())?;
            if f == Func::Attr {
                let id = args[0].num().filter(|v| *v >= 1.0 && v.fract() == 0.0);
                id.ok_or_else(|| args[0].err("`attr` expects an element id"))?;
                args[1].name().ok_or_else(|| args[1].err("`attr` expects an attribute name"))?;
                let id = Expr::Num(args[0].num().unwrap());
                return Ok(Expr::Call(f, vec![id, Expr::Str(args[1].name().unwrap().to_string())]));
            }
            Expr::Call(f, exprs(args)?)
        }
    })
}

fn element_id(e: &SExpr) -> Result<ElementId, DslError> {
    match e.num() {
        Some(v) if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 => Ok(ElementId(v as u32)),
        _ => Err(e.err("expected an element id")),
    }
}

fn bindings(items: &[SExpr], scope: &Scope) -> Result<Vec<Binding>, DslError> {
    items
        .iter()
        .map(|b| {
            let pair = b.list().filter(|l| l.len() == 2).ok_or_else(|| b.err("binding must be `(attr expr)`"))?;
            let attr = pair[0].ident().ok_or_else(|| pair[0].err("expected an attribute name"))?;
            Ok(Binding { attr: attr.to_string(), expr: expr(&pair[1], scope)? })
        })
        .collect()
}

fn directive(e: &SExpr, scope: &Scope) -> Result<Directive, DslError> {
    let items = e.list().ok_or_else(|| e.err("expected a directive"))?;
    let head_tok = items.first().ok_or_else(|| e.err("empty directive"))?;
    let head = head_tok.ident().ok_or_else(|| head_tok.err("expected a directive name"))?;
    let args = &items[1..];
    let body = |args: &[SExpr]| args.iter().map(|a| directive(a, scope)).collect::<Result<Vec<_>, _>>();
    Ok(match head {
        "for-each-row" => Directive::ForEachRow(body(args)?),
        "emit" => {
            let tag = args.first().and_then(SExpr::ident).ok_or_else(|| e.err("`emit` expects a tag"))?;
            Directive::Emit { tag: tag.to_string(), bindings: bindings(&args[1..], scope)? }
        }
        "replace-slot" => {
            let slot = args.first().and_then(SExpr::name).ok_or_else(|| e.err("`replace-slot` expects a slot name"))?;
            Directive::ReplaceSlot { slot: slot.to_string(), body: body(&args[1..])? }
        }
        "set" => {
            if args.len() != 3 {
                return Err(e.err("`set` expects ID ATTR EXPR"));
            }
            let attr = args[1].ident().ok_or_else(|| args[1].err("expected an attribute name"))?;
            Directive::Set { id: element_id(&args[0])?, attr: attr.to_string(), expr: expr(&args[2], scope)? }
        }
        "clone" => {
            let id = element_id(args.first().ok_or_else(|| e.err("`clone` expects an element id"))?)?;
            Directive::Clone { id, bindings: bindings(&args[1..], scope)? }
        }
        "path" => {
            if args.len() < 2 {
                return Err(e.err("`path` expects TARGET ATTR PARTS..."));
            }
            let target = match (args[0].head(), args[0].list()) {
                (Some("element"), Some([_, id])) => PathTarget::Element(element_id(id)?),
                (Some("emit"), Some([_, tag, rest @ ..])) => PathTarget::Emit {
                    tag: tag.ident().ok_or_else(|| tag.err("expected a tag"))?.to_string(),
                    bindings: bindings(rest, scope)?,
                },
                _ => return Err(args[0].err("path target must be `(element ID)` or `(emit TAG ...)`")),
            };
            let attr = args[1].ident().ok_or_else(|| args[1].err("expected an attribute name"))?;
            Directive::Path { target, attr: attr.to_string(), parts: path_parts(&args[2..], scope)? }
        }
        other => {
            return Err(DslError::UnknownDirective { line: head_tok.line, col: head_tok.col, name: other.into() })
        }
    })
}

fn path_parts(items: &[SExpr], scope: &Scope) -> Result<Vec<PathPart>, DslError> {
    items
        .iter()
        .map(|p| {
            Ok(match (&p.kind, p.head()) {
                (SExprKind::Atom(Tok::Str(s)), _) => PathPart::Lit(s.clone()),
                (_, Some("each")) => PathPart::Each(path_parts(&p.list().unwrap()[1..], scope)?),
                _ => PathPart::Hole(expr(p, scope)?),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_params_only() {
        let p = parse_program(
            "template 1\nparam chart_width number 400\nparam chart_height number 300\n\
             param origin_x number 0\nparam origin_y number 300\n",
        )
        .unwrap();
        assert_eq!(p.params.len(), 4);
        assert!(p.directives.is_empty());
    }

    #[test]
    fn undeclared_scale_reported_at_use_site() {
        let src = "param w number 1\nrender (emit rect\n  (x (scale nope 3)))\n";
        assert_eq!(
            parse_program(src),
            Err(DslError::UnknownIdentifier { line: 3, col: 13, name: "nope".into() })
        );
    }

    #[test]
    fn undeclared_identifier() {
        assert!(matches!(
            parse_program("render (emit rect (x width))"),
            Err(DslError::UnknownIdentifier { name, .. }) if name == "width"
        ));
    }

    #[test]
    fn unknown_directive() {
        assert_eq!(
            parse_program("render (explode 3)"),
            Err(DslError::UnknownDirective { line: 1, col: 9, name: "explode".into() })
        );
    }

    #[test]
    fn duplicate_param() {
        assert_eq!(
            parse_program("param a number 1\nparam a number 2"),
            Err(DslError::DuplicateParam { line: 2, col: 7, name: "a".into() })
        );
    }

    #[test]
    fn unbalanced() {
        assert!(matches!(parse_program("render (emit rect"), Err(DslError::Syntax { .. })));
        assert!(matches!(parse_program("render (emit rect))"), Err(DslError::Syntax { .. })));
    }

    #[test]
    fn multi_line_bodies_and_comments() {
        let src = "; bars\nparam fill color #ff0000 title \"Fill\"\ncolumn value number\n\
                   scale y linear domain 0 40 range 100 0\n\
                   render (for-each-row ; one per row\n  (emit rect (y (scale y (field value)))\n        (fill fill)))\n";
        let p = parse_program(src).unwrap();
        assert_eq!(p.params[0].default, ParamValue::Text("#ff0000".into()));
        assert_eq!(p.params[0].title.as_deref(), Some("Fill"));
        match &p.directives[0] {
            Directive::ForEachRow(body) => assert_eq!(body.len(), 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn path_directive() {
        let src = "column v number\nrender (path (element 7) d \"M\" (each (field v) \" \") \"Z\")";
        let p = parse_program(src).unwrap();
        assert_eq!(
            p.directives[0],
            Directive::Path {
                target: PathTarget::Element(ElementId(7)),
                attr: "d".into(),
                parts: vec![
                    PathPart::Lit("M".into()),
                    PathPart::Each(vec![
                        PathPart::Hole(Expr::Field(FieldRef::Column("v".into()))),
                        PathPart::Lit(" ".into())
                    ]),
                    PathPart::Lit("Z".into()),
                ],
            }
        );
    }
}
