//! Canonical template source. `parse_program(&print_program(p)) == p`.

use std::fmt::Write;

use super::ast::*;
use crate::data::ColumnKind;

pub fn print_program(p: &TemplateProgram) -> String {
    let mut out = String::from("template 1\n");
    for param in &p.params {
        let _ = write!(out, "param {} {} ", param.name, param.kind.keyword());
        match &param.default {
            ParamValue::Number(v) => out.push_str(&num(*v)),
            ParamValue::Text(s) if is_color_token(s) => out.push_str(s),
            ParamValue::Text(s) => out.push_str(&quote(s)),
        }
        if let Some(r) = &param.range {
            let _ = write!(out, " range {} {} {}", num(r.min), num(r.max), num(r.step));
        }
        if !param.options.is_empty() {
            let opts: Vec<String> = param.options.iter().map(|o| quote(o)).collect();
            let _ = write!(out, " options ({})", opts.join(" "));
        }
        if let Some(t) = &param.title {
            let _ = write!(out, " title {}", quote(t));
        }
        out.push('\n');
    }
    for col in &p.required_schema {
        let kind = match col.kind {
            ColumnKind::Number => "number",
            ColumnKind::String => "string",
        };
        let _ = writeln!(out, "column {} {kind}", name(&col.name));
    }
    for s in &p.scales {
        let _ = write!(out, "scale {} {} domain", s.id, s.kind.keyword());
        match &s.domain {
            ScaleDomain::Field(f) => {
                out.push(' ');
                out.push_str(&field(f));
            }
            ScaleDomain::Values(vs) => {
                for v in vs {
                    out.push(' ');
                    out.push_str(&expr(v));
                }
            }
        }
        out.push_str(" range");
        for r in &s.range {
            out.push(' ');
            out.push_str(&expr(r));
        }
        if s.padding != 0.0 {
            let _ = write!(out, " padding {}", num(s.padding));
        }
        out.push('\n');
    }
    for d in &p.directives {
        out.push_str("render ");
        directive(&mut out, d, 1);
        out.push('\n');
    }
    out
}

/// Shortest representation that parses back to the same `f64`.
fn num(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    format!("{v}")
}

pub(crate) fn quote(s: &str) -> String {
    let mut q = String::with_capacity(s.len() + 2);
    q.push('"');
    for c in s.chars() {
        match c {
            '"' => q.push_str("\\\""),
            '\\' => q.push_str("\\\\"),
            '\n' => q.push_str("\\n"),
            '\t' => q.push_str("\\t"),
            c => q.push(c),
        }
    }
    q.push('"');
    q
}

fn is_color_token(s: &str) -> bool {
    s.len() > 1 && s.starts_with('#') && s[1..].chars().all(|c| c.is_ascii_alphanumeric())
}

/// Bare when it reads back as an identifier, quoted otherwise.
fn name(s: &str) -> String {
    let bare = !s.is_empty()
        && !s.starts_with(|c: char| c.is_ascii_digit() || matches!(c, '#' | '-' | '+' | '.'))
        && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | ':'));
    if bare {
        s.to_string()
    } else {
        quote(s)
    }
}

fn field(f: &FieldRef) -> String {
    match f {
        FieldRef::Column(c) => format!("(field {})", name(c)),
        FieldRef::Param(p) => format!("(field-of {p})"),
    }
}

fn expr(e: &Expr) -> String {
    let list = |head: &str, args: &[Expr]| {
        let mut s = format!("({head}");
        for a in args {
            s.push(' ');
            s.push_str(&expr(a));
        }
        s.push(')');
        s
    };
    match e {
        Expr::Num(v) => num(*v),
        Expr::Str(s) => quote(s),
        Expr::Color(c) => c.clone(),
        Expr::Ident(i) => i.clone(),
        Expr::Field(f) => field(f),
        Expr::Scale(id, arg) => format!("(scale {id} {})", expr(arg)),
        Expr::Bandwidth(id) => format!("(bandwidth {id})"),
        Expr::Arith(op, args) => list(op.symbol(), args),
        Expr::Concat(args) => list("concat", args),
        Expr::Compare(op, a, b) => format!("({} {} {})", op.symbol(), expr(a), expr(b)),
        Expr::If(c, a, b) => format!("(if {} {} {})", expr(c), expr(a), expr(b)),
        Expr::Call(f, args) => list(f.name(), args),
    }
}

fn bindings(out: &mut String, bs: &[Binding]) {
    for b in bs {
        let _ = write!(out, " ({} {})", b.attr, expr(&b.expr));
    }
}

fn path_parts(out: &mut String, parts: &[PathPart]) {
    for p in parts {
        out.push(' ');
        match p {
            PathPart::Lit(s) => out.push_str(&quote(s)),
            PathPart::Hole(e) => out.push_str(&expr(e)),
            PathPart::Each(inner) => {
                out.push_str("(each");
                path_parts(out, inner);
                out.push(')');
            }
        }
    }
}

fn body(out: &mut String, ds: &[Directive], depth: usize) {
    for d in ds {
        out.push('\n');
        out.push_str(&"  ".repeat(depth));
        directive(out, d, depth + 1);
    }
}

fn directive(out: &mut String, d: &Directive, depth: usize) {
    match d {
        Directive::ForEachRow(ds) => {
            out.push_str("(for-each-row");
            body(out, ds, depth);
        }
        Directive::Emit { tag, bindings: bs } => {
            let _ = write!(out, "(emit {tag}");
            bindings(out, bs);
        }
        Directive::ReplaceSlot { slot, body: ds } => {
            let _ = write!(out, "(replace-slot {}", quote(slot));
            body(out, ds, depth);
        }
        Directive::Set { id, attr, expr: e } => {
            let _ = write!(out, "(set {} {attr} {}", id.0, expr(e));
        }
        Directive::Clone { id, bindings: bs } => {
            let _ = write!(out, "(clone {}", id.0);
            bindings(out, bs);
        }
        Directive::Path { target, attr, parts } => {
            out.push_str("(path ");
            match target {
                PathTarget::Element(id) => {
                    let _ = write!(out, "(element {})", id.0);
                }
                PathTarget::Emit { tag, bindings: bs } => {
                    let _ = write!(out, "(emit {tag}");
                    bindings(out, bs);
                    out.push(')');
                }
            }
            let _ = write!(out, " {attr}");
            path_parts(out, parts);
        }
    }
    out.push(')');
}

#[cfg(test)]
mod tests {
    use super::super::parser::parse_program;
    use super::*;
    use crate::data::Column;
    use crate::svg::ElementId;

    fn sample() -> TemplateProgram {
        TemplateProgram {
            params: vec![
                ParameterSpec::number("chart_width", 400.0),
                ParameterSpec::number("bar_width", 18.5).with_range(4.5, 74.0, 0.695).with_title("Bar width"),
                ParameterSpec::color("fill", "#4e79a7"),
                ParameterSpec::text("caption", "Sales \"2024\"\n"),
                ParameterSpec::choice("x_field", "region name", vec!["region name".into(), "other".into()]),
            ],
            scales: vec![ScaleDef {
                id: "x".into(),
                kind: ScaleKind::Band,
                domain: ScaleDomain::Field(FieldRef::Param("x_field".into())),
                range: vec![Expr::Num(-0.25), Expr::Arith(ArithOp::Add, vec![Expr::Num(1e-7), Expr::Ident("chart_width".into())])],
                padding: 0.2,
            }],
            directives: vec![
                Directive::ReplaceSlot {
                    slot: "marks".into(),
                    body: vec![Directive::ForEachRow(vec![
                        Directive::Emit {
                            tag: "rect".into(),
                            bindings: vec![
                                Binding::new("x", Expr::Scale("x".into(), Box::new(Expr::Field(FieldRef::Column("region name".into()))))),
                                Binding::new("width", Expr::Bandwidth("x".into())),
                                Binding::new(TEXT_BINDING, Expr::Concat(vec![Expr::Str("#".into()), Expr::Ident("index".into())])),
                                Binding::new(
                                    "fill",
                                    Expr::If(
                                        Box::new(Expr::Compare(CmpOp::Ge, Box::new(Expr::Ident("index".into())), Box::new(Expr::Num(2.0)))),
                                        Box::new(Expr::Color("#ff0000".into())),
                                        Box::new(Expr::Ident("fill".into())),
                                    ),
                                ),
                            ],
                        },
                        Directive::Clone { id: ElementId(9), bindings: vec![] },
                    ])],
                },
                Directive::Set {
                    id: ElementId(3),
                    attr: "opacity".into(),
                    expr: Expr::Call(Func::Attr, vec![Expr::Num(4.0), Expr::Str("opacity".into())]),
                },
                Directive::Path {
                    target: PathTarget::Emit { tag: "path".into(), bindings: vec![Binding::new("fill", Expr::Str("none".into()))] },
                    attr: "d".into(),
                    parts: vec![
                        PathPart::Lit("M".into()),
                        PathPart::Each(vec![PathPart::Hole(Expr::Call(Func::CumSum, vec![Expr::Field(FieldRef::Column("v".into()))]))]),
                    ],
                },
            ],
            required_schema: vec![Column::new("region name", ColumnKind::String), Column::new("v", ColumnKind::Number)],
        }
    }

    #[test]
    fn round_trip() {
        let p = sample();
        let text = print_program(&p);
        assert_eq!(parse_program(&text).unwrap(), p, "{text}");
        assert_eq!(print_program(&parse_program(&text).unwrap()), text);
    }

    #[test]
    fn empty_program() {
        let p = TemplateProgram::default();
        assert_eq!(print_program(&p), "template 1\n");
        assert_eq!(parse_program(&print_program(&p)).unwrap(), p);
    }
}
