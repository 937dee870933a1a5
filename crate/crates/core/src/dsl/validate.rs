//! Static checks run before a template is evaluated or accepted.

use std::collections::HashSet;

use super::ast::*;
use crate::data::{Column, ColumnKind};
use crate::report::{IssueKind, ValidationReport};
use crate::svg::{ElementId, LayerRole, MarkedUpSvg};

const COLOR_ATTRS: [&str; 6] = ["fill", "stroke", "stop-color", "flood-color", "lighting-color", "color"];

const NUMERIC_ATTRS: [&str; 18] = [
    "x", "y", "width", "height", "r", "cx", "cy", "rx", "ry", "x1", "x2", "y1", "y2", "opacity",
    "fill-opacity", "stroke-opacity", "stroke-width", "font-size",
];

/// Static type of an expression. `Any` is used where the type depends on
/// runtime data, such as attributes read from the reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ty {
    Num,
    Str,
    Color,
    Bool,
    Any,
}

struct Checker<'a> {
    program: &'a TemplateProgram,
    marked: &'a MarkedUpSvg,
    report: ValidationReport,
    seen: HashSet<String>,
}

impl<'a> Checker<'a> {
    fn issue(&mut self, kind: IssueKind, message: String) {
        // the same problem inside a loop body is reported once
        if self.seen.insert(format!("{kind:?}:{message}")) {
            self.report.push(kind, message);
        }
    }

    fn field_ty(&mut self, f: &FieldRef, in_row: bool) -> Ty {
        if !in_row {
            self.issue(IssueKind::TypeError, format!("{} read outside a row context", describe_field(f)));
        }
        match f {
            FieldRef::Column(c) => match self.program.required_schema.iter().find(|col| &col.name == c) {
                Some(col) => kind_ty(col.kind),
                None => {
                    self.issue(IssueKind::UnresolvedIdentifier, format!("column `{c}` is not declared"));
                    Ty::Any
                }
            },
            FieldRef::Param(p) => {
                match self.program.param(p) {
                    Some(spec) if matches!(spec.kind, ParamKind::Choice | ParamKind::Text) => {
                        let kinds: HashSet<ColumnKind> = spec
                            .options
                            .iter()
                            .filter_map(|o| self.program.required_schema.iter().find(|c| &c.name == o))
                            .map(|c| c.kind)
                            .collect();
                        if kinds.len() == 1 {
                            return kind_ty(*kinds.iter().next().unwrap());
                        }
                    }
                    Some(_) => self.issue(IssueKind::TypeError, format!("`{p}` does not name a column")),
                    None => self.issue(IssueKind::UnresolvedIdentifier, format!("parameter `{p}` is not declared")),
                }
                Ty::Any
            }
        }
    }

    fn expect(&mut self, got: Ty, want: Ty, what: &str) {
        if got != want && got != Ty::Any {
            self.issue(IssueKind::TypeError, format!("{what} expects {want:?}, got {got:?}"));
        }
    }

    fn expr(&mut self, e: &Expr, in_row: bool) -> Ty {
        match e {
            Expr::Num(_) => Ty::Num,
            Expr::Str(_) => Ty::Str,
            Expr::Color(_) => Ty::Color,
            Expr::Ident(name) => match name.as_str() {
                "pi" | "row_count" => Ty::Num,
                "index" => {
                    if !in_row {
                        self.issue(IssueKind::TypeError, "`index` used outside a row context".into());
                    }
                    Ty::Num
                }
                _ => match self.program.param(name) {
                    Some(p) => match p.kind {
                        ParamKind::Number => Ty::Num,
                        ParamKind::Color => Ty::Color,
                        ParamKind::Text | ParamKind::Choice => Ty::Str,
                    },
                    None => {
                        self.issue(IssueKind::UnresolvedIdentifier, format!("`{name}` is not declared"));
                        Ty::Any
                    }
                },
            },
            Expr::Field(f) => self.field_ty(f, in_row),
            Expr::Scale(id, arg) => {
                let input = self.expr(arg, in_row);
                match self.program.scale(id) {
                    None => {
                        self.issue(IssueKind::UnresolvedIdentifier, format!("scale `{id}` is not declared"));
                        Ty::Any
                    }
                    Some(s) => {
                        if s.kind == ScaleKind::Linear {
                            self.expect(input, Ty::Num, &format!("linear scale `{id}`"));
                        } else if input == Ty::Bool {
                            self.issue(IssueKind::TypeError, format!("scale `{id}` cannot map a boolean"));
                        }
                        if s.kind == ScaleKind::OrdinalColor {
                            Ty::Color
                        } else {
                            Ty::Num
                        }
                    }
                }
            }
            Expr::Bandwidth(id) => {
                match self.program.scale(id) {
                    None => self.issue(IssueKind::UnresolvedIdentifier, format!("scale `{id}` is not declared")),
                    Some(s) if s.kind != ScaleKind::Band && s.kind != ScaleKind::Point => {
                        self.issue(IssueKind::TypeError, format!("`bandwidth` of non-band scale `{id}`"))
                    }
                    Some(_) => {}
                }
                Ty::Num
            }
            Expr::Arith(op, args) => {
                for a in args {
                    let t = self.expr(a, in_row);
                    self.expect(t, Ty::Num, &format!("`{}`", op.symbol()));
                }
                Ty::Num
            }
            Expr::Concat(args) => {
                for a in args {
                    self.expr(a, in_row);
                }
                Ty::Str
            }
            Expr::Compare(_, a, b) => {
                let (ta, tb) = (self.expr(a, in_row), self.expr(b, in_row));
                let text = |t: Ty| matches!(t, Ty::Str | Ty::Color);
                if ta != Ty::Any && tb != Ty::Any && ta != tb && !(text(ta) && text(tb)) {
                    self.issue(IssueKind::TypeError, format!("cannot compare {ta:?} with {tb:?}"));
                }
                Ty::Bool
            }
            Expr::If(c, a, b) => {
                let tc = self.expr(c, in_row);
                self.expect(tc, Ty::Bool, "`if` condition");
                let (ta, tb) = (self.expr(a, in_row), self.expr(b, in_row));
                if ta == tb {
                    ta
                } else {
                    Ty::Any
                }
            }
            Expr::Call(f, args) => {
                let name = f.name();
                match f {
                    Func::Sum | Func::First | Func::Last => {
                        let t = self.expr(&args[0], true);
                        if *f == Func::Sum {
                            self.expect(t, Ty::Num, "`sum`");
                            Ty::Num
                        } else {
                            t
                        }
                    }
                    Func::CumSum => {
                        if !in_row {
                            self.issue(IssueKind::TypeError, "`cumsum` used outside a row context".into());
                        }
                        let t = self.expr(&args[0], true);
                        self.expect(t, Ty::Num, "`cumsum`");
                        Ty::Num
                    }
                    Func::Attr => {
                        if let Expr::Num(id) = &args[0] {
                            let id = ElementId(*id as u32);
                            if self.marked.document().find(id).is_none() {
                                self.issue(IssueKind::InvalidTarget, format!("`attr` reads unknown element {id}"));
                            }
                        }
                        Ty::Any
                    }
                    Func::Stretch | Func::TranslatePath => {
                        let t = self.expr(&args[0], in_row);
                        self.expect(t, Ty::Str, &format!("`{name}` path"));
                        for (i, a) in args.iter().enumerate().skip(1) {
                            let t = self.expr(a, in_row);
                            let want = if *f == Func::Stretch && i == 1 { Ty::Str } else { Ty::Num };
                            self.expect(t, want, &format!("`{name}`"));
                        }
                        Ty::Str
                    }
                    _ => {
                        for a in args {
                            let t = self.expr(a, in_row);
                            self.expect(t, Ty::Num, &format!("`{name}`"));
                        }
                        Ty::Num
                    }
                }
            }
        }
    }

    fn binding(&mut self, b: &Binding, in_row: bool) {
        let t = self.expr(&b.expr, in_row);
        let attr = b.attr.as_str();
        if t == Ty::Bool {
            self.issue(IssueKind::TypeError, format!("attribute `{attr}` bound to a boolean"));
        } else if COLOR_ATTRS.contains(&attr) && t == Ty::Num {
            self.issue(IssueKind::TypeError, format!("color attribute `{attr}` bound to a number"));
        } else if NUMERIC_ATTRS.contains(&attr) && t == Ty::Color {
            self.issue(IssueKind::TypeError, format!("numeric attribute `{attr}` bound to a color"));
        }
    }

    fn element(&mut self, id: ElementId, what: &str) {
        if self.marked.document().find(id).is_none() {
            self.issue(IssueKind::InvalidTarget, format!("{what} targets unknown element {id}"));
        }
    }

    fn parts(&mut self, parts: &[PathPart], in_row: bool) {
        for p in parts {
            match p {
                PathPart::Lit(_) => {}
                PathPart::Hole(e) => {
                    let t = self.expr(e, in_row);
                    if t == Ty::Bool {
                        self.issue(IssueKind::TypeError, "path hole yields a boolean".into());
                    }
                }
                PathPart::Each(inner) => self.parts(inner, true),
            }
        }
    }

    fn directive(&mut self, d: &Directive, in_row: bool) {
        match d {
            Directive::ForEachRow(body) => body.iter().for_each(|inner| self.directive(inner, true)),
            Directive::Emit { bindings, .. } => bindings.iter().for_each(|b| self.binding(b, in_row)),
            Directive::ReplaceSlot { slot, body } => {
                if self.marked.slot(slot).is_none() {
                    self.issue(IssueKind::SlotMismatch, format!("no slot named `{slot}`"));
                }
                body.iter().for_each(|inner| self.directive(inner, in_row));
            }
            Directive::Set { id, attr, expr } => {
                self.element(*id, "`set`");
                self.binding(&Binding { attr: attr.clone(), expr: expr.clone() }, in_row);
            }
            Directive::Clone { id, bindings } => {
                if self.marked.document().find(*id).is_none() {
                    self.issue(IssueKind::InvalidTarget, format!("`clone` targets unknown element {id}"));
                } else if self.marked.role_of(*id) != Some(LayerRole::DataDriven) {
                    self.issue(IssueKind::InvalidTarget, format!("`clone` target {id} is not inside a data-driven group"));
                }
                bindings.iter().for_each(|b| self.binding(b, in_row));
            }
            Directive::Path { target, parts, .. } => {
                match target {
                    PathTarget::Element(id) => self.element(*id, "`path`"),
                    PathTarget::Emit { bindings, .. } => bindings.iter().for_each(|b| self.binding(b, in_row)),
                }
                self.parts(parts, in_row);
            }
        }
    }
}

fn kind_ty(k: ColumnKind) -> Ty {
    match k {
        ColumnKind::Number => Ty::Num,
        ColumnKind::String => Ty::Str,
    }
}

fn describe_field(f: &FieldRef) -> String {
    match f {
        FieldRef::Column(c) => format!("column `{c}`"),
        FieldRef::Param(p) => format!("column named by `{p}`"),
    }
}

/// Reports unresolved identifiers, slot mismatches, type errors and missing
/// fixed parameters. `schema` is the dataset the template will be bound to.
pub fn validate_program(p: &TemplateProgram, marked: &MarkedUpSvg, schema: &[Column]) -> ValidationReport {
    let mut c = Checker { program: p, marked, report: ValidationReport::default(), seen: HashSet::new() };

    for name in FIXED_PARAMS {
        match p.param(name) {
            None => c.issue(IssueKind::MissingFixedParam, format!("fixed parameter `{name}` is missing")),
            Some(spec) if spec.kind != ParamKind::Number => {
                c.issue(IssueKind::MissingFixedParam, format!("fixed parameter `{name}` must be a number"))
            }
            Some(_) => {}
        }
    }
    let mut names = HashSet::new();
    for spec in &p.params {
        if !names.insert(&spec.name) {
            c.issue(IssueKind::TypeError, format!("parameter `{}` declared twice", spec.name));
        }
        if let Err(e) = spec.accepts(&spec.default) {
            c.issue(IssueKind::TypeError, format!("default rejected: {e}"));
        }
    }
    for col in &p.required_schema {
        match schema.iter().find(|s| s.name == col.name) {
            None => c.issue(IssueKind::SchemaMismatch, format!("data has no column `{}`", col.name)),
            Some(s) if s.kind != col.kind => c.issue(
                IssueKind::SchemaMismatch,
                format!("column `{}` is {}, template expects {}", col.name, s.kind, col.kind),
            ),
            Some(_) => {}
        }
    }
    for s in &p.scales {
        match &s.domain {
            ScaleDomain::Values(vs) => {
                if vs.is_empty() {
                    c.issue(IssueKind::TypeError, format!("scale `{}` has an empty domain", s.id));
                }
                for v in vs {
                    let t = c.expr(v, false);
                    if s.kind == ScaleKind::Linear {
                        c.expect(t, Ty::Num, &format!("linear scale `{}` domain", s.id));
                    }
                }
            }
            ScaleDomain::Field(f) => {
                let t = c.field_ty(f, true);
                if s.kind == ScaleKind::Linear {
                    c.expect(t, Ty::Num, &format!("linear scale `{}` domain", s.id));
                }
            }
        }
        let want = if s.kind == ScaleKind::OrdinalColor { Ty::Color } else { Ty::Num };
        if s.kind != ScaleKind::OrdinalColor && s.range.len() != 2 {
            c.issue(IssueKind::TypeError, format!("scale `{}` needs a two-number range", s.id));
        }
        for r in &s.range {
            let mut t = c.expr(r, false);
            if want == Ty::Color && t == Ty::Str {
                t = Ty::Color;
            }
            c.expect(t, want, &format!("scale `{}` range", s.id));
        }
    }
    for d in &p.directives {
        c.directive(d, false);
    }
    c.report
}
