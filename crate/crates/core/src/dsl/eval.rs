//! Deterministic template evaluator.
//!
//! Evaluation works on a copy of the marked-up tree. Directives run in order;
//! emitted elements go to the enclosing slot (or the root when outside any
//! `replace-slot`). Markers are stripped from the result.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::fmt;

use thiserror::Error;

use super::ast::*;
use super::scale::{distinct, Scale, ScaleError};
use crate::data::{Dataset, Value};
use crate::geom::{fmt_num, transform_path};
use crate::svg::{escape_text, strip_markers, Element, ElementId, MarkedUpSvg, Node, SvgDocument, ID_ATTR};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalCause {
    #[error("division by zero")]
    DivisionByZero,
    #[error(transparent)]
    Scale(#[from] ScaleError),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("`{0}` used outside a row context")]
    NoRowContext(String),
    #[error("no element with id {0}")]
    UnknownElement(ElementId),
    #[error("no slot named `{0}`")]
    UnknownSlot(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("bad path data: {0}")]
    BadPath(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("data does not match the template schema: {0}")]
    DataMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub struct EvalError {
    /// Index of the top-level directive that failed, if any.
    pub directive: Option<usize>,
    pub cause: EvalCause,
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.directive {
            Some(i) => write!(f, "directive {i}: {}", self.cause),
            None => write!(f, "{}", self.cause),
        }
    }
}

/// Runtime value of an expression.
#[derive(Debug, Clone, PartialEq)]
pub enum Val {
    Num(f64),
    Str(String),
    Bool(bool),
}

impl Val {
    fn num(&self, what: &str) -> Result<f64, EvalCause> {
        match self {
            Val::Num(v) => Ok(*v),
            other => Err(EvalCause::Type(format!("{what} expects a number, got {other}"))),
        }
    }

    fn text(&self, what: &str) -> Result<&str, EvalCause> {
        match self {
            Val::Str(s) => Ok(s),
            other => Err(EvalCause::Type(format!("{what} expects text, got {other}"))),
        }
    }

    fn to_value(&self) -> Result<Value, EvalCause> {
        match self {
            Val::Num(v) => Ok(Value::Number(*v)),
            Val::Str(s) => Ok(Value::Text(s.clone())),
            Val::Bool(_) => Err(EvalCause::Type("a boolean cannot be scaled".into())),
        }
    }

    fn from_value(v: &Value) -> Val {
        match v {
            Value::Number(x) => Val::Num(*x),
            Value::Text(s) => Val::Str(s.clone()),
        }
    }
}

impl fmt::Display for Val {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Val::Num(v) => f.write_str(&fmt_num(*v)),
            Val::Str(s) => f.write_str(s),
            Val::Bool(b) => write!(f, "{b}"),
        }
    }
}

/// Merges `given` over the program defaults and checks every value.
pub fn resolve_params(
    program: &TemplateProgram,
    given: &BTreeMap<String, ParamValue>,
) -> Result<BTreeMap<String, ParamValue>, EvalCause> {
    let mut params = program.defaults();
    for (name, v) in given {
        let spec = program.param(name).ok_or_else(|| EvalCause::InvalidParam(format!("unknown parameter `{name}`")))?;
        spec.accepts(v).map_err(EvalCause::InvalidParam)?;
        params.insert(name.clone(), v.clone());
    }
    Ok(params)
}

fn check_data(program: &TemplateProgram, data: &Dataset) -> Result<(), EvalCause> {
    data.check().map_err(EvalCause::DataMismatch)?;
    for col in &program.required_schema {
        match data.column(&col.name) {
            None => return Err(EvalCause::MissingColumn(col.name.clone())),
            Some(c) if c.kind != col.kind => {
                return Err(EvalCause::DataMismatch(format!(
                    "column `{}` is {}, expected {}",
                    col.name, c.kind, col.kind
                )))
            }
            Some(_) => {}
        }
    }
    Ok(())
}

struct Ctx<'a> {
    program: &'a TemplateProgram,
    reference: &'a SvgDocument,
    data: &'a Dataset,
    params: BTreeMap<String, ParamValue>,
    scales: HashMap<String, Scale>,
}

impl<'a> Ctx<'a> {
    fn column_name(&self, f: &FieldRef) -> Result<String, EvalCause> {
        match f {
            FieldRef::Column(c) => Ok(c.clone()),
            FieldRef::Param(p) => match self.params.get(p) {
                Some(ParamValue::Text(c)) => Ok(c.clone()),
                _ => Err(EvalCause::Type(format!("`{p}` must name a column"))),
            },
        }
    }

    fn column(&self, f: &FieldRef) -> Result<usize, EvalCause> {
        let name = self.column_name(f)?;
        self.data.column_index(&name).ok_or(EvalCause::MissingColumn(name))
    }

    fn scale(&self, id: &str) -> Result<&Scale, EvalCause> {
        self.scales.get(id).ok_or_else(|| EvalCause::Type(format!("unknown scale `{id}`")))
    }

    fn resolve_scale(&self, def: &ScaleDef) -> Result<Scale, EvalCause> {
        let domain = match &def.domain {
            ScaleDomain::Values(exprs) => {
                exprs.iter().map(|e| self.eval(e, None)?.to_value()).collect::<Result<Vec<_>, _>>()?
            }
            ScaleDomain::Field(f) => {
                let col = self.column(f)?;
                let values = self.data.rows.iter().map(|r| r[col].clone());
                if def.kind == ScaleKind::Linear {
                    let nums: Vec<f64> = values.filter_map(|v| v.as_f64()).collect();
                    let lo = nums.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = nums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    vec![Value::Number(lo), Value::Number(hi)]
                } else {
                    distinct(values)
                }
            }
        };
        let range = def.range.iter().map(|e| self.eval(e, None)?.to_value()).collect::<Result<Vec<_>, _>>()?;
        let scale = Scale { id: def.id.clone(), kind: def.kind, domain, range, padding: def.padding };
        scale.check()?;
        Ok(scale)
    }

    fn row_val(&self, f: &FieldRef, row: Option<usize>) -> Result<Val, EvalCause> {
        let col = self.column(f)?;
        let row = row.ok_or_else(|| EvalCause::NoRowContext(self.column_name(f).unwrap_or_default()))?;
        Ok(Val::from_value(&self.data.rows[row][col]))
    }

    fn eval(&self, e: &Expr, row: Option<usize>) -> Result<Val, EvalCause> {
        Ok(match e {
            Expr::Num(v) => Val::Num(*v),
            Expr::Str(s) | Expr::Color(s) => Val::Str(s.clone()),
            Expr::Ident(name) => match name.as_str() {
                "pi" => Val::Num(PI),
                "index" => Val::Num(row.ok_or_else(|| EvalCause::NoRowContext("index".into()))? as f64),
                "row_count" => Val::Num(self.data.rows.len() as f64),
                _ => match self.params.get(name) {
                    Some(ParamValue::Number(v)) => Val::Num(*v),
                    Some(ParamValue::Text(s)) => Val::Str(s.clone()),
                    None => return Err(EvalCause::Type(format!("unknown identifier `{name}`"))),
                },
            },
            Expr::Field(f) => self.row_val(f, row)?,
            Expr::Scale(id, arg) => {
                let v = self.eval(arg, row)?.to_value()?;
                Val::from_value(&self.scale(id)?.apply(&v)?)
            }
            Expr::Bandwidth(id) => Val::Num(self.scale(id)?.bandwidth()?),
            Expr::Arith(op, args) => {
                let nums = args
                    .iter()
                    .map(|a| self.eval(a, row)?.num(op.symbol()))
                    .collect::<Result<Vec<_>, _>>()?;
                if *op == ArithOp::Sub && nums.len() == 1 {
                    return Ok(Val::Num(-nums[0]));
                }
                let mut acc = nums[0];
                for &x in &nums[1..] {
                    acc = match op {
                        ArithOp::Add => acc + x,
                        ArithOp::Sub => acc - x,
                        ArithOp::Mul => acc * x,
                        ArithOp::Div => {
                            if x == 0.0 {
                                return Err(EvalCause::DivisionByZero);
                            }
                            acc / x
                        }
                    };
                }
                Val::Num(acc)
            }
            Expr::Concat(args) => {
                let mut s = String::new();
                for a in args {
                    s.push_str(&self.eval(a, row)?.to_string());
                }
                Val::Str(s)
            }
            Expr::Compare(op, a, b) => {
                let (a, b) = (self.eval(a, row)?, self.eval(b, row)?);
                let ord = match (&a, &b) {
                    (Val::Num(x), Val::Num(y)) => x.partial_cmp(y),
                    (Val::Str(x), Val::Str(y)) => Some(x.cmp(y)),
                    (Val::Bool(x), Val::Bool(y)) if matches!(op, CmpOp::Eq | CmpOp::Ne) => Some(x.cmp(y)),
                    _ => return Err(EvalCause::Type(format!("cannot compare {a} with {b}"))),
                };
                let ord = ord.ok_or_else(|| EvalCause::Type("incomparable numbers".into()))?;
                use std::cmp::Ordering::*;
                Val::Bool(match op {
                    CmpOp::Lt => ord == Less,
                    CmpOp::Le => ord != Greater,
                    CmpOp::Gt => ord == Greater,
                    CmpOp::Ge => ord != Less,
                    CmpOp::Eq => ord == Equal,
                    CmpOp::Ne => ord != Equal,
                })
            }
            Expr::If(c, a, b) => match self.eval(c, row)? {
                Val::Bool(true) => self.eval(a, row)?,
                Val::Bool(false) => self.eval(b, row)?,
                other => return Err(EvalCause::Type(format!("`if` expects a condition, got {other}"))),
            },
            Expr::Call(f, args) => self.call(*f, args, row)?,
        })
    }

    fn call(&self, f: Func, args: &[Expr], row: Option<usize>) -> Result<Val, EvalCause> {
        let name = f.name();
        let arg = |i: usize| self.eval(&args[i], row);
        let over_rows = |rows: std::ops::Range<usize>| -> Result<f64, EvalCause> {
            let mut total = 0.0;
            for r in rows {
                total += self.eval(&args[0], Some(r))?.num(name)?;
            }
            Ok(total)
        };
        let n = self.data.rows.len();
        Ok(match f {
            Func::Sin => Val::Num(arg(0)?.num(name)?.sin()),
            Func::Cos => Val::Num(arg(0)?.num(name)?.cos()),
            Func::Sqrt => {
                let x = arg(0)?.num(name)?;
                if x < 0.0 {
                    return Err(EvalCause::Type(format!("sqrt of negative number {x}")));
                }
                Val::Num(x.sqrt())
            }
            Func::Abs => Val::Num(arg(0)?.num(name)?.abs()),
            Func::Round => Val::Num(arg(0)?.num(name)?.round()),
            Func::Min => Val::Num(arg(0)?.num(name)?.min(arg(1)?.num(name)?)),
            Func::Max => Val::Num(arg(0)?.num(name)?.max(arg(1)?.num(name)?)),
            Func::Sum => Val::Num(over_rows(0..n)?),
            Func::CumSum => {
                let r = row.ok_or_else(|| EvalCause::NoRowContext(name.into()))?;
                Val::Num(over_rows(0..r)?)
            }
            Func::First | Func::Last => {
                if n == 0 {
                    return Err(EvalCause::NoRowContext(name.into()));
                }
                self.eval(&args[0], Some(if f == Func::First { 0 } else { n - 1 }))?
            }
            Func::Attr => {
                let id = ElementId(arg(0)?.num(name)? as u32);
                let attr = arg(1)?;
                let attr = attr.text(name)?;
                let el = self.reference.find(id).ok_or(EvalCause::UnknownElement(id))?;
                let raw = el
                    .attr_unescaped(attr)
                    .ok_or_else(|| EvalCause::Type(format!("element {id} has no `{attr}`")))?;
                match raw.trim().parse::<f64>() {
                    Ok(v) if v.is_finite() => Val::Num(v),
                    _ => Val::Str(raw),
                }
            }
            Func::Stretch => {
                let d = arg(0)?;
                let axis = arg(1)?;
                let anchor = arg(2)?.num(name)?;
                let k = arg(3)?.num(name)?;
                let (sx, sy, tx, ty) = match axis.text(name)? {
                    "x" => (k, 1.0, anchor * (1.0 - k), 0.0),
                    "y" => (1.0, k, 0.0, anchor * (1.0 - k)),
                    other => return Err(EvalCause::Type(format!("stretch axis must be x or y, got `{other}`"))),
                };
                Val::Str(transform_path(d.text(name)?, sx, sy, tx, ty).map_err(|e| EvalCause::BadPath(e.to_string()))?)
            }
            Func::TranslatePath => {
                let d = arg(0)?;
                let (dx, dy) = (arg(1)?.num(name)?, arg(2)?.num(name)?);
                Val::Str(transform_path(d.text(name)?, 1.0, 1.0, dx, dy).map_err(|e| EvalCause::BadPath(e.to_string()))?)
            }
        })
    }

    fn path_string(&self, parts: &[PathPart], row: Option<usize>, out: &mut String) -> Result<(), EvalCause> {
        for p in parts {
            match p {
                PathPart::Lit(s) => out.push_str(s),
                PathPart::Hole(e) => out.push_str(&self.eval(e, row)?.to_string()),
                PathPart::Each(inner) => {
                    for r in 0..self.data.rows.len() {
                        self.path_string(inner, Some(r), out)?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Mutable evaluation state: the working tree and id allocation.
struct Work {
    root: Element,
    next_id: u32,
    /// Ids of the replaced slot's former members, handed out in order.
    reuse: Vec<ElementId>,
}

impl Work {
    fn take_id(&mut self) -> ElementId {
        if !self.reuse.is_empty() {
            return self.reuse.remove(0);
        }
        let id = ElementId(self.next_id);
        self.next_id += 1;
        id
    }

    fn container(&mut self, slot: Option<&str>) -> &mut Element {
        match slot {
            None => &mut self.root,
            Some(name) => find_slot_mut(&mut self.root, name).expect("slot checked on entry"),
        }
    }

    fn append(&mut self, slot: Option<&str>, e: Element) {
        self.container(slot).children.push(Node::Element(e));
    }
}

fn find_slot_mut<'e>(e: &'e mut Element, name: &str) -> Option<&'e mut Element> {
    if e.is_marker() && e.attr_unescaped("slot").as_deref() == Some(name) {
        return Some(e);
    }
    e.children.iter_mut().filter_map(Node::as_element_mut).find_map(|c| find_slot_mut(c, name))
}

fn set_binding(e: &mut Element, attr: &str, v: &Val) {
    if attr == TEXT_BINDING {
        e.children = vec![Node::Text(escape_text(&v.to_string()))];
    } else {
        e.set_attr(attr, &v.to_string());
    }
}

fn strip_ids_below(e: &mut Element) {
    for c in e.children.iter_mut().filter_map(Node::as_element_mut) {
        c.remove_attr(ID_ATTR);
        strip_ids_below(c);
    }
}

fn run(
    ctx: &Ctx<'_>,
    work: &mut Work,
    d: &Directive,
    row: Option<usize>,
    slot: Option<&str>,
) -> Result<(), EvalCause> {
    match d {
        Directive::ForEachRow(body) => {
            for r in 0..ctx.data.rows.len() {
                for inner in body {
                    run(ctx, work, inner, Some(r), slot)?;
                }
            }
        }
        Directive::Emit { tag, bindings } => {
            let mut e = Element::new(tag.clone());
            for b in bindings {
                set_binding(&mut e, &b.attr, &ctx.eval(&b.expr, row)?);
            }
            e.set_attr(ID_ATTR, &work.take_id().to_string());
            work.append(slot, e);
        }
        Directive::ReplaceSlot { slot: name, body } => {
            let marker = find_slot_mut(&mut work.root, name).ok_or_else(|| EvalCause::UnknownSlot(name.clone()))?;
            let former: Vec<ElementId> = marker
                .element_children()
                .filter(|c| !c.is_marker())
                .filter_map(Element::id)
                .collect();
            marker.children.clear();
            let saved = std::mem::replace(&mut work.reuse, former);
            let result = body.iter().try_for_each(|inner| run(ctx, work, inner, row, Some(name)));
            work.reuse = saved;
            result?;
        }
        Directive::Set { id, attr, expr } => {
            let v = ctx.eval(expr, row)?;
            let e = work.root.find_mut(*id).ok_or(EvalCause::UnknownElement(*id))?;
            set_binding(e, attr, &v);
        }
        Directive::Clone { id, bindings } => {
            let mut e = ctx.reference.find(*id).ok_or(EvalCause::UnknownElement(*id))?.clone();
            strip_ids_below(&mut e);
            e.remove_attr(ID_ATTR);
            for b in bindings {
                set_binding(&mut e, &b.attr, &ctx.eval(&b.expr, row)?);
            }
            e.set_attr(ID_ATTR, &work.take_id().to_string());
            work.append(slot, e);
        }
        Directive::Path { target, attr, parts } => {
            let mut s = String::new();
            ctx.path_string(parts, row, &mut s)?;
            let v = Val::Str(s);
            match target {
                PathTarget::Element(id) => {
                    let e = work.root.find_mut(*id).ok_or(EvalCause::UnknownElement(*id))?;
                    set_binding(e, attr, &v);
                }
                PathTarget::Emit { tag, bindings } => {
                    let mut e = Element::new(tag.clone());
                    for b in bindings {
                        set_binding(&mut e, &b.attr, &ctx.eval(&b.expr, row)?);
                    }
                    set_binding(&mut e, attr, &v);
                    e.set_attr(ID_ATTR, &work.take_id().to_string());
                    work.append(slot, e);
                }
            }
        }
    }
    Ok(())
}

/// Renders `program` against the marked-up reference. Pure: identical inputs
/// give identical output bytes.
pub fn evaluate(
    program: &TemplateProgram,
    marked: &MarkedUpSvg,
    data: &Dataset,
    params: &BTreeMap<String, ParamValue>,
) -> Result<SvgDocument, EvalError> {
    let top = |cause| EvalError { directive: None, cause };
    let params = resolve_params(program, params).map_err(top)?;
    check_data(program, data).map_err(top)?;
    let reference = marked.document();
    let mut ctx = Ctx { program, reference, data, params, scales: HashMap::new() };
    for def in &ctx.program.scales {
        let s = ctx.resolve_scale(def).map_err(top)?;
        ctx.scales.insert(def.id.clone(), s);
    }
    let mut work = Work { root: reference.root.clone(), next_id: reference.max_id() + 1, reuse: Vec::new() };
    for (i, d) in program.directives.iter().enumerate() {
        run(&ctx, &mut work, d, None, None).map_err(|cause| EvalError { directive: Some(i), cause })?;
    }
    let marked = MarkedUpSvg::from_document(reference.with_root(work.root));
    Ok(strip_markers(&marked))
}
