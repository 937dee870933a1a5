use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::Column;
use crate::svg::ElementId;

/// Parameters every template declares.
pub const FIXED_PARAMS: [&str; 4] = ["chart_width", "chart_height", "origin_x", "origin_y"];

/// Identifiers bound by the evaluator rather than declared.
pub const LOOP_VARS: [&str; 2] = ["index", "row_count"];

/// Binding name that sets an element's text content.
pub const TEXT_BINDING: &str = "@text";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamKind {
    Number,
    Color,
    Text,
    Choice,
}

impl ParamKind {
    pub fn keyword(self) -> &'static str {
        match self {
            ParamKind::Number => "number",
            ParamKind::Color => "color",
            ParamKind::Text => "text",
            ParamKind::Choice => "choice",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        [ParamKind::Number, ParamKind::Color, ParamKind::Text, ParamKind::Choice]
            .into_iter()
            .find(|k| k.keyword() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Number(f64),
    Text(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Number(v) => Some(*v),
            ParamValue::Text(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            ParamValue::Number(_) => None,
            ParamValue::Text(s) => Some(s),
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Number(v) => f.write_str(&crate::geom::fmt_num(*v)),
            ParamValue::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumberRange {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpec {
    pub name: String,
    pub kind: ParamKind,
    pub default: ParamValue,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<NumberRange>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
}

impl ParameterSpec {
    pub fn number(name: &str, default: f64) -> Self {
        ParameterSpec {
            name: name.to_string(),
            kind: ParamKind::Number,
            default: ParamValue::Number(default),
            range: None,
            options: Vec::new(),
            title: None,
        }
    }

    pub fn color(name: &str, default: &str) -> Self {
        ParameterSpec {
            name: name.to_string(),
            kind: ParamKind::Color,
            default: ParamValue::Text(default.to_string()),
            range: None,
            options: Vec::new(),
            title: None,
        }
    }

    pub fn text(name: &str, default: &str) -> Self {
        ParameterSpec { kind: ParamKind::Text, ..ParameterSpec::color(name, default) }
    }

    pub fn choice(name: &str, default: &str, options: Vec<String>) -> Self {
        ParameterSpec { kind: ParamKind::Choice, options, ..ParameterSpec::color(name, default) }
    }

    pub fn with_range(mut self, min: f64, max: f64, step: f64) -> Self {
        self.range = Some(NumberRange { min, max, step });
        self
    }

    pub fn with_title(mut self, title: &str) -> Self {
        self.title = Some(title.to_string());
        self
    }

    /// Checks that a value suits this parameter.
    pub fn accepts(&self, v: &ParamValue) -> Result<(), String> {
        match (self.kind, v) {
            (ParamKind::Number, ParamValue::Number(x)) => {
                if !x.is_finite() {
                    return Err(format!("`{}` must be finite", self.name));
                }
                if let Some(r) = self.range {
                    if *x < r.min || *x > r.max {
                        return Err(format!("`{}` = {x} outside [{}, {}]", self.name, r.min, r.max));
                    }
                }
                Ok(())
            }
            (ParamKind::Number, _) => Err(format!("`{}` expects a number", self.name)),
            (ParamKind::Choice, ParamValue::Text(s)) => {
                if self.options.iter().any(|o| o == s) {
                    Ok(())
                } else {
                    Err(format!("`{}` = `{s}` is not one of {:?}", self.name, self.options))
                }
            }
            (_, ParamValue::Text(_)) => Ok(()),
            (_, ParamValue::Number(_)) => Err(format!("`{}` expects text", self.name)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScaleKind {
    Linear,
    Band,
    Point,
    OrdinalColor,
}

impl ScaleKind {
    pub fn keyword(self) -> &'static str {
        match self {
            ScaleKind::Linear => "linear",
            ScaleKind::Band => "band",
            ScaleKind::Point => "point",
            ScaleKind::OrdinalColor => "ordinal-color",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        [ScaleKind::Linear, ScaleKind::Band, ScaleKind::Point, ScaleKind::OrdinalColor]
            .into_iter()
            .find(|k| k.keyword() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FieldRef {
    Column(String),
    /// Column named by a (choice) parameter.
    Param(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScaleDomain {
    Values(Vec<Expr>),
    Field(FieldRef),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleDef {
    pub id: String,
    pub kind: ScaleKind,
    pub domain: ScaleDomain,
    pub range: Vec<Expr>,
    pub padding: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        [CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge, CmpOp::Eq, CmpOp::Ne]
            .into_iter()
            .find(|o| o.symbol() == s)
    }
}

/// Built-in functions. Aggregates evaluate their argument once per row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Func {
    Sin,
    Cos,
    Sqrt,
    Abs,
    Min,
    Max,
    Round,
    Sum,
    /// Sum over the rows before the current one.
    CumSum,
    First,
    Last,
    /// `(attr id name)`: attribute of a reference element.
    Attr,
    /// `(stretch d axis anchor factor)`: scales path data along one axis.
    Stretch,
    /// `(translate-path d dx dy)`.
    TranslatePath,
}

impl Func {
    pub const ALL: [Func; 14] = [
        Func::Sin,
        Func::Cos,
        Func::Sqrt,
        Func::Abs,
        Func::Min,
        Func::Max,
        Func::Round,
        Func::Sum,
        Func::CumSum,
        Func::First,
        Func::Last,
        Func::Attr,
        Func::Stretch,
        Func::TranslatePath,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
            Func::Round => "round",
            Func::Sum => "sum",
            Func::CumSum => "cumsum",
            Func::First => "first",
            Func::Last => "last",
            Func::Attr => "attr",
            Func::Stretch => "stretch",
            Func::TranslatePath => "translate-path",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Func::ALL.into_iter().find(|f| f.name() == s)
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Sin | Func::Cos | Func::Sqrt | Func::Abs | Func::Round => 1,
            Func::Sum | Func::CumSum | Func::First | Func::Last => 1,
            Func::Min | Func::Max | Func::Attr => 2,
            Func::TranslatePath => 3,
            Func::Stretch => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Num(f64),
    Str(String),
    Color(String),
    /// Parameter, loop variable or `pi`.
    Ident(String),
    Field(FieldRef),
    Scale(String, Box<Expr>),
    Bandwidth(String),
    Arith(ArithOp, Vec<Expr>),
    Concat(Vec<Expr>),
    Compare(CmpOp, Box<Expr>, Box<Expr>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binding {
    pub attr: String,
    pub expr: Expr,
}

impl Binding {
    pub fn new(attr: &str, expr: Expr) -> Self {
        Binding { attr: attr.to_string(), expr }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PathTarget {
    Element(ElementId),
    Emit { tag: String, bindings: Vec<Binding> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PathPart {
    Lit(String),
    Hole(Expr),
    /// Repeated once per row.
    Each(Vec<PathPart>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Directive {
    ForEachRow(Vec<Directive>),
    Emit { tag: String, bindings: Vec<Binding> },
    ReplaceSlot { slot: String, body: Vec<Directive> },
    Set { id: ElementId, attr: String, expr: Expr },
    Clone { id: ElementId, bindings: Vec<Binding> },
    Path { target: PathTarget, attr: String, parts: Vec<PathPart> },
}

impl Directive {
    pub fn keyword(&self) -> &'static str {
        match self {
            Directive::ForEachRow(_) => "for-each-row",
            Directive::Emit { .. } => "emit",
            Directive::ReplaceSlot { .. } => "replace-slot",
            Directive::Set { .. } => "set",
            Directive::Clone { .. } => "clone",
            Directive::Path { .. } => "path",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TemplateProgram {
    pub params: Vec<ParameterSpec>,
    pub scales: Vec<ScaleDef>,
    pub directives: Vec<Directive>,
    pub required_schema: Vec<Column>,
}

impl TemplateProgram {
    pub fn param(&self, name: &str) -> Option<&ParameterSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn scale(&self, id: &str) -> Option<&ScaleDef> {
        self.scales.iter().find(|s| s.id == id)
    }

    pub fn defaults(&self) -> std::collections::BTreeMap<String, ParamValue> {
        self.params.iter().map(|p| (p.name.clone(), p.default.clone())).collect()
    }
}
