use serde::{Deserialize, Serialize};

use crate::dsl::{ParamKind, ParamValue, ParameterSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WidgetKind {
    Slider,
    ColorPicker,
    TextInput,
    Select,
}

impl WidgetKind {
    pub fn for_param(kind: ParamKind) -> Self {
        match kind {
            ParamKind::Number => WidgetKind::Slider,
            ParamKind::Color => WidgetKind::ColorPicker,
            ParamKind::Text => WidgetKind::TextInput,
            ParamKind::Choice => WidgetKind::Select,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidgetSpec {
    pub widget: WidgetKind,
    pub param_name: String,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<String>,
    pub default: ParamValue,
}

/// Slider bounds for a number without a declared range: a quarter to four
/// times the default. A zero default gets [0, 1].
fn implied_range(default: f64) -> (f64, f64) {
    if default == 0.0 {
        return (0.0, 1.0);
    }
    let (a, b) = (default / 4.0, default * 4.0);
    (a.min(b), a.max(b))
}

/// One widget per parameter, in order.
pub fn materialize_widgets(params: &[ParameterSpec]) -> Vec<WidgetSpec> {
    params
        .iter()
        .map(|p| {
            let mut w = WidgetSpec {
                widget: WidgetKind::for_param(p.kind),
                param_name: p.name.clone(),
                title: p.title.clone().unwrap_or_else(|| p.name.replace('_', " ")),
                min: None,
                max: None,
                step: None,
                options: Vec::new(),
                default: p.default.clone(),
            };
            match p.kind {
                ParamKind::Number => {
                    let (min, max, step) = match p.range {
                        Some(r) => (r.min, r.max, r.step),
                        None => {
                            let (lo, hi) = implied_range(p.default.as_f64().unwrap_or(0.0));
                            (lo, hi, (hi - lo) / 100.0)
                        }
                    };
                    (w.min, w.max, w.step) = (Some(min), Some(max), Some(step));
                }
                ParamKind::Choice => w.options = p.options.clone(),
                ParamKind::Color | ParamKind::Text => {}
            }
            w
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranged_number_is_slider() {
        let w = &materialize_widgets(&[ParameterSpec::number("bar_width", 24.0).with_range(1.0, 100.0, 1.0)])[0];
        assert_eq!((w.widget, w.min, w.max, w.step), (WidgetKind::Slider, Some(1.0), Some(100.0), Some(1.0)));
        assert_eq!(w.title, "bar width");
    }

    #[test]
    fn unranged_number_gets_implied_range() {
        let w = &materialize_widgets(&[ParameterSpec::number("r", 24.0)])[0];
        assert_eq!((w.min, w.max), (Some(6.0), Some(96.0)));
        assert!((w.step.unwrap() - 0.9).abs() < 1e-12);
        let neg = &materialize_widgets(&[ParameterSpec::number("dx", -8.0)])[0];
        assert_eq!((neg.min, neg.max), (Some(-32.0), Some(-2.0)));
    }

    #[test]
    fn color_text_choice() {
        let ws = materialize_widgets(&[
            ParameterSpec::color("tint", "#ff0000"),
            ParameterSpec::text("title", "Sales"),
            ParameterSpec::choice("side", "left", vec!["left".into(), "right".into()]),
        ]);
        assert_eq!(ws.iter().map(|w| w.widget).collect::<Vec<_>>(), vec![WidgetKind::ColorPicker, WidgetKind::TextInput, WidgetKind::Select]);
        assert_eq!(ws[2].options.len(), 2);
    }
}
