//! Scales with their domain and range resolved to concrete values.

use thiserror::Error;

use super::ast::ScaleKind;
use crate::data::Value;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScaleError {
    #[error("value {value} outside the domain of scale `{scale}`")]
    DomainViolation { scale: String, value: String },
    #[error("scale `{scale}` is degenerate: {reason}")]
    Degenerate { scale: String, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scale {
    pub id: String,
    pub kind: ScaleKind,
    pub domain: Vec<Value>,
    pub range: Vec<Value>,
    pub padding: f64,
}

impl Scale {
    /// Checks the structural invariants for the scale kind.
    pub fn check(&self) -> Result<(), ScaleError> {
        let bad = |reason: &str| Err(ScaleError::Degenerate { scale: self.id.clone(), reason: reason.into() });
        match self.kind {
            ScaleKind::Linear => {
                let (Some(d0), Some(d1)) = (self.num_domain(0), self.num_domain(1)) else {
                    return bad("linear domain needs two numbers");
                };
                if self.domain.len() != 2 || !(d0 < d1) {
                    return bad("linear domain must be [min, max] with min < max");
                }
                self.num_range()?;
            }
            ScaleKind::Band | ScaleKind::Point => {
                if self.domain.is_empty() {
                    return bad("empty domain");
                }
                if !(0.0..1.0).contains(&self.padding) {
                    return bad("padding must be in [0, 1)");
                }
                self.num_range()?;
            }
            ScaleKind::OrdinalColor => {
                if self.domain.is_empty() {
                    return bad("empty domain");
                }
                if self.range.is_empty() || self.range.iter().any(|v| matches!(v, Value::Number(_))) {
                    return bad("range must be a non-empty color list");
                }
            }
        }
        Ok(())
    }

    fn num_domain(&self, i: usize) -> Option<f64> {
        self.domain.get(i).and_then(Value::as_f64)
    }

    fn num_range(&self) -> Result<(f64, f64), ScaleError> {
        match self.range.as_slice() {
            [Value::Number(a), Value::Number(b)] if a.is_finite() && b.is_finite() => Ok((*a, *b)),
            _ => Err(ScaleError::Degenerate { scale: self.id.clone(), reason: "range must be two finite numbers".into() }),
        }
    }

    fn index_of(&self, v: &Value) -> Result<usize, ScaleError> {
        self.domain.iter().position(|d| d == v).ok_or_else(|| self.violation(v))
    }

    fn violation(&self, v: &Value) -> ScaleError {
        ScaleError::DomainViolation { scale: self.id.clone(), value: v.to_string() }
    }

    /// `(start, step)` of the band layout; for point scales the bandwidth is zero.
    fn band_layout(&self) -> Result<(f64, f64), ScaleError> {
        let (r0, r1) = self.num_range()?;
        let n = self.domain.len() as f64;
        let p = self.padding;
        let span = r1 - r0;
        Ok(match self.kind {
            ScaleKind::Band => {
                let step = span / (n + p);
                (r0 + p * step, step)
            }
            _ => {
                let step = span / (n - 1.0 + 2.0 * p).max(1.0);
                (r0 + (span - step * (n - 1.0)) / 2.0, step)
            }
        })
    }

    pub fn bandwidth(&self) -> Result<f64, ScaleError> {
        self.check()?;
        match self.kind {
            ScaleKind::Band => {
                let (_, step) = self.band_layout()?;
                Ok(step.abs() * (1.0 - self.padding))
            }
            _ => Ok(0.0),
        }
    }

    pub fn apply(&self, v: &Value) -> Result<Value, ScaleError> {
        self.check()?;
        match self.kind {
            ScaleKind::Linear => {
                let x = v.as_f64().ok_or_else(|| self.violation(v))?;
                let (d0, d1) = (self.num_domain(0).unwrap(), self.num_domain(1).unwrap());
                let slack = (d1 - d0) * 1e-9;
                if !(x >= d0 - slack && x <= d1 + slack) {
                    return Err(self.violation(v));
                }
                let (r0, r1) = self.num_range()?;
                Ok(Value::Number(r0 + (x - d0) / (d1 - d0) * (r1 - r0)))
            }
            ScaleKind::Band | ScaleKind::Point => {
                let i = self.index_of(v)?;
                let (start, step) = self.band_layout()?;
                let (r0, r1) = self.num_range()?;
                if r1 < r0 {
                    // reversed ranges lay bands out from r1 upward, like d3
                    let mirrored = Scale { range: vec![Value::Number(r1), Value::Number(r0)], ..self.clone() };
                    let (start, step) = mirrored.band_layout()?;
                    let j = self.domain.len() - 1 - i;
                    return Ok(Value::Number(start + step * j as f64));
                }
                Ok(Value::Number(start + step * i as f64))
            }
            ScaleKind::OrdinalColor => {
                let i = self.index_of(v)?;
                Ok(self.range[i % self.range.len()].clone())
            }
        }
    }
}

/// Distinct values in first-seen order.
pub fn distinct(values: impl IntoIterator<Item = Value>) -> Vec<Value> {
    let mut out: Vec<Value> = Vec::new();
    for v in values {
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn n(v: f64) -> Value {
        Value::Number(v)
    }

    fn t(s: &str) -> Value {
        Value::Text(s.into())
    }

    fn linear(d: (f64, f64), r: (f64, f64)) -> Scale {
        Scale { id: "s".into(), kind: ScaleKind::Linear, domain: vec![n(d.0), n(d.1)], range: vec![n(r.0), n(r.1)], padding: 0.0 }
    }

    fn band(count: usize, r: (f64, f64), padding: f64) -> Scale {
        Scale {
            id: "b".into(),
            kind: ScaleKind::Band,
            domain: (0..count).map(|i| t(&format!("c{i}"))).collect(),
            range: vec![n(r.0), n(r.1)],
            padding,
        }
    }

    #[test]
    fn linear_midpoint() {
        assert_eq!(linear((0.0, 100.0), (300.0, 0.0)).apply(&n(50.0)), Ok(n(150.0)));
    }

    #[test]
    fn linear_domain_violation() {
        assert!(matches!(linear((0.0, 40.0), (100.0, 0.0)).apply(&n(41.0)), Err(ScaleError::DomainViolation { .. })));
        assert!(matches!(linear((1.0, 1.0), (0.0, 1.0)).apply(&n(1.0)), Err(ScaleError::Degenerate { .. })));
    }

    #[test]
    fn band_four_categories() {
        let s = band(4, (0.0, 400.0), 0.0);
        let pos: Vec<_> = s.domain.iter().map(|d| s.apply(d).unwrap()).collect();
        assert_eq!(pos, vec![n(0.0), n(100.0), n(200.0), n(300.0)]);
        assert_eq!(s.bandwidth(), Ok(100.0));
    }

    #[test]
    fn reversed_band_mirrors() {
        let s = band(2, (100.0, 0.0), 0.0);
        assert_eq!(s.apply(&t("c0")), Ok(n(50.0)));
        assert_eq!(s.apply(&t("c1")), Ok(n(0.0)));
    }

    #[test]
    fn point_scale() {
        let s = Scale { kind: ScaleKind::Point, ..band(3, (0.0, 100.0), 0.0) };
        assert_eq!(s.apply(&t("c1")), Ok(n(50.0)));
        assert_eq!(s.apply(&t("c2")), Ok(n(100.0)));
        assert_eq!(s.bandwidth(), Ok(0.0));
        let single = Scale { kind: ScaleKind::Point, ..band(1, (0.0, 100.0), 0.0) };
        assert_eq!(single.apply(&t("c0")), Ok(n(50.0)));
    }

    #[test]
    fn ordinal_cycles() {
        let s = Scale {
            id: "c".into(),
            kind: ScaleKind::OrdinalColor,
            domain: (0..5).map(|i| n(i as f64)).collect(),
            range: vec![t("#a"), t("#b"), t("#c")],
            padding: 0.0,
        };
        let got: Vec<_> = (0..5).map(|i| s.apply(&n(i as f64)).unwrap()).collect();
        assert_eq!(got, vec![t("#a"), t("#b"), t("#c"), t("#a"), t("#b")]);
        assert!(s.apply(&n(9.0)).is_err());
    }

    proptest! {
        #[test]
        fn linear_is_affine(d0 in -1e3f64..1e3, w in 0.1f64..1e3, r0 in -1e3f64..1e3, r1 in -1e3f64..1e3,
                            a in 0.0f64..1.0, b in 0.0f64..1.0, lam in 0.0f64..1.0) {
            let s = linear((d0, d0 + w), (r0, r1));
            let (x, y) = (d0 + a * w, d0 + b * w);
            let f = |v: f64| s.apply(&n(v)).unwrap().as_f64().unwrap();
            let mix = f(lam * x + (1.0 - lam) * y);
            prop_assert!((mix - (lam * f(x) + (1.0 - lam) * f(y))).abs() < 1e-6 * (1.0 + r0.abs() + r1.abs()));
            prop_assert!((f(d0) - r0).abs() < 1e-9 * (1.0 + r0.abs()));
            prop_assert!((f(d0 + w) - r1).abs() < 1e-6 * (1.0 + r1.abs()));
            prop_assert!((f(d0 + w / 2.0) - (r0 + r1) / 2.0).abs() < 1e-6 * (1.0 + r0.abs() + r1.abs()));
        }

        #[test]
        fn band_layout_laws(count in 1usize..30, r0 in -500f64..500.0, span in 1f64..2000.0, p in 0.0f64..0.9) {
            let s = band(count, (r0, r0 + span), p);
            let bw = s.bandwidth().unwrap();
            let pos: Vec<f64> = s.domain.iter().map(|d| s.apply(d).unwrap().as_f64().unwrap()).collect();
            for w in pos.windows(2) {
                prop_assert!(w[1] > w[0]);
            }
            let step = span / (count as f64 + p);
            prop_assert!((bw - step * (1.0 - p)).abs() < 1e-9 * span);
            prop_assert!((pos[0] - (r0 + p * step)).abs() < 1e-9 * (span + r0.abs()));
            // bands plus inner and outer gaps tile the range exactly
            let gaps = (count as f64 - 1.0) * p * step + 2.0 * p * step;
            prop_assert!((bw * count as f64 + gaps - span).abs() < 1e-7 * span);
            let last_end = pos[count - 1] + bw;
            prop_assert!((r0 + span - last_end - p * step).abs() < 1e-7 * span);
        }

        #[test]
        fn ordinal_modular(domain_len in 1usize..40, colors in 1usize..10, i in 0usize..40) {
            let i = i % domain_len;
            let range: Vec<Value> = (0..colors).map(|c| t(&format!("#{c:06x}"))).collect();
            let s = Scale {
                id: "c".into(), kind: ScaleKind::OrdinalColor,
                domain: (0..domain_len).map(|k| t(&format!("k{k}"))).collect(),
                range: range.clone(), padding: 0.0,
            };
            prop_assert_eq!(s.apply(&t(&format!("k{i}"))).unwrap(), range[i % colors].clone());
        }
    }
}
