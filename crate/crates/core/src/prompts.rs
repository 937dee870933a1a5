//! Prompt templates and the one-shot exemplar, loaded from versioned files.

pub const GRAMMAR: &str = include_str!("../prompts/grammar.txt");
pub const SYNTHESIZE: &str = include_str!("../prompts/synthesize.txt");
pub const STEP1_ROLES: &str = include_str!("../prompts/step1_roles.txt");
pub const STEP2_ENRICH: &str = include_str!("../prompts/step2_enrich.txt");
pub const STEP3_IR: &str = include_str!("../prompts/step3_ir.txt");
pub const REFINE: &str = include_str!("../prompts/refine.txt");

/// The bar chart embedded in prompts as a worked example.
pub const EXEMPLAR_SVG: &str = include_str!("../fixtures/exemplar/bar-chart.svg");
pub const EXEMPLAR_MARKUP: &str = include_str!("../fixtures/exemplar/bar-chart.dwsvg");
pub const EXEMPLAR_CSV: &str = include_str!("../fixtures/exemplar/bar-chart.csv");
pub const EXEMPLAR_IR: &str = include_str!("../fixtures/exemplar/bar-chart.ir.json");
pub const EXEMPLAR_PROGRAM: &str = include_str!("../fixtures/exemplar/bar-chart.dwt");

/// Replaces each `{{name}}` placeholder.
pub fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in values {
        out = out.replace(&format!("{{{{{name}}}}}"), value);
    }
    out
}

/// Body of the first fenced block tagged `lang`.
pub fn fenced<'a>(text: &'a str, lang: &str) -> Option<&'a str> {
    let open = format!("```{lang}");
    let start = text.find(&open)? + open.len();
    let rest = &text[start..];
    let body_start = rest.find('\n')? + 1;
    let body = &rest[body_start..];
    let end = body.find("```")?;
    Some(body[..end].trim_end_matches('\n'))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placeholders_filled() {
        assert_eq!(fill("a {{x}} b {{y}} {{x}}", &[("x", "1"), ("y", "2")]), "a 1 b 2 1");
    }

    #[test]
    fn fenced_blocks() {
        let t = "hi\n```svg\n<svg/>\n```\n```csv\na,b\n1,2\n```";
        assert_eq!(fenced(t, "svg"), Some("<svg/>"));
        assert_eq!(fenced(t, "csv"), Some("a,b\n1,2"));
        assert_eq!(fenced(t, "json"), None);
    }

    #[test]
    fn prompts_have_no_stray_placeholders_after_fill() {
        let filled = fill(SYNTHESIZE, &[("grammar", "g"), ("exemplar", "e"), ("ir", "i"), ("markup", "m"), ("schema", "s")]);
        assert!(!filled.contains("{{"), "{filled}");
    }
}
