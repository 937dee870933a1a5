//! Steps shared by the CLI and the HTTP API, so both produce the same bytes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use svgreuse_core::data::{to_csv, Dataset};
use svgreuse_core::decompose::{heuristic_decompose, run_chain, validate_markup, ChainError, DecomposeError};
use svgreuse_core::dsl::{evaluate, parse_program, print_program, validate_program, EvalError, ParamKind, ParamValue, TemplateProgram};
use svgreuse_core::fidelity::diff_geometry;
use svgreuse_core::ir::{parse_ir, serialize_ir, validate_ir, IntermediateRepresentation};
use svgreuse_core::lmm::ModelClient;
use svgreuse_core::preprocess::{build_prompt_view, PreprocessConfig, Renderer};
use svgreuse_core::report::{IssueKind, ValidationReport};
use svgreuse_core::svg::{assign_ids, parse, strip_markers, MarkedUpSvg, SvgDocument};
use svgreuse_core::synth::{synthesize_template, synthesize_with_model, SynthesisError};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DecomposeMode {
    Heuristic,
    Lmm,
    Replay,
}

impl std::fmt::Display for DecomposeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DecomposeMode::Heuristic => "heuristic",
            DecomposeMode::Lmm => "lmm",
            DecomposeMode::Replay => "replay",
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Decompose(#[from] DecomposeError),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// Markup and IR, plus the template when synthesis succeeded.
#[derive(Debug, Clone)]
pub struct Decomposed {
    pub marked: MarkedUpSvg,
    pub ir: IntermediateRepresentation,
    pub template: Result<Templated, String>,
}

#[derive(Debug, Clone)]
pub struct Templated {
    pub program: TemplateProgram,
    pub fidelity: f64,
}

/// Decomposes an id-assigned reference. Without a client the heuristic
/// decomposer runs; with one, the model chain does. Synthesis is
/// deterministic first and falls back to the model when a client exists.
pub fn decompose(
    reference: &SvgDocument,
    client: Option<&ModelClient>,
    renderer: Option<&dyn Renderer>,
) -> Result<Decomposed, PipelineError> {
    let (marked, ir) = match client {
        None => {
            let d = heuristic_decompose(reference)?;
            (d.marked, d.ir)
        }
        Some(client) => {
            let view = build_prompt_view(reference, &PreprocessConfig::default(), renderer);
            let out = run_chain(&view, reference, client)?;
            (out.marked, out.ir)
        }
    };
    let program = match (synthesize_template(&ir, &marked), client) {
        (Err(SynthesisError::SynthesisFailed { .. }), Some(client)) => synthesize_with_model(&ir, &marked, client),
        (r, _) => r,
    };
    let template = program.map_err(|e| e.to_string()).and_then(|program| {
        let fidelity = fidelity(&program, &marked, &ir.dataset).map_err(|e| e.to_string())?;
        Ok(Templated { program, fidelity })
    });
    Ok(Decomposed { marked, ir, template })
}

/// The one render path: evaluate, then serialize.
pub fn render(
    program: &TemplateProgram,
    marked: &MarkedUpSvg,
    data: &Dataset,
    params: &BTreeMap<String, ParamValue>,
) -> Result<String, EvalError> {
    Ok(evaluate(program, marked, data, params)?.to_xml())
}

/// Deviation of the default rendering from the reference.
pub fn fidelity(program: &TemplateProgram, marked: &MarkedUpSvg, data: &Dataset) -> Result<f64, EvalError> {
    let out = evaluate(program, marked, data, &BTreeMap::new())?;
    Ok(diff_geometry(&strip_markers(marked), &out).score)
}

/// Reads `name = value` lines. Values of number parameters are parsed as
/// numbers; quotes around other values are optional.
pub fn parse_params(text: &str, program: &TemplateProgram) -> Result<BTreeMap<String, ParamValue>, String> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, value) = line.split_once('=').ok_or_else(|| format!("line {}: expected `name = value`", n + 1))?;
        let (name, value) = (name.trim(), value.trim());
        let spec = program.param(name).ok_or_else(|| format!("line {}: unknown parameter `{name}`", n + 1))?;
        let value = match spec.kind {
            ParamKind::Number => ParamValue::Number(
                value.parse::<f64>().map_err(|_| format!("line {}: `{value}` is not a number", n + 1))?,
            ),
            _ => ParamValue::Text(
                value.strip_prefix('"').and_then(|v| v.strip_suffix('"')).unwrap_or(value).to_string(),
            ),
        };
        out.insert(name.to_string(), value);
    }
    Ok(out)
}

/// File names of one decomposition: `<stem>.svg`, `.dwsvg`, `.ir.json`,
/// `.dwt` and `.csv`.
pub fn artifact_path(dir: &Path, stem: &str, ext: &str) -> PathBuf {
    dir.join(format!("{stem}.{ext}"))
}

pub struct Artifacts<'a> {
    pub marked: &'a MarkedUpSvg,
    pub ir: &'a IntermediateRepresentation,
    pub program: Option<&'a TemplateProgram>,
    /// Data the template renders.
    pub data: &'a Dataset,
}

impl Artifacts<'_> {
    pub fn files(&self) -> Vec<(&'static str, String)> {
        let mut files = vec![("dwsvg", self.marked.to_xml()), ("ir.json", serialize_ir(self.ir) + "\n")];
        if let Some(p) = self.program {
            files.push(("dwt", print_program(p)));
        }
        files.push(("csv", to_csv(self.data)));
        files
    }

    pub fn write(&self, dir: &Path, stem: &str) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (ext, text) in self.files() {
            std::fs::write(artifact_path(dir, stem, ext), text)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyOutcome {
    pub stem: String,
    pub fidelity: Option<f64>,
    pub report: ValidationReport,
}

impl VerifyOutcome {
    pub fn passed(&self) -> bool {
        self.report.is_valid()
    }
}

/// Checks every `<stem>.dwt` in `dir` against its markup and IR. The
/// reference is `<stem>.svg` when present and the stripped markup otherwise.
pub fn verify_dir(dir: &Path, tolerance: f64) -> std::io::Result<Vec<VerifyOutcome>> {
    let mut stems: Vec<String> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().and_then(|n| n.strip_suffix(".dwt")).map(str::to_string))
        .collect();
    stems.sort();
    Ok(stems.into_iter().map(|stem| verify_one(dir, stem, tolerance)).collect())
}

fn verify_one(dir: &Path, stem: String, tolerance: f64) -> VerifyOutcome {
    let mut report = ValidationReport::default();
    let fail = |report: &mut ValidationReport, what: &str, e: &dyn std::fmt::Display| {
        report.push(IssueKind::InvariantViolation, format!("{what}: {e}"));
    };
    let read = |ext: &str| std::fs::read_to_string(artifact_path(dir, &stem, ext));
    let outcome = |report: ValidationReport, fidelity| VerifyOutcome { stem: stem.clone(), fidelity, report };

    let marked = match read("dwsvg").map_err(|e| e.to_string()).and_then(|t| MarkedUpSvg::parse(t.as_bytes()).map_err(|e| e.to_string())) {
        Ok(m) => m,
        Err(e) => {
            fail(&mut report, "markup", &e);
            return outcome(report, None);
        }
    };
    let ir = match read("ir.json").map_err(|e| e.to_string()).and_then(|t| parse_ir(&t).map_err(|e| e.to_string())) {
        Ok(ir) => ir,
        Err(e) => {
            fail(&mut report, "ir", &e);
            return outcome(report, None);
        }
    };
    let program = match read("dwt").map_err(|e| e.to_string()).and_then(|t| parse_program(&t).map_err(|e| e.to_string())) {
        Ok(p) => p,
        Err(e) => {
            fail(&mut report, "template", &e);
            return outcome(report, None);
        }
    };
    let original = match read("svg") {
        Err(_) => strip_markers(&marked),
        Ok(text) => match parse(text.as_bytes()) {
            Ok(doc) if doc.elements().any(|e| e.id().is_some()) => doc,
            Ok(doc) => assign_ids(&doc).unwrap_or(doc),
            Err(e) => {
                fail(&mut report, "reference", &e);
                return outcome(report, None);
            }
        },
    };

    report.extend(validate_markup(&marked, &original));
    report.extend(validate_ir(&ir, &marked));
    report.extend(validate_program(&program, &marked, &ir.dataset.columns));
    let fidelity = match evaluate(&program, &marked, &ir.dataset, &BTreeMap::new()) {
        Ok(out) => {
            let score = diff_geometry(&original, &out).score;
            if score > tolerance {
                report.push(IssueKind::InvariantViolation, format!("rendering deviates by {score:.4} of the diagonal"));
            }
            Some(score)
        }
        Err(e) => {
            fail(&mut report, "render", &e);
            None
        }
    };
    outcome(report, fidelity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use svgreuse_core::corpus;

    fn bars() -> (SvgDocument, Decomposed) {
        let chart = corpus::synthetic_corpus().into_iter().find(|c| c.name == "bars-4").unwrap();
        let doc = assign_ids(&corpus::document(&chart)).unwrap();
        let d = decompose(&doc, None, None).unwrap();
        (doc, d)
    }

    #[test]
    fn heuristic_decomposition_is_templated() {
        let (_, d) = bars();
        let t = d.template.unwrap();
        assert!(t.fidelity <= 0.005, "{}", t.fidelity);
    }

    #[test]
    fn params_file_follows_kinds() {
        let (_, d) = bars();
        let program = d.template.unwrap().program;
        let numeric = program.params.iter().find(|p| p.kind == ParamKind::Number).unwrap().name.clone();
        let p = parse_params(&format!("# comment\n{numeric} = 12.5\n"), &program).unwrap();
        assert_eq!(p[&numeric], ParamValue::Number(12.5));
        assert!(parse_params("nope = 1", &program).unwrap_err().contains("unknown parameter"));
        assert!(parse_params(&format!("{numeric} = wide"), &program).unwrap_err().contains("not a number"));
        assert!(parse_params("garbage", &program).is_err());
    }

    #[test]
    fn verify_accepts_written_artifacts_and_flags_tampering() {
        let (doc, d) = bars();
        let t = d.template.as_ref().unwrap();
        let dir = tempfile::tempdir().unwrap();
        Artifacts { marked: &d.marked, ir: &d.ir, program: Some(&t.program), data: &d.ir.dataset }.write(dir.path(), "bars").unwrap();
        std::fs::write(dir.path().join("bars.svg"), doc.to_xml()).unwrap();
        let out = verify_dir(dir.path(), 0.005).unwrap();
        assert_eq!(out.len(), 1);
        assert!(out[0].passed(), "{}", out[0].report);

        let svg = doc.to_xml().replacen("<rect", "<rect transform=\"translate(30 0)\"", 3);
        std::fs::write(dir.path().join("bars.svg"), svg).unwrap();
        assert!(!verify_dir(dir.path(), 0.005).unwrap()[0].passed());
    }
}
