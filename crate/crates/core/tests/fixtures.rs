//! Checked-in fixtures: the prompt exemplar, golden templates and frozen chain
//! transcripts. Run with `UPDATE_GOLDEN=1` to regenerate them.

use std::path::{Path, PathBuf};
use std::sync::atomic::Ordering;
use std::sync::Arc;

use svgreuse_core::corpus;
use svgreuse_core::data::to_csv;
use svgreuse_core::decompose::{heuristic_decompose, outcome_digest, run_chain, OracleAnswers};
use svgreuse_core::dsl::print_program;
use svgreuse_core::ir::serialize_ir;
use svgreuse_core::lmm::{DenyingProvider, Mode, ModelClient, Transcript};
use svgreuse_core::preprocess::{build_prompt_view, PreprocessConfig};
use svgreuse_core::prompts;
use svgreuse_core::svg::{assign_ids, SvgDocument};
use svgreuse_core::synth::synthesize_template;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn updating() -> bool {
    std::env::var_os("UPDATE_GOLDEN").is_some()
}

fn golden(rel: &str, actual: &str) {
    let path = fixtures().join(rel);
    if updating() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_default();
    assert!(expected == actual, "{} is stale; rerun with UPDATE_GOLDEN=1", path.display());
}

fn chart_doc(name: &str) -> SvgDocument {
    let chart = corpus::synthetic_corpus().into_iter().find(|c| c.name == name).unwrap();
    assign_ids(&corpus::document(&chart)).unwrap()
}

#[test]
fn exemplar_is_current() {
    let chart = corpus::bar_chart("exemplar", &["Q1", "Q2", "Q3"], &[12.0, 30.0, 21.0], 40.0, 10.0, false);
    let doc = assign_ids(&corpus::document(&chart)).unwrap();
    let d = heuristic_decompose(&doc).unwrap();
    let program = synthesize_template(&d.ir, &d.marked).unwrap();
    let view = build_prompt_view(&doc, &PreprocessConfig::default(), None);
    let files = [
        ("exemplar/bar-chart.svg", view.simplified.to_xml() + "\n"),
        ("exemplar/bar-chart.dwsvg", d.marked.to_xml() + "\n"),
        ("exemplar/bar-chart.csv", to_csv(&d.dataset)),
        ("exemplar/bar-chart.ir.json", serialize_ir(&d.ir) + "\n"),
        ("exemplar/bar-chart.dwt", print_program(&program)),
    ];
    for (rel, text) in &files {
        golden(rel, text);
    }
    // the compiled-in copies must match what is on disk
    if !updating() {
        assert_eq!(prompts::EXEMPLAR_PROGRAM, files[4].1);
        assert_eq!(prompts::EXEMPLAR_CSV, files[2].1);
    }
}

#[test]
fn golden_templates() {
    for name in ["bars-4", "pie-4"] {
        let d = heuristic_decompose(&chart_doc(name)).unwrap();
        let program = synthesize_template(&d.ir, &d.marked).unwrap();
        golden(&format!("golden/{name}.dwt"), &print_program(&program));
    }
}

#[test]
fn chain_transcripts_replay() {
    for name in ["bars-4", "pie-4"] {
        let doc = chart_doc(name);
        let view = build_prompt_view(&doc, &PreprocessConfig::default(), None);
        let path = fixtures().join(format!("transcripts/{name}.chain.tsv"));
        if updating() {
            let _ = std::fs::remove_file(&path);
            let answers = OracleAnswers::for_document(&view, &doc).unwrap();
            let client = ModelClient::record(Arc::new(answers.provider()), &path).unwrap();
            let out = run_chain(&view, &doc, &client).unwrap();
            golden(&format!("golden/{name}.ir.json"), &(serialize_ir(&out.ir) + "\n"));
        }
        let denying = Arc::new(DenyingProvider::default());
        let client = ModelClient::new(Mode::Replay, Some(denying.clone()), Transcript::load(&path).unwrap(), None);
        let first = run_chain(&view, &doc, &client).expect("transcript covers the chain");
        let second = run_chain(&view, &doc, &client).unwrap();
        assert_eq!(outcome_digest(&first), outcome_digest(&second));
        golden(&format!("golden/{name}.ir.json"), &(serialize_ir(&first.ir) + "\n"));
        assert_eq!(denying.calls.load(Ordering::SeqCst), 0);
    }
}
