//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs without a browser or a model endpoint.

mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::Ordering;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde_json::json;
use svgreuse_core::corpus;
use svgreuse_core::data::{Dataset, Value};
use svgreuse_core::decompose::{heuristic_decompose, run_chain};
use svgreuse_core::dsl::scale::Scale;
use svgreuse_core::dsl::{evaluate, parse_program, print_program, ParamKind, ScaleKind};
use svgreuse_core::fidelity::diff_geometry;
use svgreuse_core::ir::serialize_ir;
use svgreuse_core::lmm::{DenyingProvider, Mode, ModelClient, Transcript};
use svgreuse_core::preprocess::{
    build_prompt_view, make_thumbnail, rdp, round_numeric, PreprocessConfig, Renderer, ThumbnailError,
};
use svgreuse_core::refine::{minimal_change_score, refine, RefineContext, RefinementResult, WidgetKind};
use svgreuse_core::svg::{assign_ids, insert_markers, parse, strip_markers, Element, ElementId, MarkedUpSvg, Node, SvgDocument};
use svgreuse_core::synth::{synthesize_template, FIDELITY_TOLERANCE};
use svgreuse_core::testkit::{self, ChaCha8Rng, Rng};

type Outcome = Result<String, String>;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn chart_doc(name: &str) -> SvgDocument {
    assign_ids(&parse(common::chart_svg(name).as_bytes()).unwrap()).unwrap()
}

/// Fractional digits of every number in `s`.
fn fraction_digits(s: &str) -> Vec<usize> {
    s.split(|c: char| !(c.is_ascii_digit() || c == '.'))
        .filter(|t| t.chars().any(|c| c.is_ascii_digit()))
        .map(|t| t.split_once('.').map_or(0, |(_, f)| f.len()))
        .collect()
}

struct SizeProbe(Mutex<Vec<(u32, u32)>>);

impl Renderer for SizeProbe {
    fn render_png(&self, _svg: &str, width: u32, height: u32) -> Result<Vec<u8>, ThumbnailError> {
        self.0.lock().unwrap().push((width, height));
        Ok(vec![0x89, b'P', b'N', b'G'])
    }
}

fn prompt_view_constants() -> Outcome {
    let config = PreprocessConfig::default();
    ensure(config.decimal_places == 2, || format!("decimal places {}", config.decimal_places))?;
    ensure(config.thumbnail_max_width == 400, || format!("thumbnail width {}", config.thumbnail_max_width))?;

    let mut rng = testkit::rng(11);
    let mut exact_two = 0;
    for _ in 0..50 {
        let doc = testkit::svg_tree(&mut rng);
        let rounded = round_numeric(&doc, 2);
        for (a, b) in doc.elements().zip(rounded.elements()) {
            for attr in ["x", "d", "width"] {
                let (Some(before), Some(after)) = (a.attr(attr), b.attr(attr)) else { continue };
                let digits = fraction_digits(after);
                ensure(digits.iter().all(|d| *d <= 2), || format!("`{before}` rounded to `{after}`"))?;
                exact_two += digits.iter().filter(|d| **d == 2).count();
                if let (Ok(x), Ok(y)) = (before.parse::<f64>(), after.parse::<f64>()) {
                    ensure((x - y).abs() <= 0.005 + 1e-9, || format!("`{before}` moved to `{after}`"))?;
                }
            }
        }
    }
    ensure(exact_two > 0, || "no value kept two decimals".into())?;

    let probe = SizeProbe(Mutex::new(Vec::new()));
    for (w, h) in [(1200, 600), (400, 90), (300, 150)] {
        let doc = parse(format!("<svg width=\"{w}\" height=\"{h}\"><rect/></svg>").as_bytes()).unwrap();
        let t = make_thumbnail(&doc, config.thumbnail_max_width, Some(&probe)).map_err(|e| e.to_string())?;
        ensure(t.width == w.min(400) && t.height * w == h * t.width, || format!("{w}x{h} gave {}x{}", t.width, t.height))?;
    }
    let sizes = probe.0.lock().unwrap().clone();
    ensure(sizes.len() == 3 && sizes.iter().all(|(w, _)| *w <= 400), || format!("renderer saw {sizes:?}"))?;
    let view = build_prompt_view(&chart_doc("bars-4"), &config, None);
    ensure(view.thumbnail.is_none(), || "thumbnail without a renderer".into())?;
    Ok(format!("2 decimals over 50 trees ({exact_two} values at exactly two), thumbnails capped at 400 px"))
}

fn marker_inverse() -> Outcome {
    let mut rng = testkit::rng(7);
    let mut groups = 0;
    for i in 0..200 {
        let doc = testkit::svg_tree(&mut rng);
        let markers = testkit::marker_groups(&mut rng, &doc);
        groups += markers.len();
        let marked = insert_markers(&doc, &markers).map_err(|e| format!("tree {i}: {e}"))?;
        ensure(strip_markers(&marked).to_xml() == doc.to_xml(), || format!("tree {i} differs after strip"))?;
    }
    Ok(format!("200 trees, {groups} markers, byte-identical after strip"))
}

fn rdp_oracle() -> Outcome {
    let mut rng = testkit::rng(3);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let line = testkit::polyline(&mut rng);
        let eps = [0.5, 2.0, 8.0][i % 3];
        let out = rdp(&line, eps);
        ensure(out.len() <= line.len(), || format!("polyline {i} grew"))?;
        ensure(out.first() == line.first() && out.last() == line.last(), || format!("polyline {i} lost an endpoint"))?;
        let d = testkit::hausdorff_to_polyline(&line, &out);
        ensure(d <= eps + 1e-9, || format!("polyline {i}: deviation {d} > {eps}"))?;
        worst = worst.max(d / eps);
    }
    Ok(format!("100 polylines, worst deviation {:.3} of epsilon", worst))
}

fn synthetic_round_trip() -> Outcome {
    let charts = corpus::synthetic_corpus();
    ensure(charts.len() >= 10, || format!("only {} charts", charts.len()))?;
    let mut prototypes = std::collections::BTreeSet::new();
    let (mut worst_fid, mut worst_data): (f64, f64) = (0.0, 0.0);
    for c in &charts {
        let d = heuristic_decompose(&corpus::document(c)).map_err(|e| format!("{}: {e}", c.name))?;
        let p = synthesize_template(&d.ir, &d.marked).map_err(|e| format!("{}: {e}", c.name))?;
        let out = evaluate(&p, &d.marked, &c.data, &BTreeMap::new()).map_err(|e| format!("{}: {e}", c.name))?;
        let fid = diff_geometry(&strip_markers(&d.marked), &out).score;
        ensure(fid <= FIDELITY_TOLERANCE, || format!("{}: fidelity {fid}", c.name))?;
        let err = corpus::recovery_error(c, &d.dataset).map_err(|e| format!("{}: {e}", c.name))?;
        ensure(err <= 0.01, || format!("{}: data error {err}", c.name))?;
        worst_fid = worst_fid.max(fid);
        worst_data = worst_data.max(err);
        prototypes.insert(c.prototype.to_string());
    }
    ensure(prototypes.len() == 6, || format!("prototypes {prototypes:?}"))?;
    Ok(format!(
        "{} charts over {} prototypes, worst fidelity {worst_fid:.2e}, worst data error {:.3}%",
        charts.len(),
        prototypes.len(),
        worst_data * 100.0
    ))
}

fn evaluator_determinism() -> Outcome {
    let mut cases: Vec<(String, String, MarkedUpSvg, Dataset)> = Vec::new();
    for name in ["bars-4", "pie-4"] {
        let d = heuristic_decompose(&chart_doc(name)).unwrap();
        let src = std::fs::read_to_string(fixtures().join(format!("golden/{name}.dwt"))).unwrap();
        cases.push((name.into(), src, d.marked, d.ir.dataset));
    }
    let read = |rel: &str| std::fs::read_to_string(fixtures().join(rel)).unwrap();
    cases.push((
        "gear".into(),
        read("refine/gear.dwt"),
        MarkedUpSvg::parse(read("refine/gear.dwsvg").as_bytes()).unwrap(),
        svgreuse_core::data::parse_csv(read("refine/gear.csv").as_bytes()).unwrap(),
    ));
    cases.push((
        "exemplar".into(),
        read("exemplar/bar-chart.dwt"),
        MarkedUpSvg::parse(read("exemplar/bar-chart.dwsvg").as_bytes()).unwrap(),
        svgreuse_core::data::parse_csv(read("exemplar/bar-chart.csv").as_bytes()).unwrap(),
    ));
    for (name, src, marked, data) in &cases {
        let program = parse_program(src).map_err(|e| format!("{name}: {e}"))?;
        let first = evaluate(&program, marked, data, &BTreeMap::new()).map_err(|e| format!("{name}: {e}"))?.to_xml();
        for i in 1..50 {
            let again = evaluate(&program, marked, data, &BTreeMap::new()).unwrap().to_xml();
            ensure(again == first, || format!("{name}: evaluation {i} differs"))?;
        }
    }
    Ok(format!("{} golden templates x 50 evaluations, byte-identical", cases.len()))
}

fn num(v: f64) -> Value {
    Value::Number(v)
}

fn scale_laws() -> Outcome {
    let mut rng: ChaCha8Rng = testkit::rng(5);
    let scale = |kind, domain: Vec<Value>, range: Vec<Value>, padding| Scale { id: "s".into(), kind, domain, range, padding };
    let at = |s: &Scale, v: &Value| s.apply(v).map_err(|e| e.to_string()).map(|x| x.as_f64().unwrap_or(f64::NAN));
    let mut checks = 0;
    for _ in 0..500 {
        // linear: endpoints, midpoint and affinity
        let d0 = rng.gen_range(-1e3..1e3);
        let w = rng.gen_range(0.1..1e3);
        let (r0, r1) = (rng.gen_range(-1e3..1e3), rng.gen_range(-1e3..1e3));
        let s = scale(ScaleKind::Linear, vec![num(d0), num(d0 + w)], vec![num(r0), num(r1)], 0.0);
        let tol = 1e-6 * (1.0 + r0.abs() + r1.abs());
        let mid = at(&s, &num(d0 + w / 2.0))?;
        ensure((mid - (r0 + r1) / 2.0).abs() < tol, || format!("linear midpoint {mid}"))?;
        let (x, y, lam) = (d0 + rng.gen_range(0.0..1.0) * w, d0 + rng.gen_range(0.0..1.0) * w, rng.gen_range(0.0..1.0));
        let mix = at(&s, &num(lam * x + (1.0 - lam) * y))?;
        let expected = lam * at(&s, &num(x))? + (1.0 - lam) * at(&s, &num(y))?;
        ensure((mix - expected).abs() < tol, || format!("linear is not affine: {mix} vs {expected}"))?;

        // band: closed-form step, bandwidth and first position
        let count = rng.gen_range(1..30usize);
        let (b0, span, p) = (rng.gen_range(-500.0..500.0), rng.gen_range(1.0..2000.0), rng.gen_range(0.0..0.9));
        let domain: Vec<Value> = (0..count).map(|i| Value::Text(format!("c{i}"))).collect();
        let s = scale(ScaleKind::Band, domain.clone(), vec![num(b0), num(b0 + span)], p);
        let step = span / (count as f64 + p);
        let bw = s.bandwidth().map_err(|e| e.to_string())?;
        ensure((bw - step * (1.0 - p)).abs() < 1e-9 * span, || format!("bandwidth {bw}"))?;
        for (i, d) in domain.iter().enumerate() {
            let pos = at(&s, d)?;
            let want = b0 + p * step + i as f64 * step;
            ensure((pos - want).abs() < 1e-7 * (span + b0.abs()), || format!("band position {i}: {pos} vs {want}"))?;
        }

        // ordinal color: index modulo the palette
        let colors = rng.gen_range(1..10usize);
        let len = rng.gen_range(1..40usize);
        let palette: Vec<Value> = (0..colors).map(|c| Value::Text(format!("#{c:06x}"))).collect();
        let domain: Vec<Value> = (0..len).map(|k| Value::Text(format!("k{k}"))).collect();
        let s = scale(ScaleKind::OrdinalColor, domain.clone(), palette.clone(), 0.0);
        for (i, d) in domain.iter().enumerate() {
            let got = s.apply(d).map_err(|e| e.to_string())?;
            ensure(got == palette[i % colors], || format!("ordinal {i} of {colors}"))?;
        }
        ensure(s.apply(&Value::Text("missing".into())).is_err(), || "unknown ordinal value accepted".into())?;
        checks += 1;
    }
    Ok(format!("{checks} randomized rounds of linear, band and ordinal-color laws"))
}

fn bars_session() -> (svgreuse_core::dsl::TemplateProgram, MarkedUpSvg, Dataset) {
    let d = heuristic_decompose(&chart_doc("bars-4")).unwrap();
    let program = parse_program(&std::fs::read_to_string(fixtures().join("golden/bars-4.dwt")).unwrap()).unwrap();
    (program, d.marked, d.dataset)
}

fn replay_client(rel: &str) -> (ModelClient, Arc<DenyingProvider>) {
    let denying = Arc::new(DenyingProvider::default());
    let transcript = Transcript::load(&fixtures().join(rel)).unwrap();
    (ModelClient::new(Mode::Replay, Some(denying.clone()), transcript, None), denying)
}

fn thinner_bars_turn() -> Result<(RefinementResult, svgreuse_core::dsl::TemplateProgram, MarkedUpSvg, Dataset), String> {
    let (program, marked, data) = bars_session();
    let (client, denying) = replay_client("transcripts/refine-thinner-bars.tsv");
    let params = BTreeMap::new();
    let ctx = RefineContext { program: &program, params: &params, marked: &marked, data: &data, history: &[], thumbnail: None };
    let r = refine(&ctx, "make the bars thinner", &client).map_err(|e| e.to_string())?;
    ensure(denying.calls.load(Ordering::SeqCst) == 0, || "the provider was called".into())?;
    Ok((r, program, marked, data))
}

fn replay_hermeticity() -> Outcome {
    for name in ["bars-4", "pie-4"] {
        let doc = chart_doc(name);
        let view = build_prompt_view(&doc, &PreprocessConfig::default(), None);
        let (client, denying) = replay_client(&format!("transcripts/{name}.chain.tsv"));
        let mut outputs = Vec::new();
        for _ in 0..2 {
            let out = run_chain(&view, &doc, &client).map_err(|e| format!("{name}: {e}"))?;
            let program = synthesize_template(&out.ir, &out.marked).map_err(|e| format!("{name}: {e}"))?;
            outputs.push((serialize_ir(&out.ir) + "\n", print_program(&program)));
        }
        ensure(outputs[0] == outputs[1], || format!("{name}: replays differ"))?;
        let golden_ir = std::fs::read_to_string(fixtures().join(format!("golden/{name}.ir.json"))).unwrap();
        let golden_dwt = std::fs::read_to_string(fixtures().join(format!("golden/{name}.dwt"))).unwrap();
        ensure(outputs[0].0 == golden_ir, || format!("{name}: IR differs from the frozen copy"))?;
        ensure(outputs[0].1 == golden_dwt, || format!("{name}: template differs from the frozen copy"))?;
        ensure(denying.calls.load(Ordering::SeqCst) == 0, || format!("{name}: the provider was called"))?;
    }
    let (r, ..) = thinner_bars_turn()?;
    let text = serde_json::to_string_pretty(&r).unwrap() + "\n";
    let golden = std::fs::read_to_string(fixtures().join("golden/refine-thinner-bars.json")).unwrap();
    ensure(text == golden, || "refinement result differs from the frozen copy".into())?;
    Ok("2 chains and 1 refinement turn byte-identical to frozen outputs, 0 provider calls".into())
}

/// `doc` without the elements whose ids are in `ids`.
fn without(doc: &SvgDocument, ids: &[ElementId]) -> SvgDocument {
    fn prune(e: &mut Element, ids: &[ElementId]) {
        e.children.retain(|n| n.as_element().and_then(Element::id).map_or(true, |id| !ids.contains(&id)));
        for c in e.children.iter_mut().filter_map(Node::as_element_mut) {
            prune(c, ids);
        }
    }
    let mut root = doc.root.clone();
    prune(&mut root, ids);
    doc.with_root(root)
}

fn refinement_contracts() -> Outcome {
    let (r, before_program, marked, data) = thinner_bars_turn()?;
    ensure(r.new_params.len() == 1, || format!("{} new params", r.new_params.len()))?;
    let p = &r.new_params[0];
    ensure(p.name == "bar_width" && p.kind == ParamKind::Number, || format!("new param {} {:?}", p.name, p.kind))?;
    ensure(r.new_widgets.len() == 1 && r.new_widgets[0].widget == WidgetKind::Slider, || format!("{:?}", r.new_widgets))?;
    let score = minimal_change_score(&before_program, &r.program_after);
    ensure(score == (1, 1), || format!("minimal_change_score {score:?}"))?;
    let before = evaluate(&before_program, &marked, &data, &BTreeMap::new()).map_err(|e| e.to_string())?;
    let after = evaluate(&r.program_after, &marked, &data, &BTreeMap::new()).map_err(|e| e.to_string())?;
    let marks = marked.slot("marks").ok_or("no marks slot")?.member_ids;
    let untouched = diff_geometry(&without(&before, &marks), &without(&after, &marks)).score;
    ensure(untouched == 0.0, || format!("untouched elements moved by {untouched}"))?;
    let changed = diff_geometry(&before, &after).score;
    ensure(changed > 0.0, || "the bars did not change".into())?;
    Ok(format!("1 param, 1 slider, score (1,1), untouched diff 0 (bars moved {changed:.4})"))
}

async fn checkpoint_inverse() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (messages, provider) = common::five_turns();
    let mut seen: Vec<(u64, String)> = Vec::new();
    let id = {
        let api = common::Api::open(dir.path(), Some(Arc::new(provider)));
        let id = api.templated("bars-4").await;
        let first = api.get(&format!("/sessions/{id}/checkpoints")).await.json()[0]["id"].as_u64().unwrap();
        seen.push((first, api.post(&format!("/sessions/{id}/render"), json!({})).await.text()));
        for (turn, m) in messages.iter().enumerate() {
            let r = api.post(&format!("/sessions/{id}/chat"), json!({"message": m})).await;
            ensure(r.status.is_success(), || format!("turn {}: {}", turn + 1, r.text()))?;
            let cp = r.json()["checkpoint_id"].as_u64().unwrap();
            seen.push((cp, api.post(&format!("/sessions/{id}/render"), json!({})).await.text()));
            // a user-tuned state, captured by a manual checkpoint
            if turn == 2 {
                api.post(&format!("/sessions/{id}/render"), json!({"params": {"bar_width": 11.5, "bar_color": "#336699"}})).await;
                let c = api.post(&format!("/sessions/{id}/checkpoints"), json!({"label": "tuned"})).await.json();
                seen.push((c["id"].as_u64().unwrap(), api.post(&format!("/sessions/{id}/render"), json!({})).await.text()));
            }
        }
        let distinct: std::collections::BTreeSet<&String> = seen.iter().map(|(_, s)| s).collect();
        ensure(distinct.len() >= 5, || format!("only {} distinct renders", distinct.len()))?;
        for (cp, expected) in seen.iter().rev() {
            let r = api.post(&format!("/sessions/{id}/restore"), json!({"checkpoint_id": cp})).await;
            ensure(&r.text() == expected, || format!("restore {cp} differs"))?;
            let again = api.post(&format!("/sessions/{id}/render"), json!({})).await.text();
            ensure(&again == expected, || format!("render after restore {cp} differs"))?;
        }
        id
    };
    let api = common::Api::open(dir.path(), None);
    for (cp, expected) in &seen {
        let r = api.post(&format!("/sessions/{id}/restore"), json!({"checkpoint_id": cp})).await;
        ensure(&r.text() == expected, || format!("restore {cp} after restart differs"))?;
    }
    Ok(format!("{} checkpoints over 5 turns restored byte-identically, before and after restart", seen.len()))
}

async fn state_machine() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (messages, provider) = common::five_turns();
    let api = common::Api::open(dir.path(), Some(Arc::new(provider)));
    let mut probed = 0;
    let mut failures = Vec::new();

    let id = api.create().await;
    let calls = common::forbidden_calls("created", &id);
    probed += calls.len();
    failures.extend(common::conflicts_without_mutation(&api, &id, calls).await);
    api.post_raw(&format!("/sessions/{id}/reference"), common::chart_svg("bars-4")).await;
    let calls = common::forbidden_calls("created+reference", &id);
    probed += calls.len();
    failures.extend(common::conflicts_without_mutation(&api, &id, calls).await);

    let id = api.templated("bars-4").await;
    for stage in ["templated", "templated-without-data"] {
        let calls = common::forbidden_calls(stage, &id);
        probed += calls.len();
        failures.extend(common::conflicts_without_mutation(&api, &id, calls).await);
    }
    api.post(&format!("/sessions/{id}/chat"), json!({"message": messages[0]})).await;
    let calls = common::forbidden_calls("refined", &id);
    probed += calls.len();
    failures.extend(common::conflicts_without_mutation(&api, &id, calls).await);

    ensure(failures.is_empty(), || failures.join("; "))?;
    Ok(format!("{probed} out-of-order calls answered 409 with the session unchanged"))
}

fn main() {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("prompt-view constants", Box::new(prompt_view_constants)),
        ("marker inverse law", Box::new(marker_inverse)),
        ("path simplification oracle", Box::new(rdp_oracle)),
        ("synthetic round-trip fidelity", Box::new(synthetic_round_trip)),
        ("evaluator determinism", Box::new(evaluator_determinism)),
        ("scale laws", Box::new(scale_laws)),
        ("replay hermeticity", Box::new(replay_hermeticity)),
        ("refinement contracts", Box::new(refinement_contracts)),
        ("checkpoint inverse", Box::new(|| rt.block_on(checkpoint_inverse()))),
        ("state machine", Box::new(|| rt.block_on(state_machine()))),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into())));
        let ms = start.elapsed().as_millis();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} ({ms} ms)"),
            Err(reason) => {
                failed += 1;
                println!("FAIL {name}: {reason} ({ms} ms)");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
