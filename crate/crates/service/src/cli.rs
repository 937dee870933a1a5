//! Command-line entry points.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use svgreuse_core::data::parse_csv;
use svgreuse_core::dsl::parse_program;
use svgreuse_core::lmm::{HttpProvider, ModelClient, Provider};
use svgreuse_core::preprocess::CommandRenderer;
use svgreuse_core::svg::{assign_ids, parse, MarkedUpSvg};

use crate::config::Config;
use crate::pipeline::{self, verify_dir, Artifacts, DecomposeMode};
use crate::state::AppState;

#[derive(Debug, Parser)]
#[command(name = "svgreuse", version, about = "Turn SVG charts into reusable, editable templates")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP API.
    Serve,
    /// Decompose a chart and synthesize its template.
    Decompose {
        input: PathBuf,
        #[arg(long, value_enum)]
        mode: DecomposeMode,
        /// Recorded model exchanges; read in replay mode, appended to in lmm mode.
        #[arg(long, required_if_eq("mode", "replay"))]
        transcript: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Render a template with data and parameter values.
    Render {
        template: PathBuf,
        #[arg(long)]
        markup: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// `name = value` lines.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check every template in a directory against its markup, IR and reference.
    Verify {
        dir: PathBuf,
        #[arg(long)]
        tolerance: Option<f64>,
    },
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn decompose(config: &Config, input: &Path, mode: DecomposeMode, transcript: Option<&Path>, out_dir: &Path) -> Result<(), String> {
    let doc = parse(read(input)?.as_bytes()).map_err(|e| format!("{}: {e}", input.display()))?;
    let doc = assign_ids(&doc).map_err(|e| format!("{}: {e}", input.display()))?;
    let client = match (mode, transcript) {
        (DecomposeMode::Heuristic, _) => None,
        (DecomposeMode::Replay, Some(t)) => Some(ModelClient::replay_file(t).map_err(|e| e.to_string())?),
        (DecomposeMode::Replay, None) => return Err("replay mode needs --transcript".into()),
        (DecomposeMode::Lmm, transcript) => {
            let url = config
                .lmm
                .base_url
                .clone()
                .or_else(|| std::env::var("LMM_BASE_URL").ok())
                .ok_or("no model endpoint: set lmm.base_url or LMM_BASE_URL")?;
            let key = std::env::var(&config.lmm.api_key_env).ok();
            let provider: Arc<dyn Provider> = Arc::new(HttpProvider::new(url, key));
            Some(match transcript {
                Some(t) => ModelClient::record(provider, t).map_err(|e| e.to_string())?,
                None => ModelClient::live(provider),
            })
        }
    };
    let client = client.map(|c| c.with_model(config.lmm.model.clone()));
    let renderer = config.renderer.command.clone().map(|command| CommandRenderer { command });
    let renderer = renderer.as_ref().map(|r| r as &dyn svgreuse_core::preprocess::Renderer);
    let d = pipeline::decompose(&doc, client.as_ref(), renderer).map_err(|e| e.to_string())?;
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("chart");
    let template = d.template.as_ref().ok();
    Artifacts { marked: &d.marked, ir: &d.ir, program: template.map(|t| &t.program), data: &d.ir.dataset }
        .write(out_dir, stem)
        .map_err(|e| format!("{}: {e}", out_dir.display()))?;
    match &d.template {
        Ok(t) => {
            println!("{stem}: {} marks, fidelity {:.5}", d.ir.marks.len(), t.fidelity);
            Ok(())
        }
        Err(e) => Err(format!("{stem}: markup and IR written, but no template: {e}")),
    }
}

fn render(template: &Path, markup: &Path, data: &Path, params: Option<&Path>, out: &Path) -> Result<(), String> {
    let program = parse_program(&read(template)?).map_err(|e| format!("{}: {e}", template.display()))?;
    let marked = MarkedUpSvg::parse(read(markup)?.as_bytes()).map_err(|e| format!("{}: {e}", markup.display()))?;
    let data = parse_csv(read(data)?.as_bytes()).map_err(|e| format!("{}: {e}", data.display()))?;
    let params = match params {
        Some(p) => pipeline::parse_params(&read(p)?, &program).map_err(|e| format!("{}: {e}", p.display()))?,
        None => Default::default(),
    };
    let svg = pipeline::render(&program, &marked, &data, &params).map_err(|e| e.to_string())?;
    std::fs::write(out, svg).map_err(|e| format!("{}: {e}", out.display()))
}

fn verify(dir: &Path, tolerance: f64) -> Result<bool, String> {
    let outcomes = verify_dir(dir, tolerance).map_err(|e| format!("{}: {e}", dir.display()))?;
    if outcomes.is_empty() {
        return Err(format!("{}: no templates found", dir.display()));
    }
    for o in &outcomes {
        let fidelity = o.fidelity.map(|f| format!("{f:.5}")).unwrap_or_else(|| "-".into());
        if o.passed() {
            println!("ok   {} (fidelity {fidelity})", o.stem);
        } else {
            println!("FAIL {} (fidelity {fidelity})\n{}", o.stem, o.report);
        }
    }
    Ok(outcomes.iter().all(|o| o.passed()))
}

async fn serve(config: Config) -> Result<(), String> {
    let listen = config.listen;
    let state = AppState::open(config).map_err(|e| e.to_string())?;
    let app = crate::api::router(Arc::new(state));
    let listener = tokio::net::TcpListener::bind(listen).await.map_err(|e| format!("{listen}: {e}"))?;
    eprintln!("listening on http://{listen}");
    axum::serve(listener, app).await.map_err(|e| e.to_string())
}

pub fn run(cli: Cli) -> ExitCode {
    let config = match &cli.config {
        Some(path) => match Config::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::FAILURE;
            }
        },
        None => Config::default(),
    };
    let result = match cli.command {
        Command::Serve => tokio::runtime::Runtime::new()
            .map_err(|e| e.to_string())
            .and_then(|rt| rt.block_on(serve(config))),
        Command::Decompose { input, mode, transcript, out_dir } => {
            decompose(&config, &input, mode, transcript.as_deref(), &out_dir)
        }
        Command::Render { template, markup, data, params, out } => render(&template, &markup, &data, params.as_deref(), &out),
        Command::Verify { dir, tolerance } => match verify(&dir, tolerance.unwrap_or(config.fidelity_tolerance)) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::FAILURE,
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
