//! One editing session: its state machine, operations and on-disk form.
//!
//! Every operation checks the stage and its inputs before touching state, so
//! a rejected call leaves the session exactly as it was.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use svgreuse_core::data::{apply_mapping, parse_csv, to_csv, Column, Dataset};
use svgreuse_core::dsl::{parse_program, print_program, resolve_params, ParamValue, TemplateProgram};
use svgreuse_core::ir::{parse_ir, IntermediateRepresentation};
use svgreuse_core::lmm::sha256_hex;
use svgreuse_core::preprocess::{build_prompt_view, PreprocessConfig, ViewStats};
use svgreuse_core::refine::{
    carry_params, materialize_widgets, ChatTurn, Checkpoint, CheckpointLog, RefineContext, RefinementResult, Snapshot,
    Speaker, WidgetSpec,
};
use svgreuse_core::svg::{assign_ids, parse, MarkedUpSvg, SvgDocument};

use crate::error::ServiceError;
use crate::pipeline::{self, Artifacts, DecomposeMode, Decomposed, PipelineError};

/// Artifact stem inside a session directory.
pub const STEM: &str = "reference";
pub const MANIFEST: &str = "manifest.json";
/// The user's own data, before mapping.
pub const USER_DATA: &str = "data.csv";
/// Model exchanges of this session.
pub const TRANSCRIPT: &str = "transcript.tsv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Created,
    Decomposing,
    /// Markup and IR exist but no template could be synthesized.
    Decomposed,
    Templated,
    Refined,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Created => "created",
            Stage::Decomposing => "decomposing",
            Stage::Decomposed => "decomposed",
            Stage::Templated => "templated",
            Stage::Refined => "refined",
        })
    }
}

const EDITABLE: &[Stage] = &[Stage::Templated, Stage::Refined];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Idle,
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub state: JobState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<DecomposeMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fidelity: Option<f64>,
}

impl Default for Job {
    fn default() -> Self {
        Job { state: JobState::Idle, mode: None, error: None, fidelity: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    id: String,
    stage: Stage,
    params: BTreeMap<String, ParamValue>,
    mapping: BTreeMap<String, String>,
    history: Vec<ChatTurn>,
    job: Job,
    checkpoints: CheckpointLog,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecompositionSummary {
    pub prototype: String,
    pub markers: usize,
    pub marks: usize,
    pub axes: usize,
    pub legends: usize,
    pub rows: usize,
    pub schema: Vec<Column>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StatusView {
    pub stage: Stage,
    pub job: Job,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decomposition: Option<DecompositionSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SessionView {
    pub id: String,
    pub stage: Stage,
    pub params: BTreeMap<String, ParamValue>,
    pub mapping: BTreeMap<String, String>,
    pub history: Vec<ChatTurn>,
    pub checkpoints: usize,
    pub has_reference: bool,
    pub has_data: bool,
    /// Hash over everything the session persists.
    pub fingerprint: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct TemplateView {
    pub source: String,
    /// Current value of every parameter.
    pub params: BTreeMap<String, ParamValue>,
    pub widgets: Vec<WidgetSpec>,
    pub schema: Vec<Column>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DataView {
    pub columns: Vec<Column>,
    pub rows: usize,
    /// Whether the template renders the uploaded data yet.
    pub mapped: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Bundle {
    pub reference: String,
    pub markup: String,
    pub ir: serde_json::Value,
    pub template: String,
    pub data: String,
    pub params: BTreeMap<String, ParamValue>,
}

/// Inputs of one refinement turn, detached from the session so the model
/// call can run off the async executor.
#[derive(Debug)]
pub struct ChatInputs {
    pub program: TemplateProgram,
    pub params: BTreeMap<String, ParamValue>,
    pub marked: MarkedUpSvg,
    pub data: Dataset,
    pub history: Vec<ChatTurn>,
}

impl ChatInputs {
    pub fn context<'a>(&'a self, thumbnail: Option<&'a [u8]>) -> RefineContext<'a> {
        RefineContext {
            program: &self.program,
            params: &self.params,
            marked: &self.marked,
            data: &self.data,
            history: &self.history,
            thumbnail,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    dir: PathBuf,
    stage: Stage,
    reference: Option<SvgDocument>,
    marked: Option<MarkedUpSvg>,
    ir: Option<IntermediateRepresentation>,
    program: Option<TemplateProgram>,
    params: BTreeMap<String, ParamValue>,
    data: Option<Dataset>,
    mapping: BTreeMap<String, String>,
    mapped: Option<Dataset>,
    history: Vec<ChatTurn>,
    checkpoints: CheckpointLog,
    job: Job,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

fn invalid(e: impl fmt::Display) -> ServiceError {
    ServiceError::invalid(e.to_string())
}

impl Session {
    pub fn new(id: impl Into<String>, root: &Path) -> Self {
        let id = id.into();
        Session {
            dir: root.join(&id),
            id,
            stage: Stage::Created,
            reference: None,
            marked: None,
            ir: None,
            program: None,
            params: BTreeMap::new(),
            data: None,
            mapping: BTreeMap::new(),
            mapped: None,
            history: Vec::new(),
            checkpoints: CheckpointLog::default(),
            job: Job::default(),
        }
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn transcript_path(&self) -> PathBuf {
        self.dir.join(TRANSCRIPT)
    }

    fn require(&self, action: &'static str, allowed: &[Stage]) -> Result<(), ServiceError> {
        if allowed.contains(&self.stage) {
            Ok(())
        } else {
            Err(ServiceError::InvalidTransition { action, stage: self.stage })
        }
    }

    fn template_parts(&self) -> (&TemplateProgram, &MarkedUpSvg, &IntermediateRepresentation) {
        match (&self.program, &self.marked, &self.ir) {
            (Some(p), Some(m), Some(ir)) => (p, m, ir),
            _ => unreachable!("templated sessions hold a program, markup and IR"),
        }
    }

    /// Data the template renders: the mapped upload, else the recovered data.
    pub fn dataset(&self) -> Option<&Dataset> {
        self.mapped.as_ref().or(self.ir.as_ref().map(|ir| &ir.dataset))
    }

    /// Re-applies the mapping; an upload that does not fit leaves the
    /// template on the recovered data.
    fn remap(&mut self) {
        self.mapped = match (&self.data, &self.program) {
            (Some(data), Some(program)) => apply_mapping(data, &self.mapping, &program.required_schema).ok(),
            _ => None,
        };
    }

    pub fn set_reference(&mut self, bytes: &[u8]) -> Result<ViewStats, ServiceError> {
        self.require("upload a reference", &[Stage::Created])?;
        let doc = parse(bytes).map_err(invalid)?;
        let doc = assign_ids(&doc).map_err(invalid)?;
        let stats = build_prompt_view(&doc, &PreprocessConfig::default(), None).stats;
        self.reference = Some(doc);
        Ok(stats)
    }

    /// The reference, if a decomposition may start now.
    pub fn can_decompose(&self) -> Result<&SvgDocument, ServiceError> {
        self.require("decompose", &[Stage::Created, Stage::Decomposed])?;
        self.reference
            .as_ref()
            .ok_or(ServiceError::InvalidTransition { action: "decompose without a reference", stage: self.stage })
    }

    /// Marks the job as running and hands out the reference to decompose.
    pub fn begin_decompose(&mut self, mode: DecomposeMode) -> Result<SvgDocument, ServiceError> {
        let reference = self.can_decompose()?.clone();
        self.stage = Stage::Decomposing;
        self.job = Job { state: JobState::Running, mode: Some(mode), error: None, fidelity: None };
        Ok(reference)
    }

    pub fn finish_decompose(&mut self, outcome: Result<Decomposed, PipelineError>) {
        let mode = self.job.mode;
        match outcome {
            Err(e) => {
                self.stage = Stage::Created;
                self.job = Job { state: JobState::Failed, mode, error: Some(e.to_string()), fidelity: None };
            }
            Ok(d) => {
                self.marked = Some(d.marked);
                self.ir = Some(d.ir);
                self.params.clear();
                self.history.clear();
                self.checkpoints = CheckpointLog::default();
                match d.template {
                    Err(e) => {
                        self.program = None;
                        self.stage = Stage::Decomposed;
                        self.job = Job { state: JobState::Failed, mode, error: Some(e), fidelity: None };
                    }
                    Ok(t) => {
                        self.program = Some(t.program);
                        self.stage = Stage::Templated;
                        self.job = Job { state: JobState::Succeeded, mode, error: None, fidelity: Some(t.fidelity) };
                        self.remap();
                        self.push_checkpoint("decomposed");
                    }
                }
            }
        }
    }

    /// Back to `Created` when a running job was lost, e.g. by a restart.
    fn abandon_job(&mut self) {
        if self.stage == Stage::Decomposing {
            self.stage = Stage::Created;
            self.job = Job { state: JobState::Failed, error: Some("interrupted".into()), ..self.job.clone() };
        }
    }

    pub fn status(&self) -> StatusView {
        let decomposition = match (&self.marked, &self.ir) {
            (Some(m), Some(ir)) if self.stage != Stage::Created && self.stage != Stage::Decomposing => {
                Some(DecompositionSummary {
                    prototype: ir.globals.prototype.to_string(),
                    markers: m.markers().len(),
                    marks: ir.marks.len(),
                    axes: ir.axes.len(),
                    legends: ir.legends.len(),
                    rows: ir.dataset.rows.len(),
                    schema: ir.dataset.columns.clone(),
                })
            }
            _ => None,
        };
        StatusView { stage: self.stage, job: self.job.clone(), decomposition }
    }

    /// Stores uploaded data. The previous mapping is dropped and columns are
    /// matched by name until a new mapping is set.
    pub fn upload_data(&mut self, bytes: &[u8]) -> Result<DataView, ServiceError> {
        let data = parse_csv(bytes).map_err(invalid)?;
        self.data = Some(data);
        self.mapping.clear();
        self.remap();
        Ok(self.data_view())
    }

    fn data_view(&self) -> DataView {
        let data = self.data.as_ref().expect("data was uploaded");
        DataView { columns: data.columns.clone(), rows: data.rows.len(), mapped: self.mapped.is_some() }
    }

    pub fn set_mapping(&mut self, mapping: BTreeMap<String, String>) -> Result<DataView, ServiceError> {
        self.require("map columns", EDITABLE)?;
        let data = self.data.as_ref().ok_or(ServiceError::InvalidTransition { action: "map columns before uploading data", stage: self.stage })?;
        let (program, ..) = self.template_parts();
        let mapped = apply_mapping(data, &mapping, &program.required_schema).map_err(invalid)?;
        self.mapping = mapping;
        self.mapped = Some(mapped);
        Ok(self.data_view())
    }

    pub fn template(&self) -> Result<TemplateView, ServiceError> {
        self.require("read the template", EDITABLE)?;
        let (program, ..) = self.template_parts();
        let mut params = program.defaults();
        params.extend(self.params.clone());
        Ok(TemplateView {
            source: print_program(program),
            params,
            widgets: materialize_widgets(&program.params),
            schema: program.required_schema.clone(),
        })
    }

    fn render_with(&self, params: &BTreeMap<String, ParamValue>) -> Result<String, ServiceError> {
        let (program, marked, _) = self.template_parts();
        let data = self.dataset().expect("templated sessions have data");
        pipeline::render(program, marked, data, params).map_err(invalid)
    }

    /// Renders with `overrides` applied on top of the stored values, which
    /// then become the stored values.
    pub fn render(&mut self, overrides: BTreeMap<String, ParamValue>) -> Result<String, ServiceError> {
        self.require("render", EDITABLE)?;
        let mut params = self.params.clone();
        params.extend(overrides);
        let (program, ..) = self.template_parts();
        resolve_params(program, &params).map_err(invalid)?;
        let svg = self.render_with(&params)?;
        self.params = params;
        Ok(svg)
    }

    /// Render with the stored values, without touching state.
    pub fn current_render(&self) -> Result<String, ServiceError> {
        self.require("render", EDITABLE)?;
        self.render_with(&self.params)
    }

    pub fn chat_inputs(&self) -> Result<ChatInputs, ServiceError> {
        self.require("chat", EDITABLE)?;
        let (program, marked, _) = self.template_parts();
        Ok(ChatInputs {
            program: program.clone(),
            params: self.params.clone(),
            marked: marked.clone(),
            data: self.dataset().expect("templated sessions have data").clone(),
            history: self.history.clone(),
        })
    }

    /// Adopts a refinement and checkpoints the result.
    pub fn apply_chat(&mut self, message: &str, result: &RefinementResult) -> Result<(u64, String), ServiceError> {
        self.require("chat", EDITABLE)?;
        let params = carry_params(&result.program_after, &self.params);
        let (_, marked, _) = self.template_parts();
        let data = self.dataset().expect("templated sessions have data");
        let svg = pipeline::render(&result.program_after, marked, data, &params).map_err(invalid)?;
        self.program = Some(result.program_after.clone());
        self.params = params;
        self.remap();
        self.history.push(ChatTurn { speaker: Speaker::User, text: message.to_string() });
        self.history.push(ChatTurn { speaker: Speaker::Assistant, text: result.reply_text.clone() });
        self.stage = Stage::Refined;
        let id = self.push_checkpoint(message);
        Ok((id, svg))
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot {
            program: self.program.clone(),
            params: self.params.clone(),
            data: self.data.clone(),
            mapping: self.mapping.clone(),
            markup_digest: self.marked.as_ref().map(|m| sha256_hex(m.to_xml().as_bytes())),
        }
    }

    fn push_checkpoint(&mut self, label: &str) -> u64 {
        let snapshot = self.snapshot();
        self.checkpoints.push(snapshot, label, now_ms()).id
    }

    pub fn checkpoint(&mut self, label: Option<String>) -> Result<Checkpoint, ServiceError> {
        self.require("create a checkpoint", EDITABLE)?;
        let label = label.unwrap_or_else(|| "manual".into());
        let id = self.push_checkpoint(&label);
        Ok(self.checkpoints.get(id).expect("just pushed").clone())
    }

    pub fn checkpoints(&self) -> Result<&[Checkpoint], ServiceError> {
        self.require("list checkpoints", EDITABLE)?;
        Ok(self.checkpoints.all())
    }

    pub fn bookmark(&mut self, id: u64, bookmarked: bool) -> Result<Checkpoint, ServiceError> {
        self.require("bookmark", EDITABLE)?;
        let c = self.checkpoints.set_bookmark(id, bookmarked).map_err(|_| ServiceError::UnknownCheckpoint(id))?;
        Ok(c.clone())
    }

    pub fn restore(&mut self, id: u64) -> Result<String, ServiceError> {
        self.require("restore", EDITABLE)?;
        let snap = self.checkpoints.get(id).map_err(|_| ServiceError::UnknownCheckpoint(id))?.snapshot.clone();
        let program = snap.program.ok_or_else(|| ServiceError::Internal(format!("checkpoint {id} holds no template")))?;
        let mut next = self.clone();
        next.program = Some(program);
        next.params = snap.params;
        next.data = snap.data;
        next.mapping = snap.mapping;
        next.remap();
        let svg = next.current_render()?;
        *self = next;
        Ok(svg)
    }

    pub fn export(&self) -> Result<Bundle, ServiceError> {
        self.require("export", EDITABLE)?;
        let (program, marked, ir) = self.template_parts();
        Ok(Bundle {
            reference: self.reference.as_ref().map(SvgDocument::to_xml).unwrap_or_default(),
            markup: marked.to_xml(),
            ir: serde_json::to_value(ir).map_err(|e| ServiceError::Internal(e.to_string()))?,
            template: print_program(program),
            data: to_csv(self.dataset().expect("templated sessions have data")),
            params: self.params.clone(),
        })
    }

    pub fn view(&self) -> SessionView {
        SessionView {
            id: self.id.clone(),
            stage: self.stage,
            params: self.params.clone(),
            mapping: self.mapping.clone(),
            history: self.history.clone(),
            checkpoints: self.checkpoints.all().len(),
            has_reference: self.reference.is_some(),
            has_data: self.data.is_some(),
            fingerprint: self.fingerprint(),
        }
    }

    fn manifest(&self) -> Manifest {
        Manifest {
            id: self.id.clone(),
            stage: self.stage,
            params: self.params.clone(),
            mapping: self.mapping.clone(),
            history: self.history.clone(),
            job: self.job.clone(),
            checkpoints: self.checkpoints.clone(),
        }
    }

    /// Every file the session persists, by name.
    fn files(&self) -> Vec<(String, String)> {
        let mut files = Vec::new();
        if let Some(r) = &self.reference {
            files.push((format!("{STEM}.svg"), r.to_xml()));
        }
        if let (Some(marked), Some(ir), Some(data)) = (&self.marked, &self.ir, self.dataset()) {
            let artifacts = Artifacts { marked, ir, program: self.program.as_ref(), data };
            files.extend(artifacts.files().into_iter().map(|(ext, text)| (format!("{STEM}.{ext}"), text)));
        }
        if let Some(d) = &self.data {
            files.push((USER_DATA.to_string(), to_csv(d)));
        }
        let manifest = serde_json::to_string_pretty(&self.manifest()).expect("manifest serializes") + "\n";
        files.push((MANIFEST.to_string(), manifest));
        files
    }

    pub fn fingerprint(&self) -> String {
        let mut all = String::new();
        for (name, text) in self.files() {
            all.push_str(&format!("{name}\0{}\0{text}\0", text.len()));
        }
        sha256_hex(all.as_bytes())
    }

    /// Writes the session directory. The manifest goes last, so a crash
    /// mid-write leaves the previous manifest in charge.
    pub fn save(&self) -> std::io::Result<()> {
        std::fs::create_dir_all(&self.dir)?;
        let files = self.files();
        let keep: Vec<&str> = files.iter().map(|(n, _)| n.as_str()).collect();
        for ext in ["svg", "dwsvg", "ir.json", "dwt", "csv"] {
            let name = format!("{STEM}.{ext}");
            if !keep.contains(&name.as_str()) {
                let _ = std::fs::remove_file(self.dir.join(name));
            }
        }
        for (name, text) in &files {
            let tmp = self.dir.join(format!("{name}.tmp"));
            std::fs::write(&tmp, text)?;
            std::fs::rename(&tmp, self.dir.join(name))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, ServiceError> {
        let bad = |what: &str, e: &dyn fmt::Display| ServiceError::Internal(format!("{}: {what}: {e}", dir.display()));
        let read = |name: &str| -> Result<Option<String>, ServiceError> {
            match std::fs::read_to_string(dir.join(name)) {
                Ok(t) => Ok(Some(t)),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
                Err(e) => Err(e.into()),
            }
        };
        let manifest: Manifest =
            serde_json::from_str(&read(MANIFEST)?.ok_or_else(|| bad(MANIFEST, &"missing"))?).map_err(|e| bad(MANIFEST, &e))?;
        let root = dir.parent().unwrap_or(dir);
        let mut s = Session::new(manifest.id, root);
        s.dir = dir.to_path_buf();
        s.stage = manifest.stage;
        s.params = manifest.params;
        s.mapping = manifest.mapping;
        s.history = manifest.history;
        s.job = manifest.job;
        s.checkpoints = manifest.checkpoints;
        if let Some(t) = read(&format!("{STEM}.svg"))? {
            s.reference = Some(parse(t.as_bytes()).map_err(|e| bad("reference", &e))?);
        }
        if let Some(t) = read(&format!("{STEM}.dwsvg"))? {
            s.marked = Some(MarkedUpSvg::parse(t.as_bytes()).map_err(|e| bad("markup", &e))?);
        }
        if let Some(t) = read(&format!("{STEM}.ir.json"))? {
            s.ir = Some(parse_ir(&t).map_err(|e| bad("ir", &e))?);
        }
        if let Some(t) = read(&format!("{STEM}.dwt"))? {
            s.program = Some(parse_program(&t).map_err(|e| bad("template", &e))?);
        }
        if let Some(t) = read(USER_DATA)? {
            s.data = Some(parse_csv(t.as_bytes()).map_err(|e| bad("data", &e))?);
        }
        if EDITABLE.contains(&s.stage) && (s.program.is_none() || s.marked.is_none() || s.ir.is_none()) {
            return Err(bad("template", &"missing artifacts for a templated session"));
        }
        s.abandon_job();
        s.remap();
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use svgreuse_core::corpus;

    fn bars_svg() -> String {
        corpus::synthetic_corpus().into_iter().find(|c| c.name == "bars-4").unwrap().svg
    }

    fn templated(root: &Path) -> Session {
        let mut s = Session::new("1", root);
        s.set_reference(bars_svg().as_bytes()).unwrap();
        let reference = s.begin_decompose(DecomposeMode::Heuristic).unwrap();
        s.finish_decompose(pipeline::decompose(&reference, None, None));
        assert_eq!(s.stage(), Stage::Templated);
        s
    }

    #[test]
    fn out_of_order_calls_conflict_without_changes() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Session::new("1", dir.path());
        let before = s.fingerprint();
        for err in [
            s.begin_decompose(DecomposeMode::Heuristic).unwrap_err(),
            s.render(BTreeMap::new()).unwrap_err(),
            s.chat_inputs().unwrap_err(),
            s.checkpoint(None).unwrap_err(),
            s.restore(1).unwrap_err(),
            s.set_mapping(BTreeMap::new()).unwrap_err(),
        ] {
            assert_eq!(err.status(), 409, "{err}");
        }
        assert_eq!(s.fingerprint(), before);
    }

    #[test]
    fn decomposition_failure_returns_to_created() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Session::new("1", dir.path());
        s.set_reference(br#"<svg width="10" height="10"/>"#).unwrap();
        s.begin_decompose(DecomposeMode::Lmm).unwrap();
        assert_eq!(s.stage(), Stage::Decomposing);
        s.finish_decompose(Err(PipelineError::Chain(svgreuse_core::decompose::ChainError::Model(
            svgreuse_core::lmm::LmmError::Timeout,
        ))));
        assert_eq!(s.stage(), Stage::Created);
        assert_eq!(s.status().job.state, JobState::Failed);
    }

    #[test]
    fn render_rejects_bad_params_and_keeps_good_ones() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = templated(dir.path());
        let name = s.template().unwrap().widgets.iter().find(|w| w.min.is_some()).unwrap().param_name.clone();
        let before = s.fingerprint();
        let err = s.render(BTreeMap::from([(name.clone(), ParamValue::Text("wide".into()))])).unwrap_err();
        assert_eq!(err.status(), 400);
        assert_eq!(s.fingerprint(), before);
        let value = s.template().unwrap().params[&name].as_f64().unwrap() * 1.1;
        s.render(BTreeMap::from([(name.clone(), ParamValue::Number(value))])).unwrap();
        assert_eq!(s.template().unwrap().params[&name], ParamValue::Number(value));
    }

    #[test]
    fn save_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = templated(dir.path());
        s.upload_data(b"label,amount\nA,1\nB,2\nC,3\nD,4\n").unwrap();
        s.save().unwrap();
        let back = Session::load(&dir.path().join("1")).unwrap();
        assert_eq!(back.fingerprint(), s.fingerprint());
        assert_eq!(back.current_render().unwrap(), s.current_render().unwrap());
    }

    #[test]
    fn interrupted_job_reloads_as_created() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Session::new("1", dir.path());
        s.set_reference(bars_svg().as_bytes()).unwrap();
        s.begin_decompose(DecomposeMode::Heuristic).unwrap();
        s.save().unwrap();
        let back = Session::load(&dir.path().join("1")).unwrap();
        assert_eq!(back.stage(), Stage::Created);
        assert_eq!(back.status().job.error.as_deref(), Some("interrupted"));
    }

    #[test]
    fn mapping_renames_user_columns() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = templated(dir.path());
        let schema = s.template().unwrap().schema;
        let header = ["cat", "val"];
        let csv = format!("{}\nW,5\nX,15\nY,25\nZ,35\n", header.join(","));
        let view = s.upload_data(csv.as_bytes()).unwrap();
        assert!(!view.mapped || schema.iter().map(|c| c.name.as_str()).eq(header));
        let before = s.current_render().unwrap();
        let bad = BTreeMap::from([("cat".to_string(), schema[0].name.clone())]);
        if schema.len() > 1 {
            assert_eq!(s.set_mapping(bad).unwrap_err().status(), 400);
        }
        let mapping: BTreeMap<String, String> =
            header.iter().zip(&schema).map(|(u, c)| (u.to_string(), c.name.clone())).collect();
        assert!(s.set_mapping(mapping).unwrap().mapped);
        assert_ne!(s.current_render().unwrap(), before);
        assert!(s.current_render().unwrap().contains(">W<"));
    }
}
