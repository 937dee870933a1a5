//! Model client with record and replay.
//!
//! Requests are identified by a SHA-256 digest over a canonical JSON form in
//! which images appear only as the hash of their bytes. Transcripts hold one
//! `digest<TAB>base64(response)` record per line.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LmmError {
    #[error("no recorded response for request {0}")]
    ReplayMiss(String),
    #[error("provider returned status {status}: {body}")]
    ProviderError { status: u16, body: String },
    #[error("provider request timed out")]
    Timeout,
    #[error("model client is not configured: {0}")]
    NotConfigured(String),
    #[error("transcript error: {0}")]
    Transcript(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PromptPart {
    Text(String),
    Image { mime: String, bytes: Vec<u8> },
}

impl PromptPart {
    pub fn png(bytes: Vec<u8>) -> Self {
        PromptPart::Image { mime: "image/png".into(), bytes }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelRequest {
    pub prompt_parts: Vec<PromptPart>,
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl ModelRequest {
    /// Pipeline requests always run at temperature 0.
    pub fn new(model_name: impl Into<String>, prompt_parts: Vec<PromptPart>) -> Self {
        ModelRequest { prompt_parts, model_name: model_name.into(), temperature: 0.0, max_tokens: 4096 }
    }

    pub fn text(model_name: impl Into<String>, prompt: impl Into<String>) -> Self {
        Self::new(model_name, vec![PromptPart::Text(prompt.into())])
    }

    /// Canonical form: sorted keys, images reduced to their content hash.
    pub fn canonical(&self) -> String {
        let parts: Vec<_> = self
            .prompt_parts
            .iter()
            .map(|p| match p {
                PromptPart::Text(t) => json!({ "text": t }),
                PromptPart::Image { mime, bytes } => json!({ "image_sha256": sha256_hex(bytes), "mime": mime }),
            })
            .collect();
        json!({
            "max_tokens": self.max_tokens,
            "model_name": self.model_name,
            "prompt_parts": parts,
            "temperature": self.temperature,
        })
        .to_string()
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.canonical().as_bytes())
    }
}

/// Something that can answer a request, typically over the network.
pub trait Provider: Send + Sync {
    fn send(&self, req: &ModelRequest) -> Result<String, LmmError>;
}

/// Minimal chat-completions client.
pub struct HttpProvider {
    pub base_url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl HttpProvider {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>) -> Self {
        HttpProvider { base_url: base_url.into(), api_key, timeout: Duration::from_secs(300) }
    }

    fn body(req: &ModelRequest) -> serde_json::Value {
        let content: Vec<_> = req
            .prompt_parts
            .iter()
            .map(|p| match p {
                PromptPart::Text(t) => json!({ "type": "text", "text": t }),
                PromptPart::Image { mime, bytes } => json!({
                    "type": "image_url",
                    "image_url": { "url": format!("data:{mime};base64,{}", B64.encode(bytes)) },
                }),
            })
            .collect();
        json!({
            "model": req.model_name,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
            "messages": [{ "role": "user", "content": content }],
        })
    }
}

impl Provider for HttpProvider {
    fn send(&self, req: &ModelRequest) -> Result<String, LmmError> {
        let url = format!("{}/chat/completions", self.base_url.trim_end_matches('/'));
        let agent = ureq::AgentBuilder::new().timeout(self.timeout).build();
        let mut call = agent.post(&url);
        if let Some(key) = &self.api_key {
            call = call.set("Authorization", &format!("Bearer {key}"));
        }
        let resp = match call.send_json(Self::body(req)) {
            Ok(r) => r,
            Err(ureq::Error::Status(status, r)) => {
                return Err(LmmError::ProviderError { status, body: r.into_string().unwrap_or_default() })
            }
            Err(ureq::Error::Transport(t)) => {
                let msg = t.to_string();
                if msg.contains("timed out") {
                    return Err(LmmError::Timeout);
                }
                return Err(LmmError::ProviderError { status: 0, body: msg });
            }
        };
        let v: serde_json::Value =
            resp.into_json().map_err(|e| LmmError::ProviderError { status: 200, body: e.to_string() })?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| LmmError::ProviderError { status: 200, body: format!("unexpected response shape: {v}") })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Record,
    Replay,
    Live,
}

impl std::str::FromStr for Mode {
    type Err = LmmError;
    fn from_str(s: &str) -> Result<Self, LmmError> {
        match s.to_ascii_lowercase().as_str() {
            "record" => Ok(Mode::Record),
            "replay" => Ok(Mode::Replay),
            "live" => Ok(Mode::Live),
            other => Err(LmmError::NotConfigured(format!("unknown mode `{other}`"))),
        }
    }
}

/// Recorded responses keyed by request digest.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    pub entries: BTreeMap<String, String>,
}

impl Transcript {
    pub fn parse(text: &str) -> Result<Self, LmmError> {
        let mut entries = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (digest, b64) = line
                .split_once('\t')
                .ok_or_else(|| LmmError::Transcript(format!("line {}: expected `digest<TAB>base64`", n + 1)))?;
            let bytes = B64.decode(b64.trim()).map_err(|e| LmmError::Transcript(format!("line {}: {e}", n + 1)))?;
            let text = String::from_utf8(bytes).map_err(|e| LmmError::Transcript(format!("line {}: {e}", n + 1)))?;
            entries.insert(digest.to_string(), text);
        }
        Ok(Transcript { entries })
    }

    pub fn load(path: &Path) -> Result<Self, LmmError> {
        match std::fs::read_to_string(path) {
            Ok(text) => Self::parse(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Transcript::default()),
            Err(e) => Err(LmmError::Transcript(format!("{}: {e}", path.display()))),
        }
    }

    pub fn record_line(digest: &str, response: &str) -> String {
        format!("{digest}\t{}\n", B64.encode(response.as_bytes()))
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(d, r)| Self::record_line(d, r)).collect()
    }
}

struct State {
    transcript: Transcript,
    path: Option<PathBuf>,
}

/// The client the pipeline talks to.
#[derive(Clone)]
pub struct ModelClient {
    mode: Mode,
    provider: Option<Arc<dyn Provider>>,
    state: Arc<Mutex<State>>,
    pub model_name: String,
}

pub const DEFAULT_MODEL: &str = "default";

impl ModelClient {
    pub fn new(mode: Mode, provider: Option<Arc<dyn Provider>>, transcript: Transcript, path: Option<PathBuf>) -> Self {
        ModelClient {
            mode,
            provider,
            state: Arc::new(Mutex::new(State { transcript, path })),
            model_name: DEFAULT_MODEL.into(),
        }
    }

    pub fn replay(transcript: Transcript) -> Self {
        Self::new(Mode::Replay, None, transcript, None)
    }

    pub fn replay_file(path: &Path) -> Result<Self, LmmError> {
        Ok(Self::replay(Transcript::load(path)?))
    }

    /// Records every exchange to `path`, appending to what is already there.
    pub fn record(provider: Arc<dyn Provider>, path: &Path) -> Result<Self, LmmError> {
        let transcript = Transcript::load(path)?;
        Ok(Self::new(Mode::Record, Some(provider), transcript, Some(path.to_path_buf())))
    }

    pub fn live(provider: Arc<dyn Provider>) -> Self {
        Self::new(Mode::Live, Some(provider), Transcript::default(), None)
    }

    /// Configures from `LMM_MODE` (default replay), `LMM_BASE_URL` and
    /// `LMM_API_KEY`.
    pub fn from_env(transcript_path: &Path) -> Result<Self, LmmError> {
        let mode: Mode = std::env::var("LMM_MODE").unwrap_or_else(|_| "replay".into()).parse()?;
        if mode == Mode::Replay {
            return Self::replay_file(transcript_path);
        }
        let base = std::env::var("LMM_BASE_URL").map_err(|_| LmmError::NotConfigured("LMM_BASE_URL is not set".into()))?;
        let provider: Arc<dyn Provider> = Arc::new(HttpProvider::new(base, std::env::var("LMM_API_KEY").ok()));
        match mode {
            Mode::Record => Self::record(provider, transcript_path),
            _ => Ok(Self::live(provider)),
        }
    }

    pub fn with_model(mut self, model_name: impl Into<String>) -> Self {
        self.model_name = model_name.into();
        self
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn transcript(&self) -> Transcript {
        self.state.lock().expect("transcript lock").transcript.clone()
    }

    pub fn complete(&self, req: &ModelRequest) -> Result<String, LmmError> {
        let digest = req.digest();
        if self.mode == Mode::Replay {
            let state = self.state.lock().expect("transcript lock");
            return state.transcript.entries.get(&digest).cloned().ok_or(LmmError::ReplayMiss(digest));
        }
        let provider = self.provider.as_ref().ok_or_else(|| LmmError::NotConfigured("no provider".into()))?;
        let text = provider.send(req)?;
        if self.mode == Mode::Record {
            let mut state = self.state.lock().expect("transcript lock");
            if let Some(path) = state.path.clone() {
                append_record(&path, &digest, &text, req)?;
            }
            state.transcript.entries.insert(digest, text.clone());
        }
        Ok(text)
    }
}

fn append_record(path: &Path, digest: &str, text: &str, req: &ModelRequest) -> Result<(), LmmError> {
    let io = |e: std::io::Error| LmmError::Transcript(format!("{}: {e}", path.display()));
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    // images are kept next to the transcript, named by content hash
    for part in &req.prompt_parts {
        if let PromptPart::Image { bytes, .. } = part {
            let dir = path.with_extension("images");
            std::fs::create_dir_all(&dir).map_err(io)?;
            std::fs::write(dir.join(format!("{}.png", sha256_hex(bytes))), bytes).map_err(io)?;
        }
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
    f.write_all(Transcript::record_line(digest, text).as_bytes()).map_err(io)
}

/// Test helper that fails every call and counts attempts, so tests can assert
/// that nothing reached the network.
#[derive(Default)]
pub struct DenyingProvider {
    pub calls: std::sync::atomic::AtomicUsize,
}

impl Provider for DenyingProvider {
    fn send(&self, _req: &ModelRequest) -> Result<String, LmmError> {
        self.calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        Err(LmmError::ProviderError { status: 0, body: "network access denied".into() })
    }
}

/// Answers from a fixed list of (predicate, response) rules; used to script
/// conversations when recording fixtures without a live endpoint.
pub struct ScriptedProvider {
    rules: Vec<(Box<dyn Fn(&str) -> bool + Send + Sync>, String)>,
}

impl ScriptedProvider {
    pub fn new() -> Self {
        ScriptedProvider { rules: Vec::new() }
    }

    /// First matching rule wins; the predicate sees the concatenated text parts.
    pub fn when(mut self, pred: impl Fn(&str) -> bool + Send + Sync + 'static, response: impl Into<String>) -> Self {
        self.rules.push((Box::new(pred), response.into()));
        self
    }
}

impl Default for ScriptedProvider {
    fn default() -> Self {
        Self::new()
    }
}

impl Provider for ScriptedProvider {
    fn send(&self, req: &ModelRequest) -> Result<String, LmmError> {
        let text: String = req
            .prompt_parts
            .iter()
            .filter_map(|p| match p {
                PromptPart::Text(t) => Some(t.as_str()),
                PromptPart::Image { .. } => None,
            })
            .collect();
        self.rules
            .iter()
            .find(|(pred, _)| pred(&text))
            .map(|(_, r)| r.clone())
            .ok_or(LmmError::ProviderError { status: 404, body: "no scripted response".into() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(text: &str) -> ModelRequest {
        ModelRequest::new("m", vec![PromptPart::Text(text.into()), PromptPart::png(vec![1, 2, 3])])
    }

    #[test]
    fn digest_is_stable_and_content_sensitive() {
        let a = req("hello");
        assert_eq!(a.digest(), req("hello").digest());
        assert_ne!(a.digest(), req("hello!").digest());
        let mut b = a.clone();
        b.prompt_parts[1] = PromptPart::png(vec![1, 2, 4]);
        assert_ne!(a.digest(), b.digest());
        assert_eq!(
            a.canonical(),
            r#"{"max_tokens":4096,"model_name":"m","prompt_parts":[{"text":"hello"},{"image_sha256":"039058c6f2c0cb492c533b0a4d14ef77cc0f78abccced5287d84a1a2011cfb81","mime":"image/png"}],"temperature":0.0}"#
        );
    }

    #[test]
    fn replay_hit_and_miss() {
        let mut t = Transcript::default();
        t.entries.insert(req("a").digest(), "stored".into());
        let c = ModelClient::replay(t);
        assert_eq!(c.complete(&req("a")).unwrap(), "stored");
        assert_eq!(c.complete(&req("b")), Err(LmmError::ReplayMiss(req("b").digest())));
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.tsv");
        let provider = Arc::new(ScriptedProvider::new().when(|t| t.contains("ping"), "pong\twith tab\n"));
        let rec = ModelClient::record(provider, &path).unwrap();
        let live = rec.complete(&req("ping")).unwrap();
        let replayed = ModelClient::replay_file(&path).unwrap().complete(&req("ping")).unwrap();
        assert_eq!(live, replayed);
        assert!(path.with_extension("images").join(format!("{}.png", sha256_hex(&[1, 2, 3]))).exists());
    }

    #[test]
    fn replay_never_calls_provider() {
        let deny = Arc::new(DenyingProvider::default());
        let c = ModelClient::new(Mode::Replay, Some(deny.clone()), Transcript::default(), None);
        assert!(c.complete(&req("x")).is_err());
        assert_eq!(deny.calls.load(std::sync::atomic::Ordering::SeqCst), 0);
    }

    #[test]
    fn transcript_text_round_trip() {
        let mut t = Transcript::default();
        t.entries.insert("d1".into(), "line one\nline two".into());
        t.entries.insert("d2".into(), String::new());
        assert_eq!(Transcript::parse(&t.to_text()).unwrap(), t);
        assert!(Transcript::parse("nodigest").is_err());
    }
}
