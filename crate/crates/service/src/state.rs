//! Sessions held by a running service.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use svgreuse_core::lmm::{HttpProvider, LmmError, ModelClient, Provider};
use svgreuse_core::preprocess::{CommandRenderer, Renderer};
use tokio::sync::RwLock;

use crate::config::Config;
use crate::error::ServiceError;
use crate::pipeline::DecomposeMode;
use crate::session::Session;

pub type SharedSession = Arc<RwLock<Session>>;

/// Sessions are locked one by one: requests on different sessions run in
/// parallel, writes within a session are serialized.
pub struct AppState {
    pub config: Config,
    sessions: RwLock<HashMap<String, SharedSession>>,
    next_id: AtomicU64,
    provider: Option<Arc<dyn Provider>>,
    renderer: Option<Arc<dyn Renderer>>,
}

impl AppState {
    /// Loads every session under the configured directory.
    pub fn open(config: Config) -> Result<Self, ServiceError> {
        std::fs::create_dir_all(&config.session_dir)?;
        let mut sessions = HashMap::new();
        let mut max_id = 0;
        for entry in std::fs::read_dir(&config.session_dir)? {
            let path = entry?.path();
            if !path.join(crate::session::MANIFEST).is_file() {
                continue;
            }
            let session = Session::load(&path)?;
            max_id = max_id.max(session.id.parse::<u64>().unwrap_or(0));
            sessions.insert(session.id.clone(), Arc::new(RwLock::new(session)));
        }
        let provider = config.lmm.base_url.as_ref().map(|url| {
            Arc::new(HttpProvider::new(url.clone(), std::env::var(&config.lmm.api_key_env).ok())) as Arc<dyn Provider>
        });
        let renderer = config
            .renderer
            .command
            .as_ref()
            .map(|command| Arc::new(CommandRenderer { command: command.clone() }) as Arc<dyn Renderer>);
        Ok(AppState { config, sessions: RwLock::new(sessions), next_id: AtomicU64::new(max_id + 1), provider, renderer })
    }

    /// Replaces the configured model endpoint.
    pub fn with_provider(mut self, provider: Arc<dyn Provider>) -> Self {
        self.provider = Some(provider);
        self
    }

    pub fn renderer(&self) -> Option<Arc<dyn Renderer>> {
        self.renderer.clone()
    }

    pub async fn create(&self) -> Result<String, ServiceError> {
        let id = self.next_id.fetch_add(1, Ordering::SeqCst).to_string();
        let session = Session::new(id.clone(), &self.config.session_dir);
        session.save()?;
        self.sessions.write().await.insert(id.clone(), Arc::new(RwLock::new(session)));
        Ok(id)
    }

    pub async fn get(&self, id: &str) -> Result<SharedSession, ServiceError> {
        self.sessions.read().await.get(id).cloned().ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    fn client(&self, c: ModelClient) -> ModelClient {
        c.with_model(self.config.lmm.model.clone())
    }

    /// Model client for a decomposition; `None` means the heuristic path.
    /// Live exchanges are recorded into the session so they can be replayed.
    pub fn decompose_client(
        &self,
        session: &Session,
        mode: DecomposeMode,
        transcript: Option<PathBuf>,
    ) -> Result<Option<ModelClient>, ServiceError> {
        match mode {
            DecomposeMode::Heuristic => Ok(None),
            DecomposeMode::Replay => {
                let path = transcript.unwrap_or_else(|| session.transcript_path());
                if !path.is_file() {
                    return Err(ServiceError::invalid(format!("no transcript at {}", path.display())));
                }
                Ok(Some(self.client(ModelClient::replay_file(&path)?)))
            }
            DecomposeMode::Lmm => Ok(Some(self.recording_client(session)?)),
        }
    }

    fn recording_client(&self, session: &Session) -> Result<ModelClient, ServiceError> {
        let provider = self.provider.clone().ok_or_else(|| LmmError::NotConfigured("no model endpoint configured".into()))?;
        std::fs::create_dir_all(session.dir())?;
        Ok(self.client(ModelClient::record(provider, &session.transcript_path())?))
    }

    /// Chat turns go to the model when one is configured and are replayed
    /// from the session transcript otherwise.
    pub fn chat_client(&self, session: &Session) -> Result<ModelClient, ServiceError> {
        if self.provider.is_some() {
            self.recording_client(session)
        } else {
            Ok(self.client(ModelClient::replay_file(&session.transcript_path())?))
        }
    }
}
