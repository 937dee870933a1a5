//! Service configuration, read from a TOML file.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use svgreuse_core::synth::FIDELITY_TOLERANCE;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Toml { path: PathBuf, source: toml::de::Error },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub listen: SocketAddr,
    pub session_dir: PathBuf,
    pub fidelity_tolerance: f64,
    pub lmm: LmmConfig,
    pub renderer: RendererConfig,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmmConfig {
    /// Endpoint of an OpenAI-compatible chat API. Without it, model-backed
    /// calls can only be replayed.
    pub base_url: Option<String>,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    pub model: String,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RendererConfig {
    /// Rasterizer used for prompt thumbnails.
    pub command: Option<String>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            session_dir: PathBuf::from("sessions"),
            fidelity_tolerance: FIDELITY_TOLERANCE,
            lmm: LmmConfig::default(),
            renderer: RendererConfig::default(),
        }
    }
}

impl Default for LmmConfig {
    fn default() -> Self {
        LmmConfig {
            base_url: None,
            api_key_env: "LMM_API_KEY".into(),
            model: svgreuse_core::lmm::DEFAULT_MODEL.into(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        toml::from_str(&text).map_err(|source| ConfigError::Toml { path: path.into(), source })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let c: Config = toml::from_str("session_dir = \"/tmp/s\"\n[lmm]\nbase_url = \"http://x\"\n").unwrap();
        assert_eq!(c.session_dir, PathBuf::from("/tmp/s"));
        assert_eq!(c.lmm.base_url.as_deref(), Some("http://x"));
        assert_eq!(c.lmm.api_key_env, "LMM_API_KEY");
        assert_eq!(c.fidelity_tolerance, 0.005);
        assert_eq!(c.listen.port(), 8080);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<Config>("listne = \"0.0.0.0:1\"").is_err());
    }
}
