//! Service configuration, read from a TOML file.
//!
//! Every key has a default, so an empty file (or no file) is a valid
//! configuration. The only value taken from the environment is the API key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tutor_core::rag::{chunk, RagConfig};
use tutor_core::{CycleConfig, ScaffoldConfig};

/// Environment variable holding the bearer token for the LLM endpoint.
pub const API_KEY_ENV: &str = "TUTOR_LLM_API_KEY";

/// Persona text shipped with the binary, used when `persona_path` is unset.
pub const BUNDLED_PERSONA: &str = include_str!("../assets/persona.v1.md");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Http,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    /// Base URL; `/v1/chat/completions` is appended.
    pub endpoint: String,
    pub model: String,
    /// Script file for `kind = "scripted"`.
    pub script: Option<PathBuf>,
    /// Overall deadline for one completion, retries included.
    pub timeout_ms: u64,
    pub max_retries: u32,
    /// First backoff delay; doubles on every retry.
    pub backoff_ms: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Http,
            endpoint: "https://api.openai.com".into(),
            model: "gpt-4o".into(),
            script: None,
            timeout_ms: 60_000,
            max_retries: 3,
            backoff_ms: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    Http,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    /// Base URL; `/v1/embeddings` is appended.
    pub endpoint: String,
    pub model: String,
    pub dim: usize,
    pub timeout_ms: u64,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            kind: EmbedderKind::Test,
            endpoint: "https://api.openai.com".into(),
            model: "text-embedding-3-small".into(),
            dim: tutor_core::rag::NgramEmbedder::DEFAULT_DIM,
            timeout_ms: 30_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApiConfig {
    pub listen: String,
    pub data_dir: PathBuf,
    /// Persona preamble file; the bundled `persona.v1.md` when unset.
    pub persona_path: Option<PathBuf>,
    pub history_window: usize,
    pub lease_secs: u64,
    pub provider: ProviderConfig,
    pub embedder: EmbedderConfig,
    pub rag: RagConfig,
    pub scaffold: ScaffoldConfig,
}

impl Default for ApiConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            data_dir: PathBuf::from("data"),
            persona_path: None,
            history_window: 12,
            lease_secs: 30,
            provider: ProviderConfig::default(),
            embedder: EmbedderConfig::default(),
            rag: RagConfig::default(),
            scaffold: ScaffoldConfig::default(),
        }
    }
}

impl ApiConfig {
    /// Parse and validate. Relative paths inside the file are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: ApiConfig = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data_dir);
        if let Some(p) = self.persona_path.as_mut() {
            fix(p);
        }
        if let Some(p) = self.provider.script.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        chunk::check_params(self.rag.chunk_size, self.rag.overlap)
            .map_err(|e| ConfigError::Invalid(format!("rag: {e}")))?;
        if self.rag.k == 0 {
            return Err(ConfigError::Invalid("rag.k must be positive".into()));
        }
        if self.rag.budget == 0 {
            return Err(ConfigError::Invalid("rag.budget must be positive".into()));
        }
        if self.history_window == 0 {
            return Err(ConfigError::Invalid("history_window must be positive".into()));
        }
        if self.lease_secs == 0 {
            return Err(ConfigError::Invalid("lease_secs must be positive".into()));
        }
        if self.embedder.dim == 0 {
            return Err(ConfigError::Invalid("embedder.dim must be positive".into()));
        }
        if let Some(p) = &self.persona_path {
            require_file(p, "persona_path")?;
        }
        if self.provider.kind == ProviderKind::Scripted {
            match &self.provider.script {
                Some(p) => require_file(p, "provider.script")?,
                None => return Err(ConfigError::Invalid("provider.script is required when provider.kind = \"scripted\"".into())),
            }
        }
        Ok(())
    }

    pub fn persona(&self) -> Result<String, ConfigError> {
        match &self.persona_path {
            None => Ok(BUNDLED_PERSONA.to_string()),
            Some(p) => std::fs::read_to_string(p).map_err(|source| ConfigError::Read { path: p.clone(), source }),
        }
    }

    pub fn cycle(&self) -> CycleConfig {
        CycleConfig {
            scaffold: self.scaffold.clone(),
            rag: self.rag,
            history_window: self.history_window,
        }
    }

    pub fn api_key() -> Option<String> {
        std::env::var(API_KEY_ENV).ok().filter(|k| !k.trim().is_empty())
    }
}

fn require_file(path: &Path, key: &str) -> Result<(), ConfigError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(ConfigError::Invalid(format!("{key}: {} does not exist", path.display())))
    }
}
