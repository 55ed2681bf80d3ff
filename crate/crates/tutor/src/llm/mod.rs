//! Chat and embedding backends.

pub mod openai;
pub mod scripted;

use std::sync::Arc;
use std::time::Duration;

use tutor_core::rag::NgramEmbedder;
use tutor_core::{ChatProvider, Embedder};

use crate::config::{ApiConfig, EmbedderKind, ProviderKind};

pub use openai::{HttpChatProvider, HttpEmbedder, HttpSettings};
pub use scripted::{Script, ScriptedProvider};

/// Build the configured chat provider. Must not be called from inside an
/// async runtime (the HTTP client is blocking).
pub fn provider_from_config(cfg: &ApiConfig) -> anyhow::Result<Arc<dyn ChatProvider>> {
    let p = &cfg.provider;
    Ok(match p.kind {
        ProviderKind::Scripted => {
            let path = p.script.as_ref().ok_or_else(|| anyhow::anyhow!("provider.script is not set"))?;
            Arc::new(ScriptedProvider::from_file(path)?)
        }
        ProviderKind::Http => Arc::new(HttpChatProvider::new(HttpSettings {
            endpoint: p.endpoint.clone(),
            model: p.model.clone(),
            api_key: ApiConfig::api_key(),
            deadline: Duration::from_millis(p.timeout_ms),
            max_retries: p.max_retries,
            backoff: Duration::from_millis(p.backoff_ms),
        })?),
    })
}

/// The configured embedder and a label recorded in the index file.
pub fn embedder_from_config(cfg: &ApiConfig) -> anyhow::Result<(Arc<dyn Embedder>, String)> {
    let e = &cfg.embedder;
    Ok(match e.kind {
        EmbedderKind::Test => (Arc::new(NgramEmbedder::new(e.dim)), format!("ngram3:{}", e.dim)),
        EmbedderKind::Http => (
            Arc::new(HttpEmbedder::new(
                e.endpoint.clone(),
                e.model.clone(),
                ApiConfig::api_key(),
                e.dim,
                Duration::from_millis(e.timeout_ms),
            )?),
            format!("http:{}:{}", e.model, e.dim),
        ),
    })
}
