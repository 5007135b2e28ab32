//! Runtime configuration (TOML) and provider construction.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::gateway::{ChatProvider, Gateway, GatewayError, HttpEmbedder, HttpProvider, MockProvider, TokenBucket};
use crate::mining::{Embedder, OfflineEmbedder, DEFAULT_EMBEDDING_DIM};

/// Environment variable that overrides the configured API key.
pub const API_KEY_ENV: &str = "MINDFUSE_API_KEY";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {reason}")]
    Invalid { path: PathBuf, reason: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    #[default]
    Offline,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout_s: u64,
    pub requests_per_second: f64,
    pub max_retries: u32,
    /// Canned mock replies, one file per prompt key.
    pub fixtures_dir: Option<PathBuf>,
    pub embedder: EmbedderKind,
    pub embedding_model: String,
    pub embedding_dim: usize,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: ProviderKind::Mock,
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4o".into(),
            api_key: None,
            timeout_s: 60,
            requests_per_second: 2.0,
            max_retries: 2,
            fixtures_dir: None,
            embedder: EmbedderKind::Offline,
            embedding_model: "text-embedding-3-small".into(),
            embedding_dim: DEFAULT_EMBEDDING_DIM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub store_path: PathBuf,
    /// Overrides for the built-in prompt templates and schemas.
    pub templates_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub provider: ProviderConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            store_path: PathBuf::from("mindfuse-store"),
            templates_dir: None,
            seed: None,
            provider: ProviderConfig::default(),
        }
    }
}

impl Config {
    /// Reads a TOML file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config: Config = toml::from_str(&text).map_err(|e| ConfigError::Invalid {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut config.store_path);
        config.templates_dir.as_mut().map(rebase);
        config.provider.fixtures_dir.as_mut().map(rebase);
        Ok(config)
    }

    /// `MINDFUSE_API_KEY` when set, else the configured key.
    pub fn api_key(&self) -> Option<String> {
        std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .or_else(|| self.provider.api_key.clone())
    }

    pub fn build_provider(&self) -> Result<Arc<dyn ChatProvider>, ConfigError> {
        Ok(match self.provider.kind {
            ProviderKind::Mock => match &self.provider.fixtures_dir {
                Some(dir) => Arc::new(MockProvider::from_fixtures_dir(dir)?),
                None => Arc::new(MockProvider::new()),
            },
            ProviderKind::Http => Arc::new(HttpProvider::new(
                &self.provider.base_url,
                &self.provider.model,
                self.api_key(),
                self.provider.timeout_s,
                Arc::new(TokenBucket::new(self.provider.requests_per_second)),
            )),
        })
    }

    pub fn build_gateway(&self) -> Result<Gateway, ConfigError> {
        let mut gateway = Gateway::new(self.build_provider()?).with_max_retries(self.provider.max_retries);
        if let Some(dir) = &self.templates_dir {
            gateway.load_dir(dir)?;
        }
        Ok(gateway)
    }

    pub fn build_embedder(&self) -> Arc<dyn Embedder> {
        match self.provider.embedder {
            EmbedderKind::Offline => Arc::new(OfflineEmbedder::new(self.provider.embedding_dim)),
            EmbedderKind::Http => Arc::new(HttpEmbedder::new(
                &self.provider.base_url,
                &self.provider.embedding_model,
                self.provider.embedding_dim,
                self.api_key(),
                self.provider.timeout_s,
                Arc::new(TokenBucket::new(self.provider.requests_per_second)),
            )),
        }
    }
}
