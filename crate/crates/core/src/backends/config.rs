use std::path::Path;

use serde::{Deserialize, Serialize};

use super::BackendError;
use crate::digest::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Http,
}

/// Connection settings for one backend role. Only the *name* of the
/// credential variable is stored; its value is read at request time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default)]
    pub auth_env_var: Option<String>,
    /// Seconds.
    #[serde(default = "default_timeout")]
    pub timeout: f64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default = "default_embedding_dim")]
    pub embedding_dim: usize,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    /// First retry delay; doubles on every further attempt.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    /// Mock only: JSON object mapping prompt keys (hex) to scripted replies.
    #[serde(default)]
    pub fixtures: Option<String>,
}

fn default_timeout() -> f64 {
    60.0
}
fn default_retries() -> u32 {
    2
}
fn default_embedding_dim() -> usize {
    512
}
fn default_in_flight() -> usize {
    4
}
fn default_backoff_ms() -> u64 {
    250
}

impl BackendConfig {
    pub fn mock(seed: u64) -> Self {
        BackendConfig {
            kind: BackendKind::Mock,
            base_url: None,
            auth_env_var: None,
            timeout: default_timeout(),
            retries: default_retries(),
            seed,
            model: None,
            embedding_dim: default_embedding_dim(),
            max_in_flight: default_in_flight(),
            backoff_ms: default_backoff_ms(),
            fixtures: None,
        }
    }

    pub fn http(base_url: &str) -> Self {
        BackendConfig {
            kind: BackendKind::Http,
            base_url: Some(base_url.to_string()),
            ..Self::mock(0)
        }
    }

    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.kind == BackendKind::Http && self.base_url.as_deref().is_none_or(str::is_empty) {
            return Err(BackendError::InvalidConfig("http backend requires base_url".into()));
        }
        if self.timeout.is_nan() || self.timeout <= 0.0 {
            return Err(BackendError::InvalidConfig("timeout must be positive".into()));
        }
        if self.embedding_dim == 0 || self.max_in_flight == 0 {
            return Err(BackendError::InvalidConfig(
                "embedding_dim and max_in_flight must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Contents of `backends.json`: one config per role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendsConfig {
    pub chat: BackendConfig,
    pub image: BackendConfig,
    pub multiview: BackendConfig,
    pub embedding: BackendConfig,
}

impl BackendsConfig {
    pub fn all_mock(seed: u64) -> Self {
        let m = BackendConfig::mock(seed);
        BackendsConfig {
            chat: m.clone(),
            image: m.clone(),
            multiview: m.clone(),
            embedding: m,
        }
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::InvalidConfig(format!("{}: {e}", path.display())))?;
        let cfg: BackendsConfig = serde_json::from_str(&text)
            .map_err(|e| BackendError::InvalidConfig(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        for c in [&self.chat, &self.image, &self.multiview, &self.embedding] {
            c.validate()?;
        }
        Ok(())
    }

    /// Overrides the seed of every role.
    pub fn with_seed(mut self, seed: u64) -> Self {
        for c in [&mut self.chat, &mut self.image, &mut self.multiview, &mut self.embedding] {
            c.seed = seed;
        }
        self
    }

    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}
