use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    LanguageModel,
    Embedder,
    Generator,
}

impl ProviderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProviderKind::LanguageModel => "language_model",
            ProviderKind::Embedder => "embedder",
            ProviderKind::Generator => "generator",
        }
    }
}

impl fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderMode {
    Mock,
    Remote,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_max_retries() -> u32 {
    2
}

/// How to reach one provider. Credentials are never stored here, only the
/// name of the environment variable that holds them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub mode: ProviderMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env_var: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture_path: Option<PathBuf>,
    /// Embedder only: declared vector length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_dim: Option<usize>,
    /// Embedder only: provider and model version of the embedding space.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space_tag: Option<String>,
    /// Embedder only: inputs per provider call.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderConfigError {
    #[error("{kind} provider in remote mode needs an endpoint")]
    MissingEndpoint { kind: ProviderKind },
    #[error("{kind} provider in mock mode needs a fixture_path")]
    MissingFixturePath { kind: ProviderKind },
    #[error("{kind} provider: timeout_ms must be positive")]
    ZeroTimeout { kind: ProviderKind },
    #[error("embedder needs embedding_dim >= 1 and a non-empty space_tag")]
    MissingEmbeddingSpace,
    #[error("{field} applies to the embedder only")]
    EmbedderOnlyField { field: &'static str },
    #[error("embedder batch_size must be at least 1")]
    ZeroBatchSize,
}

impl ProviderConfig {
    pub fn mock(kind: ProviderKind, fixture_path: impl Into<PathBuf>) -> Self {
        Self {
            kind,
            mode: ProviderMode::Mock,
            endpoint: None,
            auth_env_var: None,
            timeout_ms: default_timeout_ms(),
            max_retries: default_max_retries(),
            fixture_path: Some(fixture_path.into()),
            embedding_dim: None,
            space_tag: None,
            batch_size: None,
        }
    }

    pub fn remote(kind: ProviderKind, endpoint: impl Into<String>) -> Self {
        Self { mode: ProviderMode::Remote, endpoint: Some(endpoint.into()), fixture_path: None, ..Self::mock(kind, "") }
    }

    pub fn with_embedding_space(mut self, space_tag: impl Into<String>, dim: usize) -> Self {
        self.space_tag = Some(space_tag.into());
        self.embedding_dim = Some(dim);
        self
    }

    pub fn validate(&self) -> Result<(), ProviderConfigError> {
        let kind = self.kind;
        match self.mode {
            ProviderMode::Remote if self.endpoint.is_none() => {
                return Err(ProviderConfigError::MissingEndpoint { kind })
            }
            ProviderMode::Mock if self.fixture_path.is_none() => {
                return Err(ProviderConfigError::MissingFixturePath { kind })
            }
            _ => {}
        }
        if self.timeout_ms == 0 {
            return Err(ProviderConfigError::ZeroTimeout { kind });
        }
        if kind == ProviderKind::Embedder {
            let tag_ok = self.space_tag.as_deref().is_some_and(|t| !t.is_empty());
            if !tag_ok || self.embedding_dim.unwrap_or(0) == 0 {
                return Err(ProviderConfigError::MissingEmbeddingSpace);
            }
            if self.batch_size == Some(0) {
                return Err(ProviderConfigError::ZeroBatchSize);
            }
        } else {
            for (field, set) in [
                ("embedding_dim", self.embedding_dim.is_some()),
                ("space_tag", self.space_tag.is_some()),
                ("batch_size", self.batch_size.is_some()),
            ] {
                if set {
                    return Err(ProviderConfigError::EmbedderOnlyField { field });
                }
            }
        }
        Ok(())
    }
}
