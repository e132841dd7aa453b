//! The TOML configuration file.
//!
//! ```toml
//! [providers.language_model]
//! kind = "language_model"
//! mode = "mock"
//! fixture_path = "mock-providers.json"
//!
//! [providers.embedder]
//! kind = "embedder"
//! mode = "mock"
//! fixture_path = "mock-providers.json"
//! space_tag = "mock-64"
//! embedding_dim = 64
//!
//! [providers.generator]
//! kind = "generator"
//! mode = "mock"
//! fixture_path = "mock-providers.json"
//!
//! [limits]
//! max_upload_bytes = 20971520
//! ```
//!
//! Every other section is optional. Relative paths resolve against the
//! directory holding the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thematic_core::providers::{ProviderConfig, ProviderKind};
use thematic_core::ranking::RankPolarity;
use thiserror::Error;

pub const DEFAULT_MAX_UPLOAD_BYTES: usize = 20 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config {path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Providers {
    pub language_model: ProviderConfig,
    pub embedder: ProviderConfig,
    pub generator: ProviderConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Limits {
    pub max_upload_bytes: usize,
    /// Most themes per session, extracted or added.
    pub max_themes: usize,
    /// Axis builds in flight during session creation.
    pub max_concurrent_calls: usize,
    pub default_k: usize,
    /// In-flight calls per provider.
    pub provider_in_flight: usize,
    /// Embedding cache entries.
    pub embedding_cache: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_upload_bytes: DEFAULT_MAX_UPLOAD_BYTES,
            max_themes: 4,
            max_concurrent_calls: 4,
            default_k: 3,
            provider_in_flight: 8,
            embedding_cache: thematic_core::embeddings::DEFAULT_CACHE_CAPACITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Storage {
    pub root: PathBuf,
}

impl Default for Storage {
    fn default() -> Self {
        Self { root: PathBuf::from("data") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionSettings {
    pub ttl_hours: i64,
    /// When set, timestamps come from a stepping clock and session ids from
    /// this seed, so runs are reproducible.
    pub seed: Option<u64>,
}

impl Default for SessionSettings {
    fn default() -> Self {
        Self { ttl_hours: 24, seed: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ranking {
    pub polarity: RankPolarity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Generation {
    pub send_reference_image: bool,
}

impl Default for Generation {
    fn default() -> Self {
        Self { send_reference_image: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Server {
    /// Environment variable holding a static bearer token. Unset means no
    /// authentication.
    pub bearer_token_env: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub providers: Providers,
    #[serde(default)]
    pub limits: Limits,
    #[serde(default)]
    pub storage: Storage,
    #[serde(default)]
    pub session: SessionSettings,
    #[serde(default)]
    pub ranking: Ranking,
    #[serde(default)]
    pub generation: Generation,
    #[serde(default)]
    pub server: Server,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base_dir).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse { path: path.into(), message },
            ConfigError::Invalid { message, .. } => ConfigError::Invalid { path: path.into(), message },
            other => other,
        })
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut config: Config = toml::from_str(text)
            .map_err(|e| ConfigError::Parse { path: PathBuf::new(), message: e.message().to_owned() })?;
        config.base_dir = base_dir.to_path_buf();
        config.validate().map_err(|message| ConfigError::Invalid { path: PathBuf::new(), message })?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), String> {
        let p = &self.providers;
        for (slot, config, kind) in [
            ("language_model", &p.language_model, ProviderKind::LanguageModel),
            ("embedder", &p.embedder, ProviderKind::Embedder),
            ("generator", &p.generator, ProviderKind::Generator),
        ] {
            if config.kind != kind {
                return Err(format!("providers.{slot} has kind {}", config.kind));
            }
            config.validate().map_err(|e| format!("providers.{slot}: {e}"))?;
        }
        let l = &self.limits;
        for (name, value) in [
            ("max_upload_bytes", l.max_upload_bytes),
            ("max_themes", l.max_themes),
            ("max_concurrent_calls", l.max_concurrent_calls),
            ("default_k", l.default_k),
            ("provider_in_flight", l.provider_in_flight),
            ("embedding_cache", l.embedding_cache),
        ] {
            if value == 0 {
                return Err(format!("limits.{name} must be positive"));
            }
        }
        if self.session.ttl_hours <= 0 {
            return Err("session.ttl_hours must be positive".into());
        }
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn storage_root(&self) -> PathBuf {
        self.resolve(&self.storage.root)
    }

    /// A config with every provider replaying `fixtures`.
    pub fn mock(fixtures: &Path, space_tag: &str, dim: usize) -> Self {
        Self {
            providers: Providers {
                language_model: ProviderConfig::mock(ProviderKind::LanguageModel, fixtures),
                embedder: ProviderConfig::mock(ProviderKind::Embedder, fixtures).with_embedding_space(space_tag, dim),
                generator: ProviderConfig::mock(ProviderKind::Generator, fixtures),
            },
            limits: Limits::default(),
            storage: Storage::default(),
            session: SessionSettings::default(),
            ranking: Ranking::default(),
            generation: Generation::default(),
            server: Server::default(),
            base_dir: PathBuf::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[providers.language_model]
kind = "language_model"
mode = "mock"
fixture_path = "f.json"

[providers.embedder]
kind = "embedder"
mode = "mock"
fixture_path = "f.json"
space_tag = "mock"
embedding_dim = 8

[providers.generator]
kind = "generator"
mode = "remote"
endpoint = "http://localhost:9"
"#;

    #[test]
    fn defaults_fill_optional_sections() {
        let c = Config::parse(MINIMAL, Path::new("/etc/tp")).unwrap();
        assert_eq!(c.limits, Limits::default());
        assert_eq!(c.storage_root(), Path::new("/etc/tp/data"));
        assert_eq!(c.session.ttl_hours, 24);
        assert!(c.generation.send_reference_image);
    }

    #[test]
    fn swapped_kinds_are_rejected() {
        let text = MINIMAL.replacen("kind = \"generator\"", "kind = \"embedder\"", 1);
        let err = Config::parse(&text, Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("providers.generator"), "{err}");
    }

    #[test]
    fn unknown_keys_fail_to_parse() {
        let text = format!("{MINIMAL}\n[limits]\nmax_uploads = 3\n");
        assert!(matches!(Config::parse(&text, Path::new(".")), Err(ConfigError::Parse { .. })));
    }

    #[test]
    fn load_names_the_path() {
        let err = Config::load(Path::new("/nonexistent/tp.toml")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/tp.toml"));
    }
}
