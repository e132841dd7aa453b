//! Builds the session manager and provider clients described by a config.

use std::path::PathBuf;
use std::sync::Arc;

use async_trait::async_trait;
use thematic_core::clock::{Clock, IdSource, RandomIds, SeededIds, SteppingClock, SystemClock};
use thematic_core::embeddings::EmbeddingService;
use thematic_core::orchestrator::{Orchestrator, OrchestratorConfig};
use thematic_core::providers::{
    EmbedderClient, FixtureRecorder, GeneratorClient, LanguageModelClient, ProviderClient, ProviderConfig,
    ProviderError, ProviderKind,
};
use thematic_core::sessions::SessionManager;
use thematic_core::store::{BlobStore, SessionStore};
use thematic_core::themes::{ThemePipeline, ThemePipelineConfig};

use crate::config::Config;
use crate::error::{ApiError, ErrorCode};

/// Something whose reachability `/healthz` reports.
#[async_trait]
pub trait Probe: Send + Sync {
    fn kind(&self) -> ProviderKind;
    async fn probe(&self) -> Result<(), ProviderError>;
}

#[async_trait]
impl Probe for ProviderClient {
    fn kind(&self) -> ProviderKind {
        ProviderClient::kind(self)
    }

    async fn probe(&self) -> Result<(), ProviderError> {
        ProviderClient::probe(self).await
    }
}

struct Inner<T>(Arc<T>, fn(&T) -> &ProviderClient);

#[async_trait]
impl<T: Send + Sync> Probe for Inner<T> {
    fn kind(&self) -> ProviderKind {
        (self.1)(&self.0).kind()
    }

    async fn probe(&self) -> Result<(), ProviderError> {
        (self.1)(&self.0).probe().await
    }
}

/// Everything a request handler needs.
#[derive(Clone)]
pub struct AppState {
    pub manager: Arc<SessionManager>,
    pub probes: Vec<Arc<dyn Probe>>,
    pub max_upload_bytes: usize,
    pub default_k: usize,
    pub bearer_token: Option<String>,
}

impl AppState {
    /// State around an existing manager, with default limits, no probes
    /// and no authentication.
    pub fn for_manager(manager: Arc<SessionManager>) -> Self {
        Self {
            manager,
            probes: Vec::new(),
            max_upload_bytes: crate::config::DEFAULT_MAX_UPLOAD_BYTES,
            default_k: thematic_core::orchestrator::DEFAULT_K,
            bearer_token: None,
        }
    }
}

/// Overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct BuildOptions {
    pub storage_root: Option<PathBuf>,
    /// Forces a stepping clock and seeded ids.
    pub seed: Option<u64>,
    /// Captures every remote provider exchange.
    pub recorder: Option<FixtureRecorder>,
}

fn config_error(message: impl Into<String>) -> ApiError {
    ApiError::new(ErrorCode::ConfigInvalid, message)
}

fn client(config: &Config, provider: &ProviderConfig, options: &BuildOptions) -> Result<ProviderClient, ApiError> {
    let mut client = ProviderClient::from_config(provider.clone(), &config.base_dir)
        .map_err(|e| config_error(e.to_string()))?
        .with_in_flight_limit(config.limits.provider_in_flight);
    if let Some(recorder) = &options.recorder {
        client = client.with_recorder(recorder.clone());
    }
    Ok(client)
}

/// The three provider clients a service runs on.
pub struct Clients {
    pub language_model: ProviderClient,
    pub embedder: ProviderClient,
    pub generator: ProviderClient,
}

impl Clients {
    pub fn from_config(config: &Config, options: &BuildOptions) -> Result<Self, ApiError> {
        let p = &config.providers;
        Ok(Self {
            language_model: client(config, &p.language_model, options)?,
            embedder: client(config, &p.embedder, options)?,
            generator: client(config, &p.generator, options)?,
        })
    }
}

pub fn build(config: &Config, options: BuildOptions) -> Result<AppState, ApiError> {
    let clients = Clients::from_config(config, &options)?;
    build_with(config, options, clients)
}

/// Like [`build`], with provider clients supplied by the caller.
pub fn build_with(config: &Config, options: BuildOptions, clients: Clients) -> Result<AppState, ApiError> {
    let lm = Arc::new(LanguageModelClient::new(clients.language_model));
    let embedder = Arc::new(EmbedderClient::new(clients.embedder));
    let generator = Arc::new(GeneratorClient::new(clients.generator));

    let root = options.storage_root.clone().unwrap_or_else(|| config.storage_root());
    let blobs = BlobStore::new(&root);
    let (clock, ids): (Arc<dyn Clock>, Arc<dyn IdSource>) = match options.seed.or(config.session.seed) {
        Some(seed) => (Arc::new(SteppingClock::fixed()), Arc::new(SeededIds::new(seed))),
        None => (Arc::new(SystemClock), Arc::new(RandomIds)),
    };

    let limits = &config.limits;
    let pipeline = Arc::new(ThemePipeline::new(
        lm.clone(),
        blobs.clone(),
        ThemePipelineConfig {
            max_themes: limits.max_themes,
            max_concurrent_calls: limits.max_concurrent_calls,
            ..ThemePipelineConfig::default()
        },
    ));
    let embeddings = Arc::new(EmbeddingService::new(embedder.clone(), blobs.clone(), limits.embedding_cache));
    let orchestrator = Arc::new(Orchestrator::new(
        lm.clone(),
        embeddings,
        generator.clone(),
        blobs.clone(),
        clock.clone(),
        OrchestratorConfig {
            default_k: limits.default_k,
            polarity: config.ranking.polarity,
            send_reference_image: config.generation.send_reference_image,
        },
    ));
    let manager = SessionManager::new(SessionStore::new(&root), blobs, pipeline, orchestrator, ids, clock)
        .with_ttl(chrono::Duration::hours(config.session.ttl_hours));

    let bearer_token = match &config.server.bearer_token_env {
        None => None,
        Some(var) => match std::env::var(var) {
            Ok(token) if !token.is_empty() => Some(token),
            _ => return Err(config_error(format!("server.bearer_token_env names {var}, which is unset"))),
        },
    };

    Ok(AppState {
        manager: Arc::new(manager),
        probes: vec![
            Arc::new(Inner(lm, LanguageModelClient::inner)),
            Arc::new(Inner(embedder, EmbedderClient::inner)),
            Arc::new(Inner(generator, GeneratorClient::inner)),
        ],
        max_upload_bytes: limits.max_upload_bytes,
        default_k: limits.default_k,
        bearer_token,
    })
}
