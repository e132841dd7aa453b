use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use rand::Rng;
use serde_json::Value;
use tokio::sync::Semaphore;

use super::config::{ProviderConfig, ProviderKind, ProviderMode};
use super::fixture::{fingerprint, CannedResponse, FixtureFile, FixtureHeader, FixtureRecorder};
use super::mock_embed::mock_embedding;
use super::transport::{HttpTransport, Transport, TransportError};
use super::{EmbedRequest, ProviderError};

pub const DEFAULT_IN_FLIGHT: usize = 8;
const BACKOFF_BASE: Duration = Duration::from_millis(250);

#[derive(Debug, Clone, PartialEq)]
pub struct CallOutcome {
    pub response: Value,
    /// Attempts made, including the successful one. Zero for fixture hits.
    pub attempts: u32,
}

enum Backend {
    Fixtures(Arc<FixtureFile>),
    Remote(Arc<dyn Transport>),
}

/// One provider endpoint: fixture lookups in mock mode, bounded retries with
/// jittered exponential backoff in remote mode.
pub struct ProviderClient {
    config: ProviderConfig,
    backend: Backend,
    limiter: Arc<Semaphore>,
    recorder: Option<FixtureRecorder>,
    backoff_base: Duration,
}

impl ProviderClient {
    /// Builds the client described by `config`. Relative fixture paths
    /// resolve against `base_dir`.
    pub fn from_config(config: ProviderConfig, base_dir: &Path) -> Result<Self, ProviderError> {
        let invalid = |reason: String| ProviderError::InvalidRequest { kind: config.kind, reason };
        config.validate().map_err(|e| invalid(e.to_string()))?;
        match config.mode {
            ProviderMode::Mock => {
                let path = base_dir.join(config.fixture_path.as_ref().expect("validated"));
                let fixtures = FixtureFile::load(&path).map_err(|e| invalid(e.to_string()))?;
                Ok(Self::with_fixtures(config, fixtures))
            }
            ProviderMode::Remote => {
                let transport = HttpTransport::new(
                    config.endpoint.as_deref().expect("validated"),
                    config.auth_env_var.clone(),
                    Duration::from_millis(config.timeout_ms),
                )
                .map_err(|e| invalid(e.to_string()))?;
                Ok(Self::with_transport(config, Arc::new(transport)))
            }
        }
    }

    pub fn with_fixtures(config: ProviderConfig, fixtures: FixtureFile) -> Self {
        Self::build(config, Backend::Fixtures(Arc::new(fixtures)))
    }

    pub fn with_transport(config: ProviderConfig, transport: Arc<dyn Transport>) -> Self {
        Self::build(config, Backend::Remote(transport))
    }

    fn build(config: ProviderConfig, backend: Backend) -> Self {
        Self {
            config,
            backend,
            limiter: Arc::new(Semaphore::new(DEFAULT_IN_FLIGHT)),
            recorder: None,
            backoff_base: BACKOFF_BASE,
        }
    }

    /// Caps concurrent calls; excess callers queue.
    pub fn with_in_flight_limit(mut self, limit: usize) -> Self {
        self.limiter = Arc::new(Semaphore::new(limit.max(1)));
        self
    }

    pub fn with_backoff_base(mut self, base: Duration) -> Self {
        self.backoff_base = base;
        self
    }

    /// Captures every successful or refused remote call into `recorder`.
    pub fn with_recorder(mut self, recorder: FixtureRecorder) -> Self {
        self.recorder = Some(recorder);
        self
    }

    pub fn kind(&self) -> ProviderKind {
        self.config.kind
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    pub fn is_remote(&self) -> bool {
        matches!(self.backend, Backend::Remote(_))
    }

    pub fn recorder(&self) -> Option<&FixtureRecorder> {
        self.recorder.as_ref()
    }

    /// Whether the provider can be reached. Fixture-backed clients always
    /// can.
    pub async fn probe(&self) -> Result<(), ProviderError> {
        match &self.backend {
            Backend::Fixtures(_) => Ok(()),
            Backend::Remote(transport) => transport.probe().await.map_err(|e| ProviderError::Unavailable {
                kind: self.config.kind,
                attempts: 1,
                reason: e.to_string(),
            }),
        }
    }

    pub async fn call(&self, operation: &str, request: &Value) -> Result<CallOutcome, ProviderError> {
        self.call_with_wire(operation, request, request).await
    }

    /// Like [`call`](Self::call), but sends `wire` to a remote provider while
    /// fingerprinting and recording under `request`.
    pub async fn call_with_wire(
        &self,
        operation: &str,
        request: &Value,
        wire: &Value,
    ) -> Result<CallOutcome, ProviderError> {
        let _permit = self.limiter.acquire().await.expect("semaphore never closed");
        match &self.backend {
            Backend::Fixtures(fixtures) => self.replay(fixtures, operation, request),
            Backend::Remote(transport) => {
                let outcome = self.send_with_retries(transport.as_ref(), operation, wire).await;
                if let Some(recorder) = &self.recorder {
                    match &outcome {
                        Ok(ok) => recorder.record(operation, request.clone(), CannedResponse::Ok(ok.response.clone())),
                        Err(ProviderError::Refused { message, .. }) => recorder.record(
                            operation,
                            request.clone(),
                            CannedResponse::Refused { message: message.clone() },
                        ),
                        Err(_) => {}
                    }
                }
                outcome
            }
        }
    }

    fn replay(&self, fixtures: &FixtureFile, operation: &str, request: &Value) -> Result<CallOutcome, ProviderError> {
        let kind = self.config.kind;
        match fixtures.lookup(operation, request) {
            Some(CannedResponse::Ok(response)) => {
                validate_response(kind, operation, response)
                    .map_err(|reason| ProviderError::ContractViolation { kind, reason })?;
                Ok(CallOutcome { response: response.clone(), attempts: 0 })
            }
            Some(CannedResponse::Refused { message }) => {
                Err(ProviderError::Refused { kind, message: message.clone() })
            }
            Some(CannedResponse::Unavailable { reason }) => {
                Err(ProviderError::Unavailable { kind, attempts: 1, reason: reason.clone() })
            }
            None if kind == ProviderKind::Embedder && operation == "embed" => {
                let req: EmbedRequest = serde_json::from_value(request.clone())
                    .map_err(|e| ProviderError::InvalidRequest { kind, reason: e.to_string() })?;
                let space_tag = self.config.space_tag.as_deref().unwrap_or_default();
                let dim = self.config.embedding_dim.unwrap_or_default();
                let response = mock_embedding(fixtures.header.seed, &req, space_tag, dim);
                Ok(CallOutcome { response: serde_json::to_value(response).expect("serializes"), attempts: 0 })
            }
            None => Err(ProviderError::FixtureMiss {
                operation: operation.to_owned(),
                fingerprint: fingerprint(operation, request),
            }),
        }
    }

    async fn send_with_retries(
        &self,
        transport: &dyn Transport,
        operation: &str,
        wire: &Value,
    ) -> Result<CallOutcome, ProviderError> {
        let kind = self.config.kind;
        let timeout = Duration::from_millis(self.config.timeout_ms);
        let max_attempts = 1 + self.config.max_retries;
        let mut attempt = 0;
        loop {
            attempt += 1;
            let result = match tokio::time::timeout(timeout, transport.send(operation, wire)).await {
                Ok(result) => result,
                Err(_) => Err(TransportError::Timeout),
            };
            let err = match result {
                Ok(response) => {
                    validate_response(kind, operation, &response)
                        .map_err(|reason| ProviderError::ContractViolation { kind, reason })?;
                    return Ok(CallOutcome { response, attempts: attempt });
                }
                Err(err) => err,
            };

            if let TransportError::Status { status, body: Some(body) } = &err {
                if (400..500).contains(status) && body.get("refused").and_then(Value::as_bool) == Some(true) {
                    let message = body.get("message").and_then(Value::as_str).unwrap_or("refused").to_owned();
                    return Err(ProviderError::Refused { kind, message });
                }
            }
            if !err.is_retryable() || attempt >= max_attempts {
                return Err(ProviderError::Unavailable { kind, attempts: attempt, reason: err.to_string() });
            }

            let cap = self.backoff_base.saturating_mul(1 << (attempt - 1).min(16));
            let delay = rand::thread_rng().gen_range(Duration::ZERO..=cap);
            tracing::warn!(%kind, operation, attempt, error = %err, delay_ms = delay.as_millis() as u64, "retrying provider call");
            tokio::time::sleep(delay).await;
        }
    }
}

/// Shape checks for each provider's responses.
fn validate_response(kind: ProviderKind, operation: &str, response: &Value) -> Result<(), String> {
    fn embedding(v: &Value) -> Result<(), String> {
        let tag = v.get("space_tag").and_then(Value::as_str);
        let dim = v.get("dim").and_then(Value::as_u64);
        let values = v.get("values").and_then(Value::as_array);
        match (tag, dim, values) {
            (Some(_), Some(_), Some(values)) if values.iter().all(Value::is_number) => Ok(()),
            _ => Err("embedding response needs space_tag, dim and numeric values".into()),
        }
    }
    match (kind, operation) {
        (ProviderKind::Embedder, "embed_batch") => match response.get("outputs").and_then(Value::as_array) {
            Some(outputs) => outputs.iter().try_for_each(embedding),
            None => Err("batch response needs an outputs array".into()),
        },
        (ProviderKind::Embedder, _) => embedding(response),
        (ProviderKind::Generator, _) => match response.get("image") {
            Some(Value::String(_)) => Ok(()),
            _ => Err("generator response needs a base64 image string".into()),
        },
        (ProviderKind::LanguageModel, _) if response.is_object() => Ok(()),
        (ProviderKind::LanguageModel, _) => Err("language model response must be a JSON object".into()),
    }
}

/// Replays `calls` against a remote provider and captures each exchange.
/// Replaying the returned file in mock mode reproduces the responses.
pub async fn record_fixtures(
    client: &ProviderClient,
    header: FixtureHeader,
    calls: &[(String, Value)],
) -> Result<FixtureFile, ProviderError> {
    let Backend::Remote(transport) = &client.backend else {
        return Err(ProviderError::InvalidRequest {
            kind: client.kind(),
            reason: "fixtures can only be recorded from a remote provider".into(),
        });
    };
    let recorder = FixtureRecorder::new(header);
    let recording = ProviderClient {
        config: client.config.clone(),
        backend: Backend::Remote(Arc::clone(transport)),
        limiter: Arc::clone(&client.limiter),
        recorder: Some(recorder.clone()),
        backoff_base: client.backoff_base,
    };
    for (operation, request) in calls {
        recording.call(operation, request).await?;
    }
    Ok(recorder.snapshot())
}
