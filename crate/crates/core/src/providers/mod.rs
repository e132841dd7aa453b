//! The three model roles the pipeline talks to, with their wire contracts,
//! a retrying remote client and deterministic fixture-backed mocks.
//!
//! Nothing outside this module performs network I/O.

mod client;
mod config;
mod fixture;
mod mock_embed;
mod transport;
mod typed;

use std::collections::BTreeMap;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use client::{record_fixtures, CallOutcome, ProviderClient};
pub use config::{ProviderConfig, ProviderConfigError, ProviderKind, ProviderMode};
pub use fixture::{fingerprint, CannedResponse, FixtureEntry, FixtureError, FixtureFile, FixtureHeader, FixtureRecorder};
pub use mock_embed::mock_embedding;
pub use transport::{FnTransport, HttpTransport, Transport, TransportError};
pub use typed::{EmbedderClient, GeneratorClient, LanguageModelClient};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("{kind} provider unavailable after {attempts} attempt(s): {reason}")]
    Unavailable { kind: ProviderKind, attempts: u32, reason: String },
    #[error("no fixture for {operation} (fingerprint {fingerprint})")]
    FixtureMiss { operation: String, fingerprint: String },
    #[error("{kind} provider response violates its contract: {reason}")]
    ContractViolation { kind: ProviderKind, reason: String },
    #[error("{kind} provider refused the request: {message}")]
    Refused { kind: ProviderKind, message: String },
    #[error("invalid request for {kind} provider: {reason}")]
    InvalidRequest { kind: ProviderKind, reason: String },
}

/// Request to the language model: a named instruction template, the values
/// for its slots, and optionally the image under discussion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LmRequest {
    pub instruction_template_id: String,
    pub slots: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
}

#[async_trait]
pub trait LanguageModel: Send + Sync {
    /// Returns the structured JSON answer defined by the template.
    async fn complete(&self, request: &LmRequest) -> Result<Value, ProviderError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedKind {
    Image,
    Text,
}

/// `payload` is base64 image bytes for `Image`, UTF-8 text for `Text`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub kind: EmbedKind,
    pub payload: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub space_tag: String,
    pub dim: usize,
    pub values: Vec<f64>,
}

/// The embedding space an embedder promises to answer in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingSpace {
    pub space_tag: String,
    pub dim: usize,
}

#[async_trait]
pub trait Embedder: Send + Sync {
    fn space(&self) -> &EmbeddingSpace;

    /// Largest number of inputs sent in one provider call.
    fn batch_size(&self) -> usize;

    /// One response per request, same order.
    async fn embed_batch(&self, requests: &[EmbedRequest]) -> Result<Vec<EmbedResponse>, ProviderError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    /// Base64 image bytes.
    pub image: String,
    #[serde(default)]
    pub provider_meta: Value,
}

#[async_trait]
pub trait ImageGenerator: Send + Sync {
    async fn generate(&self, request: &GenerateRequest) -> Result<GenerateResponse, ProviderError>;
}
