use async_trait::async_trait;
use serde_json::{json, Value};

use super::client::ProviderClient;
use super::config::ProviderKind;
use super::fixture::CannedResponse;
use super::{
    EmbedRequest, EmbedResponse, Embedder, EmbeddingSpace, GenerateRequest, GenerateResponse, ImageGenerator,
    LanguageModel, LmRequest, ProviderError,
};
use crate::instructions;

pub const DEFAULT_EMBED_BATCH: usize = 16;

fn contract(kind: ProviderKind, e: impl ToString) -> ProviderError {
    ProviderError::ContractViolation { kind, reason: e.to_string() }
}

pub struct LanguageModelClient {
    client: ProviderClient,
}

impl LanguageModelClient {
    pub fn new(client: ProviderClient) -> Self {
        assert_eq!(client.kind(), ProviderKind::LanguageModel);
        Self { client }
    }

    pub fn inner(&self) -> &ProviderClient {
        &self.client
    }
}

#[async_trait]
impl LanguageModel for LanguageModelClient {
    async fn complete(&self, request: &LmRequest) -> Result<Value, ProviderError> {
        let body = serde_json::to_value(request).expect("serializes");
        // Remote adaptors get the rendered instruction text as well; it is
        // derived from the template id and slots, so it stays out of the
        // fingerprint.
        let mut wire = body.clone();
        if let Ok(text) = instructions::render(&request.instruction_template_id, &request.slots) {
            wire["instruction"] = Value::String(text);
        }
        Ok(self.client.call_with_wire("complete", &body, &wire).await?.response)
    }
}

pub struct EmbedderClient {
    client: ProviderClient,
    space: EmbeddingSpace,
    batch_size: usize,
}

impl EmbedderClient {
    pub fn new(client: ProviderClient) -> Self {
        let config = client.config();
        assert_eq!(config.kind, ProviderKind::Embedder);
        let space = EmbeddingSpace {
            space_tag: config.space_tag.clone().unwrap_or_default(),
            dim: config.embedding_dim.unwrap_or_default(),
        };
        let batch_size = config.batch_size.unwrap_or(DEFAULT_EMBED_BATCH);
        Self { client, space, batch_size }
    }

    pub fn inner(&self) -> &ProviderClient {
        &self.client
    }
}

#[async_trait]
impl Embedder for EmbedderClient {
    fn space(&self) -> &EmbeddingSpace {
        &self.space
    }

    fn batch_size(&self) -> usize {
        self.batch_size
    }

    async fn embed_batch(&self, requests: &[EmbedRequest]) -> Result<Vec<EmbedResponse>, ProviderError> {
        let kind = ProviderKind::Embedder;
        if !self.client.is_remote() {
            let mut out = Vec::with_capacity(requests.len());
            for req in requests {
                let value = serde_json::to_value(req).expect("serializes");
                let response = self.client.call("embed", &value).await?.response;
                out.push(serde_json::from_value(response).map_err(|e| contract(kind, e))?);
            }
            return Ok(out);
        }

        let outcome = self.client.call("embed_batch", &json!({ "inputs": requests })).await?;
        let outputs: Vec<EmbedResponse> =
            serde_json::from_value(outcome.response["outputs"].clone()).map_err(|e| contract(kind, e))?;
        if outputs.len() != requests.len() {
            return Err(contract(kind, format!("sent {} inputs, got {} outputs", requests.len(), outputs.len())));
        }
        // Replay looks embeddings up one input at a time.
        if let Some(recorder) = self.client.recorder() {
            for (req, out) in requests.iter().zip(&outputs) {
                recorder.record(
                    "embed",
                    serde_json::to_value(req).expect("serializes"),
                    CannedResponse::Ok(serde_json::to_value(out).expect("serializes")),
                );
            }
        }
        Ok(outputs)
    }
}

pub struct GeneratorClient {
    client: ProviderClient,
}

impl GeneratorClient {
    pub fn new(client: ProviderClient) -> Self {
        assert_eq!(client.kind(), ProviderKind::Generator);
        Self { client }
    }

    pub fn inner(&self) -> &ProviderClient {
        &self.client
    }
}

#[async_trait]
impl ImageGenerator for GeneratorClient {
    async fn generate(&self, request: &GenerateRequest) -> Result<GenerateResponse, ProviderError> {
        let body = serde_json::to_value(request).expect("serializes");
        let response = self.client.call("generate", &body).await?.response;
        serde_json::from_value(response).map_err(|e| contract(ProviderKind::Generator, e))
    }
}
