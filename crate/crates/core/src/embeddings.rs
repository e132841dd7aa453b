//! Image and text embeddings with an LRU cache in front of the provider.

use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::sync::Arc;

use base64::Engine;
use lru::LruCache;
use parking_lot::Mutex;
use thiserror::Error;

use crate::model::{EmbeddingVector, ImageRef};
use crate::providers::{EmbedKind, EmbedRequest, EmbedResponse, Embedder, EmbeddingSpace, ProviderError, ProviderKind};
use crate::store::{BlobStore, StoreError};

pub const DEFAULT_CACHE_CAPACITY: usize = 1024;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(
        "embedder declared {expected_tag:?} with dim {expected_dim}, \
         answered {got_tag:?} with dim {got_dim} and {got_values} values"
    )]
    SpaceMismatch { expected_tag: String, expected_dim: usize, got_tag: String, got_dim: usize, got_values: usize },
    #[error("label {index} is empty")]
    EmptyLabel { index: usize },
    #[error(transparent)]
    Storage(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum CacheKey {
    Image { payload_hash: String, space_tag: String },
    Text { label: String, space_tag: String },
}

pub struct EmbeddingService {
    embedder: Arc<dyn Embedder>,
    blobs: BlobStore,
    cache: Mutex<LruCache<CacheKey, EmbeddingVector>>,
}

impl EmbeddingService {
    pub fn new(embedder: Arc<dyn Embedder>, blobs: BlobStore, cache_capacity: usize) -> Self {
        let capacity = NonZeroUsize::new(cache_capacity).unwrap_or(NonZeroUsize::MIN);
        Self { embedder, blobs, cache: Mutex::new(LruCache::new(capacity)) }
    }

    pub fn space(&self) -> &EmbeddingSpace {
        self.embedder.space()
    }

    fn accept(&self, response: EmbedResponse) -> Result<EmbeddingVector, EmbedError> {
        let space = self.embedder.space();
        if response.space_tag != space.space_tag || response.dim != space.dim || response.values.len() != space.dim {
            return Err(EmbedError::SpaceMismatch {
                expected_tag: space.space_tag.clone(),
                expected_dim: space.dim,
                got_tag: response.space_tag,
                got_dim: response.dim,
                got_values: response.values.len(),
            });
        }
        EmbeddingVector::new(response.values, response.space_tag).map_err(|e| {
            ProviderError::ContractViolation { kind: ProviderKind::Embedder, reason: e.to_string() }.into()
        })
    }

    fn cached(&self, key: &CacheKey) -> Option<EmbeddingVector> {
        self.cache.lock().get(key).cloned()
    }

    /// Embedding of an image's bytes. Repeated calls for the same payload
    /// hash are served from the cache.
    pub async fn embed_image(&self, image: &ImageRef) -> Result<EmbeddingVector, EmbedError> {
        let key = CacheKey::Image {
            payload_hash: image.payload_hash.clone(),
            space_tag: self.space().space_tag.clone(),
        };
        if let Some(hit) = self.cached(&key) {
            return Ok(hit);
        }
        let bytes = self.blobs.get(&image.payload_hash)?;
        let request = EmbedRequest {
            kind: EmbedKind::Image,
            payload: base64::engine::general_purpose::STANDARD.encode(bytes),
        };
        let response = self.single(self.embedder.embed_batch(std::slice::from_ref(&request)).await?)?;
        let vector = self.accept(response)?;
        // Concurrent misses may both land here; values are identical per key.
        self.cache.lock().put(key, vector.clone());
        Ok(vector)
    }

    fn single(&self, mut responses: Vec<EmbedResponse>) -> Result<EmbedResponse, EmbedError> {
        match responses.len() {
            1 => Ok(responses.remove(0)),
            n => Err(ProviderError::ContractViolation {
                kind: ProviderKind::Embedder,
                reason: format!("expected 1 embedding, got {n}"),
            }
            .into()),
        }
    }

    /// One embedding per label, in order. Uncached labels are sent in
    /// batches of at most the provider's batch size.
    pub async fn embed_texts(&self, labels: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if let Some(index) = labels.iter().position(|l| l.trim().is_empty()) {
            return Err(EmbedError::EmptyLabel { index });
        }
        let space_tag = self.space().space_tag.clone();
        let keys: Vec<CacheKey> = labels
            .iter()
            .map(|label| CacheKey::Text { label: label.clone(), space_tag: space_tag.clone() })
            .collect();

        let mut out: Vec<Option<EmbeddingVector>> = keys.iter().map(|k| self.cached(k)).collect();
        let mut pending: Vec<&String> = Vec::new();
        for (i, label) in labels.iter().enumerate() {
            if out[i].is_none() && !pending.contains(&label) {
                pending.push(label);
            }
        }

        let mut fresh: HashMap<&String, EmbeddingVector> = HashMap::new();
        for chunk in pending.chunks(self.embedder.batch_size().max(1)) {
            let requests: Vec<EmbedRequest> = chunk
                .iter()
                .map(|label| EmbedRequest { kind: EmbedKind::Text, payload: (*label).clone() })
                .collect();
            let responses = self.embedder.embed_batch(&requests).await?;
            if responses.len() != requests.len() {
                return Err(ProviderError::ContractViolation {
                    kind: ProviderKind::Embedder,
                    reason: format!("sent {} labels, got {} embeddings", requests.len(), responses.len()),
                }
                .into());
            }
            for (label, response) in chunk.iter().zip(responses) {
                let vector = self.accept(response)?;
                let key = CacheKey::Text { label: (*label).clone(), space_tag: space_tag.clone() };
                self.cache.lock().put(key, vector.clone());
                fresh.insert(label, vector);
            }
        }

        Ok(out
            .iter_mut()
            .zip(labels)
            .map(|(slot, label)| slot.take().unwrap_or_else(|| fresh[label].clone()))
            .collect())
    }
}
