//! Navigation gestures to prompts to generated images.
//!
//! A gesture is an axis and a position in `[-1, 1]`. The sign picks the
//! pole, the magnitude unlocks intensity: `t = ceil(|position| * 6)`, and
//! every perturbation on that side with `intensity_rank <= t` is a
//! candidate. Candidates are ranked by cosine similarity to the current
//! primary reference and the top `k` are injected into the prompt.
//!
//! Every operation takes a session by reference and returns a new one, so
//! a failed call leaves the caller's session untouched.

use std::sync::Arc;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::canonical::sha256_hex;
use crate::clock::Clock;
use crate::embeddings::{EmbedError, EmbeddingService};
use crate::instructions;
use crate::model::{
    normalize_label, AxisId, Direction, ImageId, ImageOrigin, ImageRef, InjectedDescriptor, LineageViolation,
    Perturbation, PromptSpec, Session, TemplateError, ThemeAxis, PERTURBATIONS_PER_DIRECTION,
};
use crate::providers::{GenerateRequest, ImageGenerator, LanguageModel, LmRequest, ProviderError};
use crate::ranking::{rank_descriptors_with, RankError, RankPolarity, RankingInput};
use crate::store::{BlobStore, StoreError};

pub const DEFAULT_K: usize = 3;

/// Positions within this distance of a multiple of 1/6 count as exactly
/// on it, so `j as f64 / 6.0` maps to intensity `j` despite rounding.
pub const BOUNDARY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("unknown axis {0}")]
    UnknownAxis(AxisId),
    #[error("unknown image {0}")]
    UnknownImage(ImageId),
    #[error("position {0} is outside [-1, 1]")]
    PositionOutOfRange(f64),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Embedding(#[from] EmbedError),
    #[error(transparent)]
    Ranking(#[from] RankError),
    #[error("no base description for image {image_id}: {reason}")]
    MissingBaseDescription { image_id: ImageId, reason: String },
    #[error("generator unavailable: {0}")]
    GeneratorUnavailable(String),
    #[error("generator refused: {0}")]
    GeneratorRefused(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Storage(#[from] StoreError),
    #[error("session invariants broken: {0:?}")]
    InvalidSession(Vec<LineageViolation>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavigationGesture {
    pub axis_id: AxisId,
    pub position: f64,
}

impl NavigationGesture {
    pub fn new(axis_id: AxisId, position: f64) -> Result<Self, OrchestratorError> {
        if !(-1.0..=1.0).contains(&position) {
            return Err(OrchestratorError::PositionOutOfRange(position));
        }
        Ok(Self { axis_id, position })
    }
}

/// A candidate perturbation with its similarity to the primary reference
/// and its place in the ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPerturbation {
    pub perturbation: Perturbation,
    pub score: f64,
    pub rank: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub image: ImageRef,
    pub prompt: PromptSpec,
    pub ranking_fingerprint: String,
    pub provider_latency_ms: u64,
}

/// What a gesture would do, without generating anything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavigationPreview {
    pub descriptors: Vec<ScoredPerturbation>,
    pub prompt: PromptSpec,
    pub prompt_preview: String,
}

#[derive(Debug, Clone)]
pub struct OrchestratorConfig {
    pub default_k: usize,
    pub polarity: RankPolarity,
    /// Send the primary reference's bytes along with the prompt.
    pub send_reference_image: bool,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        Self { default_k: DEFAULT_K, polarity: RankPolarity::CompatibilityFirst, send_reference_image: true }
    }
}

/// Intensity unlocked by a position: `None` at 0, otherwise
/// `ceil(|position| * 6)` in `1..=6`.
pub fn intensity_target(position: f64) -> Result<Option<u8>, OrchestratorError> {
    if !(-1.0..=1.0).contains(&position) {
        return Err(OrchestratorError::PositionOutOfRange(position));
    }
    if position == 0.0 {
        return Ok(None);
    }
    let scaled = position.abs() * PERTURBATIONS_PER_DIRECTION as f64;
    let nearest = scaled.round();
    let t = if (scaled - nearest).abs() <= BOUNDARY_TOLERANCE { nearest } else { scaled.ceil() };
    Ok(Some(t.clamp(1.0, PERTURBATIONS_PER_DIRECTION as f64) as u8))
}

/// Side of the axis a non-zero position points at.
pub fn direction_of(position: f64) -> Option<Direction> {
    if position < 0.0 {
        Some(Direction::Left)
    } else if position > 0.0 {
        Some(Direction::Right)
    } else {
        None
    }
}

/// Perturbations unlocked by `position`, mildest first.
pub fn candidates(axis: &ThemeAxis, position: f64) -> Result<Vec<&Perturbation>, OrchestratorError> {
    let (Some(t), Some(direction)) = (intensity_target(position)?, direction_of(position)) else {
        return Ok(Vec::new());
    };
    Ok(axis.side(direction).into_iter().filter(|p| p.intensity_rank <= t).collect())
}

struct RankedGesture {
    descriptors: Vec<ScoredPerturbation>,
    fingerprint: String,
}

pub struct Orchestrator {
    lm: Arc<dyn LanguageModel>,
    embeddings: Arc<EmbeddingService>,
    generator: Arc<dyn ImageGenerator>,
    blobs: BlobStore,
    clock: Arc<dyn Clock>,
    config: OrchestratorConfig,
}

fn b64(bytes: &[u8]) -> String {
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

impl Orchestrator {
    pub fn new(
        lm: Arc<dyn LanguageModel>,
        embeddings: Arc<EmbeddingService>,
        generator: Arc<dyn ImageGenerator>,
        blobs: BlobStore,
        clock: Arc<dyn Clock>,
        config: OrchestratorConfig,
    ) -> Self {
        Self { lm, embeddings, generator, blobs, clock, config }
    }

    pub fn config(&self) -> &OrchestratorConfig {
        &self.config
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    async fn rank_gesture(
        &self,
        session: &Session,
        gesture: &NavigationGesture,
        k: usize,
    ) -> Result<RankedGesture, OrchestratorError> {
        if k == 0 {
            return Err(OrchestratorError::InvalidRequest("k must be at least 1".into()));
        }
        let axis = session.axis(&gesture.axis_id).ok_or_else(|| OrchestratorError::UnknownAxis(gesture.axis_id.clone()))?;
        let candidates = candidates(axis, gesture.position)?;
        if candidates.is_empty() {
            return Ok(RankedGesture { descriptors: Vec::new(), fingerprint: sha256_hex(b"") });
        }

        let image_embedding = self.embeddings.embed_image(session.primary()).await?;
        let labels: Vec<String> = candidates.iter().map(|p| p.label.clone()).collect();
        let text_embeddings = self.embeddings.embed_texts(&labels).await?;
        let input = RankingInput::new(
            image_embedding,
            candidates.iter().map(|p| p.id.clone()).zip(text_embeddings).collect(),
        );
        let ranking = rank_descriptors_with(&input, self.config.polarity)?;

        let descriptors = ranking
            .descriptors
            .into_iter()
            .take(k)
            .map(|d| ScoredPerturbation {
                perturbation: axis.perturbation(&d.perturbation_id).expect("ranked ids come from the axis").clone(),
                score: d.score,
                rank: d.rank,
            })
            .collect();
        Ok(RankedGesture { descriptors, fingerprint: ranking.input_fingerprint })
    }

    /// Top `k` perturbations for a gesture, best first. Position 0 yields
    /// nothing.
    pub async fn gesture_to_descriptors(
        &self,
        session: &Session,
        gesture: &NavigationGesture,
        k: usize,
    ) -> Result<Vec<ScoredPerturbation>, OrchestratorError> {
        Ok(self.rank_gesture(session, gesture, k).await?.descriptors)
    }

    /// Scene description of the primary reference: cached on the session or
    /// asked of the language model.
    pub async fn base_description(&self, session: &Session) -> Result<String, OrchestratorError> {
        let primary = session.primary();
        if let Some(cached) = session.base_descriptions.get(&primary.id) {
            return Ok(cached.clone());
        }
        let missing = |reason: String| OrchestratorError::MissingBaseDescription { image_id: primary.id.clone(), reason };
        let bytes = self.blobs.get(&primary.payload_hash)?;
        let request = LmRequest {
            instruction_template_id: instructions::DESCRIBE_IMAGE.to_owned(),
            slots: Default::default(),
            image: Some(b64(&bytes)),
        };
        let response = self.lm.complete(&request).await.map_err(|e| missing(e.to_string()))?;
        response
            .get("description")
            .and_then(Value::as_str)
            .map(normalize_label)
            .filter(|d| !d.is_empty())
            .ok_or_else(|| missing("language model returned no description".into()))
    }

    /// Prompt for the primary reference with `descriptors` injected in the
    /// given order.
    pub async fn synthesize_prompt(
        &self,
        session: &Session,
        descriptors: &[Perturbation],
    ) -> Result<PromptSpec, OrchestratorError> {
        if descriptors.len() > PERTURBATIONS_PER_DIRECTION {
            return Err(OrchestratorError::InvalidRequest(format!(
                "at most {PERTURBATIONS_PER_DIRECTION} descriptors can be injected, got {}",
                descriptors.len()
            )));
        }
        let base = self.base_description(session).await?;
        Ok(PromptSpec::new(
            base,
            descriptors
                .iter()
                .map(|p| InjectedDescriptor { label: p.label.clone(), axis_id: p.axis_id.clone() })
                .collect(),
        ))
    }

    /// Previews a gesture and records the handle position on the session.
    pub async fn navigate(
        &self,
        session: &Session,
        gesture: &NavigationGesture,
        k: usize,
    ) -> Result<(Session, NavigationPreview), OrchestratorError> {
        let ranked = self.rank_gesture(session, gesture, k).await?;
        let injected: Vec<Perturbation> = ranked.descriptors.iter().map(|d| d.perturbation.clone()).collect();
        let prompt = self.synthesize_prompt(session, &injected).await?;
        let prompt_preview = prompt.render()?;

        let mut next = session.clone();
        next.base_descriptions.entry(session.primary_ref.clone()).or_insert_with(|| prompt.base_description.clone());
        next.navigation.insert(gesture.axis_id.clone(), gesture.position);
        next.updated_at = self.clock.now();
        Ok((next, NavigationPreview { descriptors: ranked.descriptors, prompt, prompt_preview }))
    }

    /// Generates a child of the primary reference. The primary reference
    /// itself does not change; promotion is a separate step.
    pub async fn generate(
        &self,
        session: &Session,
        gesture: &NavigationGesture,
        k: usize,
        seed: Option<u64>,
    ) -> Result<(Session, GenerationRecord), OrchestratorError> {
        let ranked = self.rank_gesture(session, gesture, k).await?;
        let injected: Vec<Perturbation> = ranked.descriptors.iter().map(|d| d.perturbation.clone()).collect();
        let prompt = self.synthesize_prompt(session, &injected).await?;
        let primary = session.primary();

        let reference_image = if self.config.send_reference_image {
            Some(b64(&self.blobs.get(&primary.payload_hash)?))
        } else {
            None
        };
        let request = GenerateRequest { prompt: prompt.render()?, reference_image, seed };

        let started = self.clock.now();
        let response = self.generator.generate(&request).await.map_err(|e| match e {
            ProviderError::Refused { message, .. } => OrchestratorError::GeneratorRefused(message),
            other => OrchestratorError::GeneratorUnavailable(other.to_string()),
        })?;
        let latency = (self.clock.now() - started).num_milliseconds().max(0) as u64;

        let bytes = base64::engine::general_purpose::STANDARD
            .decode(response.image.as_bytes())
            .map_err(|e| OrchestratorError::GeneratorUnavailable(format!("image is not valid base64: {e}")))?;
        if bytes.is_empty() {
            return Err(OrchestratorError::GeneratorUnavailable("generator returned an empty image".into()));
        }
        let payload_hash = self.blobs.put(&bytes)?;
        let ordinal = session.children_of(&primary.id).filter(|c| c.payload_hash == payload_hash).count();
        let image = ImageRef {
            id: ImageId::for_generated(&primary.id, &payload_hash, ordinal),
            payload_hash,
            origin: ImageOrigin::Generated,
            parent_id: Some(primary.id.clone()),
            prompt_used: Some(prompt.clone()),
        };

        let mut next = session.clone();
        next.base_descriptions.entry(primary.id.clone()).or_insert_with(|| prompt.base_description.clone());
        next.navigation.insert(gesture.axis_id.clone(), gesture.position);
        next.images.push(image.clone());
        next.updated_at = self.clock.now();
        crate::model::lineage_check(&next).map_err(OrchestratorError::InvalidSession)?;

        Ok((
            next,
            GenerationRecord { image, prompt, ranking_fingerprint: ranked.fingerprint, provider_latency_ms: latency },
        ))
    }

    /// Makes `image_id` the primary reference and re-centres every axis.
    pub fn promote_reference(&self, session: &Session, image_id: &ImageId) -> Result<Session, OrchestratorError> {
        promote_reference(session, image_id, self.clock.now())
    }
}

/// Clock-free form of [`Orchestrator::promote_reference`].
pub fn promote_reference(
    session: &Session,
    image_id: &ImageId,
    now: chrono::DateTime<chrono::Utc>,
) -> Result<Session, OrchestratorError> {
    if session.image(image_id).is_none() {
        return Err(OrchestratorError::UnknownImage(image_id.clone()));
    }
    let mut next = session.clone();
    // Promoting the current primary only touches the timestamp.
    if &next.primary_ref != image_id {
        next.primary_ref = image_id.clone();
        next.navigation.values_mut().for_each(|p| *p = 0.0);
    }
    next.updated_at = now;
    Ok(next)
}
