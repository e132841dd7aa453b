//! From an image to bipolar theme axes.
//!
//! The language model first lists keywords for the image, then classifies
//! each one as an object or a thematic quality in a second call. Thematic
//! keywords become [`Theme`]s, and each theme is expanded into a
//! [`ThemeAxis`]: an opposite pole plus six graded perturbations per side.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;
use std::time::Duration;

use base64::Engine;
use futures::{StreamExt, TryStreamExt};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::instructions;
use crate::model::{
    dedup_key, normalize_label, AxisId, Direction, ImageRef, Perturbation, Theme, ThemeAxis, ThemeSource,
    PERTURBATIONS_PER_AXIS, PERTURBATIONS_PER_DIRECTION,
};
use crate::providers::{LanguageModel, LmRequest, ProviderError, ProviderKind};
use crate::store::{BlobStore, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeywordKind {
    Object,
    Thematic,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordCandidate {
    pub label: String,
    pub kind: KeywordKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisRequest {
    pub theme: Theme,
    /// Caller-chosen `(left, right)` poles; skips pole generation.
    pub pole_hint: Option<(String, String)>,
    pub perturbation_count: usize,
}

impl AxisRequest {
    pub fn new(theme: Theme) -> Self {
        Self { theme, pole_hint: None, perturbation_count: PERTURBATIONS_PER_AXIS }
    }

    pub fn with_poles(mut self, left: impl Into<String>, right: impl Into<String>) -> Self {
        self.pole_hint = Some((left.into(), right.into()));
        self
    }
}

#[derive(Debug, Error)]
pub enum ThemeError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("the language model returned no usable keywords")]
    EmptyExtraction,
    #[error("classification omitted {missing:?}")]
    ClassificationIncomplete { missing: Vec<String> },
    #[error("no thematic keywords found; add a theme manually")]
    NoThemesFound,
    #[error("only {got} usable perturbations for theme {theme:?}, need 6 per side")]
    IncompleteAxis { theme: String, got: usize, partial: Vec<String> },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Storage(#[from] StoreError),
}

#[derive(Debug, Clone)]
pub struct ThemePipelineConfig {
    /// Most themes surfaced per image.
    pub max_themes: usize,
    /// Axis builds in flight at once.
    pub max_concurrent_calls: usize,
    pub call_timeout: Duration,
}

impl Default for ThemePipelineConfig {
    fn default() -> Self {
        Self { max_themes: 4, max_concurrent_calls: 4, call_timeout: Duration::from_secs(30) }
    }
}

pub struct ThemePipeline {
    lm: Arc<dyn LanguageModel>,
    blobs: BlobStore,
    config: ThemePipelineConfig,
}

fn contract(reason: impl Into<String>) -> ThemeError {
    ThemeError::Provider(ProviderError::ContractViolation { kind: ProviderKind::LanguageModel, reason: reason.into() })
}

fn string_list(response: &Value, field: &str) -> Result<Vec<String>, ThemeError> {
    let items = response
        .get(field)
        .and_then(Value::as_array)
        .ok_or_else(|| contract(format!("expected a {field:?} array")))?;
    items
        .iter()
        .map(|v| v.as_str().map(str::to_owned).ok_or_else(|| contract(format!("{field:?} entries must be strings"))))
        .collect()
}

/// Normalizes labels and drops empties and case/whitespace duplicates,
/// keeping first occurrences. `seen` carries keys across calls.
fn dedup_into(labels: Vec<String>, seen: &mut HashSet<String>) -> Vec<String> {
    labels
        .into_iter()
        .map(|l| normalize_label(&l))
        .filter(|l| !l.is_empty() && seen.insert(dedup_key(l)))
        .collect()
}

impl ThemePipeline {
    pub fn new(lm: Arc<dyn LanguageModel>, blobs: BlobStore, config: ThemePipelineConfig) -> Self {
        Self { lm, blobs, config }
    }

    pub fn config(&self) -> &ThemePipelineConfig {
        &self.config
    }

    async fn ask(&self, template: &str, slots: BTreeMap<String, String>, image: Option<String>) -> Result<Value, ThemeError> {
        let request = LmRequest { instruction_template_id: template.to_owned(), slots, image };
        match tokio::time::timeout(self.config.call_timeout, self.lm.complete(&request)).await {
            Ok(result) => Ok(result?),
            Err(_) => Err(ProviderError::Unavailable {
                kind: ProviderKind::LanguageModel,
                attempts: 1,
                reason: format!("no answer within {:?}", self.config.call_timeout),
            }
            .into()),
        }
    }

    fn image_payload(&self, image: &ImageRef) -> Result<String, ThemeError> {
        let bytes = self.blobs.get(&image.payload_hash)?;
        Ok(base64::engine::general_purpose::STANDARD.encode(bytes))
    }

    /// Keywords for `image`, deduplicated, in provider order, all `Unknown`.
    pub async fn extract_keywords(&self, image: &ImageRef) -> Result<Vec<KeywordCandidate>, ThemeError> {
        self.extract_from_payload(self.image_payload(image)?).await
    }

    async fn extract_from_payload(&self, payload: String) -> Result<Vec<KeywordCandidate>, ThemeError> {
        let response = self.ask(instructions::EXTRACT_KEYWORDS, BTreeMap::new(), Some(payload)).await?;
        let labels = dedup_into(string_list(&response, "keywords")?, &mut HashSet::new());
        if labels.is_empty() {
            return Err(ThemeError::EmptyExtraction);
        }
        Ok(labels.into_iter().map(|label| KeywordCandidate { label, kind: KeywordKind::Unknown }).collect())
    }

    /// Asks the language model to mark each candidate as object or thematic.
    pub async fn classify_keywords(&self, candidates: Vec<KeywordCandidate>) -> Result<Vec<KeywordCandidate>, ThemeError> {
        if let Some(c) = candidates.iter().find(|c| c.kind != KeywordKind::Unknown) {
            return Err(ThemeError::InvalidRequest(format!("{:?} is already classified", c.label)));
        }
        if candidates.is_empty() {
            return Ok(candidates);
        }

        let listing = candidates.iter().map(|c| c.label.as_str()).collect::<Vec<_>>().join("\n");
        let slots = BTreeMap::from([("keywords".to_owned(), listing)]);
        let response = self.ask(instructions::CLASSIFY_KEYWORDS, slots, None).await?;
        let entries = response
            .get("classifications")
            .and_then(Value::as_array)
            .ok_or_else(|| contract("expected a \"classifications\" array"))?;

        let mut kinds = HashMap::new();
        for entry in entries {
            let (Some(label), Some(kind)) =
                (entry.get("label").and_then(Value::as_str), entry.get("kind").and_then(Value::as_str))
            else {
                return Err(contract("classification entries need label and kind"));
            };
            let kind = match kind {
                "object" => KeywordKind::Object,
                "thematic" => KeywordKind::Thematic,
                _ => continue,
            };
            kinds.entry(dedup_key(label)).or_insert(kind);
        }

        let mut missing = Vec::new();
        let classified = candidates
            .into_iter()
            .map(|c| match kinds.get(&dedup_key(&c.label)) {
                Some(&kind) => KeywordCandidate { kind, ..c },
                None => {
                    missing.push(c.label.clone());
                    c
                }
            })
            .collect();
        if missing.is_empty() {
            Ok(classified)
        } else {
            Err(ThemeError::ClassificationIncomplete { missing })
        }
    }

    /// Builds one axis: poles from the hint or the language model (falling
    /// back to "less X" / "more X"), then six perturbations per side ordered
    /// mild to strong. Never pads a short answer.
    pub async fn build_axis(&self, request: &AxisRequest) -> Result<ThemeAxis, ThemeError> {
        if request.perturbation_count != PERTURBATIONS_PER_AXIS {
            return Err(ThemeError::InvalidRequest(format!(
                "perturbation_count must be {PERTURBATIONS_PER_AXIS}, got {}",
                request.perturbation_count
            )));
        }
        let theme = &request.theme;
        let label = normalize_label(&theme.label);
        if label.is_empty() {
            return Err(ThemeError::InvalidRequest("theme label is empty".into()));
        }

        let (left_pole, right_pole) = match &request.pole_hint {
            Some((left, right)) => {
                let (left, right) = (normalize_label(left), normalize_label(right));
                if left.is_empty() || right.is_empty() || dedup_key(&left) == dedup_key(&right) {
                    return Err(ThemeError::InvalidRequest("pole hint needs two distinct labels".into()));
                }
                (left, right)
            }
            None => match self.opposite_pole(&label).await {
                Some(opposite) => (opposite, label.clone()),
                None => (format!("less {label}"), format!("more {label}")),
            },
        };

        let slots = BTreeMap::from([
            ("theme".to_owned(), label.clone()),
            ("left_pole".to_owned(), left_pole.clone()),
            ("right_pole".to_owned(), right_pole.clone()),
            ("per_direction".to_owned(), PERTURBATIONS_PER_DIRECTION.to_string()),
        ]);
        let response = self.ask(instructions::AXIS_PERTURBATIONS, slots, None).await?;

        let mut seen = HashSet::new();
        let mut left = dedup_into(string_list(&response, "left")?, &mut seen);
        let mut right = dedup_into(string_list(&response, "right")?, &mut seen);
        left.truncate(PERTURBATIONS_PER_DIRECTION);
        right.truncate(PERTURBATIONS_PER_DIRECTION);
        if left.len() < PERTURBATIONS_PER_DIRECTION || right.len() < PERTURBATIONS_PER_DIRECTION {
            return Err(ThemeError::IncompleteAxis {
                theme: label,
                got: left.len() + right.len(),
                partial: left.into_iter().chain(right).collect(),
            });
        }

        let axis_id = AxisId::for_theme(&theme.id);
        let perturbations = [(Direction::Left, left), (Direction::Right, right)]
            .into_iter()
            .flat_map(|(direction, labels)| {
                let axis_id = axis_id.clone();
                labels.into_iter().enumerate().map(move |(i, label)| {
                    let rank = i as u8 + 1;
                    Perturbation {
                        id: Perturbation::id_for(&axis_id, direction, rank),
                        axis_id: axis_id.clone(),
                        label,
                        direction,
                        intensity_rank: rank,
                    }
                })
            })
            .collect();

        Ok(ThemeAxis {
            id: axis_id,
            theme: theme.clone(),
            left_pole_label: left_pole,
            right_pole_label: right_pole,
            perturbations,
        })
    }

    async fn opposite_pole(&self, label: &str) -> Option<String> {
        let slots = BTreeMap::from([("theme".to_owned(), label.to_owned())]);
        let opposite = match self.ask(instructions::AXIS_POLES, slots, None).await {
            Ok(response) => response.get("opposite").and_then(Value::as_str).map(normalize_label),
            Err(err) => {
                tracing::warn!(theme = label, error = %err, "pole generation failed, using fallback poles");
                None
            }
        };
        opposite.filter(|o| !o.is_empty() && dedup_key(o) != dedup_key(label))
    }

    /// Runs extraction, classification and filtering, then builds axes for
    /// at most `max_themes` themes with bounded concurrency.
    pub async fn themes_and_axes(&self, image: &ImageRef) -> Result<(Vec<Theme>, Vec<ThemeAxis>), ThemeError> {
        self.themes_and_axes_for(&self.blobs.get(&image.payload_hash)?).await
    }

    /// [`themes_and_axes`](Self::themes_and_axes) for image bytes that are
    /// not in the blob store.
    pub async fn themes_and_axes_for(&self, image: &[u8]) -> Result<(Vec<Theme>, Vec<ThemeAxis>), ThemeError> {
        let candidates = self.extract_from_payload(base64::engine::general_purpose::STANDARD.encode(image)).await?;
        let classified = self.classify_keywords(candidates).await?;
        let mut themes = filter_thematic(&classified)?;
        themes.truncate(self.config.max_themes.max(1));

        let axes = futures::stream::iter(themes.iter().cloned().map(AxisRequest::new))
            .map(|request| async move { self.build_axis(&request).await })
            .buffered(self.config.max_concurrent_calls.max(1))
            .try_collect()
            .await?;
        Ok((themes, axes))
    }
}

/// Themes for exactly the thematic candidates, in input order.
pub fn filter_thematic(candidates: &[KeywordCandidate]) -> Result<Vec<Theme>, ThemeError> {
    if let Some(c) = candidates.iter().find(|c| c.kind == KeywordKind::Unknown) {
        return Err(ThemeError::InvalidRequest(format!("{:?} has not been classified", c.label)));
    }
    let themes: Vec<Theme> = candidates
        .iter()
        .filter(|c| c.kind == KeywordKind::Thematic)
        .map(|c| Theme::new(&c.label, ThemeSource::Extracted))
        .collect();
    if themes.is_empty() {
        Err(ThemeError::NoThemesFound)
    } else {
        Ok(themes)
    }
}
