//! Deterministic in-process providers for tests, examples and the guide.
//!
//! [`ThemeScript`] answers every language-model template from a small
//! declarative description. [`CountingEmbedder`] applies the mock embedding
//! rule and counts calls. [`HashImageGenerator`] derives image bytes from
//! the request, and can be told to refuse or fail.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use async_trait::async_trait;
use base64::Engine;
use parking_lot::Mutex;
use serde_json::{json, Value};

use crate::canonical::{sha256_hex, to_canonical_json};
use crate::instructions;
use crate::model::{dedup_key, PERTURBATIONS_PER_DIRECTION};
use crate::providers::{
    mock_embedding, EmbedRequest, EmbedResponse, Embedder, EmbeddingSpace, GenerateRequest, GenerateResponse,
    ImageGenerator, LanguageModel, LmRequest, ProviderError, ProviderKind,
};

/// Graded adverbs used to spell out perturbations for themes without an
/// explicit list.
pub const INTENSITY_WORDS: [&str; PERTURBATIONS_PER_DIRECTION] =
    ["faintly", "slightly", "moderately", "distinctly", "strongly", "intensely"];

/// Scripted answers for the language-model templates.
#[derive(Debug, Clone, Default)]
pub struct ThemeScript {
    /// Keywords in extraction order with their kind, `"object"` or
    /// `"thematic"`.
    pub keywords: Vec<(String, String)>,
    /// Opposite pole per theme. Themes without an entry get no usable
    /// answer, so the pipeline falls back to "less X" / "more X".
    pub opposites: BTreeMap<String, String>,
    /// Explicit perturbation lists per theme. Others are spelled out with
    /// [`INTENSITY_WORDS`].
    pub perturbations: BTreeMap<String, (Vec<String>, Vec<String>)>,
    pub description: String,
}

impl ThemeScript {
    pub fn new(description: impl Into<String>) -> Self {
        Self { description: description.into(), ..Self::default() }
    }

    pub fn keyword(mut self, label: &str, kind: &str) -> Self {
        self.keywords.push((label.to_owned(), kind.to_owned()));
        self
    }

    pub fn opposite(mut self, theme: &str, opposite: &str) -> Self {
        self.opposites.insert(dedup_key(theme), opposite.to_owned());
        self
    }

    pub fn perturbations(mut self, theme: &str, left: &[&str], right: &[&str]) -> Self {
        let owned = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        self.perturbations.insert(dedup_key(theme), (owned(left), owned(right)));
        self
    }

    /// The demo scene used throughout the guide and the CLI fixtures.
    pub fn sunset() -> Self {
        Self::new("a quiet beach at dusk with warm golden light")
            .keyword("beach", "object")
            .keyword("warm", "thematic")
            .keyword("nostalgic", "thematic")
            .keyword("golden hour", "object")
            .opposite("warm", "cool")
            .opposite("nostalgic", "futuristic")
    }

    /// The answer a model following the instruction templates would give.
    pub fn respond(&self, request: &LmRequest) -> Result<Value, ProviderError> {
        let slot = |name: &str| request.slots.get(name).cloned().unwrap_or_default();
        match request.instruction_template_id.as_str() {
            instructions::EXTRACT_KEYWORDS => {
                Ok(json!({ "keywords": self.keywords.iter().map(|(l, _)| l).collect::<Vec<_>>() }))
            }
            instructions::CLASSIFY_KEYWORDS => {
                let kinds: BTreeMap<String, &str> =
                    self.keywords.iter().map(|(l, k)| (dedup_key(l), k.as_str())).collect();
                let classifications: Vec<Value> = slot("keywords")
                    .lines()
                    .filter_map(|l| kinds.get(&dedup_key(l)).map(|k| json!({ "label": l, "kind": k })))
                    .collect();
                Ok(json!({ "classifications": classifications }))
            }
            instructions::AXIS_POLES => match self.opposites.get(&dedup_key(&slot("theme"))) {
                Some(opposite) => Ok(json!({ "opposite": opposite })),
                None => Ok(json!({})),
            },
            instructions::AXIS_PERTURBATIONS => {
                let (left, right) = match self.perturbations.get(&dedup_key(&slot("theme"))) {
                    Some(lists) => lists.clone(),
                    None => (graded(&slot("left_pole")), graded(&slot("right_pole"))),
                };
                Ok(json!({ "left": left, "right": right }))
            }
            instructions::DESCRIBE_IMAGE => Ok(json!({ "description": self.description })),
            other => Err(ProviderError::InvalidRequest {
                kind: ProviderKind::LanguageModel,
                reason: format!("no script for template {other:?}"),
            }),
        }
    }
}

fn graded(pole: &str) -> Vec<String> {
    INTENSITY_WORDS.iter().map(|w| format!("{w} {pole}")).collect()
}

/// A [`LanguageModel`] backed by a [`ThemeScript`] that keeps every
/// request it receives.
#[derive(Debug, Default)]
pub struct ScriptedLanguageModel {
    script: ThemeScript,
    calls: Mutex<Vec<LmRequest>>,
}

impl ScriptedLanguageModel {
    pub fn new(script: ThemeScript) -> Self {
        Self { script, calls: Mutex::new(Vec::new()) }
    }

    pub fn calls(&self) -> Vec<LmRequest> {
        self.calls.lock().clone()
    }

    pub fn calls_to(&self, template_id: &str) -> usize {
        self.calls.lock().iter().filter(|r| r.instruction_template_id == template_id).count()
    }
}

#[async_trait]
impl LanguageModel for ScriptedLanguageModel {
    async fn complete(&self, request: &LmRequest) -> Result<Value, ProviderError> {
        self.calls.lock().push(request.clone());
        self.script.respond(request)
    }
}

/// Embedder applying the mock embedding rule, with call counters.
#[derive(Debug)]
pub struct CountingEmbedder {
    space: EmbeddingSpace,
    /// Space the answers claim to be in; differs from `space` only when a
    /// test wants a mismatch.
    answer_space: EmbeddingSpace,
    seed: u64,
    batch_size: usize,
    calls: AtomicUsize,
    items: AtomicUsize,
}

impl CountingEmbedder {
    pub fn new(space_tag: &str, dim: usize, seed: u64) -> Self {
        let space = EmbeddingSpace { space_tag: space_tag.to_owned(), dim };
        Self { answer_space: space.clone(), space, seed, batch_size: 16, calls: AtomicUsize::new(0), items: AtomicUsize::new(0) }
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size;
        self
    }

    /// Answers in a different space from the one declared.
    pub fn answering_in(mut self, space_tag: &str, dim: usize) -> Self {
        self.answer_space = EmbeddingSpace { space_tag: space_tag.to_owned(), dim };
        self
    }

    /// Provider calls made so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Inputs embedded so far, across all calls.
    pub fn items(&self) -> usize {
        self.items.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl Embedder for CountingEmbedder {
    fn space(&self) -> &EmbeddingSpace {
        &self.space
    }

    fn batch_size(&self) -> usize {
        self.batch_size
    }

    async fn embed_batch(&self, requests: &[EmbedRequest]) -> Result<Vec<EmbedResponse>, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.items.fetch_add(requests.len(), Ordering::SeqCst);
        Ok(requests
            .iter()
            .map(|r| mock_embedding(self.seed, r, &self.answer_space.space_tag, self.answer_space.dim))
            .collect())
    }
}

/// What [`HashImageGenerator`] does with the next requests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GeneratorBehavior {
    Succeed,
    Refuse(String),
    Fail(String),
}

/// Generator whose image bytes are a pure function of the request. The
/// bytes start with the PNG signature so content sniffing sees an image,
/// but they are not a decodable picture.
#[derive(Debug)]
pub struct HashImageGenerator {
    behavior: Mutex<GeneratorBehavior>,
    calls: Mutex<Vec<GenerateRequest>>,
}

pub const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];

impl Default for HashImageGenerator {
    fn default() -> Self {
        Self::new()
    }
}

impl HashImageGenerator {
    pub fn new() -> Self {
        Self { behavior: Mutex::new(GeneratorBehavior::Succeed), calls: Mutex::new(Vec::new()) }
    }

    pub fn set_behavior(&self, behavior: GeneratorBehavior) {
        *self.behavior.lock() = behavior;
    }

    pub fn calls(&self) -> Vec<GenerateRequest> {
        self.calls.lock().clone()
    }

    /// The bytes this generator returns for `request`.
    pub fn image_for(request: &GenerateRequest) -> Vec<u8> {
        let digest = sha256_hex(to_canonical_json(request).expect("serializes").as_bytes());
        PNG_SIGNATURE.iter().copied().chain(digest.into_bytes()).collect()
    }
}

#[async_trait]
impl ImageGenerator for HashImageGenerator {
    async fn generate(&self, request: &GenerateRequest) -> Result<GenerateResponse, ProviderError> {
        self.calls.lock().push(request.clone());
        let kind = ProviderKind::Generator;
        match self.behavior.lock().clone() {
            GeneratorBehavior::Succeed => Ok(GenerateResponse {
                image: base64::engine::general_purpose::STANDARD.encode(Self::image_for(request)),
                provider_meta: json!({ "generator": "hash" }),
            }),
            GeneratorBehavior::Refuse(message) => Err(ProviderError::Refused { kind, message }),
            GeneratorBehavior::Fail(reason) => Err(ProviderError::Unavailable { kind, attempts: 1, reason }),
        }
    }
}

/// Everything needed to drive a [`SessionManager`](crate::sessions::SessionManager)
/// in memory, with handles on the fakes.
pub struct Harness {
    pub lm: Arc<ScriptedLanguageModel>,
    pub embedder: Arc<CountingEmbedder>,
    pub generator: Arc<HashImageGenerator>,
    pub manager: Arc<crate::sessions::SessionManager>,
}

impl Harness {
    /// A manager storing under `root`, with a stepping clock, seeded ids and
    /// a 16-dimensional mock embedding space.
    pub fn new(root: &std::path::Path, script: ThemeScript) -> Self {
        use crate::clock::{SeededIds, SteppingClock};
        use crate::embeddings::{EmbeddingService, DEFAULT_CACHE_CAPACITY};
        use crate::orchestrator::{Orchestrator, OrchestratorConfig};
        use crate::store::{BlobStore, SessionStore};
        use crate::themes::{ThemePipeline, ThemePipelineConfig};

        let lm = Arc::new(ScriptedLanguageModel::new(script));
        let embedder = Arc::new(CountingEmbedder::new("mock-16", 16, 0));
        let generator = Arc::new(HashImageGenerator::new());
        let blobs = BlobStore::new(root);
        let clock = Arc::new(SteppingClock::fixed());
        let pipeline = Arc::new(ThemePipeline::new(lm.clone(), blobs.clone(), ThemePipelineConfig::default()));
        let embeddings = Arc::new(EmbeddingService::new(embedder.clone(), blobs.clone(), DEFAULT_CACHE_CAPACITY));
        let orchestrator = Arc::new(Orchestrator::new(
            lm.clone(),
            embeddings,
            generator.clone(),
            blobs.clone(),
            clock.clone(),
            OrchestratorConfig::default(),
        ));
        let manager = crate::sessions::SessionManager::new(
            SessionStore::new(root),
            blobs,
            pipeline,
            orchestrator,
            Arc::new(SeededIds::new(0)),
            clock,
        );
        Self { lm, embedder, generator, manager: Arc::new(manager) }
    }
}
