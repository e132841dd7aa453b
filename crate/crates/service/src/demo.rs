//! The demo scene shipped in `fixtures/`: a sunset image and the provider
//! exchanges recorded for it, so the CLI and API run offline.

use std::io::Cursor;
use std::path::Path;
use std::sync::Arc;

use base64::Engine;
use serde_json::{json, Value};
use thematic_core::canonical::{sha256_hex, to_canonical_json};
use thematic_core::model::dedup_key;
use thematic_core::orchestrator::NavigationGesture;
use thematic_core::providers::{
    FixtureFile, FixtureHeader, FixtureRecorder, FnTransport, GenerateRequest, LmRequest, ProviderClient,
    ProviderConfig, ProviderKind, TransportError,
};
use thematic_core::testkit::ThemeScript;

use crate::app::{self, AppState, BuildOptions, Clients};
use crate::config::Config;
use crate::error::{ApiError, ErrorCode};

pub const IMAGE_FILE: &str = "sunset-01.png";
pub const FIXTURES_FILE: &str = "mock-providers.json";
pub const CONFIG_FILE: &str = "mock.toml";
pub const SPACE_TAG: &str = "mock-64";
pub const DIM: usize = 64;
/// Generation seed the demo generator refuses.
pub const REFUSED_SEED: u64 = 666;

/// One recorded generation: theme label, position, k, seed.
pub type Move = (&'static str, f64, usize, u64);

/// Generations recorded on the uploaded image.
pub const ROOT_MOVES: &[Move] = &[("warm", 0.8, 3, 0), ("warm", 0.8, 3, REFUSED_SEED)];
/// Generations recorded after promoting the first generated image.
pub const PROMOTED_MOVES: &[Move] = &[("nostalgic", -0.5, 3, 1)];

fn encode_png(img: image::RgbImage) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).expect("PNG encoding into memory");
    out.into_inner()
}

/// A 64x64 dusk sky over dark water.
pub fn sunset_png() -> Vec<u8> {
    encode_png(image::RgbImage::from_fn(64, 64, |x, y| {
        if y < 40 {
            let t = y as f32 / 40.0;
            image::Rgb([(250.0 - 90.0 * t) as u8, (170.0 - 120.0 * t) as u8, (60.0 + 70.0 * t) as u8])
        } else {
            let glint = if (x + y) % 7 == 0 { 40 } else { 0 };
            image::Rgb([20 + glint, 30 + glint, 70 + glint])
        }
    }))
}

/// A 32x32 image whose colours derive from `digest`.
pub fn generated_png(digest: &str) -> Vec<u8> {
    let bytes = digest.as_bytes();
    encode_png(image::RgbImage::from_fn(32, 32, |x, y| {
        let i = ((x / 8) + 4 * (y / 8)) as usize * 3;
        image::Rgb([bytes[i % bytes.len()], bytes[(i + 1) % bytes.len()], bytes[(i + 2) % bytes.len()]])
    }))
}

/// Config replaying `fixtures` for every provider.
pub fn config(fixtures: &Path) -> Config {
    Config::mock(fixtures, SPACE_TAG, DIM)
}

/// What the scripted demo language model answers to a wire body.
pub fn language_model_response(body: &Value) -> Result<Value, TransportError> {
    let request: LmRequest = serde_json::from_value(body.clone()).map_err(|e| TransportError::Malformed(e.to_string()))?;
    ThemeScript::sunset().respond(&request).map_err(|e| TransportError::Malformed(e.to_string()))
}

/// What the demo generator answers to a wire body: a refusal for
/// [`REFUSED_SEED`], otherwise an image derived from the request.
pub fn generator_response(body: &Value) -> Result<Value, TransportError> {
    let request: GenerateRequest =
        serde_json::from_value(body.clone()).map_err(|e| TransportError::Malformed(e.to_string()))?;
    if request.seed == Some(REFUSED_SEED) {
        return Err(TransportError::Status {
            status: 400,
            body: Some(json!({ "refused": true, "message": "the demo generator declines this seed" })),
        });
    }
    let digest = sha256_hex(to_canonical_json(&request).expect("serializes").as_bytes());
    let image = base64::engine::general_purpose::STANDARD.encode(generated_png(&digest));
    Ok(json!({ "image": image, "provider_meta": { "generator": "demo" } }))
}

async fn apply(state: &AppState, session: &thematic_core::model::Session, m: &Move) -> Result<(), ApiError> {
    let (theme, position, k, seed) = *m;
    let axis = session.axes.iter().find(|a| dedup_key(&a.theme.label) == theme).expect("demo theme");
    let gesture = NavigationGesture::new(axis.id.clone(), position)?;
    match state.manager.generate(&session.id, &gesture, k, Some(seed)).await {
        Ok(_) => Ok(()),
        Err(e) => {
            let e = ApiError::from(e);
            if seed == REFUSED_SEED && e.code == ErrorCode::GeneratorRefused {
                Ok(())
            } else {
                Err(e)
            }
        }
    }
}

/// Runs the demo scene against scripted providers and returns every
/// language model and generator exchange. Embeddings are left to the mock
/// rule and not recorded.
pub async fn record(scratch: &Path) -> Result<FixtureFile, ApiError> {
    let recorder = FixtureRecorder::new(FixtureHeader::default());
    let config = config(Path::new(FIXTURES_FILE));
    let remote = |kind, transport: FnTransport| {
        ProviderClient::with_transport(ProviderConfig::remote(kind, "demo://scripted"), Arc::new(transport))
            .with_recorder(recorder.clone())
    };
    let clients = Clients {
        language_model: remote(ProviderKind::LanguageModel, FnTransport::new(|_, body| language_model_response(body))),
        embedder: ProviderClient::with_fixtures(config.providers.embedder.clone(), FixtureFile::default()),
        generator: remote(ProviderKind::Generator, FnTransport::new(|_, body| generator_response(body))),
    };
    let options = BuildOptions { storage_root: Some(scratch.to_path_buf()), seed: Some(0), recorder: None };
    let state = app::build_with(&config, options, clients)?;

    let session = state.manager.create_session(&sunset_png()).await?.session;
    for m in ROOT_MOVES {
        apply(&state, &session, m).await?;
    }
    let first_child = state.manager.get(&session.id)?.images[1].id.clone();
    let promoted = state.manager.promote(&session.id, &first_child).await?;
    for m in PROMOTED_MOVES {
        apply(&state, &promoted, m).await?;
    }
    Ok(recorder.snapshot())
}

/// The `mock.toml` written next to the fixtures.
pub fn config_toml() -> String {
    format!(
        r#"# Every provider replays {FIXTURES_FILE}; nothing touches the network.

[providers.language_model]
kind = "language_model"
mode = "mock"
fixture_path = "{FIXTURES_FILE}"

[providers.embedder]
kind = "embedder"
mode = "mock"
fixture_path = "{FIXTURES_FILE}"
space_tag = "{SPACE_TAG}"
embedding_dim = {DIM}

[providers.generator]
kind = "generator"
mode = "mock"
fixture_path = "{FIXTURES_FILE}"

[storage]
root = "data"
"#
    )
}
