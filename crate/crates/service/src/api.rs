//! HTTP routes.

use axum::body::Bytes;
use axum::extract::multipart::MultipartRejection;
use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thematic_core::model::{AxisId, ImageId, PromptSpec, Session, SessionId, Theme, ThemeAxis};
use thematic_core::orchestrator::{NavigationGesture, ScoredPerturbation};
use thematic_core::providers::ProviderError;
use tower_http::request_id::{MakeRequestUuid, PropagateRequestIdLayer, RequestId, SetRequestIdLayer};
use tower_http::trace::TraceLayer;

use crate::app::AppState;
use crate::error::{ApiError, ErrorCode};

/// Header carrying the request id, set by the caller or generated.
pub const REQUEST_ID_HEADER: &str = "x-request-id";

/// Multipart framing on top of the image limit.
const MULTIPART_OVERHEAD: usize = 64 * 1024;

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    let request_id = header::HeaderName::from_static(REQUEST_ID_HEADER);
    let body_limit = state.max_upload_bytes + MULTIPART_OVERHEAD;
    let authed = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session).delete(delete_session))
        .route("/sessions/{id}/navigate", post(navigate))
        .route("/sessions/{id}/generate", post(generate))
        .route("/sessions/{id}/promote", post(promote))
        .route("/sessions/{id}/themes", post(add_theme))
        .route("/sessions/{id}/images/{image_id}", get(image))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_bearer));
    Router::new()
        .route("/healthz", get(healthz))
        .merge(authed)
        .fallback(|| async { ApiError::new(ErrorCode::NotFound, "no such route") })
        .method_not_allowed_fallback(|| async { ApiError::new(ErrorCode::MethodNotAllowed, "method not allowed here") })
        .layer(DefaultBodyLimit::max(body_limit))
        .layer(PropagateRequestIdLayer::new(request_id.clone()))
        .layer(TraceLayer::new_for_http().make_span_with(|req: &Request| {
            let id = req.extensions().get::<RequestId>().and_then(|id| id.header_value().to_str().ok()).unwrap_or("");
            tracing::info_span!("request", method = %req.method(), path = %req.uri().path(), request_id = %id)
        }))
        .layer(SetRequestIdLayer::new(request_id, MakeRequestUuid))
        .with_state(state)
}

async fn require_bearer(State(state): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.bearer_token {
        let presented = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(token.as_str()) {
            return ApiError::new(ErrorCode::Unauthorized, "missing or wrong bearer token").into_response();
        }
    }
    next.run(req).await
}

/// Session ids are generated tokens; anything else cannot name a session.
fn session_id(raw: &str) -> ApiResult<SessionId> {
    let plausible = !raw.is_empty()
        && raw.len() <= 128
        && raw.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_');
    if !plausible {
        return Err(ApiError::new(ErrorCode::SessionNotFound, format!("session {raw:?} not found"))
            .with_details(json!({ "session_id": raw })));
    }
    Ok(SessionId::new(raw))
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    payload.map(|Json(v)| v).map_err(|e| ApiError::new(ErrorCode::BadRequest, e.body_text()))
}

#[derive(Debug, Serialize)]
pub struct CreatedBody {
    pub session: Session,
    pub themes: Vec<Theme>,
    pub axes: Vec<ThemeAxis>,
}

/// Checks that `bytes` is a PNG or JPEG that decodes.
pub fn check_image(bytes: &[u8]) -> ApiResult<()> {
    if bytes.is_empty() {
        return Err(ApiError::new(ErrorCode::InvalidImage, "the image is empty"));
    }
    let format = image::guess_format(bytes).map_err(|_| ApiError::new(ErrorCode::InvalidImage, "not a PNG or JPEG"))?;
    if !matches!(format, image::ImageFormat::Png | image::ImageFormat::Jpeg) {
        return Err(ApiError::new(ErrorCode::InvalidImage, format!("{format:?} images are not accepted")));
    }
    image::load_from_memory_with_format(bytes, format)
        .map_err(|e| ApiError::new(ErrorCode::InvalidImage, format!("image does not decode: {e}")))?;
    Ok(())
}

fn too_large(limit: usize) -> ApiError {
    ApiError::new(ErrorCode::PayloadTooLarge, format!("images are limited to {limit} bytes"))
        .with_details(json!({ "max_upload_bytes": limit }))
}

async fn create_session(
    State(state): State<AppState>,
    multipart: Result<Multipart, MultipartRejection>,
) -> ApiResult<impl IntoResponse> {
    let mut multipart = multipart.map_err(|e| ApiError::new(ErrorCode::BadRequest, e.body_text()))?;
    let limit = state.max_upload_bytes;
    let multipart_error = |e: axum::extract::multipart::MultipartError| {
        if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
            too_large(limit)
        } else {
            ApiError::new(ErrorCode::BadRequest, e.body_text())
        }
    };
    let mut upload: Option<Bytes> = None;
    while let Some(field) = multipart.next_field().await.map_err(multipart_error)? {
        if field.name() == Some("image") {
            upload = Some(field.bytes().await.map_err(multipart_error)?);
        }
    }
    let bytes = upload.ok_or_else(|| ApiError::new(ErrorCode::BadRequest, "multipart field \"image\" is required"))?;
    if bytes.len() > limit {
        return Err(too_large(limit));
    }
    check_image(&bytes)?;
    let created = state.manager.create_session(&bytes).await?;
    let body = CreatedBody { session: created.session, themes: created.themes, axes: created.axes };
    Ok((StatusCode::CREATED, Json(body)))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Session>> {
    Ok(Json(state.manager.get(&session_id(&id)?)?))
}

async fn delete_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    let id = session_id(&id)?;
    if state.manager.delete(&id).await? {
        Ok(StatusCode::NO_CONTENT)
    } else {
        Err(thematic_core::sessions::SessionError::NotFound(id).into())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GestureBody {
    pub axis_id: AxisId,
    pub position: f64,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl GestureBody {
    fn gesture(&self) -> ApiResult<NavigationGesture> {
        Ok(NavigationGesture::new(self.axis_id.clone(), self.position)?)
    }
}

#[derive(Debug, Serialize)]
pub struct NavigateBody {
    pub descriptors: Vec<ScoredPerturbation>,
    pub prompt_preview: String,
    pub prompt: PromptSpec,
}

async fn navigate(
    State(state): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<GestureBody>, JsonRejection>,
) -> ApiResult<Json<NavigateBody>> {
    let id = session_id(&id)?;
    let req = body(payload)?;
    if req.seed.is_some() {
        return Err(ApiError::new(ErrorCode::BadRequest, "navigate takes no seed"));
    }
    let preview = state.manager.navigate(&id, &req.gesture()?, req.k.unwrap_or(state.default_k)).await?;
    Ok(Json(NavigateBody {
        descriptors: preview.descriptors,
        prompt_preview: preview.prompt_preview,
        prompt: preview.prompt,
    }))
}

#[derive(Debug, Serialize)]
pub struct GeneratedBody {
    pub image_id: ImageId,
    pub parent_id: ImageId,
    pub payload_hash: String,
    pub prompt: String,
    pub prompt_spec: PromptSpec,
    pub ranking_fingerprint: String,
    pub provider_latency_ms: u64,
}

async fn generate(
    State(state): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<GestureBody>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let id = session_id(&id)?;
    let req = body(payload)?;
    let record = state.manager.generate(&id, &req.gesture()?, req.k.unwrap_or(state.default_k), req.seed).await?;
    let prompt = record.prompt.render().map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))?;
    let body = GeneratedBody {
        parent_id: record.image.parent_id.clone().expect("generated images have parents"),
        image_id: record.image.id,
        payload_hash: record.image.payload_hash,
        prompt,
        prompt_spec: record.prompt,
        ranking_fingerprint: record.ranking_fingerprint,
        provider_latency_ms: record.provider_latency_ms,
    };
    Ok((StatusCode::CREATED, Json(body)))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromoteBody {
    pub image_id: ImageId,
}

#[derive(Debug, Serialize)]
pub struct SessionBody {
    pub session: Session,
}

async fn promote(
    State(state): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<PromoteBody>, JsonRejection>,
) -> ApiResult<Json<SessionBody>> {
    let id = session_id(&id)?;
    let req = body(payload)?;
    Ok(Json(SessionBody { session: state.manager.promote(&id, &req.image_id).await? }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThemeBody {
    pub label: String,
    #[serde(default)]
    pub poles: Option<(String, String)>,
}

#[derive(Debug, Serialize)]
pub struct ThemeAddedBody {
    pub session: Session,
    pub axis: ThemeAxis,
}

async fn add_theme(
    State(state): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<ThemeBody>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let id = session_id(&id)?;
    let req = body(payload)?;
    if req.label.trim().is_empty() {
        return Err(ApiError::new(ErrorCode::ValidationFailed, "theme label is empty"));
    }
    let (session, axis) = state.manager.add_theme(&id, &req.label, req.poles).await?;
    Ok((StatusCode::CREATED, Json(ThemeAddedBody { session, axis })))
}

/// Content type from the image's magic bytes.
pub fn content_type(bytes: &[u8]) -> &'static str {
    match image::guess_format(bytes) {
        Ok(image::ImageFormat::Png) => "image/png",
        Ok(image::ImageFormat::Jpeg) => "image/jpeg",
        Ok(image::ImageFormat::WebP) => "image/webp",
        Ok(image::ImageFormat::Gif) => "image/gif",
        _ => "application/octet-stream",
    }
}

async fn image(
    State(state): State<AppState>,
    Path((id, image_id)): Path<(String, String)>,
) -> ApiResult<Response> {
    let id = session_id(&id)?;
    let (_, bytes) = state.manager.image_bytes(&id, &ImageId::new(image_id))?;
    let content_type = HeaderValue::from_static(content_type(&bytes));
    Ok(([(header::CONTENT_TYPE, content_type)], bytes).into_response())
}

async fn healthz(State(state): State<AppState>) -> Response {
    let mut providers = serde_json::Map::new();
    let mut failures = Vec::new();
    for probe in &state.probes {
        let status = match probe.probe().await {
            Ok(()) => "ok".to_owned(),
            Err(e) => {
                failures.push(probe.kind().as_str());
                match e {
                    ProviderError::Unavailable { reason, .. } => reason,
                    other => other.to_string(),
                }
            }
        };
        providers.insert(probe.kind().as_str().to_owned(), json!(status));
    }
    if failures.is_empty() {
        (StatusCode::OK, Json(json!({ "status": "ok", "providers": providers }))).into_response()
    } else {
        ApiError::new(ErrorCode::ProvidersUnhealthy, format!("unreachable: {}", failures.join(", ")))
            .with_details(json!({ "providers": providers }))
            .into_response()
    }
}
