#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use thematic_service::app::{self, AppState, BuildOptions};
use thematic_service::demo;
use tower::ServiceExt;

pub const BOUNDARY: &str = "thematic-test-boundary";

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

pub fn fixtures_dir() -> PathBuf {
    workspace_root().join("fixtures")
}

pub fn sunset() -> Vec<u8> {
    std::fs::read(fixtures_dir().join(demo::IMAGE_FILE)).unwrap()
}

/// State replaying the committed demo fixtures, storing under `root`.
pub fn fixture_state(root: &Path) -> AppState {
    let config = demo::config(&fixtures_dir().join(demo::FIXTURES_FILE));
    app::build(&config, BuildOptions { storage_root: Some(root.to_path_buf()), seed: Some(0), recorder: None }).unwrap()
}

pub fn schema() -> &'static Value {
    static SCHEMA: OnceLock<Value> = OnceLock::new();
    SCHEMA.get_or_init(|| {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/api.schema.json");
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
    })
}

/// Errors from validating `value` against `$defs/<def>`.
pub fn schema_errors(def: &str, value: &Value) -> Vec<String> {
    let mut root = schema().clone();
    root["$ref"] = Value::String(format!("#/$defs/{def}"));
    let validator = jsonschema::validator_for(&root).unwrap();
    validator.iter_errors(value).map(|e| format!("{} at {}", e, e.instance_path())).collect()
}

pub fn assert_valid(def: &str, value: &Value) {
    let errors = schema_errors(def, value);
    assert!(errors.is_empty(), "{def} violations: {errors:?}\n{value:#}");
}

/// Every file under `root`, by relative path.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        let Ok(entries) = std::fs::read_dir(dir) else { return };
        for entry in entries {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(&path, root, out);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

pub struct Response {
    pub status: StatusCode,
    pub headers: axum::http::HeaderMap,
    pub bytes: Vec<u8>,
}

impl Response {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.bytes)
            .unwrap_or_else(|e| panic!("{} body is not JSON ({e}): {:?}", self.status, String::from_utf8_lossy(&self.bytes)))
    }

    pub fn code(&self) -> String {
        self.json()["code"].as_str().unwrap().to_owned()
    }
}

pub fn multipart(field: &str, bytes: &[u8]) -> Vec<u8> {
    let mut body = format!(
        "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"{field}\"; filename=\"upload\"\r\nContent-Type: application/octet-stream\r\n\r\n"
    )
    .into_bytes();
    body.extend_from_slice(bytes);
    body.extend_from_slice(format!("\r\n--{BOUNDARY}--\r\n").as_bytes());
    body
}

/// A router plus the directory its store writes to.
pub struct Api {
    pub router: Router,
    pub root: PathBuf,
    pub token: Option<String>,
}

impl Api {
    pub fn new(state: AppState, root: &Path) -> Self {
        Self { router: thematic_service::api::router(state), root: root.to_path_buf(), token: None }
    }

    pub async fn send(&self, request: Request<Body>) -> Response {
        let response = self.router.clone().oneshot(request).await.unwrap();
        let status = response.status();
        let headers = response.headers().clone();
        let bytes = response.into_body().collect().await.unwrap().to_bytes().to_vec();
        Response { status, headers, bytes }
    }

    fn builder(&self, method: Method, uri: &str) -> axum::http::request::Builder {
        let mut b = Request::builder().method(method).uri(uri);
        if let Some(t) = &self.token {
            b = b.header(header::AUTHORIZATION, format!("Bearer {t}"));
        }
        b
    }

    /// Sends a request and checks the response against the schema: error
    /// statuses must carry an `ApiError` and leave the store untouched;
    /// successes must match `success_def`.
    pub async fn checked(&self, request: Request<Body>, success_def: Option<&str>) -> Response {
        let before = snapshot(&self.root);
        let response = self.send(request).await;
        if response.status.is_client_error() || response.status.is_server_error() {
            assert_valid("ApiError", &response.json());
            assert_eq!(snapshot(&self.root), before, "{} changed stored state", response.status);
        } else if let Some(def) = success_def {
            assert_valid(def, &response.json());
        }
        response
    }

    pub async fn get(&self, uri: &str, success_def: Option<&str>) -> Response {
        self.checked(self.builder(Method::GET, uri).body(Body::empty()).unwrap(), success_def).await
    }

    pub async fn delete(&self, uri: &str) -> Response {
        self.checked(self.builder(Method::DELETE, uri).body(Body::empty()).unwrap(), None).await
    }

    pub async fn post(&self, uri: &str, body: Value, success_def: &str) -> Response {
        let request = self
            .builder(Method::POST, uri)
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(body.to_string()))
            .unwrap();
        self.checked(request, Some(success_def)).await
    }

    pub async fn post_raw(&self, uri: &str, content_type: &str, body: Vec<u8>) -> Response {
        let request =
            self.builder(Method::POST, uri).header(header::CONTENT_TYPE, content_type).body(Body::from(body)).unwrap();
        self.checked(request, None).await
    }

    pub async fn upload(&self, bytes: &[u8]) -> Response {
        let request = self
            .builder(Method::POST, "/sessions")
            .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={BOUNDARY}"))
            .body(Body::from(multipart("image", bytes)))
            .unwrap();
        self.checked(request, Some("CreateSessionResponse")).await
    }
}
