mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use axum::extract::Path as UrlPath;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use common::{fixtures_dir, snapshot};
use serde_json::{json, Value};
use thematic_core::providers::TransportError;
use thematic_service::demo;

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/run")
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thematic-plane")).args(args).output().unwrap()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn run_demo(config: &Path, out: &Path, axis: &str, position: &str) -> Output {
    let image = fixtures_dir().join(demo::IMAGE_FILE);
    cli(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--image",
        image.to_str().unwrap(),
        "--axis",
        axis,
        "--position",
        position,
        "--k",
        "3",
        "--out",
        out.to_str().unwrap(),
    ])
}

fn mock_config() -> PathBuf {
    fixtures_dir().join(demo::CONFIG_FILE)
}

#[test]
fn golden_run_is_byte_identical_twice() {
    let golden = snapshot(&golden_dir());
    assert_eq!(golden.len(), 5);
    for _ in 0..2 {
        let out = tempfile::tempdir().unwrap();
        let started = Instant::now();
        let output = run_demo(&mock_config(), out.path(), "warm", "0.8");
        assert!(output.status.success(), "{}", stderr(&output));
        assert!(started.elapsed() < Duration::from_secs(10));
        assert_eq!(snapshot(out.path()), golden);
    }
}

#[test]
fn missing_config_exits_two_and_names_the_path() {
    let out = tempfile::tempdir().unwrap();
    let missing = out.path().join("nowhere.toml");
    let output = run_demo(&missing, &out.path().join("o"), "warm", "0.8");
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("nowhere.toml"), "{}", stderr(&output));
}

#[test]
fn out_of_range_position_exits_one() {
    let out = tempfile::tempdir().unwrap();
    let output = run_demo(&mock_config(), out.path(), "warm", "2.0");
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr(&output).contains("position_out_of_range"));
    assert!(snapshot(out.path()).is_empty());
}

#[test]
fn unknown_axis_exits_four() {
    let out = tempfile::tempdir().unwrap();
    let output = run_demo(&mock_config(), out.path(), "cosmic", "0.5");
    assert_eq!(output.status.code(), Some(4));
    assert!(stderr(&output).contains("unknown_axis"));
}

#[test]
fn unrecorded_generation_exits_three() {
    let out = tempfile::tempdir().unwrap();
    let output = run_demo(&mock_config(), out.path(), "warm", "-0.3");
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(cli(&["run", "--bogus"]).status.code(), Some(1));
    assert_eq!(cli(&["--help"]).status.code(), Some(0));
}

#[test]
fn committed_fixtures_replay() {
    let path = fixtures_dir().join(demo::FIXTURES_FILE);
    let output = cli(&["fixtures", "replay", "--fixtures", path.to_str().unwrap()]);
    assert!(output.status.success(), "{}", stderr(&output));
}

#[test]
fn tampered_fixtures_fail_replay() {
    let dir = tempfile::tempdir().unwrap();
    let mut file: Value =
        serde_json::from_str(&std::fs::read_to_string(fixtures_dir().join(demo::FIXTURES_FILE)).unwrap()).unwrap();
    let entries = file["entries"].as_object_mut().unwrap();
    let key = entries.keys().next().unwrap().clone();
    let entry = entries.remove(&key).unwrap();
    entries.insert("0".repeat(64), entry);
    let path = dir.path().join("tampered.json");
    std::fs::write(&path, serde_json::to_string(&file).unwrap()).unwrap();
    let output = cli(&["fixtures", "replay", "--fixtures", path.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1));
}

fn stub_reply(result: Result<Value, TransportError>) -> Response {
    match result {
        Ok(v) => Json(v).into_response(),
        Err(TransportError::Status { status, body }) => {
            (StatusCode::from_u16(status).unwrap(), Json(body.unwrap_or(Value::Null))).into_response()
        }
        Err(e) => (StatusCode::BAD_REQUEST, e.to_string()).into_response(),
    }
}

async fn stub_call(UrlPath(operation): UrlPath<String>, Json(body): Json<Value>) -> Response {
    match operation.as_str() {
        "complete" => stub_reply(demo::language_model_response(&body)),
        "generate" => stub_reply(demo::generator_response(&body)),
        _ => StatusCode::NOT_FOUND.into_response(),
    }
}

/// Serves the demo language model and generator over HTTP.
async fn provider_stub() -> String {
    let app = Router::new().route("/", get(|| async { "ok" })).route("/{operation}", post(stub_call));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    format!("http://{addr}")
}

fn provider_config(endpoint: Option<&str>, fixtures: &str) -> String {
    let slot = |kind: &str| match endpoint {
        Some(e) => format!("[providers.{kind}]\nkind = \"{kind}\"\nmode = \"remote\"\nendpoint = \"{e}\"\nmax_retries = 0\n"),
        None => format!("[providers.{kind}]\nkind = \"{kind}\"\nmode = \"mock\"\nfixture_path = \"{fixtures}\"\n"),
    };
    format!(
        "{}\n[providers.embedder]\nkind = \"embedder\"\nmode = \"mock\"\nfixture_path = \"{fixtures}\"\nspace_tag = \"{}\"\nembedding_dim = {}\n\n{}",
        slot("language_model"),
        demo::SPACE_TAG,
        demo::DIM,
        slot("generator"),
    )
}

#[tokio::test(flavor = "multi_thread")]
async fn recorded_fixtures_reproduce_the_golden_run() {
    let endpoint = provider_stub().await;
    let dir = tempfile::tempdir().unwrap();
    let fixtures = dir.path().join("recorded.json");
    let mut empty: Value =
        serde_json::from_str(&std::fs::read_to_string(fixtures_dir().join(demo::FIXTURES_FILE)).unwrap()).unwrap();
    empty["entries"] = json!({});
    std::fs::write(&fixtures, serde_json::to_string(&empty).unwrap()).unwrap();

    let remote = dir.path().join("remote.toml");
    std::fs::write(&remote, provider_config(Some(&endpoint), "recorded.json")).unwrap();
    let image = fixtures_dir().join(demo::IMAGE_FILE);
    let args: Vec<String> = [
        "fixtures",
        "record",
        "--config",
        remote.to_str().unwrap(),
        "--image",
        image.to_str().unwrap(),
        "--axis",
        "warm",
        "--position",
        "0.8",
        "--out",
        fixtures.to_str().unwrap(),
    ]
    .map(String::from)
    .to_vec();
    let output = tokio::task::spawn_blocking(move || cli(&args.iter().map(String::as_str).collect::<Vec<_>>()))
        .await
        .unwrap();
    assert!(output.status.success(), "{}", stderr(&output));

    let replay = cli(&["fixtures", "replay", "--fixtures", fixtures.to_str().unwrap()]);
    assert!(replay.status.success(), "{}", stderr(&replay));

    let mock = dir.path().join("mock.toml");
    std::fs::write(&mock, provider_config(None, "recorded.json")).unwrap();
    let out = dir.path().join("out");
    let output = run_demo(&mock, &out, "warm", "0.8");
    assert!(output.status.success(), "{}", stderr(&output));
    assert_eq!(snapshot(&out), snapshot(&golden_dir()));
}
