//! Command-line entry points: `serve`, `run` and `fixtures`.

use std::ffi::OsString;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Parser, Subcommand};
use serde_json::json;
use thematic_core::canonical::to_canonical_json_pretty;
use thematic_core::model::{dedup_key, Session};
use thematic_core::orchestrator::{GenerationRecord, NavigationGesture};
use thematic_core::providers::{FixtureFile, ProviderClient, ProviderConfig, ProviderKind};

use crate::app::{self, BuildOptions};
use crate::config::{Config, ConfigError};
use crate::error::{ApiError, ErrorClass, ErrorCode};

pub const DEFAULT_CONFIG: &str = "thematic-plane.toml";

#[derive(Debug, Parser)]
#[command(name = "thematic-plane", version, about = "Navigate image variations along thematic axes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = DEFAULT_CONFIG)]
        config: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Upload an image, move one axis and generate once, headlessly.
    Run(RunArgs),
    /// Manage provider fixture files.
    Fixtures {
        #[command(subcommand)]
        command: FixturesCommand,
    },
}

#[derive(Debug, Clone, clap::Args)]
pub struct RunArgs {
    #[arg(long)]
    pub image: PathBuf,
    /// Theme label of the axis to move.
    #[arg(long)]
    pub axis: String,
    #[arg(long, allow_hyphen_values = true)]
    pub position: f64,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = DEFAULT_CONFIG)]
    pub config: PathBuf,
    /// Seeds session ids and the generator.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum FixturesCommand {
    /// Run the pipeline against remote providers and save every exchange.
    Record {
        /// Config whose providers are remote.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        axis: String,
        #[arg(long, allow_hyphen_values = true)]
        position: f64,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fixture file to write. Existing entries are kept unless re-recorded.
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a fixture file and replay every entry through a mock client.
    Replay {
        #[arg(long)]
        fixtures: PathBuf,
    },
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub exit_code: i32,
    pub message: String,
}

impl From<ApiError> for CliError {
    fn from(e: ApiError) -> Self {
        Self { exit_code: e.exit_code(), message: e.to_string() }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self { exit_code: ErrorClass::Config.exit_code(), message: e.to_string() }
    }
}

fn validation(message: impl Into<String>) -> CliError {
    ApiError::new(ErrorCode::ValidationFailed, message).into()
}

/// Parses `args` and runs the command. Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ErrorClass::Validation.exit_code() } else { 0 };
        }
    };
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().expect("tokio runtime");
    match runtime.block_on(execute(cli.command)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.exit_code
        }
    }
}

pub async fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Serve { config, port, host } => serve(&config, &host, port).await,
        Command::Run(args) => {
            let outcome = run(&args).await?;
            println!("{}", outcome.out_dir.display());
            Ok(())
        }
        Command::Fixtures { command: FixturesCommand::Record { config, image, axis, position, k, seed, out } } => {
            record(&config, &image, &axis, position, k, seed, &out).await
        }
        Command::Fixtures { command: FixturesCommand::Replay { fixtures } } => replay(&fixtures).await,
    }
}

fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into());
    let _ = tracing_subscriber::fmt().json().with_env_filter(filter).with_current_span(true).try_init();
}

async fn serve(config_path: &Path, host: &str, port: u16) -> Result<(), CliError> {
    init_logging();
    let config = Config::load(config_path)?;
    let state = app::build(&config, BuildOptions::default())?;
    let manager = state.manager.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(600));
        loop {
            tick.tick().await;
            match manager.sweep_expired().await {
                Ok(removed) if !removed.is_empty() => tracing::info!(count = removed.len(), "expired sessions removed"),
                Ok(_) => {}
                Err(e) => tracing::warn!(error = %e, "session sweep failed"),
            }
        }
    });
    let addr: SocketAddr =
        format!("{host}:{port}").parse().map_err(|e| validation(format!("bad listen address {host}:{port}: {e}")))?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| CliError { exit_code: ErrorClass::Internal.exit_code(), message: format!("bind {addr}: {e}") })?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, crate::api::router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| CliError { exit_code: ErrorClass::Internal.exit_code(), message: e.to_string() })
}

/// What `run` wrote.
#[derive(Debug)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub session: Session,
    pub record: GenerationRecord,
}

pub const SESSION_FILE: &str = "session.json";
pub const PROMPT_FILE: &str = "prompt.txt";
pub const GENERATION_FILE: &str = "generation.json";
/// One `<image id> <payload hash>` line per image in the session.
pub const BLOBS_FILE: &str = "blobs.txt";

fn extension(content_type: &str) -> &'static str {
    match content_type {
        "image/png" => "png",
        "image/jpeg" => "jpg",
        "image/webp" => "webp",
        "image/gif" => "gif",
        _ => "bin",
    }
}

fn read_image(path: &Path) -> Result<Vec<u8>, CliError> {
    let bytes = std::fs::read(path).map_err(|e| validation(format!("cannot read image {}: {e}", path.display())))?;
    crate::api::check_image(&bytes)?;
    Ok(bytes)
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    ApiError::new(ErrorCode::StorageUnavailable, format!("{}: {e}", path.display())).into()
}

/// Creates a session on `image`, generates once for `axis` at `position`,
/// and returns the final session and the generation record.
async fn pipeline(
    state: &app::AppState,
    image: &[u8],
    axis: &str,
    position: f64,
    k: usize,
    seed: u64,
) -> Result<(Session, GenerationRecord), CliError> {
    let created = state.manager.create_session(image).await.map_err(ApiError::from)?;
    let axis_id = created
        .session
        .axes
        .iter()
        .find(|a| dedup_key(&a.theme.label) == dedup_key(axis))
        .map(|a| a.id.clone())
        .ok_or_else(|| {
            let labels: Vec<_> = created.session.axes.iter().map(|a| a.theme.label.clone()).collect();
            ApiError::new(ErrorCode::UnknownAxis, format!("no axis for theme {axis:?}"))
                .with_details(json!({ "available": labels }))
        })?;
    let gesture = NavigationGesture::new(axis_id, position).map_err(ApiError::from)?;
    let record =
        state.manager.generate(&created.session.id, &gesture, k, Some(seed)).await.map_err(ApiError::from)?;
    let session = state.manager.get(&created.session.id).map_err(ApiError::from)?;
    Ok((session, record))
}

fn check_gesture_args(position: f64, k: usize) -> Result<(), CliError> {
    if !(-1.0..=1.0).contains(&position) {
        return Err(ApiError::new(ErrorCode::PositionOutOfRange, format!("position {position} is outside [-1, 1]"))
            .into());
    }
    if k == 0 {
        return Err(validation("k must be at least 1"));
    }
    Ok(())
}

/// Runs the whole pipeline once with a deterministic clock and ids, in a
/// throwaway store, and writes the session, prompt and image to `args.out`.
pub async fn run(args: &RunArgs) -> Result<RunOutcome, CliError> {
    check_gesture_args(args.position, args.k)?;
    let config = Config::load(&args.config)?;
    let image = read_image(&args.image)?;
    let scratch = tempfile::tempdir().map_err(|e| io_error(Path::new("temporary directory"), e))?;
    let state = app::build(
        &config,
        BuildOptions { storage_root: Some(scratch.path().to_path_buf()), seed: Some(args.seed), recorder: None },
    )?;
    let (session, record) = pipeline(&state, &image, &args.axis, args.position, args.k, args.seed).await?;
    let (_, bytes) = state.manager.image_bytes(&session.id, &record.image.id).map_err(ApiError::from)?;

    let out = &args.out;
    std::fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    let prompt = record.prompt.render().map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))?;
    let blobs: String = session.images.iter().map(|i| format!("{} {}\n", i.id, i.payload_hash)).collect();
    let files = [
        (SESSION_FILE.to_owned(), to_canonical_json_pretty(&session).expect("sessions serialize").into_bytes()),
        (PROMPT_FILE.to_owned(), format!("{prompt}\n").into_bytes()),
        (BLOBS_FILE.to_owned(), blobs.into_bytes()),
        (GENERATION_FILE.to_owned(), to_canonical_json_pretty(&record).expect("records serialize").into_bytes()),
        (format!("generated.{}", extension(crate::api::content_type(&bytes))), bytes),
    ];
    for (name, contents) in files {
        let path = out.join(name);
        std::fs::write(&path, contents).map_err(|e| io_error(&path, e))?;
    }
    Ok(RunOutcome { out_dir: out.clone(), session, record })
}

async fn record(
    config_path: &Path,
    image_path: &Path,
    axis: &str,
    position: f64,
    k: usize,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    check_gesture_args(position, k)?;
    let config = Config::load(config_path)?;
    let image = read_image(image_path)?;
    let mut file = if out.exists() {
        FixtureFile::load(out).map_err(|e| validation(e.to_string()))?
    } else {
        FixtureFile::with_seed(seed)
    };
    let recorder = thematic_core::providers::FixtureRecorder::new(file.header.clone());
    let scratch = tempfile::tempdir().map_err(|e| io_error(Path::new("temporary directory"), e))?;
    let state = app::build(
        &config,
        BuildOptions { storage_root: Some(scratch.path().to_path_buf()), seed: Some(seed), recorder: Some(recorder.clone()) },
    )?;
    pipeline(&state, &image, axis, position, k, seed).await?;
    let captured = recorder.snapshot();
    let added = captured.entries.len();
    file.merge(captured);
    file.save(out).map_err(|e| io_error(out, std::io::Error::other(e.to_string())))?;
    println!("recorded {added} exchanges into {}", out.display());
    Ok(())
}

async fn replay(path: &Path) -> Result<(), CliError> {
    let file = FixtureFile::load(path).map_err(|e| validation(e.to_string()))?;
    file.verify().map_err(|e| validation(format!("{}: {e}", path.display())))?;
    let mut checked = 0;
    for (key, entry) in &file.entries {
        let kind = match entry.operation.as_str() {
            "complete" => ProviderKind::LanguageModel,
            "generate" => ProviderKind::Generator,
            _ => continue,
        };
        let client = ProviderClient::with_fixtures(ProviderConfig::mock(kind, path), file.clone());
        let replayed = client.call(&entry.operation, &entry.request).await;
        let matches = match (&entry.response, &replayed) {
            (thematic_core::providers::CannedResponse::Ok(v), Ok(outcome)) => &outcome.response == v,
            (thematic_core::providers::CannedResponse::Ok(_), Err(_)) => false,
            (_, result) => result.is_err(),
        };
        if !matches {
            return Err(validation(format!("entry {key} does not replay to its recorded response")));
        }
        checked += 1;
    }
    println!("{}: {} entries, {checked} replayed", path.display(), file.entries.len());
    Ok(())
}
