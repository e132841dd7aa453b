//! Regenerates the demo scene: `cargo run -p thematic-service --example make_fixtures -- fixtures`.

use std::path::PathBuf;

use thematic_service::demo;

#[tokio::main]
async fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    std::fs::create_dir_all(&dir).expect("create fixture directory");
    let scratch = tempfile::tempdir().expect("scratch directory");
    let fixtures = demo::record(scratch.path()).await.expect("demo scene records");
    fixtures.save(&dir.join(demo::FIXTURES_FILE)).expect("write fixtures");
    std::fs::write(dir.join(demo::IMAGE_FILE), demo::sunset_png()).expect("write image");
    std::fs::write(dir.join(demo::CONFIG_FILE), demo::config_toml()).expect("write config");
    println!("{} entries written to {}", fixtures.entries.len(), dir.display());
}
