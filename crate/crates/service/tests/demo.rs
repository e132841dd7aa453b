mod common;

use common::fixtures_dir;
use thematic_core::providers::FixtureFile;
use thematic_service::demo;

#[test]
fn committed_image_matches_generator() {
    assert_eq!(std::fs::read(fixtures_dir().join(demo::IMAGE_FILE)).unwrap(), demo::sunset_png());
}

#[test]
fn committed_config_matches_generator() {
    assert_eq!(std::fs::read_to_string(fixtures_dir().join(demo::CONFIG_FILE)).unwrap(), demo::config_toml());
}

#[tokio::test]
async fn committed_fixtures_match_a_fresh_recording() {
    let scratch = tempfile::tempdir().unwrap();
    let recorded = demo::record(scratch.path()).await.unwrap();
    let committed = FixtureFile::load(&fixtures_dir().join(demo::FIXTURES_FILE)).unwrap();
    assert_eq!(recorded.entries.len(), committed.entries.len());
    assert_eq!(recorded, committed);
}
