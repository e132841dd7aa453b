use std::fs;
use std::sync::Arc;

use async_trait::async_trait;
use proptest::prelude::*;
use thematic_core::clock::{SeededIds, SteppingClock};
use thematic_core::embeddings::EmbeddingService;
use thematic_core::model::{lineage_check, ImageId, Session};
use thematic_core::orchestrator::{NavigationGesture, Orchestrator, OrchestratorConfig};
use thematic_core::providers::{GenerateRequest, GenerateResponse, ImageGenerator, ProviderError};
use thematic_core::sessions::{SessionError, SessionManager};
use thematic_core::store::{BlobStore, SessionStore};
use thematic_core::testkit::{CountingEmbedder, GeneratorBehavior, Harness, ScriptedLanguageModel, ThemeScript};
use thematic_core::themes::{ThemePipeline, ThemePipelineConfig};

#[derive(Debug, Clone)]
enum Op {
    Navigate { axis: usize, position: f64 },
    Generate { axis: usize, position: f64, k: usize, fault: Option<bool> },
    Promote { image: usize },
    PromoteUnknown,
}

fn op() -> impl Strategy<Value = Op> {
    let position = prop_oneof![Just(0.0), Just(1.0), Just(-1.0), -1.0f64..=1.0];
    prop_oneof![
        (0usize..2, position.clone()).prop_map(|(axis, position)| Op::Navigate { axis, position }),
        (0usize..2, position, 1usize..5, prop::option::weighted(0.2, any::<bool>()))
            .prop_map(|(axis, position, k, fault)| Op::Generate { axis, position, k, fault }),
        (0usize..64).prop_map(|image| Op::Promote { image }),
        Just(Op::PromoteUnknown),
    ]
}

fn root_reachable(s: &Session) -> bool {
    let root = s.root().unwrap().id.clone();
    s.images.iter().all(|i| s.ancestry(&i.id).last() == Some(&root))
}

async fn apply(h: &Harness, s: &Session, op: &Op) -> bool {
    let m = &h.manager;
    let gesture = |axis: usize, position| NavigationGesture::new(s.axes[axis].id.clone(), position).unwrap();
    match op {
        Op::Navigate { axis, position } => m.navigate(&s.id, &gesture(*axis, *position), 3).await.is_ok(),
        Op::Generate { axis, position, k, fault } => {
            h.generator.set_behavior(match fault {
                None => GeneratorBehavior::Succeed,
                Some(true) => GeneratorBehavior::Refuse("no".into()),
                Some(false) => GeneratorBehavior::Fail("timeout".into()),
            });
            m.generate(&s.id, &gesture(*axis, *position), *k, None).await.is_ok()
        }
        Op::Promote { image } => m.promote(&s.id, &s.images[image % s.images.len()].id.clone()).await.is_ok(),
        Op::PromoteUnknown => m.promote(&s.id, &ImageId::new("img-missing")).await.is_ok(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_operation_sequences_keep_lineage_sound(ops in prop::collection::vec(op(), 1..=40)) {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        rt.block_on(async {
            let dir = tempfile::tempdir().unwrap();
            let h = Harness::new(dir.path(), ThemeScript::sunset());
            let mut s = h.manager.create_session(b"root image").await.unwrap().session;
            let path = h.manager.store().path_for(&s.id);
            for op in &ops {
                let before = fs::read(&path).unwrap();
                let ok = apply(&h, &s, op).await;
                let next = h.manager.get(&s.id).unwrap();
                if !ok {
                    prop_assert_eq!(fs::read(&path).unwrap(), before, "failed {:?} changed the record", op);
                }
                prop_assert!(lineage_check(&next).is_ok());
                prop_assert_eq!(&next.images[..s.images.len()], &s.images[..]);
                prop_assert!(root_reachable(&next));
                s = next;
            }
            Ok(())
        })?;
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_generates_on_one_session_all_land() {
    let dir = tempfile::tempdir().unwrap();
    let h = Arc::new(Harness::new(dir.path(), ThemeScript::sunset()));
    let s = h.manager.create_session(b"root image").await.unwrap().session;
    let g = NavigationGesture::new(s.axes[0].id.clone(), 0.8).unwrap();
    let tasks: Vec<_> = (0..8)
        .map(|_| {
            let (h, id, g) = (h.clone(), s.id.clone(), g.clone());
            tokio::spawn(async move { h.manager.generate(&id, &g, 2, None).await.unwrap() })
        })
        .collect();
    for t in tasks {
        t.await.unwrap();
    }
    let after = h.manager.get(&s.id).unwrap();
    assert_eq!(after.images.len(), 9);
    assert!(lineage_check(&after).is_ok());
    assert_eq!(after.children_of(&s.primary_ref).count(), 8);
}

/// Generator that never answers.
struct Stalled;

#[async_trait]
impl ImageGenerator for Stalled {
    async fn generate(&self, _: &GenerateRequest) -> Result<GenerateResponse, ProviderError> {
        std::future::pending().await
    }
}

fn manager_with(dir: &std::path::Path, generator: Arc<dyn ImageGenerator>) -> SessionManager {
    let lm = Arc::new(ScriptedLanguageModel::new(ThemeScript::sunset()));
    let blobs = BlobStore::new(dir);
    let clock = Arc::new(SteppingClock::fixed());
    let embeddings = Arc::new(EmbeddingService::new(Arc::new(CountingEmbedder::new("m", 8, 0)), blobs.clone(), 16));
    SessionManager::new(
        SessionStore::new(dir),
        blobs.clone(),
        Arc::new(ThemePipeline::new(lm.clone(), blobs.clone(), ThemePipelineConfig::default())),
        Arc::new(Orchestrator::new(lm, embeddings, generator, blobs, clock.clone(), OrchestratorConfig::default())),
        Arc::new(SeededIds::new(1)),
        clock,
    )
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn delete_cancels_in_flight_generation() {
    let dir = tempfile::tempdir().unwrap();
    let m = Arc::new(manager_with(dir.path(), Arc::new(Stalled)));
    let s = m.create_session(b"root").await.unwrap().session;
    let g = NavigationGesture::new(s.axes[0].id.clone(), 1.0).unwrap();
    let task = {
        let (m, id) = (m.clone(), s.id.clone());
        tokio::spawn(async move { m.generate(&id, &g, 3, None).await })
    };
    tokio::time::sleep(std::time::Duration::from_millis(50)).await;
    assert!(m.delete(&s.id).await.unwrap());
    let result = tokio::time::timeout(std::time::Duration::from_secs(5), task).await.unwrap().unwrap();
    assert!(matches!(result, Err(SessionError::Cancelled(_))));
    assert!(matches!(m.get(&s.id), Err(SessionError::NotFound(_))));
    assert!(!m.delete(&s.id).await.unwrap());
}

#[tokio::test]
async fn idle_sessions_expire() {
    let dir = tempfile::tempdir().unwrap();
    let m = manager_with(dir.path(), Arc::new(Stalled)).with_ttl(chrono::Duration::seconds(3));
    let s = m.create_session(b"root").await.unwrap().session;
    assert!(m.get(&s.id).is_ok());
    // The stepping clock moves a second per reading.
    for _ in 0..4 {
        let _ = m.get(&s.id);
    }
    assert!(matches!(m.get(&s.id), Err(SessionError::NotFound(_))));

    let fresh = m.create_session(b"other").await.unwrap().session;
    for _ in 0..5 {
        let _ = m.orchestrator().clock().now();
    }
    assert_eq!(m.sweep_expired().await.unwrap(), vec![fresh.id.clone()]);
    assert!(m.store().list().unwrap().is_empty());
}

#[tokio::test]
async fn user_themes_extend_the_session() {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::new(dir.path(), ThemeScript::sunset().opposite("eerie", "cozy"));
    let s = h.manager.create_session(b"root").await.unwrap().session;
    let (after, axis) = h.manager.add_theme(&s.id, "eerie", None).await.unwrap();
    assert_eq!((axis.left_pole_label.as_str(), axis.right_pole_label.as_str()), ("cozy", "eerie"));
    assert_eq!(after.axes.len(), 3);
    assert_eq!(after.navigation[&axis.id], 0.0);

    let (_, hinted) = h.manager.add_theme(&s.id, "light", Some(("dark".into(), "bright".into()))).await.unwrap();
    assert_eq!(hinted.left_pole_label, "dark");

    let path = h.manager.store().path_for(&s.id);
    let before = fs::read(&path).unwrap();
    assert!(matches!(h.manager.add_theme(&s.id, " Eerie ", None).await, Err(SessionError::DuplicateTheme(_))));
    assert!(matches!(h.manager.add_theme(&s.id, "quiet", None).await, Err(SessionError::ThemeLimit(4))));
    assert_eq!(fs::read(&path).unwrap(), before);
}

#[tokio::test]
async fn creation_failures_leave_no_session() {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::new(dir.path(), ThemeScript::new("x").keyword("beach", "object"));
    let err = h.manager.create_session(b"root").await.unwrap_err();
    assert!(matches!(err, SessionError::Theme(thematic_core::themes::ThemeError::NoThemesFound)));
    assert!(h.manager.store().list().unwrap().is_empty());
    assert!(!dir.path().join("blobs").exists());
}
