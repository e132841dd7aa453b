//! Durable sessions: each mutation loads the stored record, runs one
//! pipeline step and persists the result only if the step succeeded.
//!
//! Mutations of one session are serialized behind a per-session lock;
//! different sessions proceed in parallel. Deleting a session cancels any
//! provider call it has in flight.

use std::collections::HashMap;
use std::future::Future;
use std::sync::Arc;

use chrono::Duration;
use parking_lot::Mutex;
use thiserror::Error;
use tokio_util::sync::CancellationToken;

use crate::clock::{Clock, IdSource};
use crate::model::{dedup_key, ImageId, ImageRef, Session, SessionId, Theme, ThemeAxis, ThemeSource};
use crate::orchestrator::{
    self, GenerationRecord, NavigationGesture, NavigationPreview, Orchestrator, OrchestratorError,
};
use crate::store::{BlobStore, SessionStore, StoreError};
use crate::themes::{AxisRequest, ThemeError, ThemePipeline};

pub const DEFAULT_TTL_HOURS: i64 = 24;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("session {0} not found")]
    NotFound(SessionId),
    #[error("session {0} was deleted while the operation was running")]
    Cancelled(SessionId),
    #[error("theme {0:?} is already on this session")]
    DuplicateTheme(String),
    #[error("session already has the maximum of {0} themes")]
    ThemeLimit(usize),
    #[error(transparent)]
    Theme(#[from] ThemeError),
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
    #[error(transparent)]
    Storage(StoreError),
}

impl From<StoreError> for SessionError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::SessionNotFound(id) => SessionError::NotFound(id),
            other => SessionError::Storage(other),
        }
    }
}

/// Result of creating a session.
#[derive(Debug, Clone)]
pub struct CreatedSession {
    pub session: Session,
    pub themes: Vec<Theme>,
    pub axes: Vec<ThemeAxis>,
}

struct Slot {
    lock: tokio::sync::Mutex<()>,
    cancel: CancellationToken,
}

pub struct SessionManager {
    store: SessionStore,
    blobs: BlobStore,
    pipeline: Arc<ThemePipeline>,
    orchestrator: Arc<Orchestrator>,
    ids: Arc<dyn IdSource>,
    clock: Arc<dyn Clock>,
    ttl: Duration,
    slots: Mutex<HashMap<SessionId, Arc<Slot>>>,
}

impl SessionManager {
    pub fn new(
        store: SessionStore,
        blobs: BlobStore,
        pipeline: Arc<ThemePipeline>,
        orchestrator: Arc<Orchestrator>,
        ids: Arc<dyn IdSource>,
        clock: Arc<dyn Clock>,
    ) -> Self {
        Self {
            store,
            blobs,
            pipeline,
            orchestrator,
            ids,
            clock,
            ttl: Duration::hours(DEFAULT_TTL_HOURS),
            slots: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_ttl(mut self, ttl: Duration) -> Self {
        self.ttl = ttl;
        self
    }

    pub fn store(&self) -> &SessionStore {
        &self.store
    }

    pub fn blobs(&self) -> &BlobStore {
        &self.blobs
    }

    pub fn orchestrator(&self) -> &Orchestrator {
        &self.orchestrator
    }

    fn slot(&self, id: &SessionId) -> Arc<Slot> {
        self.slots
            .lock()
            .entry(id.clone())
            .or_insert_with(|| Arc::new(Slot { lock: tokio::sync::Mutex::new(()), cancel: CancellationToken::new() }))
            .clone()
    }

    /// Runs `op` under the session's lock and persists its output. Nothing
    /// is written when `op` fails or the session is deleted meanwhile.
    async fn mutate<T, F, Fut>(&self, id: &SessionId, op: F) -> Result<T, SessionError>
    where
        F: FnOnce(Session) -> Fut,
        Fut: Future<Output = Result<(Session, T), SessionError>>,
    {
        let slot = self.slot(id);
        let _guard = slot.lock.lock().await;
        if slot.cancel.is_cancelled() {
            return Err(SessionError::NotFound(id.clone()));
        }
        let session = self.load_live(id)?;
        let (next, out) = tokio::select! {
            biased;
            _ = slot.cancel.cancelled() => return Err(SessionError::Cancelled(id.clone())),
            result = op(session) => result?,
        };
        if slot.cancel.is_cancelled() {
            return Err(SessionError::Cancelled(id.clone()));
        }
        self.store.persist(&next)?;
        Ok(out)
    }

    fn expired(&self, session: &Session) -> bool {
        session.updated_at + self.ttl < self.clock.now()
    }

    fn load_live(&self, id: &SessionId) -> Result<Session, SessionError> {
        let session = self.store.load(id)?;
        if self.expired(&session) {
            self.store.delete(id)?;
            return Err(SessionError::NotFound(id.clone()));
        }
        Ok(session)
    }

    /// Derives themes and axes, then stores the image and persists a new
    /// session rooted at it. Fails as a whole, writing nothing, if any axis
    /// fails.
    pub async fn create_session(&self, image: &[u8]) -> Result<CreatedSession, SessionError> {
        let (themes, axes) = self.pipeline.themes_and_axes_for(image).await?;
        let root = ImageRef::uploaded(self.blobs.put(image)?);
        let session = Session::new(self.ids.session_id(), root, axes.clone(), self.clock.now());
        self.store.persist(&session)?;
        Ok(CreatedSession { session, themes, axes })
    }

    /// Reads a session without taking its lock; stored records are always
    /// complete versions.
    pub fn get(&self, id: &SessionId) -> Result<Session, SessionError> {
        self.load_live(id)
    }

    pub async fn navigate(
        &self,
        id: &SessionId,
        gesture: &NavigationGesture,
        k: usize,
    ) -> Result<NavigationPreview, SessionError> {
        self.mutate(id, |s| async move { Ok(self.orchestrator.navigate(&s, gesture, k).await?) }).await
    }

    pub async fn generate(
        &self,
        id: &SessionId,
        gesture: &NavigationGesture,
        k: usize,
        seed: Option<u64>,
    ) -> Result<GenerationRecord, SessionError> {
        self.mutate(id, |s| async move { Ok(self.orchestrator.generate(&s, gesture, k, seed).await?) }).await
    }

    pub async fn promote(&self, id: &SessionId, image_id: &ImageId) -> Result<Session, SessionError> {
        self.mutate(id, |s| async move {
            let next = orchestrator::promote_reference(&s, image_id, self.clock.now())?;
            Ok((next.clone(), next))
        })
        .await
    }

    /// Adds a user-chosen theme with its own axis. Poles come from `poles`
    /// when given, otherwise from the language model.
    pub async fn add_theme(
        &self,
        id: &SessionId,
        label: &str,
        poles: Option<(String, String)>,
    ) -> Result<(Session, ThemeAxis), SessionError> {
        let max_themes = self.pipeline.config().max_themes;
        self.mutate(id, |s| async move {
            let theme = Theme::new(label, ThemeSource::UserAdded);
            if s.axes.iter().any(|a| dedup_key(&a.theme.label) == dedup_key(&theme.label)) {
                return Err(SessionError::DuplicateTheme(theme.label));
            }
            if s.axes.len() >= max_themes {
                return Err(SessionError::ThemeLimit(max_themes));
            }
            let mut request = AxisRequest::new(theme);
            if let Some((left, right)) = poles {
                request = request.with_poles(left, right);
            }
            let axis = self.pipeline.build_axis(&request).await?;
            let mut next = s;
            next.navigation.insert(axis.id.clone(), 0.0);
            next.axes.push(axis.clone());
            next.updated_at = self.clock.now();
            Ok((next.clone(), (next, axis)))
        })
        .await
    }

    /// Deletes a session, cancelling whatever is running on it. Returns
    /// whether it existed.
    pub async fn delete(&self, id: &SessionId) -> Result<bool, SessionError> {
        let slot = self.slot(id);
        slot.cancel.cancel();
        let _guard = slot.lock.lock().await;
        let existed = self.store.delete(id)?;
        self.slots.lock().remove(id);
        Ok(existed)
    }

    /// Bytes of an image in the session.
    pub fn image_bytes(&self, id: &SessionId, image_id: &ImageId) -> Result<(ImageRef, Vec<u8>), SessionError> {
        let session = self.get(id)?;
        let image = session
            .image(image_id)
            .cloned()
            .ok_or_else(|| OrchestratorError::UnknownImage(image_id.clone()))?;
        let bytes = self.blobs.get(&image.payload_hash)?;
        Ok((image, bytes))
    }

    /// Deletes every session idle for longer than the TTL. Returns the ids
    /// removed.
    pub async fn sweep_expired(&self) -> Result<Vec<SessionId>, SessionError> {
        let mut removed = Vec::new();
        for id in self.store.list()? {
            let expired = match self.store.load(&id) {
                Ok(session) => self.expired(&session),
                Err(StoreError::SessionNotFound(_)) => false,
                Err(StoreError::CorruptRecord { .. }) => false,
                Err(e) => return Err(e.into()),
            };
            if expired && self.delete(&id).await? {
                removed.push(id);
            }
        }
        Ok(removed)
    }
}
