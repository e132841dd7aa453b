//! Durable storage: a content-addressed blob store for image bytes and a
//! JSON key-value store for sessions.
//!
//! Layout under the storage root:
//!
//! ```text
//! blobs/<first two hex chars of hash>/<hash>
//! sessions/<session id>.json
//! ```
//!
//! Every write goes to a temporary sibling and is renamed into place, so
//! readers see either the previous or the next version, never a torn one.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::canonical::{sha256_hex, to_canonical_json_pretty};
use crate::model::{lineage_check, LineageViolation, Session, SessionId};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage unavailable at {path}: {source}")]
    Unavailable { path: PathBuf, source: io::Error },
    #[error("session {0} not found")]
    SessionNotFound(SessionId),
    #[error("stored session {id} is corrupt: {reason}")]
    CorruptRecord { id: SessionId, reason: String },
    #[error("blob {0} not found")]
    BlobMissing(String),
    #[error("refusing to persist an invalid session: {}", join(.0))]
    InvalidSession(Vec<LineageViolation>),
}

fn join(v: &[LineageViolation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let unavailable = |source| StoreError::Unavailable { path: path.to_owned(), source };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(unavailable)?;
    }
    let tmp = path.with_file_name(format!(
        ".{}.{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("record"),
        uuid::Uuid::new_v4().simple()
    ));
    fs::write(&tmp, bytes).map_err(unavailable)?;
    fs::rename(&tmp, path).map_err(unavailable)
}

#[derive(Debug, Clone)]
pub struct BlobStore {
    root: PathBuf,
}

impl BlobStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path_for(&self, hash: &str) -> PathBuf {
        self.root.join("blobs").join(hash.get(..2).unwrap_or("xx")).join(hash)
    }

    /// Stores `bytes` and returns their SHA-256. Storing the same bytes
    /// twice is a no-op.
    pub fn put(&self, bytes: &[u8]) -> Result<String, StoreError> {
        let hash = sha256_hex(bytes);
        let path = self.path_for(&hash);
        if !path.exists() {
            write_atomic(&path, bytes)?;
        }
        Ok(hash)
    }

    pub fn get(&self, hash: &str) -> Result<Vec<u8>, StoreError> {
        if !is_hex_hash(hash) {
            return Err(StoreError::BlobMissing(hash.to_owned()));
        }
        let path = self.path_for(hash);
        match fs::read(&path) {
            Ok(bytes) => Ok(bytes),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Err(StoreError::BlobMissing(hash.to_owned())),
            Err(source) => Err(StoreError::Unavailable { path, source }),
        }
    }

    pub fn contains(&self, hash: &str) -> bool {
        is_hex_hash(hash) && self.path_for(hash).is_file()
    }
}

fn is_hex_hash(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| b.is_ascii_hexdigit())
}

fn is_safe_id(id: &SessionId) -> bool {
    let s = id.as_str();
    !s.is_empty() && s.len() <= 128 && s.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

#[derive(Debug, Clone)]
pub struct SessionStore {
    root: PathBuf,
}

impl SessionStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path_for(&self, id: &SessionId) -> PathBuf {
        self.root.join("sessions").join(format!("{id}.json"))
    }

    /// Serialized form written to disk: canonical, pretty-printed JSON.
    pub fn encode(session: &Session) -> String {
        to_canonical_json_pretty(session).expect("sessions serialize")
    }

    /// Writes the session, replacing any earlier version with the same id.
    pub fn persist(&self, session: &Session) -> Result<(), StoreError> {
        lineage_check(session).map_err(StoreError::InvalidSession)?;
        if !is_safe_id(&session.id) {
            return Err(StoreError::InvalidSession(vec![]));
        }
        write_atomic(&self.path_for(&session.id), Self::encode(session).as_bytes())
    }

    /// Loads and re-validates a session. A record that fails to parse or
    /// breaks a lineage invariant is reported, never repaired.
    pub fn load(&self, id: &SessionId) -> Result<Session, StoreError> {
        if !is_safe_id(id) {
            return Err(StoreError::SessionNotFound(id.clone()));
        }
        let path = self.path_for(id);
        let text = match fs::read_to_string(&path) {
            Ok(text) => text,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(StoreError::SessionNotFound(id.clone())),
            Err(source) => return Err(StoreError::Unavailable { path, source }),
        };
        let corrupt = |reason: String| StoreError::CorruptRecord { id: id.clone(), reason };
        let session: Session = serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
        if &session.id != id {
            return Err(corrupt(format!("record holds session {}", session.id)));
        }
        lineage_check(&session).map_err(|v| corrupt(join(&v)))?;
        Ok(session)
    }

    /// Removes a session record. Returns whether one existed.
    pub fn delete(&self, id: &SessionId) -> Result<bool, StoreError> {
        if !is_safe_id(id) {
            return Ok(false);
        }
        let path = self.path_for(id);
        match fs::remove_file(&path) {
            Ok(()) => Ok(true),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(false),
            Err(source) => Err(StoreError::Unavailable { path, source }),
        }
    }

    pub fn list(&self) -> Result<Vec<SessionId>, StoreError> {
        let dir = self.root.join("sessions");
        let entries = match fs::read_dir(&dir) {
            Ok(entries) => entries,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(source) => return Err(StoreError::Unavailable { path: dir, source }),
        };
        let mut ids: Vec<SessionId> = entries
            .filter_map(Result::ok)
            .filter_map(|e| e.file_name().to_str()?.strip_suffix(".json").map(SessionId::from))
            .filter(is_safe_id)
            .collect();
        ids.sort();
        Ok(ids)
    }
}
