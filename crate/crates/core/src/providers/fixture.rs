//! Record/replay fixture files.
//!
//! A fixture file is one JSON document: a header naming the hash function
//! and mock seed, and a map from request fingerprint to canned response.
//! The fingerprint of a request is `sha256(operation || canonical_json(request))`
//! in lowercase hex; the request itself is kept next to the response so the
//! map can be re-verified on load.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::canonical::{sha256_hex, sort_keys, to_canonical_json, to_canonical_json_pretty};

pub const FORMAT_VERSION: &str = "1";
pub const HASH_FUNCTION: &str = "sha256";

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("cannot access fixture file {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("fixture file {path} is not valid JSON: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("fixture file {path}: {reason}")]
    Invalid { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureHeader {
    pub hash_function: String,
    /// Seed of the deterministic mock embedder.
    pub seed: u64,
    pub format_version: String,
}

impl Default for FixtureHeader {
    fn default() -> Self {
        Self { hash_function: HASH_FUNCTION.into(), seed: 0, format_version: FORMAT_VERSION.into() }
    }
}

/// A provider outcome worth replaying. Refusals and outages are recorded
/// too, which is how tests inject provider failures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CannedResponse {
    Ok(Value),
    Refused { message: String },
    Unavailable { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub operation: String,
    pub request: Value,
    pub response: CannedResponse,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FixtureFile {
    pub header: FixtureHeader,
    pub entries: BTreeMap<String, FixtureEntry>,
}

/// Fingerprint of one provider request.
pub fn fingerprint(operation: &str, request: &Value) -> String {
    let canonical = to_canonical_json(request).expect("JSON values always serialize");
    sha256_hex(format!("{operation}{canonical}").as_bytes())
}

impl FixtureFile {
    pub fn with_seed(seed: u64) -> Self {
        Self { header: FixtureHeader { seed, ..FixtureHeader::default() }, entries: BTreeMap::new() }
    }

    /// Inserts or overwrites the entry for `(operation, request)` and
    /// returns its fingerprint.
    pub fn insert(&mut self, operation: &str, request: Value, response: CannedResponse) -> String {
        let key = fingerprint(operation, &request);
        self.entries.insert(
            key.clone(),
            FixtureEntry { operation: operation.to_owned(), request: sort_keys(request), response },
        );
        key
    }

    pub fn lookup(&self, operation: &str, request: &Value) -> Option<&CannedResponse> {
        self.entries.get(&fingerprint(operation, request)).map(|e| &e.response)
    }

    /// Adds every entry of `other`, overwriting on fingerprint collisions.
    pub fn merge(&mut self, other: FixtureFile) {
        self.entries.extend(other.entries);
    }

    /// Checks header values and that every key is the fingerprint of its entry.
    pub fn verify(&self) -> Result<(), String> {
        if self.header.format_version != FORMAT_VERSION {
            return Err(format!("unsupported format_version {:?}", self.header.format_version));
        }
        if self.header.hash_function != HASH_FUNCTION {
            return Err(format!("unsupported hash_function {:?}", self.header.hash_function));
        }
        for (key, entry) in &self.entries {
            let expected = fingerprint(&entry.operation, &entry.request);
            if &expected != key {
                return Err(format!("entry {key} does not match its request (expected {expected})"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        to_canonical_json_pretty(self).expect("fixture files serialize")
    }

    pub fn load(path: &Path) -> Result<Self, FixtureError> {
        let text = fs::read_to_string(path).map_err(|source| FixtureError::Io { path: path.into(), source })?;
        let file: FixtureFile =
            serde_json::from_str(&text).map_err(|source| FixtureError::Parse { path: path.into(), source })?;
        file.verify().map_err(|reason| FixtureError::Invalid { path: path.into(), reason })?;
        Ok(file)
    }

    /// Writes atomically: a temporary sibling file renamed into place.
    pub fn save(&self, path: &Path) -> Result<(), FixtureError> {
        let io = |source| FixtureError::Io { path: path.into(), source };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(io)?;
        }
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, self.to_json()).map_err(io)?;
        fs::rename(&tmp, path).map_err(io)
    }
}

/// Shared sink that provider clients write recorded calls into.
#[derive(Debug, Clone, Default)]
pub struct FixtureRecorder(Arc<Mutex<FixtureFile>>);

impl FixtureRecorder {
    pub fn new(header: FixtureHeader) -> Self {
        Self(Arc::new(Mutex::new(FixtureFile { header, entries: BTreeMap::new() })))
    }

    pub fn record(&self, operation: &str, request: Value, response: CannedResponse) {
        self.0.lock().insert(operation, request, response);
    }

    pub fn snapshot(&self) -> FixtureFile {
        self.0.lock().clone()
    }

    pub fn len(&self) -> usize {
        self.0.lock().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
