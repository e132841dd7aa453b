//! Canonical JSON and content hashing.
//!
//! Canonical form sorts every object's keys and emits no insignificant
//! whitespace. Fingerprints and content hashes are lowercase hex SHA-256.

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

/// Rebuilds a JSON value with object keys inserted in sorted order.
///
/// The result serializes identically whether or not `serde_json` was built
/// with `preserve_order`.
pub fn sort_keys(value: Value) -> Value {
    match value {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            let mut sorted = Map::new();
            for (k, v) in entries {
                sorted.insert(k, sort_keys(v));
            }
            Value::Object(sorted)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

/// Compact canonical JSON for any serializable value.
pub fn to_canonical_json<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    let v = serde_json::to_value(value)?;
    serde_json::to_string(&sort_keys(v))
}

/// Pretty-printed canonical JSON, newline terminated. Used for files meant
/// to be diffed by people (session records, fixtures, golden outputs).
pub fn to_canonical_json_pretty<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    let v = serde_json::to_value(value)?;
    let mut out = serde_json::to_string_pretty(&sort_keys(v))?;
    out.push('\n');
    Ok(out)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the canonical JSON form of `value`.
pub fn canonical_hash<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    Ok(sha256_hex(to_canonical_json(value)?.as_bytes()))
}
