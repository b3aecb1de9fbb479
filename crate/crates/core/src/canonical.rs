//! Canonical text encoding and content digests.
//!
//! The canonical form is compact JSON with object keys sorted
//! lexicographically at every depth. Digests are lowercase hex SHA-256 of
//! that form, so two values with equal canonical encodings share a digest.

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Serializes `value` to its canonical text form.
///
/// `serde_json::Map` is backed by a `BTreeMap` in this build, so routing the
/// value through `serde_json::Value` yields sorted keys at every level.
pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> Result<String, serde_json::Error> {
    let tree = serde_json::to_value(value)?;
    serde_json::to_string(&tree)
}

pub fn from_canonical_str<T: DeserializeOwned>(text: &str) -> Result<T, serde_json::Error> {
    serde_json::from_str(text)
}

/// Hex SHA-256 of arbitrary bytes.
pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes.as_ref());
    hex::encode(hasher.finalize())
}

/// Digest of the canonical encoding of `value`.
///
/// Values that fail to serialize (non-finite floats in a map key, say) hash
/// their debug-free error text instead so the function stays total.
pub fn digest<T: Serialize + ?Sized>(value: &T) -> String {
    match to_canonical_string(value) {
        Ok(text) => sha256_hex(text),
        Err(err) => sha256_hex(format!("unserializable:{err}")),
    }
}
