//! Stable content digests for reproducibility audits.
//!
//! `serde_json::Value` objects serialize with sorted keys (the crate's default
//! map representation), so serializing a value and hashing the bytes gives a
//! canonical digest.

use sha2::{Digest, Sha256};

/// SHA-256 of the canonical JSON serialization of `value`, hex-encoded.
pub fn digest_value(value: &serde_json::Value) -> String {
    let mut hasher = Sha256::new();
    hasher.update(value.to_string().as_bytes());
    hex::encode(hasher.finalize())
}

/// SHA-256 of raw bytes, hex-encoded. Used for input-file digests.
pub fn digest_bytes(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

/// Digest of any serializable value via its canonical JSON form.
pub fn digest_of<T: serde::Serialize>(value: &T) -> String {
    digest_value(&serde_json::to_value(value).expect("value serializes"))
}
