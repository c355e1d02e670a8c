//! Hashing helpers shared across modules.

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}

/// Digest of a value's compact JSON form. Object keys serialize sorted.
pub fn digest_json(v: &Value) -> String {
    sha256_hex(serde_json::to_vec(v).expect("JSON values always serialize"))
}

/// Compact JSON, keys sorted, for byte-stable artifacts.
pub fn canonical_json<T: Serialize>(v: &T) -> String {
    let value = serde_json::to_value(v).expect("serializable");
    serde_json::to_string(&value).expect("JSON values always serialize")
}

/// Pretty JSON with sorted keys and a trailing newline.
pub fn pretty_json<T: Serialize>(v: &T) -> String {
    let value = serde_json::to_value(v).expect("serializable");
    let mut s = serde_json::to_string_pretty(&value).expect("JSON values always serialize");
    s.push('\n');
    s
}

/// Stable 64-bit hash of a string under a seed, used for ordering and splits.
pub fn seeded_hash(seed: u64, text: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(text.as_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("8 bytes"))
}
