//! Message digests used across the toolkit: SHA-1 for info-hashes and chunk
//! verification, SHA-256 for evidence chaining, MD5 kept for legacy torrent
//! tooling compatibility. Also provides the hex-level avalanche diff metric.

use md5::Md5;
use sha1::Sha1;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// The fixed set of digest algorithms the toolkit speaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DigestAlgorithm {
    Md5,
    Sha1,
    Sha256,
}

impl DigestAlgorithm {
    /// Output length in lowercase hex characters (32 / 40 / 64).
    pub fn hex_len(self) -> usize {
        match self {
            DigestAlgorithm::Md5 => 32,
            DigestAlgorithm::Sha1 => 40,
            DigestAlgorithm::Sha256 => 64,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DigestError {
    #[error("hex strings differ in length: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
}

/// Digest `message` with `alg`, returning lowercase hex.
pub fn digest(alg: DigestAlgorithm, message: &[u8]) -> String {
    match alg {
        DigestAlgorithm::Md5 => hex::encode(Md5::digest(message)),
        DigestAlgorithm::Sha1 => hex::encode(Sha1::digest(message)),
        DigestAlgorithm::Sha256 => hex::encode(Sha256::digest(message)),
    }
}

/// SHA-1 as raw bytes; the 20-byte form is what info-hashes and piece hashes
/// are compared against.
pub fn sha1_bytes(message: &[u8]) -> [u8; 20] {
    Sha1::digest(message).into()
}

/// SHA-256 as lowercase hex; the evidence chain's link function.
pub fn sha256_hex(message: &[u8]) -> String {
    hex::encode(Sha256::digest(message))
}

/// Percentage of positions at which two equal-length hex strings hold
/// different characters, rounded half-up to one decimal.
pub fn hex_diff_percent(a: &str, b: &str) -> Result<f64, DigestError> {
    if a.len() != b.len() {
        return Err(DigestError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let differing = a.chars().zip(b.chars()).filter(|(x, y)| x != y).count();
    // Round half-up in integer tenths so 95.3125 -> 95.3 and 96.875 -> 96.9
    // without floating-point drift.
    let len = a.len() as u64;
    let tenths = (2000 * differing as u64 + len) / (2 * len);
    Ok(tenths as f64 / 10.0)
}
