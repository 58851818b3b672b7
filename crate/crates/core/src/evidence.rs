//! Append-only, hash-chained evidence log.
//!
//! Every record binds its payload, sequence number and timestamp to the
//! previous record's hash, so removing, reordering or editing any committed
//! record is detectable by recomputing the chain. Payloads are canonical JSON
//! (sorted keys, minimal separators, UTF-8) so the hashes are reproducible
//! from the exported file alone, in any language.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::digest::sha256_hex;

const GENESIS_PREV: &str = "0000000000000000000000000000000000000000000000000000000000000000";

/// What a record documents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceKind {
    Config,
    Metainfo,
    Sighting,
    SnapshotSummary,
    Note,
}

/// One committed log entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvidenceRecord {
    pub seq: u64,
    pub timestamp_ms: i64,
    pub kind: EvidenceKind,
    /// Canonical JSON text of the payload.
    pub payload: String,
    /// Hex SHA-256 of the previous record; 64 zeros for record 0.
    pub prev_hash: String,
    /// Hex SHA-256 over prev_hash || payload || seq || timestamp.
    pub entry_hash: String,
}

/// The log: an ordered chain of records plus case metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvidenceLog {
    pub case_id: String,
    pub investigator: String,
    pub created_ms: i64,
    records: Vec<EvidenceRecord>,
}

/// Outcome of a chain verification; a verdict, not an exception.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainVerdict {
    pub ok: bool,
    pub first_bad_seq: Option<u64>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvidenceError {
    #[error("payload does not serialize: {0}")]
    Serialization(String),
    #[error("storage failure: {0}")]
    Storage(String),
    #[error("malformed line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("hash chain broken at seq {first_bad_seq}")]
    ChainBroken { first_bad_seq: u64 },
}

/// Serialize a JSON value canonically: object keys in sorted order, no
/// insignificant whitespace. `serde_json`'s map is ordered, so a value built
/// from any source serializes the same way.
pub fn canonical_json(value: &Value) -> Result<String, EvidenceError> {
    serde_json::to_string(value).map_err(|e| EvidenceError::Serialization(e.to_string()))
}

fn entry_hash(prev_hash: &str, payload: &str, seq: u64, timestamp_ms: i64) -> String {
    let mut preimage =
        Vec::with_capacity(prev_hash.len() + payload.len() + 32);
    preimage.extend_from_slice(prev_hash.as_bytes());
    preimage.extend_from_slice(payload.as_bytes());
    preimage.extend_from_slice(seq.to_string().as_bytes());
    preimage.extend_from_slice(timestamp_ms.to_string().as_bytes());
    sha256_hex(&preimage)
}

/// Wire form of one exported line.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    hash: String,
    kind: EvidenceKind,
    payload: Value,
    prev: String,
    seq: u64,
    ts: i64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
struct HeaderLine {
    case_id: String,
    created: i64,
    investigator: String,
}

impl EvidenceLog {
    pub fn new(
        case_id: impl Into<String>,
        investigator: impl Into<String>,
        created_ms: i64,
    ) -> Self {
        EvidenceLog {
            case_id: case_id.into(),
            investigator: investigator.into(),
            created_ms,
            records: Vec::new(),
        }
    }

    pub fn records(&self) -> &[EvidenceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Append a record. The payload is canonicalized first; if that fails the
    /// log is left untouched. Committed records are never mutated.
    pub fn append(
        &mut self,
        kind: EvidenceKind,
        payload: &Value,
        timestamp_ms: i64,
    ) -> Result<&EvidenceRecord, EvidenceError> {
        let payload = canonical_json(payload)?;
        let seq = self.records.len() as u64;
        let prev_hash = match self.records.last() {
            Some(prev) => prev.entry_hash.clone(),
            None => GENESIS_PREV.to_string(),
        };
        let hash = entry_hash(&prev_hash, &payload, seq, timestamp_ms);
        self.records.push(EvidenceRecord {
            seq,
            timestamp_ms,
            kind,
            payload,
            prev_hash,
            entry_hash: hash,
        });
        Ok(self.records.last().expect("just pushed"))
    }

    /// Recompute every link and hash; reports the smallest violated index.
    pub fn verify_chain(&self) -> ChainVerdict {
        let mut expected_prev = GENESIS_PREV.to_string();
        for (index, record) in self.records.iter().enumerate() {
            let bad = record.seq != index as u64
                || record.prev_hash != expected_prev
                || record.entry_hash
                    != entry_hash(
                        &record.prev_hash,
                        &record.payload,
                        record.seq,
                        record.timestamp_ms,
                    );
            if bad {
                return ChainVerdict {
                    ok: false,
                    first_bad_seq: Some(index as u64),
                };
            }
            expected_prev = record.entry_hash.clone();
        }
        ChainVerdict {
            ok: true,
            first_bad_seq: None,
        }
    }

    /// Export as JSON Lines: line 0 is the case header, each further line one
    /// record. Byte-stable for a given log.
    pub fn export_jsonl(&self) -> Result<Vec<u8>, EvidenceError> {
        let mut out = Vec::new();
        let header = serde_json::to_value(HeaderLine {
            case_id: self.case_id.clone(),
            created: self.created_ms,
            investigator: self.investigator.clone(),
        })
        .map_err(|e| EvidenceError::Serialization(e.to_string()))?;
        out.extend_from_slice(canonical_json(&header)?.as_bytes());
        out.push(b'\n');
        for record in &self.records {
            let payload: Value = serde_json::from_str(&record.payload)
                .map_err(|e| EvidenceError::Serialization(e.to_string()))?;
            let line = serde_json::to_value(RecordLine {
                hash: record.entry_hash.clone(),
                kind: record.kind,
                payload,
                prev: record.prev_hash.clone(),
                seq: record.seq,
                ts: record.timestamp_ms,
            })
            .map_err(|e| EvidenceError::Serialization(e.to_string()))?;
            out.extend_from_slice(canonical_json(&line)?.as_bytes());
            out.push(b'\n');
        }
        Ok(out)
    }

    /// Parse an exported file, validating the schema line by line and then
    /// the whole chain; tampered input is rejected.
    pub fn import_jsonl(bytes: &[u8]) -> Result<EvidenceLog, EvidenceError> {
        let text = std::str::from_utf8(bytes).map_err(|e| {
            // Attribute the encoding error to the line holding the first bad
            // byte.
            let line = bytes[..e.valid_up_to()]
                .iter()
                .filter(|b| **b == b'\n')
                .count();
            EvidenceError::MalformedLine {
                line,
                reason: format!("not UTF-8: {e}"),
            }
        })?;
        let body = text.strip_suffix('\n').unwrap_or(text);
        let mut lines = body.split('\n');
        let header_text = lines.next().ok_or(EvidenceError::MalformedLine {
            line: 0,
            reason: "empty file".into(),
        })?;
        let header: HeaderLine =
            serde_json::from_str(header_text).map_err(|e| EvidenceError::MalformedLine {
                line: 0,
                reason: format!("bad header: {e}"),
            })?;
        let mut log = EvidenceLog::new(header.case_id, header.investigator, header.created);
        for (offset, line) in lines.enumerate() {
            let line_no = offset + 1;
            let parsed: RecordLine =
                serde_json::from_str(line).map_err(|e| EvidenceError::MalformedLine {
                    line: line_no,
                    reason: e.to_string(),
                })?;
            if parsed.prev.len() != 64 || parsed.hash.len() != 64 {
                return Err(EvidenceError::MalformedLine {
                    line: line_no,
                    reason: "hash fields must be 64 hex chars".into(),
                });
            }
            log.records.push(EvidenceRecord {
                seq: parsed.seq,
                timestamp_ms: parsed.ts,
                kind: parsed.kind,
                payload: canonical_json(&parsed.payload)?,
                prev_hash: parsed.prev,
                entry_hash: parsed.hash,
            });
        }
        let verdict = log.verify_chain();
        if let Some(first_bad_seq) = verdict.first_bad_seq {
            return Err(EvidenceError::ChainBroken { first_bad_seq });
        }
        Ok(log)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), EvidenceError> {
        let bytes = self.export_jsonl()?;
        std::fs::write(path, bytes).map_err(|e| EvidenceError::Storage(e.to_string()))
    }

    pub fn read_jsonl(path: &Path) -> Result<EvidenceLog, EvidenceError> {
        let bytes = std::fs::read(path).map_err(|e| EvidenceError::Storage(e.to_string()))?;
        EvidenceLog::import_jsonl(&bytes)
    }
}
