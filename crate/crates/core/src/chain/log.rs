//! Append-only ledger log.
//!
//! Each entry is one line of compact JSON:
//!
//! ```text
//! {"seq":<n>,"kind":"genesis"|"tx_submitted"|"block_produced","payload":{...},"hash":"<hex>"}
//! ```
//!
//! `hash` chains every entry to its predecessor:
//! `sha256_parts(["ses-log/1", prev_hash, seq, kind, payload])`, with the
//! all-zero digest before entry 0. Parsing is strict: a line must re-encode
//! to exactly the same bytes, so any edit either breaks the JSON, breaks the
//! canonical form, or breaks the hash chain.

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use super::{ChainError, Transaction};
use crate::address::Address;
use crate::digest::{sha256_parts, Digest};
use crate::token::TokenConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Genesis,
    TxSubmitted,
    BlockProduced,
}

impl EntryKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EntryKind::Genesis => "genesis",
            EntryKind::TxSubmitted => "tx_submitted",
            EntryKind::BlockProduced => "block_produced",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenesisPayload {
    pub chain_seed: u64,
    pub config: TokenConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockPayload {
    pub number: u64,
    pub coinbase: Address,
    pub timestamp: u64,
    pub block_hash: Digest,
    pub state_hash: Digest,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EntryPayload {
    Genesis(GenesisPayload),
    TxSubmitted(Transaction),
    BlockProduced(BlockPayload),
}

impl EntryPayload {
    pub fn kind(&self) -> EntryKind {
        match self {
            EntryPayload::Genesis(_) => EntryKind::Genesis,
            EntryPayload::TxSubmitted(_) => EntryKind::TxSubmitted,
            EntryPayload::BlockProduced(_) => EntryKind::BlockProduced,
        }
    }

    fn to_json(&self) -> String {
        let encoded = match self {
            EntryPayload::Genesis(p) => serde_json::to_string(p),
            EntryPayload::TxSubmitted(tx) => serde_json::to_string(tx),
            EntryPayload::BlockProduced(p) => serde_json::to_string(p),
        };
        encoded.expect("log payloads always serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub seq: u64,
    pub payload: EntryPayload,
    pub hash: Digest,
}

impl LogEntry {
    fn seal(seq: u64, prev: &Digest, payload: EntryPayload) -> Self {
        let hash = entry_hash(prev, seq, payload.kind(), &payload.to_json());
        LogEntry { seq, payload, hash }
    }

    pub fn kind(&self) -> EntryKind {
        self.payload.kind()
    }

    /// The canonical line, without the trailing newline.
    pub fn to_line(&self) -> String {
        format!(
            r#"{{"seq":{},"kind":"{}","payload":{},"hash":"{}"}}"#,
            self.seq,
            self.kind().as_str(),
            self.payload.to_json(),
            self.hash
        )
    }

    /// Parses one line and checks that it is canonical and chains to `prev`.
    pub fn parse_line(line: &str, expected_seq: u64, prev: &Digest) -> Result<LogEntry, ChainError> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw<'a> {
            seq: u64,
            kind: EntryKind,
            #[serde(borrow)]
            payload: &'a RawValue,
            hash: Digest,
        }
        let corrupt = |reason: String| ChainError::CorruptLog { seq: expected_seq, reason };
        let raw: Raw<'_> =
            serde_json::from_str(line).map_err(|e| corrupt(format!("bad serialization: {e}")))?;
        if raw.seq != expected_seq {
            return Err(corrupt(format!("sequence gap: found seq {}", raw.seq)));
        }
        let payload_text = raw.payload.get();
        let bad_payload = |e: serde_json::Error| corrupt(format!("bad payload: {e}"));
        let payload = match raw.kind {
            EntryKind::Genesis => {
                EntryPayload::Genesis(serde_json::from_str(payload_text).map_err(bad_payload)?)
            }
            EntryKind::TxSubmitted => {
                EntryPayload::TxSubmitted(serde_json::from_str(payload_text).map_err(bad_payload)?)
            }
            EntryKind::BlockProduced => {
                EntryPayload::BlockProduced(serde_json::from_str(payload_text).map_err(bad_payload)?)
            }
        };
        let entry = LogEntry { seq: raw.seq, payload, hash: raw.hash };
        if entry.to_line() != line {
            return Err(corrupt("non-canonical encoding".into()));
        }
        let expected = entry_hash(prev, entry.seq, entry.kind(), payload_text);
        if expected != entry.hash {
            return Err(corrupt("hash chain mismatch".into()));
        }
        Ok(entry)
    }
}

fn entry_hash(prev: &Digest, seq: u64, kind: EntryKind, payload_json: &str) -> Digest {
    sha256_parts(&[
        b"ses-log/1",
        prev.as_bytes(),
        &seq.to_be_bytes(),
        kind.as_str().as_bytes(),
        payload_json.as_bytes(),
    ])
}

/// The ordered log of accepted inputs.
///
/// A log restored from a snapshot keeps only the entries after the snapshot
/// point in memory; `base` counts the ones before it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LedgerLog {
    base: u64,
    head: Digest,
    entries: Vec<LogEntry>,
}

/// Serialized form: only the counters, the entries live in the log file.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LogPosition {
    len: u64,
    head: Digest,
}

impl Serialize for LedgerLog {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        LogPosition { len: self.len(), head: self.head }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for LedgerLog {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let pos = LogPosition::deserialize(deserializer)?;
        Ok(LedgerLog { base: pos.len, head: pos.head, entries: Vec::new() })
    }
}

impl LedgerLog {
    /// Total number of entries ever appended.
    pub fn len(&self) -> u64 {
        self.base + self.entries.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Hash of the last entry, or zero for an empty log.
    pub fn head(&self) -> Digest {
        self.head
    }

    /// Sequence number of the first in-memory entry.
    pub fn base(&self) -> u64 {
        self.base
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    /// Entries with `seq >= from`, if still held in memory.
    pub fn entries_from(&self, from: u64) -> &[LogEntry] {
        let start = from.saturating_sub(self.base).min(self.entries.len() as u64) as usize;
        &self.entries[start..]
    }

    pub(crate) fn append(&mut self, payload: EntryPayload) -> &LogEntry {
        let entry = LogEntry::seal(self.len(), &self.head, payload);
        self.head = entry.hash;
        self.entries.push(entry);
        self.entries.last().expect("just pushed")
    }

    /// Drops in-memory entries so that only the counters remain.
    pub fn compact(&mut self) {
        self.base = self.len();
        self.entries.clear();
    }

    /// Parses a whole log file. Every line, including the last, must end in
    /// a newline.
    pub fn parse(text: &str) -> Result<LedgerLog, ChainError> {
        let mut log = LedgerLog::default();
        if text.is_empty() {
            return Ok(log);
        }
        let body = text.strip_suffix('\n').ok_or_else(|| ChainError::CorruptLog {
            seq: text.matches('\n').count() as u64,
            reason: "torn final line".into(),
        })?;
        for line in body.split('\n') {
            let entry = LogEntry::parse_line(line, log.len(), &log.head)?;
            log.head = entry.hash;
            log.entries.push(entry);
        }
        Ok(log)
    }

    /// The log file contents for the in-memory entries.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for entry in &self.entries {
            out.push_str(&entry.to_line());
            out.push('\n');
        }
        out
    }

    /// The first `n` entries as a standalone log (only valid when nothing
    /// has been compacted away).
    pub fn prefix(&self, n: usize) -> LedgerLog {
        assert_eq!(self.base, 0, "prefix of a compacted log");
        let entries = self.entries[..n.min(self.entries.len())].to_vec();
        let head = entries.last().map(|e| e.hash).unwrap_or(Digest::ZERO);
        LedgerLog { base: 0, head, entries }
    }
}
