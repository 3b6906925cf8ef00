//! On-disk state of a data directory.
//!
//! ```text
//! <data-dir>/lock           advisory lock held by the running instance
//! <data-dir>/ledger.log     chain ledger log, one entry per line
//! <data-dir>/decisions.log  reward decision records, one per line
//! <data-dir>/snapshot       optional chain snapshot at some log position
//! ```
//!
//! Every line is fsynced before the request that produced it is answered.
//! Decision records are written before the ledger entries they cause, so a
//! crash can leave at most one decision whose transaction never reached
//! the ledger; that decision is rolled back on the next open.

use std::fs::{self, File, OpenOptions, TryLockError};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ses_core::rewards::{parse_decision_log, DecisionRecord};
use ses_core::{Chain, LedgerLog, Node, PolicySet, RewardEngine, TokenConfig};

use crate::api::ApiError;

pub const LEDGER_FILE: &str = "ledger.log";
pub const DECISIONS_FILE: &str = "decisions.log";
pub const SNAPSHOT_FILE: &str = "snapshot";
const LOCK_FILE: &str = "lock";
const SNAPSHOT_FORMAT: &str = "ses-snapshot/1";

#[derive(Debug, Clone)]
pub struct StoreConfig {
    pub data_dir: PathBuf,
    /// Only used when the directory holds no ledger yet.
    pub genesis: TokenConfig,
    pub chain_seed: u64,
    pub policy: PolicySet,
    /// Write a snapshot every this many blocks; 0 disables.
    pub snapshot_every: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Snapshot {
    format: String,
    chain: Chain,
}

fn io_error(path: &Path, e: std::io::Error) -> ApiError {
    ApiError::internal("io_error", format!("{}: {e}", path.display()))
}

fn corrupt(message: impl Into<String>) -> ApiError {
    ApiError::internal("corrupt_log", message)
}

fn read_optional(path: &Path) -> Result<String, ApiError> {
    match fs::read_to_string(path) {
        Ok(text) => Ok(text),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(String::new()),
        Err(e) => Err(io_error(path, e)),
    }
}

#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    _lock: File,
    ledger: File,
    decisions: File,
    appends: u64,
    crash_after: Option<u64>,
    failed: bool,
    snapshot_every: u64,
    last_snapshot_height: u64,
}

impl Store {
    /// Locks the directory and restores the node from snapshot and logs, or
    /// creates a fresh genesis.
    pub fn open(config: &StoreConfig) -> Result<(Store, Node), ApiError> {
        let dir = config.data_dir.clone();
        fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
        let lock_path = dir.join(LOCK_FILE);
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&lock_path)
            .map_err(|e| io_error(&lock_path, e))?;
        match lock.try_lock() {
            Ok(()) => {}
            Err(TryLockError::WouldBlock) => {
                return Err(ApiError::new(
                    "lock_held",
                    503,
                    format!("{} is in use by another instance", dir.display()),
                ))
            }
            Err(TryLockError::Error(e)) => return Err(io_error(&lock_path, e)),
        }

        let ledger_path = dir.join(LEDGER_FILE);
        let decisions_path = dir.join(DECISIONS_FILE);
        let snapshot_path = dir.join(SNAPSHOT_FILE);
        let ledger_text = read_optional(&ledger_path)?;
        let decisions_text = read_optional(&decisions_path)?;

        let open_append = |path: &Path| {
            OpenOptions::new().create(true).append(true).open(path).map_err(|e| io_error(path, e))
        };
        let mut store = Store {
            ledger: open_append(&ledger_path)?,
            decisions: open_append(&decisions_path)?,
            dir,
            _lock: lock,
            appends: 0,
            crash_after: None,
            failed: false,
            snapshot_every: config.snapshot_every,
            last_snapshot_height: 0,
        };

        if ledger_text.is_empty() {
            if !decisions_text.is_empty() || snapshot_path.exists() {
                return Err(corrupt("decision log or snapshot present without a ledger"));
            }
            let mut node = Node::genesis(config.genesis.clone(), config.chain_seed, config.policy.clone())?;
            store.persist(&mut node)?;
            return Ok((store, node));
        }

        let log = LedgerLog::parse(&ledger_text)?;
        let chain = restore_chain(&log, &snapshot_path)?;
        store.last_snapshot_height = chain.height();
        let mut records = parse_decision_log(&decisions_text)?;
        check_decisions(&chain, &records)?;
        if records.last().and_then(|r| r.tx.as_ref()).is_some_and(|tx| !chain.contains_tx(&tx.tx_id)) {
            records.pop();
            let keep: usize = records.iter().map(|r| r.to_line().len() + 1).sum();
            store.decisions.set_len(keep as u64).map_err(|e| io_error(&decisions_path, e))?;
            store.decisions.sync_data().map_err(|e| io_error(&decisions_path, e))?;
        }
        let synced = records.len();
        let engine = RewardEngine::restore(config.policy.clone(), records)?;
        let ledger_len = chain.log().len();
        let mut node = Node::from_parts(chain, engine, ledger_len, synced);
        node.mark_synced();
        Ok((store, node))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Makes the store fail, as if the process died, once `n` more lines
    /// have been appended.
    pub fn set_crash_after(&mut self, n: u64) {
        self.crash_after = Some(self.appends + n);
    }

    /// Appends the node's unsynced output, decisions first.
    pub fn persist(&mut self, node: &mut Node) -> Result<(), ApiError> {
        let out = node.unsynced();
        if out.is_empty() {
            return Ok(());
        }
        let decisions = out.decisions.iter().map(DecisionRecord::to_line);
        for line in decisions {
            self.append(false, &line)?;
        }
        for entry in &out.ledger {
            self.append(true, &entry.to_line())?;
        }
        node.mark_synced();
        if self.snapshot_every > 0 && node.chain().height() >= self.last_snapshot_height + self.snapshot_every {
            self.snapshot(node)?;
        }
        Ok(())
    }

    fn append(&mut self, ledger: bool, line: &str) -> Result<(), ApiError> {
        if self.failed {
            return Err(ApiError::internal("store_failed", "an earlier write failed; restart the service"));
        }
        if self.crash_after == Some(self.appends) {
            self.failed = true;
            return Err(ApiError::internal("store_failed", "simulated crash"));
        }
        let (file, name) = if ledger {
            (&mut self.ledger, LEDGER_FILE)
        } else {
            (&mut self.decisions, DECISIONS_FILE)
        };
        let mut buf = Vec::with_capacity(line.len() + 1);
        buf.extend_from_slice(line.as_bytes());
        buf.push(b'\n');
        let result = file.write_all(&buf).and_then(|_| file.sync_data());
        if let Err(e) = result {
            self.failed = true;
            return Err(io_error(&self.dir.join(name), e));
        }
        self.appends += 1;
        Ok(())
    }

    /// Atomically replaces the snapshot with the node's current chain.
    pub fn snapshot(&mut self, node: &Node) -> Result<(), ApiError> {
        if !node.unsynced().ledger.is_empty() {
            return Err(ApiError::internal("store_failed", "snapshot requested with unsynced entries"));
        }
        let text = serde_json::to_string(&Snapshot {
            format: SNAPSHOT_FORMAT.to_string(),
            chain: node.chain().clone(),
        })
        .expect("chains serialize");
        let tmp = self.dir.join("snapshot.tmp");
        let target = self.dir.join(SNAPSHOT_FILE);
        let write = || -> std::io::Result<()> {
            let mut f = File::create(&tmp)?;
            f.write_all(text.as_bytes())?;
            f.sync_all()?;
            fs::rename(&tmp, &target)?;
            File::open(&self.dir)?.sync_all()
        };
        write().map_err(|e| io_error(&target, e))?;
        self.last_snapshot_height = node.chain().height();
        Ok(())
    }
}

/// Loads the snapshot if there is one and catches it up with the log,
/// otherwise replays the whole log.
fn restore_chain(log: &LedgerLog, snapshot_path: &Path) -> Result<Chain, ApiError> {
    let text = read_optional(snapshot_path)?;
    let mut chain = if text.is_empty() {
        Chain::replay(log)?
    } else {
        let snapshot: Snapshot =
            serde_json::from_str(&text).map_err(|e| corrupt(format!("unreadable snapshot: {e}")))?;
        if snapshot.format != SNAPSHOT_FORMAT {
            return Err(corrupt(format!("unknown snapshot format {:?}", snapshot.format)));
        }
        let mut chain = snapshot.chain;
        let at = chain.log().len();
        let anchor = at.checked_sub(1).and_then(|i| log.entries().get(i as usize));
        if anchor.map(|e| e.hash) != Some(chain.log().head()) {
            return Err(corrupt("snapshot does not match the ledger log"));
        }
        for entry in log.entries_from(at) {
            chain.apply_entry(entry)?;
        }
        chain
    };
    chain.verify_integrity()?;
    chain.compact_log();
    Ok(chain)
}

/// Every decision's transaction must be in the chain exactly as recorded,
/// except possibly the last one.
fn check_decisions(chain: &Chain, records: &[DecisionRecord]) -> Result<(), ApiError> {
    for (i, record) in records.iter().enumerate() {
        let Some(tx) = &record.tx else { continue };
        match chain.get_tx(&tx.tx_id) {
            Ok(found) if found == tx => {}
            Ok(_) => return Err(corrupt(format!("decision {i} disagrees with its ledger transaction"))),
            Err(_) if i + 1 == records.len() => {}
            Err(_) => return Err(corrupt(format!("decision {i} refers to a transaction missing from the ledger"))),
        }
        if record.decision.tx_id != Some(tx.tx_id) {
            return Err(corrupt(format!("decision {i} names a different transaction")));
        }
    }
    Ok(())
}
