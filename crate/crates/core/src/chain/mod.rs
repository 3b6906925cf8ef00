//! Deterministic single-sequencer chain hosting the token.
//!
//! Transactions are queued FIFO and executed when a block is produced.
//! Failed transactions are still included, with a failed receipt and no
//! state effect. Every accepted input is appended to a [`LedgerLog`] from
//! which the chain can be rebuilt bit-for-bit.

mod log;

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::log::{BlockPayload, EntryKind, EntryPayload, GenesisPayload, LedgerLog, LogEntry};
use crate::address::Address;
use crate::digest::{sha256_parts, Digest};
use crate::token::{BlockContext, Call, TokenConfig, TokenError, TokenState, TransferRecord};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error(transparent)]
    Token(#[from] TokenError),
    #[error("bad nonce for {sender}: expected {expected}, got {got}")]
    BadNonce { sender: Address, expected: u64, got: u64 },
    #[error("transaction {0} was already submitted")]
    DuplicateTxId(Digest),
    #[error("transaction id {0} does not match its contents")]
    InvalidTxId(Digest),
    #[error("timestamp {got} is earlier than the previous block's {previous}")]
    StaleTimestamp { previous: u64, got: u64 },
    #[error("the coinbase must not be the zero address")]
    ZeroCoinbase,
    #[error("{0} not found")]
    NotFound(String),
    #[error("corrupt log at entry {seq}: {reason}")]
    CorruptLog { seq: u64, reason: String },
}

impl ChainError {
    pub fn code(&self) -> &'static str {
        match self {
            ChainError::Token(e) => e.code(),
            ChainError::BadNonce { .. } => "bad_nonce",
            ChainError::DuplicateTxId(_) => "duplicate_tx_id",
            ChainError::InvalidTxId(_) => "invalid_tx_id",
            ChainError::StaleTimestamp { .. } => "stale_timestamp",
            ChainError::ZeroCoinbase => "zero_address",
            ChainError::NotFound(_) => "not_found",
            ChainError::CorruptLog { .. } => "corrupt_log",
        }
    }
}

pub type Result<T> = std::result::Result<T, ChainError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transaction {
    pub tx_id: Digest,
    pub nonce: u64,
    pub sender: Address,
    pub call: Call,
}

impl Transaction {
    pub fn new(nonce: u64, sender: Address, call: Call) -> Self {
        let tx_id = Self::compute_id(nonce, sender, &call);
        Transaction { tx_id, nonce, sender, call }
    }

    /// Digest of the canonical `(nonce, sender, call)` serialization.
    pub fn compute_id(nonce: u64, sender: Address, call: &Call) -> Digest {
        let call_json = serde_json::to_string(call).expect("calls always serialize");
        sha256_parts(&[
            b"ses-tx/1",
            &nonce.to_be_bytes(),
            sender.as_bytes(),
            call_json.as_bytes(),
        ])
    }

    pub fn has_valid_id(&self) -> bool {
        self.tx_id == Self::compute_id(self.nonce, self.sender, &self.call)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub number: u64,
    pub parent_hash: Digest,
    pub coinbase: Address,
    pub timestamp: u64,
    pub tx_ids: Vec<Digest>,
    pub state_hash: Digest,
}

impl Block {
    /// Header hash. The chain seed is mixed in so that chains with
    /// different seeds never share block hashes.
    pub fn hash(&self, chain_seed: u64) -> Digest {
        let header = serde_json::to_string(self).expect("blocks always serialize");
        sha256_parts(&[b"ses-block/1", &chain_seed.to_be_bytes(), header.as_bytes()])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxStatus {
    Success,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub tx_id: Digest,
    pub block_number: u64,
    pub index_in_block: u32,
    pub status: TxStatus,
    pub error: Option<String>,
    pub records: Vec<TransferRecord>,
}

/// A sealed block together with the transactions and receipts it carries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockBundle {
    pub block: Block,
    pub hash: Digest,
    pub entries: Vec<(Transaction, Receipt)>,
    /// The premint records; only present for block 0.
    pub genesis_records: Vec<TransferRecord>,
}

/// Hash of the canonical token state serialization.
pub fn state_hash(token: &TokenState) -> Digest {
    sha256_parts(&[b"ses-state/1", token.canonical_serialization().as_bytes()])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chain {
    seed: u64,
    token: TokenState,
    genesis_records: Vec<TransferRecord>,
    blocks: Vec<Block>,
    block_hashes: Vec<Digest>,
    txs: BTreeMap<Digest, Transaction>,
    receipts: BTreeMap<Digest, Receipt>,
    mempool: VecDeque<Digest>,
    next_nonce: BTreeMap<Address, u64>,
    log: LedgerLog,
}

impl Chain {
    pub fn genesis(config: TokenConfig, chain_seed: u64) -> Result<Chain> {
        let (token, genesis_records) = TokenState::init(config.clone())?;
        let block = Block {
            number: 0,
            parent_hash: Digest::ZERO,
            coinbase: Address::ZERO,
            timestamp: 0,
            tx_ids: Vec::new(),
            state_hash: state_hash(&token),
        };
        let mut log = LedgerLog::default();
        log.append(EntryPayload::Genesis(GenesisPayload { chain_seed, config }));
        Ok(Chain {
            seed: chain_seed,
            token,
            genesis_records,
            block_hashes: vec![block.hash(chain_seed)],
            blocks: vec![block],
            txs: BTreeMap::new(),
            receipts: BTreeMap::new(),
            mempool: VecDeque::new(),
            next_nonce: BTreeMap::new(),
            log,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn token(&self) -> &TokenState {
        &self.token
    }

    pub fn log(&self) -> &LedgerLog {
        &self.log
    }

    /// Forgets in-memory log entries once they are persisted elsewhere.
    pub fn compact_log(&mut self) {
        self.log.compact();
    }

    pub fn state_hash(&self) -> Digest {
        state_hash(&self.token)
    }

    pub fn height(&self) -> u64 {
        self.blocks.len() as u64 - 1
    }

    pub fn head(&self) -> &Block {
        self.blocks.last().expect("genesis always exists")
    }

    pub fn head_hash(&self) -> Digest {
        *self.block_hashes.last().expect("genesis always exists")
    }

    pub fn next_nonce(&self, sender: Address) -> u64 {
        self.next_nonce.get(&sender).copied().unwrap_or(0)
    }

    pub fn mempool_len(&self) -> usize {
        self.mempool.len()
    }

    pub fn pending(&self) -> impl Iterator<Item = &Transaction> + '_ {
        self.mempool.iter().map(|id| &self.txs[id])
    }

    pub fn genesis_records(&self) -> &[TransferRecord] {
        &self.genesis_records
    }

    /// Builds a transaction from `sender` with its next nonce and submits it.
    pub fn submit_call(&mut self, sender: Address, call: Call) -> Result<Digest> {
        let tx = Transaction::new(self.next_nonce(sender), sender, call);
        self.submit_tx(tx)
    }

    pub fn submit_tx(&mut self, tx: Transaction) -> Result<Digest> {
        if !tx.has_valid_id() {
            return Err(ChainError::InvalidTxId(tx.tx_id));
        }
        if self.txs.contains_key(&tx.tx_id) {
            return Err(ChainError::DuplicateTxId(tx.tx_id));
        }
        let expected = self.next_nonce(tx.sender);
        if tx.nonce != expected {
            return Err(ChainError::BadNonce { sender: tx.sender, expected, got: tx.nonce });
        }
        let id = tx.tx_id;
        self.next_nonce.insert(tx.sender, expected + 1);
        self.mempool.push_back(id);
        self.log.append(EntryPayload::TxSubmitted(tx.clone()));
        self.txs.insert(id, tx);
        Ok(id)
    }

    /// Seals the next block, draining the whole mempool in FIFO order.
    pub fn produce_block(&mut self, coinbase: Address, timestamp: u64) -> Result<&Block> {
        if coinbase.is_zero() {
            return Err(ChainError::ZeroCoinbase);
        }
        let previous = self.head().timestamp;
        if timestamp < previous {
            return Err(ChainError::StaleTimestamp { previous, got: timestamp });
        }
        let number = self.height() + 1;
        let ctx = BlockContext::new(number, coinbase, timestamp)?;
        let tx_ids: Vec<Digest> = self.mempool.drain(..).collect();
        for (index, id) in tx_ids.iter().enumerate() {
            let tx = &self.txs[id];
            let (status, error, records) = match self.token.execute(&ctx, tx.sender, &tx.call) {
                Ok(records) => (TxStatus::Success, None, records),
                Err(e) => (TxStatus::Failed, Some(e.code().to_string()), Vec::new()),
            };
            let receipt = Receipt {
                tx_id: *id,
                block_number: number,
                index_in_block: index as u32,
                status,
                error,
                records,
            };
            self.receipts.insert(*id, receipt);
        }
        let block = Block {
            number,
            parent_hash: self.head_hash(),
            coinbase,
            timestamp,
            tx_ids,
            state_hash: self.state_hash(),
        };
        let hash = block.hash(self.seed);
        self.log.append(EntryPayload::BlockProduced(BlockPayload {
            number,
            coinbase,
            timestamp,
            block_hash: hash,
            state_hash: block.state_hash,
        }));
        self.blocks.push(block);
        self.block_hashes.push(hash);
        Ok(self.head())
    }

    pub fn get_block(&self, number: u64) -> Result<&Block> {
        self.blocks
            .get(number as usize)
            .ok_or_else(|| ChainError::NotFound(format!("block {number}")))
    }

    pub fn block_hash(&self, number: u64) -> Result<Digest> {
        self.block_hashes
            .get(number as usize)
            .copied()
            .ok_or_else(|| ChainError::NotFound(format!("block {number}")))
    }

    pub fn get_receipt(&self, tx_id: &Digest) -> Result<&Receipt> {
        self.receipts
            .get(tx_id)
            .ok_or_else(|| ChainError::NotFound(format!("receipt {tx_id}")))
    }

    pub fn get_tx(&self, tx_id: &Digest) -> Result<&Transaction> {
        self.txs
            .get(tx_id)
            .ok_or_else(|| ChainError::NotFound(format!("transaction {tx_id}")))
    }

    pub fn contains_tx(&self, tx_id: &Digest) -> bool {
        self.txs.contains_key(tx_id)
    }

    pub fn block_bundle(&self, number: u64) -> Result<BlockBundle> {
        let block = self.get_block(number)?.clone();
        let entries = block
            .tx_ids
            .iter()
            .map(|id| (self.txs[id].clone(), self.receipts[id].clone()))
            .collect();
        let genesis_records = if number == 0 { self.genesis_records.clone() } else { Vec::new() };
        Ok(BlockBundle { hash: self.block_hashes[number as usize], block, entries, genesis_records })
    }

    /// Verifies parent links, numbering and recorded state hashes.
    pub fn verify_integrity(&self) -> Result<()> {
        for (i, block) in self.blocks.iter().enumerate() {
            let corrupt = |reason: &str| ChainError::CorruptLog { seq: i as u64, reason: reason.into() };
            if block.number != i as u64 {
                return Err(corrupt("block numbers are not gapless"));
            }
            let parent = if i == 0 { Digest::ZERO } else { self.block_hashes[i - 1] };
            if block.parent_hash != parent {
                return Err(corrupt("parent hash does not link"));
            }
            if block.hash(self.seed) != self.block_hashes[i] {
                return Err(corrupt("block hash mismatch"));
            }
        }
        if self.head().state_hash != self.state_hash() {
            return Err(ChainError::CorruptLog {
                seq: self.log.len(),
                reason: "state does not match head block".into(),
            });
        }
        self.token.check_invariants().map_err(|reason| ChainError::CorruptLog {
            seq: self.log.len(),
            reason,
        })
    }

    /// Dry-runs `call` from `sender` as if it were queued behind the current
    /// mempool in the next block. The coinbase is taken from the head block,
    /// or the token owner while only genesis exists.
    pub fn preflight(&self, sender: Address, call: &Call) -> std::result::Result<Vec<TransferRecord>, TokenError> {
        let head = self.head();
        let coinbase = if head.coinbase.is_zero() { self.token.owner() } else { head.coinbase };
        let ctx = BlockContext::new(self.height() + 1, coinbase, head.timestamp)?;
        let mut token = self.token.clone();
        for tx in self.pending() {
            let _ = token.execute(&ctx, tx.sender, &tx.call);
        }
        token.execute(&ctx, sender, call)
    }

    /// Rebuilds a chain from its log, checking every recorded hash.
    pub fn replay(log: &LedgerLog) -> Result<Chain> {
        let mut entries = log.entries().iter();
        let first = entries.next().ok_or_else(|| ChainError::CorruptLog {
            seq: 0,
            reason: "log is empty".into(),
        })?;
        if log.base() != 0 {
            return Err(ChainError::CorruptLog { seq: 0, reason: "log does not start at genesis".into() });
        }
        let mut chain = match &first.payload {
            EntryPayload::Genesis(g) => Chain::genesis(g.config.clone(), g.chain_seed).map_err(|e| {
                ChainError::CorruptLog { seq: 0, reason: format!("genesis rejected: {e}") }
            })?,
            _ => {
                return Err(ChainError::CorruptLog { seq: 0, reason: "first entry is not genesis".into() })
            }
        };
        chain.check_last_entry(first)?;
        for entry in entries {
            chain.apply_entry(entry)?;
        }
        Ok(chain)
    }

    /// Applies one logged input on top of the current state; used for
    /// replay and for catching up a snapshot with the log tail.
    pub fn apply_entry(&mut self, entry: &LogEntry) -> Result<()> {
        let corrupt = |reason: String| ChainError::CorruptLog { seq: entry.seq, reason };
        if entry.seq != self.log.len() {
            return Err(corrupt(format!("expected seq {}", self.log.len())));
        }
        match &entry.payload {
            EntryPayload::Genesis(_) => return Err(corrupt("second genesis entry".into())),
            EntryPayload::TxSubmitted(tx) => {
                self.submit_tx(tx.clone()).map_err(|e| corrupt(format!("tx rejected: {e}")))?;
            }
            EntryPayload::BlockProduced(b) => {
                self.produce_block(b.coinbase, b.timestamp)
                    .map_err(|e| corrupt(format!("block rejected: {e}")))?;
            }
        }
        self.check_last_entry(entry)
    }

    fn check_last_entry(&self, expected: &LogEntry) -> Result<()> {
        let produced = self.log.entries().last().expect("an entry was just appended");
        if produced != expected {
            return Err(ChainError::CorruptLog {
                seq: expected.seq,
                reason: "replayed entry diverges from the log".into(),
            });
        }
        Ok(())
    }
}
