//! The sequencer: one chain, its reward engine and its explorer index,
//! mutated together by a single owner.
//!
//! Every mutation leaves new ledger entries and decision records behind.
//! [`Node::unsynced`] hands them out for persistence; decision records must
//! be made durable before ledger entries.

use crate::address::Address;
use crate::amount::Amount;
use crate::chain::{Block, Chain, ChainError, LogEntry};
use crate::digest::Digest;
use crate::explorer::Explorer;
use crate::rewards::{DecisionRecord, PlatformEvent, PolicySet, RewardDecision, RewardEngine, RewardError};
use crate::token::{Call, TokenConfig};

/// Output not yet handed to persistence.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Unsynced {
    pub decisions: Vec<DecisionRecord>,
    pub ledger: Vec<LogEntry>,
}

impl Unsynced {
    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty() && self.ledger.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Node {
    chain: Chain,
    engine: RewardEngine,
    explorer: Explorer,
    ledger_synced: u64,
    decisions_synced: usize,
}

impl Node {
    pub fn genesis(config: TokenConfig, chain_seed: u64, policy: PolicySet) -> Result<Node, ChainError> {
        let chain = Chain::genesis(config, chain_seed)?;
        Ok(Node::from_parts(chain, RewardEngine::new(policy), 0, 0))
    }

    /// Assembles a node from restored state. The counters say how much of
    /// the chain log and decision log is already durable.
    pub fn from_parts(chain: Chain, engine: RewardEngine, ledger_synced: u64, decisions_synced: usize) -> Node {
        let explorer = Explorer::from_chain(&chain).expect("a verified chain indexes in order");
        Node { chain, engine, explorer, ledger_synced, decisions_synced }
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn engine(&self) -> &RewardEngine {
        &self.engine
    }

    pub fn explorer(&self) -> &Explorer {
        &self.explorer
    }

    pub fn owner(&self) -> Address {
        self.chain.token().owner()
    }

    pub fn state_hash(&self) -> Digest {
        self.chain.state_hash()
    }

    pub fn submit(&mut self, sender: Address, call: Call) -> Result<Digest, ChainError> {
        self.chain.submit_call(sender, call)
    }

    pub fn transfer(&mut self, from: Address, to: Address, amount: Amount) -> Result<Digest, ChainError> {
        self.submit(from, Call::Transfer { to, amount })
    }

    /// Owner-gated calls are sent with the owner as sender.
    pub fn submit_as_owner(&mut self, call: Call) -> Result<Digest, ChainError> {
        let owner = self.owner();
        self.submit(owner, call)
    }

    pub fn produce_block(&mut self, coinbase: Address, timestamp: u64) -> Result<Block, ChainError> {
        let block = self.chain.produce_block(coinbase, timestamp)?.clone();
        self.explorer.catch_up(&self.chain).expect("blocks are indexed in order");
        Ok(block)
    }

    pub fn handle_event(&mut self, event: PlatformEvent) -> Result<RewardDecision, RewardError> {
        self.engine.handle_event(&mut self.chain, event)
    }

    pub fn convert_points(&mut self, actor: Address, points: u64) -> Result<RewardDecision, RewardError> {
        self.engine.convert_points(&mut self.chain, actor, points)
    }

    pub fn redeem(&mut self, actor: Address, unlock_id: &str) -> Result<RewardDecision, RewardError> {
        self.engine.redeem(&mut self.chain, actor, unlock_id)
    }

    /// Decision records and ledger entries produced since the last
    /// [`Node::mark_synced`].
    pub fn unsynced(&self) -> Unsynced {
        Unsynced {
            decisions: self.engine.decision_log()[self.decisions_synced..].to_vec(),
            ledger: self.chain.log().entries_from(self.ledger_synced).to_vec(),
        }
    }

    /// Records that everything returned by [`Node::unsynced`] is durable and
    /// drops in-memory log entries.
    pub fn mark_synced(&mut self) {
        self.decisions_synced = self.engine.decision_log().len();
        self.ledger_synced = self.chain.log().len();
        self.chain.compact_log();
    }
}
