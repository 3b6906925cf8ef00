//! Deterministic engine for the SES skill token.
//!
//! - [`token`]: the capped, burnable, owner-administered token with its
//!   per-transfer miner reward hook.
//! - [`chain`]: a single-sequencer chain simulator with receipts, an
//!   append-only ledger log and replay.
//! - [`rewards`]: learn-to-earn policies turning platform events into
//!   token grants.
//! - [`explorer`]: account histories and supply series derived from blocks.
//! - [`node`]: the sequencer tying the above together.

pub mod address;
pub mod amount;
pub mod chain;
pub mod digest;
pub mod explorer;
pub mod node;
pub mod rewards;
pub mod token;

pub use address::Address;
pub use amount::{Amount, SignedAmount};
pub use chain::{Block, Chain, ChainError, LedgerLog, Receipt, Transaction, TxStatus};
pub use digest::Digest;
pub use token::{BlockContext, Call, GenesisFile, TokenConfig, TokenError, TokenState, TransferKind, TransferRecord};
pub use explorer::{AccountHistoryEntry, Explorer, ExplorerError, SupplyPoint};
pub use node::Node;
pub use rewards::{PlatformEvent, PolicySet, RewardDecision, RewardEngine, RewardError};
