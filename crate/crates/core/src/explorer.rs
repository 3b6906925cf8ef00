//! Block explorer index: transaction lookup, per-account histories and
//! supply series, derived only from sealed blocks.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::address::Address;
use crate::amount::{Amount, SignedAmount};
use crate::chain::{BlockBundle, Chain, Receipt, Transaction};
use crate::digest::Digest;
use crate::token::{TransferKind, TransferRecord};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExplorerError {
    #[error("expected block {expected}, got block {got}")]
    OutOfOrderBlock { expected: u64, got: u64 },
    #[error("block {0} differs from the one already indexed")]
    ConflictingBlock(u64),
    #[error("transaction {0} not found")]
    NotFound(Digest),
    #[error("balance history of {0} does not add up")]
    Inconsistent(Address),
}

impl ExplorerError {
    pub fn code(&self) -> &'static str {
        match self {
            ExplorerError::OutOfOrderBlock { .. } => "out_of_order_block",
            ExplorerError::ConflictingBlock(_) => "conflicting_block",
            ExplorerError::NotFound(_) => "not_found",
            ExplorerError::Inconsistent(_) => "corrupt_log",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccountHistoryEntry {
    /// `None` for the genesis premint, which has no transaction.
    pub tx_id: Option<Digest>,
    pub block_number: u64,
    pub counterparty: Address,
    pub delta: SignedAmount,
    pub kind: TransferKind,
    pub running_balance: Amount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupplyPoint {
    pub block_number: u64,
    pub total_supply: Amount,
}

#[derive(Debug, Clone, Default)]
pub struct Explorer {
    block_hashes: Vec<Digest>,
    txs: BTreeMap<Digest, (Transaction, Receipt)>,
    histories: BTreeMap<Address, Vec<AccountHistoryEntry>>,
    supply: Vec<SupplyPoint>,
}

impl Explorer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Indexes every sealed block of `chain`.
    pub fn from_chain(chain: &Chain) -> Result<Self, ExplorerError> {
        let mut ix = Explorer::new();
        ix.catch_up(chain)?;
        Ok(ix)
    }

    /// Indexes the blocks of `chain` not seen yet.
    pub fn catch_up(&mut self, chain: &Chain) -> Result<(), ExplorerError> {
        for number in self.next_block()..=chain.height() {
            let bundle = chain.block_bundle(number).expect("blocks up to height exist");
            self.index_block(&bundle)?;
        }
        Ok(())
    }

    /// Number of the next block to index.
    pub fn next_block(&self) -> u64 {
        self.block_hashes.len() as u64
    }

    pub fn index_block(&mut self, bundle: &BlockBundle) -> Result<(), ExplorerError> {
        let number = bundle.block.number;
        let expected = self.next_block();
        if number < expected {
            return if self.block_hashes[number as usize] == bundle.hash {
                Ok(())
            } else {
                Err(ExplorerError::ConflictingBlock(number))
            };
        }
        if number > expected {
            return Err(ExplorerError::OutOfOrderBlock { expected, got: number });
        }
        let mut supply = self.supply.last().map(|p| p.total_supply).unwrap_or(Amount::ZERO);
        for record in &bundle.genesis_records {
            self.ingest(None, number, record, &mut supply);
        }
        for (tx, receipt) in &bundle.entries {
            for record in &receipt.records {
                self.ingest(Some(tx.tx_id), number, record, &mut supply);
            }
            self.txs.insert(tx.tx_id, (tx.clone(), receipt.clone()));
        }
        self.supply.push(SupplyPoint { block_number: number, total_supply: supply });
        self.block_hashes.push(bundle.hash);
        Ok(())
    }

    fn ingest(&mut self, tx_id: Option<Digest>, block_number: u64, r: &TransferRecord, supply: &mut Amount) {
        if r.from.is_zero() {
            *supply = supply.checked_add(r.amount).expect("supply is capped");
        } else {
            self.push(r.from, tx_id, block_number, r.to, SignedAmount::debit(r.amount), r.kind);
        }
        if r.to.is_zero() {
            *supply = supply.checked_sub(r.amount).expect("burns never exceed supply");
        } else {
            self.push(r.to, tx_id, block_number, r.from, SignedAmount::credit(r.amount), r.kind);
        }
    }

    fn push(
        &mut self,
        account: Address,
        tx_id: Option<Digest>,
        block_number: u64,
        counterparty: Address,
        delta: SignedAmount,
        kind: TransferKind,
    ) {
        let history = self.histories.entry(account).or_default();
        let previous = history.last().map(|e| e.running_balance).unwrap_or(Amount::ZERO);
        let running_balance = delta.apply(previous).expect("receipts never overdraw");
        history.push(AccountHistoryEntry { tx_id, block_number, counterparty, delta, kind, running_balance });
    }

    /// The full history of `account` in chain order.
    pub fn account_history(&self, account: Address) -> &[AccountHistoryEntry] {
        self.histories.get(&account).map(Vec::as_slice).unwrap_or(&[])
    }

    /// One page (zero-based) of `account_history`.
    pub fn txs_by_account(&self, account: Address, page: usize, page_size: usize) -> &[AccountHistoryEntry] {
        let all = self.account_history(account);
        let start = page.saturating_mul(page_size).min(all.len());
        let end = start.saturating_add(page_size).min(all.len());
        &all[start..end]
    }

    pub fn accounts(&self) -> impl Iterator<Item = Address> + '_ {
        self.histories.keys().copied()
    }

    pub fn find_tx(&self, tx_id: &Digest) -> Result<(&Transaction, &Receipt), ExplorerError> {
        self.txs
            .get(tx_id)
            .map(|(tx, r)| (tx, r))
            .ok_or(ExplorerError::NotFound(*tx_id))
    }

    pub fn supply_history(&self) -> &[SupplyPoint] {
        &self.supply
    }

    /// Balance of `account` after each block that changed it.
    pub fn balance_history(&self, account: Address) -> Vec<(u64, Amount)> {
        let mut out: Vec<(u64, Amount)> = Vec::new();
        for e in self.account_history(account) {
            match out.last_mut() {
                Some(last) if last.0 == e.block_number => last.1 = e.running_balance,
                _ => out.push((e.block_number, e.running_balance)),
            }
        }
        out
    }

    /// Last known balance of `account`.
    pub fn balance(&self, account: Address) -> Amount {
        self.account_history(account).last().map(|e| e.running_balance).unwrap_or(Amount::ZERO)
    }

    /// Histories as CSV, for one account or for all of them.
    pub fn export_csv(&self, account: Option<Address>) -> String {
        let mut out = String::from("address,block,tx_id,kind,delta,running_balance\n");
        let accounts: Vec<Address> = match account {
            Some(a) => vec![a],
            None => self.accounts().collect(),
        };
        for a in accounts {
            for e in self.account_history(a) {
                let tx = e.tx_id.map(|d| d.to_string()).unwrap_or_default();
                let _ = writeln!(
                    out,
                    "{a},{},{tx},{},{},{}",
                    e.block_number,
                    e.kind.as_str(),
                    e.delta,
                    e.running_balance
                );
            }
        }
        out
    }

    /// Re-derives every running balance from the deltas.
    pub fn check_consistency(&self) -> Result<(), ExplorerError> {
        for (account, history) in &self.histories {
            let mut balance = Amount::ZERO;
            for e in history {
                balance = e.delta.apply(balance).ok_or(ExplorerError::Inconsistent(*account))?;
                if balance != e.running_balance {
                    return Err(ExplorerError::Inconsistent(*account));
                }
            }
        }
        Ok(())
    }
}
