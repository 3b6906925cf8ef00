//! The reference transfer scenario: the owner sends the whole 70,000,000 SES
//! premint to test account 1, which then sends 1,000,000 SES to test
//! account 2.

use ses_core::{Address, Amount};

use crate::api::{BlockBody, Request, TransferBody};
use crate::config::well_known;

pub fn owner() -> Address {
    well_known("owner").expect("known account")
}

pub fn account(n: u32) -> Address {
    well_known(&format!("account-{n}")).expect("known account")
}

pub fn miner() -> Address {
    well_known("miner").expect("known account")
}

/// The scenario as API requests: two transfers, each sealed by a block.
pub fn poc_requests() -> Vec<Request> {
    vec![
        Request::Transfer(TransferBody { from: owner(), to: account(1), amount: Amount::from_tokens(70_000_000) }),
        Request::ProduceBlock(BlockBody { coinbase: miner(), timestamp: Some(1) }),
        Request::Transfer(TransferBody { from: account(1), to: account(2), amount: Amount::from_tokens(1_000_000) }),
        Request::ProduceBlock(BlockBody { coinbase: miner(), timestamp: Some(2) }),
    ]
}
