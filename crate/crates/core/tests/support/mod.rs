//! Generators shared by the property suites.

#![allow(dead_code)]

use proptest::prelude::*;
use ses_core::{Address, Amount, Call, Chain, TokenConfig};

pub const ACCOUNTS: usize = 6;
pub const MINERS: usize = 2;

pub fn account(i: usize) -> Address {
    Address::from_low_u64(0x100 + i as u64)
}

pub fn owner() -> Address {
    account(0)
}

pub fn miner(i: usize) -> Address {
    Address::from_low_u64(0x900 + i as u64)
}

/// Everyone who can end up holding tokens.
pub fn holders() -> Vec<Address> {
    (0..ACCOUNTS).map(account).chain((0..MINERS).map(miner)).collect()
}

pub fn tight_config() -> TokenConfig {
    let mut config = TokenConfig::seskill(owner());
    config.cap = Amount::from_tokens(1_000_000);
    config.initial_supply = Amount::from_tokens(990_000);
    config.block_reward = Amount::from_tokens(3);
    config
}

pub fn amount() -> impl Strategy<Value = Amount> {
    prop_oneof![
        4 => (0u64..5_000).prop_map(Amount::from_tokens),
        2 => (0u128..10_000_000_000_000_000_000).prop_map(Amount::from_base_units),
        1 => (990_000u64..1_100_000).prop_map(Amount::from_tokens),
    ]
}

fn addr() -> impl Strategy<Value = Address> {
    prop_oneof![
        8 => (0..ACCOUNTS).prop_map(account),
        2 => (0..MINERS).prop_map(miner),
        1 => Just(Address::ZERO),
    ]
}

pub fn call() -> impl Strategy<Value = Call> {
    prop_oneof![
        6 => (addr(), amount()).prop_map(|(to, amount)| Call::Transfer { to, amount }),
        2 => (addr(), amount()).prop_map(|(spender, amount)| Call::Approve { spender, amount }),
        2 => (addr(), addr(), amount()).prop_map(|(from, to, amount)| Call::TransferFrom { from, to, amount }),
        2 => (addr(), amount()).prop_map(|(to, amount)| Call::Mint { to, amount }),
        2 => amount().prop_map(|amount| Call::Burn { amount }),
        1 => (addr(), amount()).prop_map(|(from, amount)| Call::BurnFrom { from, amount }),
        1 => (0u64..20).prop_map(|n| Call::SetBlockReward { amount: Amount::from_tokens(n) }),
    ]
}

pub fn sender() -> impl Strategy<Value = Address> {
    prop_oneof![3 => Just(owner()), 5 => (1..ACCOUNTS).prop_map(account)]
}

#[derive(Debug, Clone)]
pub enum Step {
    Submit(Address, Call),
    Block { miner: usize, dt: u64 },
}

pub fn step() -> impl Strategy<Value = Step> {
    prop_oneof![
        5 => (sender(), call()).prop_map(|(s, c)| Step::Submit(s, c)),
        1 => ((0..MINERS), 0u64..100).prop_map(|(miner, dt)| Step::Block { miner, dt }),
    ]
}

/// Runs `steps` on a fresh chain and seals a final block.
pub fn run(config: TokenConfig, seed: u64, steps: &[Step]) -> Chain {
    let mut chain = Chain::genesis(config, seed).unwrap();
    for s in steps {
        apply(&mut chain, s);
    }
    let ts = chain.head().timestamp + 1;
    chain.produce_block(miner(0), ts).unwrap();
    chain
}

pub fn apply(chain: &mut Chain, step: &Step) {
    match step {
        Step::Submit(sender, call) => {
            chain.submit_call(*sender, call.clone()).unwrap();
        }
        Step::Block { miner: m, dt } => {
            let ts = chain.head().timestamp + dt;
            chain.produce_block(miner(*m), ts).unwrap();
        }
    }
}
