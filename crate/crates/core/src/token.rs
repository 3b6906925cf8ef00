//! The SES skill token: a capped, burnable, owner-administered ERC20-style
//! ledger whose before-transfer hook mints a reward to the block's miner.
//!
//! Every mutating operation is atomic. It runs against a scratch copy of the
//! state and commits only on success, so a failed call leaves the state
//! bit-identical to what it was before.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::address::Address;
use crate::amount::{self, Amount, DECIMALS};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TokenError {
    #[error("invalid token config: {0}")]
    InvalidConfig(String),
    #[error("the zero address cannot take part in this operation")]
    ZeroAddress,
    #[error("{account} holds {balance} base units, {needed} needed")]
    InsufficientBalance {
        account: Address,
        balance: Amount,
        needed: Amount,
    },
    #[error("{spender} may spend {allowance} base units of {owner}, {needed} needed")]
    InsufficientAllowance {
        owner: Address,
        spender: Address,
        allowance: Amount,
        needed: Amount,
    },
    #[error("{caller} is not the token owner")]
    NotOwner { caller: Address },
    #[error("minting {requested} on top of supply {supply} exceeds cap {cap}")]
    CapExceeded {
        cap: Amount,
        supply: Amount,
        requested: Amount,
    },
    #[error("the token has been destroyed")]
    TokenDestroyed,
    #[error("arithmetic overflow")]
    Overflow,
}

impl TokenError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            TokenError::InvalidConfig(_) => "invalid_config",
            TokenError::ZeroAddress => "zero_address",
            TokenError::InsufficientBalance { .. } => "insufficient_balance",
            TokenError::InsufficientAllowance { .. } => "insufficient_allowance",
            TokenError::NotOwner { .. } => "not_owner",
            TokenError::CapExceeded { .. } => "cap_exceeded",
            TokenError::TokenDestroyed => "token_destroyed",
            TokenError::Overflow => "overflow",
        }
    }
}

pub type Result<T> = std::result::Result<T, TokenError>;

/// Constructor parameters of the token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenConfig {
    pub name: String,
    pub symbol: String,
    pub decimals: u8,
    pub cap: Amount,
    pub initial_supply: Amount,
    pub owner: Address,
    pub block_reward: Amount,
    /// Account whose balance `destroy` sweeps back to the owner.
    #[serde(default)]
    pub treasury: Option<Address>,
}

impl TokenConfig {
    pub const DEFAULT_CAP_TOKENS: u64 = 100_000_000;
    pub const DEFAULT_PREMINT_TOKENS: u64 = 70_000_000;

    /// SESkillToken defaults: 100,000,000 SES cap, 70,000,000 SES premint to
    /// the owner, no miner reward.
    pub fn seskill(owner: Address) -> Self {
        TokenConfig {
            name: "SESkillToken".to_string(),
            symbol: "SES".to_string(),
            decimals: DECIMALS,
            cap: Amount::from_tokens(Self::DEFAULT_CAP_TOKENS),
            initial_supply: Amount::from_tokens(Self::DEFAULT_PREMINT_TOKENS),
            owner,
            block_reward: Amount::ZERO,
            treasury: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: &str| Err(TokenError::InvalidConfig(msg.to_string()));
        if self.name.is_empty() {
            return invalid("name must not be empty");
        }
        if self.symbol.is_empty() {
            return invalid("symbol must not be empty");
        }
        if self.decimals != DECIMALS {
            return invalid("decimals are fixed at 18");
        }
        if self.cap.is_zero() {
            return invalid("cap must be positive");
        }
        if self.initial_supply > self.cap {
            return invalid("initial supply exceeds cap");
        }
        if self.owner.is_zero() {
            return invalid("owner must not be the zero address");
        }
        if self.treasury.is_some_and(|t| t.is_zero()) {
            return invalid("treasury must not be the zero address");
        }
        Ok(())
    }
}

/// Human-facing form of [`TokenConfig`] with token-denominated amounts,
/// as written in genesis files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenesisFile {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "default_symbol")]
    pub symbol: String,
    #[serde(with = "amount::as_tokens::option", default)]
    pub cap: Option<Amount>,
    #[serde(with = "amount::as_tokens::option", default)]
    pub initial_supply: Option<Amount>,
    pub owner: Address,
    #[serde(with = "amount::as_tokens::option", default)]
    pub block_reward: Option<Amount>,
    #[serde(default)]
    pub treasury: Option<Address>,
}

fn default_name() -> String {
    "SESkillToken".to_string()
}

fn default_symbol() -> String {
    "SES".to_string()
}

impl GenesisFile {
    /// Parses and validates a TOML genesis file.
    pub fn load(text: &str) -> Result<TokenConfig> {
        let file: GenesisFile = toml::from_str(text).map_err(|e| TokenError::InvalidConfig(e.to_string()))?;
        let config = file.into_config();
        config.validate()?;
        Ok(config)
    }

    pub fn into_config(self) -> TokenConfig {
        let mut config = TokenConfig::seskill(self.owner);
        config.name = self.name;
        config.symbol = self.symbol;
        if let Some(cap) = self.cap {
            config.cap = cap;
        }
        if let Some(premint) = self.initial_supply {
            config.initial_supply = premint;
        }
        if let Some(reward) = self.block_reward {
            config.block_reward = reward;
        }
        config.treasury = self.treasury;
        config
    }
}

/// The block a call executes in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockContext {
    block_number: u64,
    coinbase: Address,
    timestamp: u64,
}

impl BlockContext {
    pub fn new(block_number: u64, coinbase: Address, timestamp: u64) -> Result<Self> {
        if coinbase.is_zero() {
            return Err(TokenError::ZeroAddress);
        }
        Ok(BlockContext { block_number, coinbase, timestamp })
    }

    pub fn block_number(&self) -> u64 {
        self.block_number
    }

    pub fn coinbase(&self) -> Address {
        self.coinbase
    }

    pub fn timestamp(&self) -> u64 {
        self.timestamp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferKind {
    Transfer,
    Mint,
    Burn,
    MinerReward,
}

impl TransferKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TransferKind::Transfer => "transfer",
            TransferKind::Mint => "mint",
            TransferKind::Burn => "burn",
            TransferKind::MinerReward => "miner_reward",
        }
    }
}

/// One balance movement. Mints and miner rewards come from ZERO, burns go
/// to ZERO.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferRecord {
    pub from: Address,
    pub to: Address,
    pub amount: Amount,
    pub kind: TransferKind,
}

impl TransferRecord {
    fn new(from: Address, to: Address, amount: Amount, kind: TransferKind) -> Self {
        TransferRecord { from, to, amount, kind }
    }
}

/// Token operation payloads carried by transactions. The caller is the
/// transaction sender.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Call {
    Transfer { to: Address, amount: Amount },
    Approve { spender: Address, amount: Amount },
    TransferFrom { from: Address, to: Address, amount: Amount },
    Mint { to: Address, amount: Amount },
    Burn { amount: Amount },
    BurnFrom { from: Address, amount: Amount },
    SetBlockReward { amount: Amount },
    Destroy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenState {
    config: TokenConfig,
    balances: BTreeMap<Address, Amount>,
    allowances: BTreeMap<Address, BTreeMap<Address, Amount>>,
    total_supply: Amount,
    block_reward: Amount,
    owner: Address,
    destroyed: bool,
}

impl TokenState {
    /// Deploys the token. The premint to the owner, if any, is returned as a
    /// mint record; it runs outside any block, so no miner reward applies.
    pub fn init(config: TokenConfig) -> Result<(TokenState, Vec<TransferRecord>)> {
        config.validate()?;
        let mut balances = BTreeMap::new();
        let mut records = Vec::new();
        if !config.initial_supply.is_zero() {
            balances.insert(config.owner, config.initial_supply);
            records.push(TransferRecord::new(
                Address::ZERO,
                config.owner,
                config.initial_supply,
                TransferKind::Mint,
            ));
        }
        let state = TokenState {
            total_supply: config.initial_supply,
            block_reward: config.block_reward,
            owner: config.owner,
            destroyed: false,
            balances,
            allowances: BTreeMap::new(),
            config,
        };
        Ok((state, records))
    }

    pub fn config(&self) -> &TokenConfig {
        &self.config
    }

    pub fn balance_of(&self, account: Address) -> Amount {
        self.balances.get(&account).copied().unwrap_or(Amount::ZERO)
    }

    pub fn total_supply(&self) -> Amount {
        self.total_supply
    }

    pub fn cap(&self) -> Amount {
        self.config.cap
    }

    pub fn owner(&self) -> Address {
        self.owner
    }

    pub fn block_reward(&self) -> Amount {
        self.block_reward
    }

    pub fn is_destroyed(&self) -> bool {
        self.destroyed
    }

    pub fn allowance(&self, owner: Address, spender: Address) -> Amount {
        self.allowances
            .get(&owner)
            .and_then(|m| m.get(&spender))
            .copied()
            .unwrap_or(Amount::ZERO)
    }

    /// Non-zero balances in ascending address order.
    pub fn balances(&self) -> impl Iterator<Item = (Address, Amount)> + '_ {
        self.balances.iter().map(|(a, v)| (*a, *v))
    }

    /// Non-zero allowances in ascending (owner, spender) order.
    pub fn allowances(&self) -> impl Iterator<Item = (Address, Address, Amount)> + '_ {
        self.allowances
            .iter()
            .flat_map(|(o, m)| m.iter().map(move |(s, v)| (*o, *s, *v)))
    }

    pub fn transfer(
        &mut self,
        ctx: &BlockContext,
        from: Address,
        to: Address,
        amount: Amount,
    ) -> Result<Vec<TransferRecord>> {
        self.transact(|s| {
            s.ensure_live()?;
            s.move_balance(ctx, from, to, amount)
        })
    }

    pub fn approve(&mut self, caller: Address, spender: Address, amount: Amount) -> Result<()> {
        self.transact(|s| {
            s.ensure_live()?;
            if caller.is_zero() || spender.is_zero() {
                return Err(TokenError::ZeroAddress);
            }
            s.set_allowance(caller, spender, amount);
            Ok(())
        })
    }

    pub fn transfer_from(
        &mut self,
        ctx: &BlockContext,
        spender: Address,
        from: Address,
        to: Address,
        amount: Amount,
    ) -> Result<Vec<TransferRecord>> {
        self.transact(|s| {
            s.ensure_live()?;
            if spender.is_zero() {
                return Err(TokenError::ZeroAddress);
            }
            s.spend_allowance(from, spender, amount)?;
            s.move_balance(ctx, from, to, amount)
        })
    }

    pub fn mint(
        &mut self,
        ctx: &BlockContext,
        caller: Address,
        to: Address,
        amount: Amount,
    ) -> Result<Vec<TransferRecord>> {
        self.transact(|s| {
            s.ensure_live()?;
            s.ensure_owner(caller)?;
            if to.is_zero() {
                return Err(TokenError::ZeroAddress);
            }
            let headroom_ok = s
                .total_supply
                .checked_add(amount)
                .is_some_and(|after| after <= s.config.cap);
            if !headroom_ok {
                return Err(TokenError::CapExceeded {
                    cap: s.config.cap,
                    supply: s.total_supply,
                    requested: amount,
                });
            }
            let mut records: Vec<_> = s
                .before_token_transfer(ctx, Address::ZERO, to, amount)?
                .into_iter()
                .collect();
            s.credit(to, amount)?;
            s.total_supply = s.total_supply.checked_add(amount).ok_or(TokenError::Overflow)?;
            records.push(TransferRecord::new(Address::ZERO, to, amount, TransferKind::Mint));
            Ok(records)
        })
    }

    pub fn burn(
        &mut self,
        ctx: &BlockContext,
        caller: Address,
        amount: Amount,
    ) -> Result<Vec<TransferRecord>> {
        self.transact(|s| {
            s.ensure_live()?;
            s.burn_balance(ctx, caller, amount)
        })
    }

    /// Burns from `from` against the allowance it granted to `caller`.
    pub fn burn_from(
        &mut self,
        ctx: &BlockContext,
        caller: Address,
        from: Address,
        amount: Amount,
    ) -> Result<Vec<TransferRecord>> {
        self.transact(|s| {
            s.ensure_live()?;
            if caller.is_zero() {
                return Err(TokenError::ZeroAddress);
            }
            s.spend_allowance(from, caller, amount)?;
            s.burn_balance(ctx, from, amount)
        })
    }

    pub fn set_block_reward(&mut self, caller: Address, amount: Amount) -> Result<()> {
        self.transact(|s| {
            s.ensure_live()?;
            s.ensure_owner(caller)?;
            s.block_reward = amount;
            Ok(())
        })
    }

    /// Freezes the token. Whatever the configured treasury holds is swept to
    /// the owner first; that sweep is an ordinary transfer and runs the hook.
    pub fn destroy(&mut self, ctx: &BlockContext, caller: Address) -> Result<Vec<TransferRecord>> {
        self.transact(|s| {
            s.ensure_live()?;
            s.ensure_owner(caller)?;
            let mut records = Vec::new();
            if let Some(treasury) = s.config.treasury {
                let remaining = s.balance_of(treasury);
                if treasury != s.owner && !remaining.is_zero() {
                    let owner = s.owner;
                    records = s.move_balance(ctx, treasury, owner, remaining)?;
                }
            }
            s.destroyed = true;
            Ok(records)
        })
    }

    /// Dispatches a transaction payload on behalf of `sender`.
    pub fn execute(
        &mut self,
        ctx: &BlockContext,
        sender: Address,
        call: &Call,
    ) -> Result<Vec<TransferRecord>> {
        match *call {
            Call::Transfer { to, amount } => self.transfer(ctx, sender, to, amount),
            Call::Approve { spender, amount } => self.approve(sender, spender, amount).map(|_| vec![]),
            Call::TransferFrom { from, to, amount } => {
                self.transfer_from(ctx, sender, from, to, amount)
            }
            Call::Mint { to, amount } => self.mint(ctx, sender, to, amount),
            Call::Burn { amount } => self.burn(ctx, sender, amount),
            Call::BurnFrom { from, amount } => self.burn_from(ctx, sender, from, amount),
            Call::SetBlockReward { amount } => self.set_block_reward(sender, amount).map(|_| vec![]),
            Call::Destroy => self.destroy(ctx, sender),
        }
    }

    /// Canonical text form used for state hashing and snapshots. Field order:
    /// config, balances by address, allowances by (owner, spender),
    /// total supply, block reward, destroyed flag. Amounts are decimal base
    /// units; text fields are length-prefixed.
    pub fn canonical_serialization(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        let _ = writeln!(out, "ses-token-state/1");
        let _ = writeln!(out, "name={}:{}", c.name.len(), c.name);
        let _ = writeln!(out, "symbol={}:{}", c.symbol.len(), c.symbol);
        let _ = writeln!(out, "decimals={}", c.decimals);
        let _ = writeln!(out, "cap={}", c.cap);
        let _ = writeln!(out, "initial_supply={}", c.initial_supply);
        let _ = writeln!(out, "owner={}", c.owner);
        let _ = writeln!(out, "initial_block_reward={}", c.block_reward);
        match c.treasury {
            Some(t) => {
                let _ = writeln!(out, "treasury={t}");
            }
            None => {
                let _ = writeln!(out, "treasury=-");
            }
        }
        let _ = writeln!(out, "balances={}", self.balances.len());
        for (account, value) in &self.balances {
            let _ = writeln!(out, "{account} {value}");
        }
        let allowances: Vec<_> = self.allowances().collect();
        let _ = writeln!(out, "allowances={}", allowances.len());
        for (owner, spender, value) in allowances {
            let _ = writeln!(out, "{owner} {spender} {value}");
        }
        let _ = writeln!(out, "total_supply={}", self.total_supply);
        let _ = writeln!(out, "block_reward={}", self.block_reward);
        let _ = writeln!(out, "destroyed={}", self.destroyed);
        out
    }

    /// Checks the structural invariants; used after loading snapshots.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let mut sum = Amount::ZERO;
        for (account, value) in &self.balances {
            if value.is_zero() {
                return Err(format!("zero balance entry for {account}"));
            }
            if account.is_zero() {
                return Err("balance held by the zero address".into());
            }
            sum = sum.checked_add(*value).ok_or("balance sum overflows")?;
        }
        if sum != self.total_supply {
            return Err(format!("balances sum to {sum}, supply is {}", self.total_supply));
        }
        if self.total_supply > self.config.cap {
            return Err("supply exceeds cap".into());
        }
        if self.allowances.values().any(|m| m.is_empty() || m.values().any(Amount::is_zero)) {
            return Err("zero allowance entry".into());
        }
        if self.owner != self.config.owner {
            return Err("owner differs from config".into());
        }
        Ok(())
    }

    fn transact<T>(&mut self, f: impl FnOnce(&mut TokenState) -> Result<T>) -> Result<T> {
        let mut scratch = self.clone();
        let out = f(&mut scratch)?;
        *self = scratch;
        Ok(out)
    }

    fn ensure_live(&self) -> Result<()> {
        if self.destroyed {
            Err(TokenError::TokenDestroyed)
        } else {
            Ok(())
        }
    }

    fn ensure_owner(&self, caller: Address) -> Result<()> {
        if caller != self.owner {
            Err(TokenError::NotOwner { caller })
        } else {
            Ok(())
        }
    }

    /// Runs before every balance-moving record except the reward mint
    /// itself. Mints the block reward to the coinbase unless this is a mint
    /// straight to the coinbase, the reward is zero, or the cap (counting a
    /// mint of `pending_mint` about to happen) would be exceeded.
    fn before_token_transfer(
        &mut self,
        ctx: &BlockContext,
        from: Address,
        to: Address,
        pending_mint: Amount,
    ) -> Result<Option<TransferRecord>> {
        let coinbase = ctx.coinbase();
        if from.is_zero() && to == coinbase {
            return Ok(None);
        }
        let reward = self.block_reward;
        if reward.is_zero() {
            return Ok(None);
        }
        let fits = self
            .total_supply
            .checked_add(pending_mint)
            .and_then(|s| s.checked_add(reward))
            .is_some_and(|after| after <= self.config.cap);
        if !fits {
            return Ok(None);
        }
        self.credit(coinbase, reward)?;
        self.total_supply = self.total_supply.checked_add(reward).ok_or(TokenError::Overflow)?;
        Ok(Some(TransferRecord::new(Address::ZERO, coinbase, reward, TransferKind::MinerReward)))
    }

    fn move_balance(
        &mut self,
        ctx: &BlockContext,
        from: Address,
        to: Address,
        amount: Amount,
    ) -> Result<Vec<TransferRecord>> {
        if from.is_zero() || to.is_zero() {
            return Err(TokenError::ZeroAddress);
        }
        let mut records: Vec<_> = self.before_token_transfer(ctx, from, to, Amount::ZERO)?.into_iter().collect();
        self.debit(from, amount)?;
        self.credit(to, amount)?;
        records.push(TransferRecord::new(from, to, amount, TransferKind::Transfer));
        Ok(records)
    }

    fn burn_balance(
        &mut self,
        ctx: &BlockContext,
        from: Address,
        amount: Amount,
    ) -> Result<Vec<TransferRecord>> {
        if from.is_zero() {
            return Err(TokenError::ZeroAddress);
        }
        let mut records: Vec<_> = self.before_token_transfer(ctx, from, Address::ZERO, Amount::ZERO)?.into_iter().collect();
        self.debit(from, amount)?;
        self.total_supply = self.total_supply.checked_sub(amount).ok_or(TokenError::Overflow)?;
        records.push(TransferRecord::new(from, Address::ZERO, amount, TransferKind::Burn));
        Ok(records)
    }

    fn spend_allowance(&mut self, owner: Address, spender: Address, amount: Amount) -> Result<()> {
        let current = self.allowance(owner, spender);
        let left = current.checked_sub(amount).ok_or(TokenError::InsufficientAllowance {
            owner,
            spender,
            allowance: current,
            needed: amount,
        })?;
        self.set_allowance(owner, spender, left);
        Ok(())
    }

    fn set_allowance(&mut self, owner: Address, spender: Address, amount: Amount) {
        if amount.is_zero() {
            if let Some(m) = self.allowances.get_mut(&owner) {
                m.remove(&spender);
                if m.is_empty() {
                    self.allowances.remove(&owner);
                }
            }
        } else {
            self.allowances.entry(owner).or_default().insert(spender, amount);
        }
    }

    fn credit(&mut self, account: Address, amount: Amount) -> Result<()> {
        if amount.is_zero() {
            return Ok(());
        }
        let next = self.balance_of(account).checked_add(amount).ok_or(TokenError::Overflow)?;
        self.balances.insert(account, next);
        Ok(())
    }

    fn debit(&mut self, account: Address, amount: Amount) -> Result<()> {
        let balance = self.balance_of(account);
        let next = balance.checked_sub(amount).ok_or(TokenError::InsufficientBalance {
            account,
            balance,
            needed: amount,
        })?;
        if next.is_zero() {
            self.balances.remove(&account);
        } else {
            self.balances.insert(account, next);
        }
        Ok(())
    }
}
