//! Learn-to-earn reward engine.
//!
//! Platform events are matched against a [`PolicySet`]; token rewards are
//! submitted to the chain as owner mints or treasury transfers, points
//! rewards accumulate in per-actor points accounts. Idempotency keys, UTC
//! daily limits and lifetime caps bound what any single actor can collect.
//!
//! Every handled input produces exactly one [`DecisionRecord`]. The engine's
//! state is a fold over those records, so the decision log alone restores it.

mod policy;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::policy::{EventKind, Funding, PolicySet, RewardRule, RewardValue};
use crate::address::Address;
use crate::amount::Amount;
use crate::chain::{Chain, ChainError, Transaction};
use crate::digest::Digest;
use crate::token::{Call, TokenError};

const SECONDS_PER_DAY: u64 = 86_400;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RewardError {
    #[error("policy does not parse: {0}")]
    PolicyParse(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("invalid event: {0}")]
    InvalidEvent(String),
    #[error("{actor} holds {held} points, {requested} requested")]
    InsufficientPoints { actor: Address, held: u64, requested: u64 },
    #[error("{points} points is not a multiple of the conversion rate {rate}")]
    NotDivisible { points: u64, rate: u64 },
    #[error("the policy has no points conversion")]
    ConversionDisabled,
    #[error("the token cap leaves no room for this mint")]
    CapExhausted,
    #[error("unknown unlock {0:?}")]
    UnknownUnlock(String),
    #[error("{actor} already unlocked {unlock_id:?}")]
    AlreadyUnlocked { actor: Address, unlock_id: String },
    #[error("{actor} holds {balance} base units, {needed} needed")]
    InsufficientBalance { actor: Address, balance: Amount, needed: Amount },
    #[error(transparent)]
    Token(TokenError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("corrupt decision log at record {seq}: {reason}")]
    CorruptDecisionLog { seq: u64, reason: String },
}

impl RewardError {
    pub fn code(&self) -> &'static str {
        match self {
            RewardError::PolicyParse(_) => "parse_error",
            RewardError::InvalidPolicy(_) => "invalid_policy",
            RewardError::InvalidEvent(_) => "invalid_event",
            RewardError::InsufficientPoints { .. } => "insufficient_points",
            RewardError::NotDivisible { .. } => "not_divisible",
            RewardError::ConversionDisabled => "conversion_disabled",
            RewardError::CapExhausted => "cap_exhausted",
            RewardError::UnknownUnlock(_) => "unknown_unlock",
            RewardError::AlreadyUnlocked { .. } => "already_unlocked",
            RewardError::InsufficientBalance { .. } => "insufficient_balance",
            RewardError::Token(e) => e.code(),
            RewardError::Chain(e) => e.code(),
            RewardError::CorruptDecisionLog { .. } => "corrupt_log",
        }
    }
}

pub type Result<T> = std::result::Result<T, RewardError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformEvent {
    /// Idempotency key.
    pub event_id: String,
    pub kind: EventKind,
    pub actor: Address,
    /// Seconds since the Unix epoch.
    pub occurred_at: u64,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl PlatformEvent {
    pub fn utc_day(&self) -> u64 {
        self.occurred_at / SECONDS_PER_DAY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Granted,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Duplicate,
    RateLimited,
    LifetimeCapped,
    UnknownKind,
    CapExhausted,
    TreasuryInsufficient,
}

/// Auditable result of one engine input.
///
/// `amount` is the token quantity moved (reward, conversion proceeds or
/// redemption price); `points` is the points credited by a points rule or
/// spent by a conversion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardDecision {
    pub event_id: String,
    pub actor: Address,
    pub outcome: Outcome,
    pub reason: Option<RejectReason>,
    pub tx_id: Option<Digest>,
    pub amount: Option<Amount>,
    pub points: Option<u64>,
}

impl RewardDecision {
    fn rejected(event_id: &str, actor: Address, reason: RejectReason) -> Self {
        RewardDecision {
            event_id: event_id.to_string(),
            actor,
            outcome: Outcome::Rejected,
            reason: Some(reason),
            tx_id: None,
            amount: None,
            points: None,
        }
    }

    fn granted(event_id: String, actor: Address) -> Self {
        RewardDecision {
            event_id,
            actor,
            outcome: Outcome::Granted,
            reason: None,
            tx_id: None,
            amount: None,
            points: None,
        }
    }

    pub fn is_granted(&self) -> bool {
        self.outcome == Outcome::Granted
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum EngineInput {
    Event(PlatformEvent),
    ConvertPoints { actor: Address, points: u64 },
    Redeem { actor: Address, unlock_id: String },
}

/// One line of the decision log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionRecord {
    pub seq: u64,
    pub input: EngineInput,
    pub decision: RewardDecision,
    /// The transaction submitted for this decision, if any.
    pub tx: Option<Transaction>,
}

impl DecisionRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("decision records always serialize")
    }
}

/// Parses a decision log file: dense `seq`, canonical lines, trailing
/// newline on every line.
pub fn parse_decision_log(text: &str) -> Result<Vec<DecisionRecord>> {
    let mut out = Vec::new();
    if text.is_empty() {
        return Ok(out);
    }
    let corrupt = |seq: usize, reason: &str| RewardError::CorruptDecisionLog {
        seq: seq as u64,
        reason: reason.to_string(),
    };
    let body = text
        .strip_suffix('\n')
        .ok_or_else(|| corrupt(text.matches('\n').count(), "torn final line"))?;
    for (i, line) in body.split('\n').enumerate() {
        let record: DecisionRecord = serde_json::from_str(line)
            .map_err(|e| corrupt(i, &format!("bad serialization: {e}")))?;
        if record.seq != i as u64 {
            return Err(corrupt(i, "sequence gap"));
        }
        if record.to_line() != line {
            return Err(corrupt(i, "non-canonical encoding"));
        }
        out.push(record);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub actor: Address,
    pub earned: Amount,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Grant {
    seq: u64,
    actor: Address,
    amount: Amount,
    occurred_at: u64,
}

#[derive(Debug, Clone)]
pub struct RewardEngine {
    policy: PolicySet,
    granted_events: BTreeSet<String>,
    daily_counts: BTreeMap<(Address, EventKind, u64), u32>,
    lifetime_totals: BTreeMap<(Address, EventKind), Amount>,
    points: BTreeMap<Address, u64>,
    points_credited: BTreeMap<Address, u64>,
    points_converted: BTreeMap<Address, u64>,
    unlocks: BTreeSet<(Address, String)>,
    grants: Vec<Grant>,
    log: Vec<DecisionRecord>,
}

impl RewardEngine {
    pub fn new(policy: PolicySet) -> Self {
        RewardEngine {
            policy,
            granted_events: BTreeSet::new(),
            daily_counts: BTreeMap::new(),
            lifetime_totals: BTreeMap::new(),
            points: BTreeMap::new(),
            points_credited: BTreeMap::new(),
            points_converted: BTreeMap::new(),
            unlocks: BTreeSet::new(),
            grants: Vec::new(),
            log: Vec::new(),
        }
    }

    /// Rebuilds engine state by folding a decision log.
    pub fn restore(policy: PolicySet, records: Vec<DecisionRecord>) -> Result<Self> {
        let mut engine = RewardEngine::new(policy);
        for record in records {
            if record.seq != engine.log.len() as u64 {
                return Err(RewardError::CorruptDecisionLog {
                    seq: record.seq,
                    reason: "sequence gap".into(),
                });
            }
            engine.apply(record);
        }
        Ok(engine)
    }

    pub fn policy(&self) -> &PolicySet {
        &self.policy
    }

    pub fn decision_log(&self) -> &[DecisionRecord] {
        &self.log
    }

    pub fn points_of(&self, actor: Address) -> u64 {
        self.points.get(&actor).copied().unwrap_or(0)
    }

    pub fn points_credited(&self, actor: Address) -> u64 {
        self.points_credited.get(&actor).copied().unwrap_or(0)
    }

    pub fn points_converted(&self, actor: Address) -> u64 {
        self.points_converted.get(&actor).copied().unwrap_or(0)
    }

    pub fn has_unlocked(&self, actor: Address, unlock_id: &str) -> bool {
        self.unlocks.contains(&(actor, unlock_id.to_string()))
    }

    pub fn handle_event(&mut self, chain: &mut Chain, event: PlatformEvent) -> Result<RewardDecision> {
        if event.event_id.is_empty() {
            return Err(RewardError::InvalidEvent("event_id must not be empty".into()));
        }
        if event.actor.is_zero() {
            return Err(RewardError::InvalidEvent("actor must not be the zero address".into()));
        }
        let (decision, tx) = self.decide(chain, &event)?;
        self.record(EngineInput::Event(event), decision.clone(), tx);
        Ok(decision)
    }

    fn decide(
        &self,
        chain: &mut Chain,
        event: &PlatformEvent,
    ) -> Result<(RewardDecision, Option<Transaction>)> {
        let reject = |reason| Ok((RewardDecision::rejected(&event.event_id, event.actor, reason), None));
        let Some(rule) = self.policy.rule(event.kind) else {
            return reject(RejectReason::UnknownKind);
        };
        if self.granted_events.contains(&event.event_id) {
            return reject(RejectReason::Duplicate);
        }
        if let Some(limit) = rule.per_actor_daily_limit {
            let used = self
                .daily_counts
                .get(&(event.actor, event.kind, event.utc_day()))
                .copied()
                .unwrap_or(0);
            if used >= limit {
                return reject(RejectReason::RateLimited);
            }
        }
        if let Some(cap) = rule.per_actor_lifetime_cap {
            let so_far = self
                .lifetime_totals
                .get(&(event.actor, event.kind))
                .copied()
                .unwrap_or(Amount::ZERO);
            if so_far.checked_add(rule.units()).is_none_or(|total| total > cap) {
                return reject(RejectReason::LifetimeCapped);
            }
        }
        let mut decision = RewardDecision::granted(event.event_id.clone(), event.actor);
        match rule.value {
            RewardValue::Points(points) => {
                decision.points = Some(points);
                Ok((decision, None))
            }
            RewardValue::Tokens(amount) => {
                let (sender, call) = match rule.funding {
                    Funding::Mint => (chain.token().owner(), Call::Mint { to: event.actor, amount }),
                    Funding::Treasury => {
                        (self.policy.treasury(), Call::Transfer { to: event.actor, amount })
                    }
                };
                match chain.preflight(sender, &call) {
                    Ok(_) => {}
                    Err(TokenError::InsufficientBalance { .. }) => {
                        return reject(RejectReason::TreasuryInsufficient)
                    }
                    // cap reached or token destroyed: no more supply can flow
                    Err(_) => return reject(RejectReason::CapExhausted),
                }
                let tx_id = chain.submit_call(sender, call)?;
                let tx = chain.get_tx(&tx_id)?.clone();
                decision.tx_id = Some(tx_id);
                decision.amount = Some(amount);
                Ok((decision, Some(tx)))
            }
        }
    }

    /// Converts points into whole tokens minted to the actor.
    pub fn convert_points(&mut self, chain: &mut Chain, actor: Address, points: u64) -> Result<RewardDecision> {
        let rate = self.policy.conversion_rate().ok_or(RewardError::ConversionDisabled)?;
        let held = self.points_of(actor);
        if points > held {
            return Err(RewardError::InsufficientPoints { actor, held, requested: points });
        }
        if points == 0 || !points.is_multiple_of(rate) {
            return Err(RewardError::NotDivisible { points, rate });
        }
        let amount = Amount::from_tokens(points / rate);
        let owner = chain.token().owner();
        let call = Call::Mint { to: actor, amount };
        if chain.preflight(owner, &call).is_err() {
            return Err(RewardError::CapExhausted);
        }
        let tx_id = chain.submit_call(owner, call)?;
        let tx = chain.get_tx(&tx_id)?.clone();
        let mut decision = RewardDecision::granted(format!("convert:{}", self.log.len()), actor);
        decision.tx_id = Some(tx_id);
        decision.amount = Some(amount);
        decision.points = Some(points);
        self.record(EngineInput::ConvertPoints { actor, points }, decision.clone(), Some(tx));
        Ok(decision)
    }

    /// Pays an unlock's price from the actor to the treasury.
    pub fn redeem(&mut self, chain: &mut Chain, actor: Address, unlock_id: &str) -> Result<RewardDecision> {
        let price = self
            .policy
            .unlock_price(unlock_id)
            .ok_or_else(|| RewardError::UnknownUnlock(unlock_id.to_string()))?;
        if self.has_unlocked(actor, unlock_id) {
            return Err(RewardError::AlreadyUnlocked { actor, unlock_id: unlock_id.to_string() });
        }
        let call = Call::Transfer { to: self.policy.treasury(), amount: price };
        match chain.preflight(actor, &call) {
            Ok(_) => {}
            Err(TokenError::InsufficientBalance { balance, needed, .. }) => {
                return Err(RewardError::InsufficientBalance { actor, balance, needed })
            }
            Err(e) => return Err(RewardError::Token(e)),
        }
        let tx_id = chain.submit_call(actor, call)?;
        let tx = chain.get_tx(&tx_id)?.clone();
        let mut decision = RewardDecision::granted(format!("redeem:{}", self.log.len()), actor);
        decision.tx_id = Some(tx_id);
        decision.amount = Some(price);
        let input = EngineInput::Redeem { actor, unlock_id: unlock_id.to_string() };
        self.record(input, decision.clone(), Some(tx));
        Ok(decision)
    }

    /// Actors ranked by tokens granted for events with `occurred_at` in
    /// `[from, to)`. Ties go to the earlier first grant, then the lower
    /// address.
    pub fn leaderboard(&self, from: u64, to: u64, limit: usize) -> Vec<LeaderboardEntry> {
        let mut totals: BTreeMap<Address, (Amount, u64)> = BTreeMap::new();
        for g in self.grants.iter().filter(|g| g.occurred_at >= from && g.occurred_at < to) {
            let entry = totals.entry(g.actor).or_insert((Amount::ZERO, g.seq));
            entry.0 = entry.0.checked_add(g.amount).unwrap_or(Amount::MAX);
        }
        let mut ranked: Vec<_> = totals.into_iter().collect();
        ranked.sort_by(|(a_addr, (a_sum, a_first)), (b_addr, (b_sum, b_first))| {
            b_sum.cmp(a_sum).then(a_first.cmp(b_first)).then(a_addr.cmp(b_addr))
        });
        ranked
            .into_iter()
            .take(limit)
            .map(|(actor, (earned, _))| LeaderboardEntry { actor, earned })
            .collect()
    }

    /// The last decision's transaction, if the chain does not know it yet.
    /// This happens when a crash hit between the decision log append and
    /// the ledger append.
    pub fn unsubmitted_tx(&self, chain: &Chain) -> Option<&Transaction> {
        self.log
            .last()
            .and_then(|r| r.tx.as_ref())
            .filter(|tx| !chain.contains_tx(&tx.tx_id))
    }

    fn record(&mut self, input: EngineInput, decision: RewardDecision, tx: Option<Transaction>) {
        let record = DecisionRecord { seq: self.log.len() as u64, input, decision, tx };
        self.apply(record);
    }

    fn apply(&mut self, record: DecisionRecord) {
        if record.decision.is_granted() {
            match &record.input {
                EngineInput::Event(event) => {
                    self.granted_events.insert(event.event_id.clone());
                    *self
                        .daily_counts
                        .entry((event.actor, event.kind, event.utc_day()))
                        .or_insert(0) += 1;
                    let units = match (record.decision.amount, record.decision.points) {
                        (Some(amount), _) => amount,
                        (None, Some(points)) => Amount::from_base_units(points as u128),
                        (None, None) => Amount::ZERO,
                    };
                    let total = self.lifetime_totals.entry((event.actor, event.kind)).or_default();
                    *total = total.checked_add(units).unwrap_or(Amount::MAX);
                    if let Some(points) = record.decision.points {
                        *self.points.entry(event.actor).or_insert(0) += points;
                        *self.points_credited.entry(event.actor).or_insert(0) += points;
                    }
                    if let Some(amount) = record.decision.amount {
                        self.grants.push(Grant {
                            seq: record.seq,
                            actor: event.actor,
                            amount,
                            occurred_at: event.occurred_at,
                        });
                    }
                }
                EngineInput::ConvertPoints { actor, points } => {
                    let held = self.points.entry(*actor).or_insert(0);
                    *held = held.saturating_sub(*points);
                    *self.points_converted.entry(*actor).or_insert(0) += points;
                }
                EngineInput::Redeem { actor, unlock_id } => {
                    self.unlocks.insert((*actor, unlock_id.clone()));
                }
            }
        }
        self.log.push(record);
    }
}
