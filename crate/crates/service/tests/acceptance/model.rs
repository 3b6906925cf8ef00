//! Reference model of the token, written independently of the library
//! with plain `u128` arithmetic, plus the random scenario generator.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use ses_core::{Address, Amount, Call, TokenConfig, TokenState};

pub fn units(a: Amount) -> u128 {
    a.to_u128().expect("test amounts fit in u128")
}

pub fn amount(u: u128) -> Amount {
    Amount::from_base_units(u)
}

const ONE: u128 = 1_000_000_000_000_000_000;

#[derive(Debug, Clone)]
pub struct Model {
    pub balances: BTreeMap<Address, u128>,
    pub allowances: BTreeMap<(Address, Address), u128>,
    pub supply: u128,
    pub cap: u128,
    pub reward: u128,
    pub owner: Address,
    pub treasury: Option<Address>,
    pub destroyed: bool,
}

type Outcome = Result<(), &'static str>;

impl Model {
    pub fn new(config: &TokenConfig) -> Model {
        let mut balances = BTreeMap::new();
        let premint = units(config.initial_supply);
        if premint > 0 {
            balances.insert(config.owner, premint);
        }
        Model {
            balances,
            allowances: BTreeMap::new(),
            supply: premint,
            cap: units(config.cap),
            reward: units(config.block_reward),
            owner: config.owner,
            treasury: config.treasury,
            destroyed: false,
        }
    }

    fn bal(&self, a: Address) -> u128 {
        self.balances.get(&a).copied().unwrap_or(0)
    }

    fn set_bal(&mut self, a: Address, v: u128) {
        if v == 0 {
            self.balances.remove(&a);
        } else {
            self.balances.insert(a, v);
        }
    }

    /// The miner reward hook: mint `reward` to the coinbase before a
    /// balance movement, unless it is a mint to the coinbase, the reward is
    /// zero, or the cap (with `pending` about to be minted) would be passed.
    fn hook(&mut self, coinbase: Address, from: Address, to: Address, pending: u128) {
        if from == Address::ZERO && to == coinbase {
            return;
        }
        if self.reward == 0 || self.supply + pending + self.reward > self.cap {
            return;
        }
        let b = self.bal(coinbase);
        self.set_bal(coinbase, b + self.reward);
        self.supply += self.reward;
    }

    fn send(&mut self, coinbase: Address, from: Address, to: Address, v: u128) -> Outcome {
        if from == Address::ZERO || to == Address::ZERO {
            return Err("zero_address");
        }
        self.hook(coinbase, from, to, 0);
        let fb = self.bal(from);
        if fb < v {
            return Err("insufficient_balance");
        }
        self.set_bal(from, fb - v);
        let tb = self.bal(to);
        self.set_bal(to, tb + v);
        Ok(())
    }

    fn spend(&mut self, owner: Address, spender: Address, v: u128) -> Outcome {
        let a = self.allowances.get(&(owner, spender)).copied().unwrap_or(0);
        if a < v {
            return Err("insufficient_allowance");
        }
        if a - v == 0 {
            self.allowances.remove(&(owner, spender));
        } else {
            self.allowances.insert((owner, spender), a - v);
        }
        Ok(())
    }

    fn burn(&mut self, coinbase: Address, from: Address, v: u128) -> Outcome {
        if from == Address::ZERO {
            return Err("zero_address");
        }
        self.hook(coinbase, from, Address::ZERO, 0);
        let b = self.bal(from);
        if b < v {
            return Err("insufficient_balance");
        }
        self.set_bal(from, b - v);
        self.supply -= v;
        Ok(())
    }

    fn apply_inner(&mut self, coinbase: Address, sender: Address, call: &Call) -> Outcome {
        if self.destroyed {
            return Err("token_destroyed");
        }
        match *call {
            Call::Transfer { to, amount } => self.send(coinbase, sender, to, units(amount)),
            Call::Approve { spender, amount } => {
                if sender == Address::ZERO || spender == Address::ZERO {
                    return Err("zero_address");
                }
                let v = units(amount);
                if v == 0 {
                    self.allowances.remove(&(sender, spender));
                } else {
                    self.allowances.insert((sender, spender), v);
                }
                Ok(())
            }
            Call::TransferFrom { from, to, amount } => {
                if sender == Address::ZERO {
                    return Err("zero_address");
                }
                self.spend(from, sender, units(amount))?;
                self.send(coinbase, from, to, units(amount))
            }
            Call::Mint { to, amount } => {
                if sender != self.owner {
                    return Err("not_owner");
                }
                if to == Address::ZERO {
                    return Err("zero_address");
                }
                let v = units(amount);
                if self.supply + v > self.cap {
                    return Err("cap_exceeded");
                }
                self.hook(coinbase, Address::ZERO, to, v);
                let b = self.bal(to);
                self.set_bal(to, b + v);
                self.supply += v;
                Ok(())
            }
            Call::Burn { amount } => self.burn(coinbase, sender, units(amount)),
            Call::BurnFrom { from, amount } => {
                if sender == Address::ZERO {
                    return Err("zero_address");
                }
                self.spend(from, sender, units(amount))?;
                self.burn(coinbase, from, units(amount))
            }
            Call::SetBlockReward { amount } => {
                if sender != self.owner {
                    return Err("not_owner");
                }
                self.reward = units(amount);
                Ok(())
            }
            Call::Destroy => {
                if sender != self.owner {
                    return Err("not_owner");
                }
                if let Some(t) = self.treasury {
                    let held = self.bal(t);
                    if t != self.owner && held > 0 {
                        self.send(coinbase, t, self.owner, held)?;
                    }
                }
                self.destroyed = true;
                Ok(())
            }
        }
    }

    /// Applies `call` atomically: on failure the model is left unchanged.
    pub fn apply(&mut self, coinbase: Address, sender: Address, call: &Call) -> Outcome {
        let mut scratch = self.clone();
        let out = scratch.apply_inner(coinbase, sender, call);
        if out.is_ok() {
            *self = scratch;
        }
        out
    }

    /// Compares every observable field with the library state.
    pub fn matches(&self, token: &TokenState) -> Result<(), String> {
        let balances: BTreeMap<Address, u128> = token.balances().map(|(a, v)| (a, units(v))).collect();
        if balances != self.balances {
            return Err(format!("balances differ: token {balances:?} model {:?}", self.balances));
        }
        let allowances: BTreeMap<(Address, Address), u128> =
            token.allowances().map(|(o, s, v)| ((o, s), units(v))).collect();
        if allowances != self.allowances {
            return Err("allowances differ".into());
        }
        if units(token.total_supply()) != self.supply {
            return Err(format!("supply differs: token {} model {}", token.total_supply(), self.supply));
        }
        if units(token.block_reward()) != self.reward || token.is_destroyed() != self.destroyed {
            return Err("reward or lifecycle differs".into());
        }
        Ok(())
    }
}

pub fn owner() -> Address {
    Address::derive("acceptance:owner")
}

pub fn user(i: usize) -> Address {
    Address::derive(&format!("acceptance:user-{i}"))
}

pub fn miner(i: usize) -> Address {
    Address::derive(&format!("acceptance:miner-{i}"))
}

pub fn treasury() -> Address {
    user(0)
}

pub const USERS: usize = 5;
pub const MINERS: usize = 2;

pub fn holders() -> Vec<Address> {
    let mut v = vec![owner()];
    v.extend((0..USERS).map(user));
    v.extend((0..MINERS).map(miner));
    v
}

/// Tight cap so that mints and rewards regularly run into it.
pub fn config() -> TokenConfig {
    let mut c = TokenConfig::seskill(owner());
    c.cap = Amount::from_tokens(1_000_000);
    c.initial_supply = Amount::from_tokens(995_000);
    c.block_reward = Amount::from_tokens(2);
    c.treasury = Some(treasury());
    c
}

fn pick_addr(rng: &mut ChaCha8Rng) -> Address {
    match rng.gen_range(0..20) {
        0 => Address::ZERO,
        1..=2 => owner(),
        3..=4 => miner(rng.gen_range(0..MINERS)),
        _ => user(rng.gen_range(0..USERS)),
    }
}

fn pick_amount(rng: &mut ChaCha8Rng, model: &Model, holder: Address) -> Amount {
    match rng.gen_range(0..10) {
        0 => Amount::ZERO,
        1..=2 => amount(model.bal(holder)),
        3 => amount(model.bal(holder) + 1),
        4 => amount(rng.gen_range(1..ONE)),
        5 => Amount::from_tokens(rng.gen_range(1_000..10_000)),
        _ => Amount::from_tokens(rng.gen_range(1..1_000)),
    }
}

fn pick_sender(rng: &mut ChaCha8Rng) -> Address {
    if rng.gen_bool(0.3) {
        owner()
    } else {
        user(rng.gen_range(0..USERS))
    }
}

/// A random call, with amounts biased by the current model so that both
/// successes and boundary failures are common.
pub fn random_call(rng: &mut ChaCha8Rng, model: &Model, allow_destroy: bool) -> (Address, Call) {
    let sender = pick_sender(rng);
    let call = match rng.gen_range(0..100) {
        0..=34 => Call::Transfer { to: pick_addr(rng), amount: pick_amount(rng, model, sender) },
        35..=47 => Call::Approve { spender: pick_addr(rng), amount: pick_amount(rng, model, sender) },
        48..=62 => {
            let from = pick_addr(rng);
            Call::TransferFrom { from, to: pick_addr(rng), amount: pick_amount(rng, model, from) }
        }
        63..=74 => {
            let headroom = model.cap.saturating_sub(model.supply);
            let v = match rng.gen_range(0..3) {
                0 => headroom,
                1 => headroom + 1,
                _ => rng.gen_range(0..=headroom.max(1)),
            };
            Call::Mint { to: pick_addr(rng), amount: amount(v) }
        }
        75..=86 => Call::Burn { amount: pick_amount(rng, model, sender) },
        87..=93 => {
            let from = pick_addr(rng);
            Call::BurnFrom { from, amount: pick_amount(rng, model, from) }
        }
        94..=98 => Call::SetBlockReward { amount: Amount::from_tokens(rng.gen_range(0..50)) },
        _ if allow_destroy => Call::Destroy,
        _ => Call::SetBlockReward { amount: Amount::ZERO },
    };
    (sender, call)
}

/// Calls grouped into blocks; each block names its coinbase.
#[derive(Debug, Clone)]
pub struct Segment {
    pub coinbase: Address,
    pub calls: Vec<(Address, Call)>,
}

pub struct Scenario {
    pub segments: Vec<Segment>,
    /// Token state after executing every call directly, block by block.
    pub token: TokenState,
    /// First disagreement between library and model, if any.
    pub verdict: Result<(), String>,
    /// Calls the library accepted.
    pub accepted: usize,
}

/// Generates a scenario of at least `min_ops` calls, checking the library
/// against the model after every call.
pub fn scenario(rng: &mut ChaCha8Rng, min_ops: usize) -> Scenario {
    let cfg = config();
    let (mut token, _) = TokenState::init(cfg.clone()).expect("valid config");
    let mut model = Model::new(&cfg);
    let mut segments = vec![Segment { coinbase: miner(0), calls: Vec::new() }];
    let total = rng.gen_range(min_ops..min_ops + 30);
    let mut verdict = Ok(());
    let mut accepted = 0;
    let mut number = 1;
    for _ in 0..total {
        if rng.gen_bool(0.15) {
            number += 1;
            segments.push(Segment { coinbase: miner(rng.gen_range(0..MINERS)), calls: Vec::new() });
        }
        let seg = segments.last_mut().expect("non-empty");
        let ctx = ses_core::BlockContext::new(number, seg.coinbase, number).expect("nonzero coinbase");
        let (sender, call) = random_call(rng, &model, false);
        let lib = token.execute(&ctx, sender, &call);
        let reference = model.apply(seg.coinbase, sender, &call);
        accepted += usize::from(lib.is_ok());
        if verdict.is_ok() {
            verdict = check_step(&token, &model, lib.is_ok(), reference, &call);
        }
        seg.calls.push((sender, call));
    }
    Scenario { segments, token, verdict, accepted }
}

fn check_step(token: &TokenState, model: &Model, lib_ok: bool, reference: Outcome, call: &Call) -> Result<(), String> {
    if lib_ok != reference.is_ok() {
        return Err(format!("{call:?}: library ok={lib_ok}, model {reference:?}"));
    }
    let rescan = token.balances().fold(0u128, |acc, (_, v)| acc + units(v));
    if rescan != units(token.total_supply()) {
        return Err(format!("sum of balances {rescan} != total_supply {}", token.total_supply()));
    }
    if token.total_supply() > token.cap() {
        return Err("total_supply above cap".into());
    }
    model.matches(token)
}
