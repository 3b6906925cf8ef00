use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::RewardError;
use crate::address::Address;
use crate::amount::{Amount, AmountError};

/// Educational occurrences the platform reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    CourseCompleted,
    ModuleCompleted,
    QuestionAnswered,
    PeerHelped,
    ContentContributed,
    ExtensionPublished,
    BugFixed,
    ChallengeWon,
    MilestoneReached,
}

impl EventKind {
    pub const ALL: [EventKind; 9] = [
        EventKind::CourseCompleted,
        EventKind::ModuleCompleted,
        EventKind::QuestionAnswered,
        EventKind::PeerHelped,
        EventKind::ContentContributed,
        EventKind::ExtensionPublished,
        EventKind::BugFixed,
        EventKind::ChallengeWon,
        EventKind::MilestoneReached,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::CourseCompleted => "course_completed",
            EventKind::ModuleCompleted => "module_completed",
            EventKind::QuestionAnswered => "question_answered",
            EventKind::PeerHelped => "peer_helped",
            EventKind::ContentContributed => "content_contributed",
            EventKind::ExtensionPublished => "extension_published",
            EventKind::BugFixed => "bug_fixed",
            EventKind::ChallengeWon => "challenge_won",
            EventKind::MilestoneReached => "milestone_reached",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown event kind {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Funding {
    #[default]
    Mint,
    Treasury,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardValue {
    Tokens(Amount),
    Points(u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewardRule {
    pub kind: EventKind,
    pub value: RewardValue,
    pub per_actor_daily_limit: Option<u32>,
    /// In base units for token rules, in points for points rules.
    pub per_actor_lifetime_cap: Option<Amount>,
    pub funding: Funding,
}

impl RewardRule {
    /// The rule's value in the unit its lifetime cap is counted in.
    pub fn units(&self) -> Amount {
        match self.value {
            RewardValue::Tokens(a) => a,
            RewardValue::Points(p) => Amount::from_base_units(p as u128),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicySet {
    rules: BTreeMap<EventKind, RewardRule>,
    conversion_rate: Option<u64>,
    treasury: Address,
    unlocks: BTreeMap<String, Amount>,
    version: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyDocument {
    version: String,
    treasury: Address,
    conversion_rate: Option<u64>,
    #[serde(default)]
    rules: Vec<RuleDocument>,
    #[serde(default)]
    unlocks: BTreeMap<String, String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleDocument {
    kind: EventKind,
    reward: Option<String>,
    points: Option<u64>,
    per_actor_daily_limit: Option<u32>,
    per_actor_lifetime_cap: Option<String>,
    #[serde(default)]
    funding: Funding,
}

fn invalid(msg: impl Into<String>) -> RewardError {
    RewardError::InvalidPolicy(msg.into())
}

fn tokens(field: &str, s: &str) -> Result<Amount, RewardError> {
    Amount::parse_tokens(s).map_err(|e: AmountError| invalid(format!("{field}: {e}")))
}

impl PolicySet {
    /// Parses a TOML policy document:
    ///
    /// ```toml
    /// version = "2026.1"
    /// treasury = "0x…"
    /// conversion_rate = 10          # points per SES, required with points rules
    ///
    /// [[rules]]
    /// kind = "course_completed"
    /// reward = "100"                # SES; or `points = 10`
    /// funding = "mint"              # or "treasury"
    /// per_actor_daily_limit = 5
    /// per_actor_lifetime_cap = "1000"
    ///
    /// [unlocks]
    /// premium_uml_pack = "20"
    /// ```
    pub fn load(document: &str) -> Result<PolicySet, RewardError> {
        let doc: PolicyDocument =
            toml::from_str(document).map_err(|e| RewardError::PolicyParse(e.to_string()))?;
        if doc.treasury.is_zero() {
            return Err(invalid("treasury must not be the zero address"));
        }
        let mut rules = BTreeMap::new();
        for r in doc.rules {
            let value = match (&r.reward, r.points) {
                (Some(reward), None) => {
                    let amount = tokens("reward", reward)?;
                    if amount.is_zero() {
                        return Err(invalid(format!("{}: reward must be positive", r.kind)));
                    }
                    RewardValue::Tokens(amount)
                }
                (None, Some(points)) => {
                    if points == 0 {
                        return Err(invalid(format!("{}: points must be positive", r.kind)));
                    }
                    RewardValue::Points(points)
                }
                _ => {
                    return Err(invalid(format!(
                        "{}: exactly one of reward and points must be set",
                        r.kind
                    )))
                }
            };
            let per_actor_lifetime_cap = match (&r.per_actor_lifetime_cap, value) {
                (None, _) => None,
                (Some(cap), RewardValue::Tokens(_)) => Some(tokens("per_actor_lifetime_cap", cap)?),
                (Some(cap), RewardValue::Points(_)) => Some(
                    cap.parse::<u64>()
                        .map(|p| Amount::from_base_units(p as u128))
                        .map_err(|_| invalid("per_actor_lifetime_cap of a points rule is a point count"))?,
                ),
            };
            let rule = RewardRule {
                kind: r.kind,
                value,
                per_actor_daily_limit: r.per_actor_daily_limit,
                per_actor_lifetime_cap,
                funding: r.funding,
            };
            if rules.insert(r.kind, rule).is_some() {
                return Err(invalid(format!("more than one rule for {}", r.kind)));
            }
        }
        let has_points = rules.values().any(|r| matches!(r.value, RewardValue::Points(_)));
        match doc.conversion_rate {
            Some(0) => return Err(invalid("conversion_rate must be positive")),
            None if has_points => return Err(invalid("points rules need a conversion_rate")),
            _ => {}
        }
        let mut unlocks = BTreeMap::new();
        for (id, price) in doc.unlocks {
            unlocks.insert(id, tokens("unlock price", &price)?);
        }
        Ok(PolicySet {
            rules,
            conversion_rate: doc.conversion_rate,
            treasury: doc.treasury,
            unlocks,
            version: doc.version,
        })
    }

    /// A policy with no rules, useful before one is configured.
    pub fn empty(treasury: Address) -> PolicySet {
        PolicySet {
            rules: BTreeMap::new(),
            conversion_rate: None,
            treasury,
            unlocks: BTreeMap::new(),
            version: "empty".to_string(),
        }
    }

    pub fn rule(&self, kind: EventKind) -> Option<&RewardRule> {
        self.rules.get(&kind)
    }

    pub fn rules(&self) -> impl Iterator<Item = &RewardRule> + '_ {
        self.rules.values()
    }

    pub fn conversion_rate(&self) -> Option<u64> {
        self.conversion_rate
    }

    pub fn treasury(&self) -> Address {
        self.treasury
    }

    pub fn unlock_price(&self, unlock_id: &str) -> Option<Amount> {
        self.unlocks.get(unlock_id).copied()
    }

    pub fn version(&self) -> &str {
        &self.version
    }
}
