//! Token amounts in base units.
//!
//! One SES token is `10^18` base units. Every operation on [`Amount`] is
//! checked; nothing wraps.

use std::fmt;
use std::str::FromStr;

use primitive_types::U256;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Fixed number of fractional digits of the token.
pub const DECIMALS: u8 = 18;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AmountError {
    #[error("empty amount")]
    Empty,
    #[error("invalid digit in amount {0:?}")]
    InvalidDigit(String),
    #[error("non-canonical amount {0:?}")]
    NonCanonical(String),
    #[error("amount {0:?} has more than 18 fractional digits")]
    TooPrecise(String),
    #[error("amount {0:?} does not fit in 256 bits")]
    Overflow(String),
}

/// Unsigned 256-bit quantity of base units.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Amount(U256);

fn one_token() -> U256 {
    U256::exp10(DECIMALS as usize)
}

impl Amount {
    pub const ZERO: Amount = Amount(U256::zero());
    pub const MAX: Amount = Amount(U256::MAX);

    pub fn from_base_units(units: u128) -> Self {
        Amount(U256::from(units))
    }

    /// Whole tokens, scaled by `10^18`.
    pub fn from_tokens(tokens: u64) -> Self {
        Amount(U256::from(tokens) * one_token())
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn checked_add(self, rhs: Amount) -> Option<Amount> {
        self.0.checked_add(rhs.0).map(Amount)
    }

    pub fn checked_sub(self, rhs: Amount) -> Option<Amount> {
        self.0.checked_sub(rhs.0).map(Amount)
    }

    pub fn checked_mul(self, factor: u64) -> Option<Amount> {
        self.0.checked_mul(U256::from(factor)).map(Amount)
    }

    /// Lossless conversion when the value fits, used by tests and UIs.
    pub fn to_u128(self) -> Option<u128> {
        if self.0.bits() <= 128 {
            Some(self.0.as_u128())
        } else {
            None
        }
    }

    /// Strict parse of a canonical base-unit string: ASCII digits, no sign,
    /// no leading zeros (except `"0"` itself).
    pub fn parse_base_units(s: &str) -> Result<Self, AmountError> {
        if s.is_empty() {
            return Err(AmountError::Empty);
        }
        if !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(AmountError::InvalidDigit(s.to_string()));
        }
        if s.len() > 1 && s.starts_with('0') {
            return Err(AmountError::NonCanonical(s.to_string()));
        }
        U256::from_dec_str(s)
            .map(Amount)
            .map_err(|_| AmountError::Overflow(s.to_string()))
    }

    /// Parses a human token quantity such as `"70000000"`, `"1,000,000"` or
    /// `"0.5"`. Commas and underscores are accepted as digit group
    /// separators in the integer part.
    pub fn parse_tokens(s: &str) -> Result<Self, AmountError> {
        let s = s.trim();
        let s = s.strip_suffix("SES").map(str::trim_end).unwrap_or(s);
        if s.is_empty() {
            return Err(AmountError::Empty);
        }
        let (int_part, frac_part) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        let int_digits: String = int_part.chars().filter(|c| *c != ',' && *c != '_').collect();
        if int_digits.is_empty() && frac_part.is_empty() {
            return Err(AmountError::Empty);
        }
        let valid = |d: &str| d.bytes().all(|b| b.is_ascii_digit());
        if !valid(&int_digits) || !valid(frac_part) {
            return Err(AmountError::InvalidDigit(s.to_string()));
        }
        if frac_part.len() > DECIMALS as usize {
            return Err(AmountError::TooPrecise(s.to_string()));
        }
        let overflow = || AmountError::Overflow(s.to_string());
        let int_val = if int_digits.is_empty() {
            U256::zero()
        } else {
            U256::from_dec_str(&int_digits).map_err(|_| overflow())?
        };
        let mut frac_padded = frac_part.to_string();
        while frac_padded.len() < DECIMALS as usize {
            frac_padded.push('0');
        }
        let frac_val = U256::from_dec_str(&frac_padded).map_err(|_| overflow())?;
        int_val
            .checked_mul(one_token())
            .and_then(|v| v.checked_add(frac_val))
            .map(Amount)
            .ok_or_else(overflow)
    }

    /// Renders in whole tokens with the fractional part trimmed, e.g.
    /// `"69000000"` or `"0.5"`.
    pub fn to_token_string(&self) -> String {
        self.render_tokens(false)
    }

    /// Like [`Amount::to_token_string`] with thousands separators,
    /// e.g. `"69,000,000"`.
    pub fn to_token_string_grouped(&self) -> String {
        self.render_tokens(true)
    }

    fn render_tokens(&self, grouped: bool) -> String {
        let (int_part, frac) = self.0.div_mod(one_token());
        let mut int_str = int_part.to_string();
        if grouped {
            let bytes = int_str.as_bytes();
            let mut out = String::with_capacity(bytes.len() + bytes.len() / 3);
            for (i, b) in bytes.iter().enumerate() {
                if i > 0 && (bytes.len() - i) % 3 == 0 {
                    out.push(',');
                }
                out.push(*b as char);
            }
            int_str = out;
        }
        if frac.is_zero() {
            return int_str;
        }
        let frac_str = format!("{:0>18}", frac.to_string());
        format!("{int_str}.{}", frac_str.trim_end_matches('0'))
    }
}

impl fmt::Display for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Debug for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Amount({})", self.0)
    }
}

impl FromStr for Amount {
    type Err = AmountError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Amount::parse_base_units(s)
    }
}

impl Serialize for Amount {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Amount {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = <std::borrow::Cow<'de, str>>::deserialize(deserializer)?;
        Amount::parse_base_units(&s).map_err(serde::de::Error::custom)
    }
}

/// Serde adapter for human token strings (`"100"`, `"0.5"`), used by
/// configuration files.
pub mod as_tokens {
    use super::Amount;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(amount: &Amount, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&amount.to_token_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Amount, D::Error> {
        let s = String::deserialize(deserializer)?;
        Amount::parse_tokens(&s).map_err(serde::de::Error::custom)
    }

    pub mod option {
        use super::Amount;
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(
            amount: &Option<Amount>,
            serializer: S,
        ) -> Result<S::Ok, S::Error> {
            match amount {
                Some(a) => serializer.serialize_some(&a.to_token_string()),
                None => serializer.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            deserializer: D,
        ) -> Result<Option<Amount>, D::Error> {
            Option::<String>::deserialize(deserializer)?
                .map(|s| Amount::parse_tokens(&s).map_err(serde::de::Error::custom))
                .transpose()
        }
    }
}

/// A signed view over an [`Amount`], used only for display deltas.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct SignedAmount {
    negative: bool,
    magnitude: Amount,
}

impl SignedAmount {
    pub fn credit(magnitude: Amount) -> Self {
        SignedAmount { negative: false, magnitude }
    }

    pub fn debit(magnitude: Amount) -> Self {
        SignedAmount { negative: !magnitude.is_zero(), magnitude }
    }

    pub fn is_negative(&self) -> bool {
        self.negative
    }

    pub fn magnitude(&self) -> Amount {
        self.magnitude
    }

    /// Applies the delta to a running balance.
    pub fn apply(&self, balance: Amount) -> Option<Amount> {
        if self.negative {
            balance.checked_sub(self.magnitude)
        } else {
            balance.checked_add(self.magnitude)
        }
    }
}

impl fmt::Display for SignedAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negative {
            write!(f, "-{}", self.magnitude)
        } else {
            write!(f, "{}", self.magnitude)
        }
    }
}

impl fmt::Debug for SignedAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SignedAmount({self})")
    }
}

impl Serialize for SignedAmount {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SignedAmount {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        let (negative, digits) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s.as_str()),
        };
        let magnitude = Amount::parse_base_units(digits).map_err(serde::de::Error::custom)?;
        if negative && magnitude.is_zero() {
            return Err(serde::de::Error::custom("negative zero delta"));
        }
        Ok(SignedAmount { negative, magnitude })
    }
}
