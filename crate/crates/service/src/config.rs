//! Service configuration and well-known simulation accounts.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use ses_core::{Address, GenesisFile, PolicySet, TokenConfig};

use crate::api::ApiError;
use crate::store::StoreConfig;

pub const DEFAULT_GENESIS: &str = include_str!("../config/genesis.toml");
pub const DEFAULT_POLICY: &str = include_str!("../config/policy.toml");
pub const DEFAULT_ADMIN_KEY_ENV: &str = "SES_ADMIN_KEY";
pub const DEFAULT_LISTEN: &str = "127.0.0.1:8645";

/// Resolves `owner`, `treasury`, `miner` and `account-<n>` to their
/// derived addresses.
pub fn well_known(name: &str) -> Option<Address> {
    let label = match name {
        "owner" | "treasury" | "miner" => format!("ses:{name}"),
        _ => {
            let n: u32 = name.strip_prefix("account-")?.parse().ok()?;
            format!("ses:test-account-{n}")
        }
    };
    Some(Address::derive(&label))
}

/// Parses a hex address or a well-known account name.
pub fn parse_account(s: &str) -> Result<Address, String> {
    if let Some(a) = well_known(s) {
        return Ok(a);
    }
    s.parse::<Address>().map_err(|e| format!("{s:?} is neither an address nor a known account: {e}"))
}

pub fn load_genesis(path: Option<&Path>) -> Result<TokenConfig, ApiError> {
    let text = match path {
        Some(p) => read(p)?,
        None => DEFAULT_GENESIS.to_string(),
    };
    Ok(GenesisFile::load(&text)?)
}

pub fn load_policy(path: Option<&Path>) -> Result<PolicySet, ApiError> {
    let text = match path {
        Some(p) => read(p)?,
        None => DEFAULT_POLICY.to_string(),
    };
    Ok(PolicySet::load(&text)?)
}

fn read(path: &Path) -> Result<String, ApiError> {
    std::fs::read_to_string(path)
        .map_err(|e| ApiError::new("invalid_config", 400, format!("{}: {e}", path.display())))
}

/// Reads the admin key from `var`; it must be set and non-empty.
pub fn admin_key_from_env(var: &str) -> Result<String, ApiError> {
    match std::env::var(var) {
        Ok(key) if !key.is_empty() => Ok(key),
        _ => Err(ApiError::new("invalid_config", 400, format!("admin key variable {var} is unset or empty"))),
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub store: StoreConfig,
    pub admin_key: String,
}

impl ServiceConfig {
    pub fn new(listen: &str, data_dir: PathBuf, genesis: TokenConfig, policy: PolicySet, admin_key: String) -> Result<Self, ApiError> {
        let listen = listen
            .parse()
            .map_err(|e| ApiError::new("invalid_config", 400, format!("listen address {listen:?}: {e}")))?;
        if admin_key.is_empty() {
            return Err(ApiError::new("invalid_config", 400, "admin key must not be empty"));
        }
        Ok(ServiceConfig {
            listen,
            store: StoreConfig { data_dir, genesis, chain_seed: 0, policy, snapshot_every: 64 },
            admin_key,
        })
    }
}
