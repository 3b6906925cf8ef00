//! Requests, responses and error mapping shared by the HTTP server, the
//! local CLI and the remote client.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use ses_core::chain::ChainError;
use ses_core::{Address, Amount, Call, Digest, ExplorerError, Node, PlatformEvent, RewardError, TokenError};

/// Largest accepted explorer page.
pub const MAX_PAGE_SIZE: usize = 1_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    #[serde(skip)]
    pub status: u16,
}

impl ApiError {
    pub fn new(code: &str, status: u16, message: impl Into<String>) -> Self {
        ApiError { code: code.to_string(), message: message.into(), status }
    }

    pub fn malformed(message: impl Into<String>) -> Self {
        ApiError::new("malformed_request", 400, message)
    }

    pub fn unauthorized() -> Self {
        ApiError::new("unauthorized", 401, "missing or wrong admin key")
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        ApiError::new("not_found", 404, message)
    }

    pub fn internal(code: &str, message: impl Into<String>) -> Self {
        ApiError::new(code, 500, message)
    }

    /// Status for a module error code.
    pub fn status_for(code: &str) -> u16 {
        match code {
            "malformed_request" | "invalid_config" | "invalid_event" | "invalid_policy" | "parse_error"
            | "zero_address" | "invalid_tx_id" | "not_divisible" | "unknown_unlock" | "conversion_disabled" => 400,
            "unauthorized" => 401,
            "not_owner" => 403,
            "not_found" => 404,
            "corrupt_log" | "io_error" | "store_failed" => 500,
            "lock_held" => 503,
            _ => 409,
        }
    }

    fn from_code(code: &'static str, message: String) -> Self {
        ApiError::new(code, Self::status_for(code), message)
    }

    /// Process exit code: 2 validation, 3 state or lock, 4 corrupt log.
    pub fn exit_code(&self) -> i32 {
        match self.code.as_str() {
            "corrupt_log" => 4,
            _ if matches!(self.status, 400 | 401 | 404) => 2,
            _ => 3,
        }
    }
}

impl fmt::Display for ApiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for ApiError {}

impl From<TokenError> for ApiError {
    fn from(e: TokenError) -> Self {
        ApiError::from_code(e.code(), e.to_string())
    }
}

impl From<ChainError> for ApiError {
    fn from(e: ChainError) -> Self {
        ApiError::from_code(e.code(), e.to_string())
    }
}

impl From<RewardError> for ApiError {
    fn from(e: RewardError) -> Self {
        ApiError::from_code(e.code(), e.to_string())
    }
}

impl From<ExplorerError> for ApiError {
    fn from(e: ExplorerError) -> Self {
        ApiError::from_code(e.code(), e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferBody {
    pub from: Address,
    pub to: Address,
    pub amount: Amount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockBody {
    pub coinbase: Address,
    /// Defaults to the head block's timestamp plus one.
    #[serde(default)]
    pub timestamp: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvertBody {
    pub actor: Address,
    pub points: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RedeemBody {
    pub actor: Address,
    pub unlock_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MintBody {
    pub to: Address,
    pub amount: Amount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockRewardBody {
    pub amount: Amount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmptyBody {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Request {
    Transfer(TransferBody),
    ProduceBlock(BlockBody),
    Balance(Address),
    Supply,
    Event(PlatformEvent),
    Convert(ConvertBody),
    Redeem(RedeemBody),
    Points(Address),
    Leaderboard { from: u64, to: u64, limit: usize },
    ExplorerTxs { account: Address, page: usize, page_size: usize },
    ExplorerTx(Digest),
    ExplorerSupply,
    AdminMint(MintBody),
    AdminBlockReward(BlockRewardBody),
    AdminDestroy,
    StateHash,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
}

impl Request {
    pub fn is_mutating(&self) -> bool {
        matches!(
            self,
            Request::Transfer(_)
                | Request::ProduceBlock(_)
                | Request::Event(_)
                | Request::Convert(_)
                | Request::Redeem(_)
                | Request::AdminMint(_)
                | Request::AdminBlockReward(_)
                | Request::AdminDestroy
        )
    }

    pub fn requires_admin(&self) -> bool {
        matches!(self, Request::AdminMint(_) | Request::AdminBlockReward(_) | Request::AdminDestroy)
    }

    /// Method, path with query, and JSON body for a client call.
    pub fn to_http(&self) -> (Method, String, Option<String>) {
        fn body<T: Serialize>(v: &T) -> Option<String> {
            Some(serde_json::to_string(v).expect("request bodies serialize"))
        }
        match self {
            Request::Transfer(b) => (Method::Post, "/v1/transfers".into(), body(b)),
            Request::ProduceBlock(b) => (Method::Post, "/v1/blocks".into(), body(b)),
            Request::Balance(a) => (Method::Get, format!("/v1/balances/{a}"), None),
            Request::Supply => (Method::Get, "/v1/supply".into(), None),
            Request::Event(e) => (Method::Post, "/v1/events".into(), body(e)),
            Request::Convert(b) => (Method::Post, "/v1/points/convert".into(), body(b)),
            Request::Redeem(b) => (Method::Post, "/v1/redeem".into(), body(b)),
            Request::Points(a) => (Method::Get, format!("/v1/points/{a}"), None),
            Request::Leaderboard { from, to, limit } => {
                (Method::Get, format!("/v1/leaderboard?from={from}&to={to}&limit={limit}"), None)
            }
            Request::ExplorerTxs { account, page, page_size } => (
                Method::Get,
                format!("/v1/explorer/txs?account={account}&page={page}&page_size={page_size}"),
                None,
            ),
            Request::ExplorerTx(id) => (Method::Get, format!("/v1/explorer/tx/{id}"), None),
            Request::ExplorerSupply => (Method::Get, "/v1/explorer/supply".into(), None),
            Request::AdminMint(b) => (Method::Post, "/v1/admin/mint".into(), body(b)),
            Request::AdminBlockReward(b) => (Method::Post, "/v1/admin/block-reward".into(), body(b)),
            Request::AdminDestroy => (Method::Post, "/v1/admin/destroy".into(), body(&EmptyBody {})),
            Request::StateHash => (Method::Get, "/v1/state/hash".into(), None),
        }
    }

    /// Inverse of [`Request::to_http`]. `None` means no route matches.
    pub fn from_http(
        method: Method,
        path: &str,
        query: &BTreeMap<String, String>,
        body: &[u8],
    ) -> Option<Result<Request, ApiError>> {
        let segments: Vec<&str> = path.trim_start_matches('/').split('/').collect();
        let req = match (method, segments.as_slice()) {
            (Method::Post, ["v1", "transfers"]) => parse_body(body).map(Request::Transfer),
            (Method::Post, ["v1", "blocks"]) => parse_body(body).map(Request::ProduceBlock),
            (Method::Get, ["v1", "balances", a]) => parse_path::<Address>(a).map(Request::Balance),
            (Method::Get, ["v1", "supply"]) => Ok(Request::Supply),
            (Method::Post, ["v1", "events"]) => parse_body(body).map(Request::Event),
            (Method::Post, ["v1", "points", "convert"]) => parse_body(body).map(Request::Convert),
            (Method::Post, ["v1", "redeem"]) => parse_body(body).map(Request::Redeem),
            (Method::Get, ["v1", "points", a]) => parse_path::<Address>(a).map(Request::Points),
            (Method::Get, ["v1", "leaderboard"]) => (|| {
                Ok(Request::Leaderboard {
                    from: query_param(query, "from")?.unwrap_or(0),
                    to: query_param(query, "to")?.unwrap_or(u64::MAX),
                    limit: query_param(query, "limit")?.unwrap_or(10),
                })
            })(),
            (Method::Get, ["v1", "explorer", "txs"]) => (|| {
                let account = query_param(query, "account")?
                    .ok_or_else(|| ApiError::malformed("query parameter account is required"))?;
                let page = query_param(query, "page")?.unwrap_or(0);
                let page_size = query_param(query, "page_size")?.unwrap_or(50);
                if page_size == 0 || page_size > MAX_PAGE_SIZE {
                    return Err(ApiError::malformed(format!("page_size must be in 1..={MAX_PAGE_SIZE}")));
                }
                Ok(Request::ExplorerTxs { account, page, page_size })
            })(),
            (Method::Get, ["v1", "explorer", "tx", id]) => parse_path::<Digest>(id).map(Request::ExplorerTx),
            (Method::Get, ["v1", "explorer", "supply"]) => Ok(Request::ExplorerSupply),
            (Method::Post, ["v1", "admin", "mint"]) => parse_body(body).map(Request::AdminMint),
            (Method::Post, ["v1", "admin", "block-reward"]) => parse_body(body).map(Request::AdminBlockReward),
            (Method::Post, ["v1", "admin", "destroy"]) => {
                if body.iter().all(u8::is_ascii_whitespace) {
                    Ok(Request::AdminDestroy)
                } else {
                    parse_body::<EmptyBody>(body).map(|_| Request::AdminDestroy)
                }
            }
            (Method::Get, ["v1", "state", "hash"]) => Ok(Request::StateHash),
            _ => return None,
        };
        Some(req)
    }
}

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::malformed(format!("bad request body: {e}")))
}

fn parse_path<T: std::str::FromStr>(segment: &str) -> Result<T, ApiError>
where
    T::Err: fmt::Display,
{
    segment.parse().map_err(|e| ApiError::malformed(format!("bad path segment {segment:?}: {e}")))
}

fn query_param<T: std::str::FromStr>(query: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, ApiError>
where
    T::Err: fmt::Display,
{
    query
        .get(key)
        .map(|v| v.parse().map_err(|e| ApiError::malformed(format!("bad query parameter {key}: {e}"))))
        .transpose()
}

fn pending(tx_id: Digest) -> Value {
    json!({ "tx_id": tx_id, "status": "pending" })
}

/// Runs a mutating request against the sequencer.
pub fn execute(node: &mut Node, req: &Request) -> Result<Value, ApiError> {
    let value = match req {
        Request::Transfer(b) => pending(node.transfer(b.from, b.to, b.amount)?),
        Request::ProduceBlock(b) => {
            let timestamp = b.timestamp.unwrap_or(node.chain().head().timestamp + 1);
            let block = node.produce_block(b.coinbase, timestamp)?;
            let receipts: Vec<Value> = block
                .tx_ids
                .iter()
                .map(|id| {
                    let r = node.chain().get_receipt(id).expect("sealed txs have receipts");
                    json!({ "tx_id": id, "status": r.status, "error": r.error })
                })
                .collect();
            json!({
                "number": block.number,
                "hash": node.chain().head_hash(),
                "parent_hash": block.parent_hash,
                "coinbase": block.coinbase,
                "timestamp": block.timestamp,
                "state_hash": block.state_hash,
                "receipts": receipts,
            })
        }
        Request::Event(e) => to_value(&node.handle_event(e.clone())?),
        Request::Convert(b) => to_value(&node.convert_points(b.actor, b.points)?),
        Request::Redeem(b) => to_value(&node.redeem(b.actor, &b.unlock_id)?),
        Request::AdminMint(b) => pending(node.submit_as_owner(Call::Mint { to: b.to, amount: b.amount })?),
        Request::AdminBlockReward(b) => pending(node.submit_as_owner(Call::SetBlockReward { amount: b.amount })?),
        Request::AdminDestroy => pending(node.submit_as_owner(Call::Destroy)?),
        _ => return query(node, req),
    };
    Ok(value)
}

/// Answers a read-only request.
pub fn query(node: &Node, req: &Request) -> Result<Value, ApiError> {
    let token = node.chain().token();
    let value = match req {
        Request::Balance(a) => json!({ "address": a, "balance": token.balance_of(*a) }),
        Request::Supply => json!({
            "total_supply": token.total_supply(),
            "cap": token.cap(),
            "block_reward": token.block_reward(),
            "destroyed": token.is_destroyed(),
        }),
        Request::Points(a) => json!({ "actor": a, "points": node.engine().points_of(*a) }),
        Request::Leaderboard { from, to, limit } => {
            json!({ "from": from, "to": to, "entries": node.engine().leaderboard(*from, *to, *limit) })
        }
        Request::ExplorerTxs { account, page, page_size } => {
            let ix = node.explorer();
            json!({
                "account": account,
                "page": page,
                "page_size": page_size,
                "total": ix.account_history(*account).len(),
                "entries": ix.txs_by_account(*account, *page, *page_size),
            })
        }
        Request::ExplorerTx(id) => {
            let (tx, receipt) = node.explorer().find_tx(id)?;
            json!({ "transaction": tx, "receipt": receipt })
        }
        Request::ExplorerSupply => {
            let points = node.explorer().supply_history();
            json!({
                "points": points,
                "total_supply": points.last().map(|p| p.total_supply).unwrap_or_default(),
            })
        }
        Request::StateHash => json!({
            "state_hash": node.state_hash(),
            "height": node.chain().height(),
            "head_hash": node.chain().head_hash(),
            "log_len": node.chain().log().len(),
            "mempool": node.chain().mempool_len(),
        }),
        _ => return Err(ApiError::internal("internal_error", "mutating request sent to the read path")),
    };
    Ok(value)
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("responses serialize")
}
