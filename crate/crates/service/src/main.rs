use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use ses_core::rewards::EventKind;
use ses_core::{AccountHistoryEntry, Address, Amount, Chain, Digest, LedgerLog, Node, PlatformEvent};
use ses_service::api::{
    self, ApiError, BlockBody, BlockRewardBody, ConvertBody, MintBody, RedeemBody, Request, TransferBody, MAX_PAGE_SIZE,
};
use ses_service::client::Client;
use ses_service::config::{self, parse_account, DEFAULT_ADMIN_KEY_ENV, DEFAULT_LISTEN};
use ses_service::scenario;
use ses_service::server;
use ses_service::store::{Store, StoreConfig};

/// SES skill-token ledger: service, client and tooling.
#[derive(Parser)]
#[command(name = "ses", version)]
struct Cli {
    /// Data directory holding the ledger, decision log and snapshot.
    #[arg(long, global = true, default_value = "ses-data")]
    data_dir: PathBuf,
    /// Genesis TOML file, used when the data directory is new.
    #[arg(long, global = true)]
    genesis: Option<PathBuf>,
    /// Reward policy TOML file.
    #[arg(long, global = true)]
    policy: Option<PathBuf>,
    /// Environment variable holding the admin key.
    #[arg(long, global = true, default_value = DEFAULT_ADMIN_KEY_ENV)]
    admin_key_env: String,
    /// Base URL of a running service; without it commands act on --data-dir.
    #[arg(long, global = true)]
    remote: Option<String>,
    /// Seed recorded in a new ledger's genesis entry.
    #[arg(long, global = true, default_value_t = 0)]
    chain_seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = DEFAULT_LISTEN)]
        listen: String,
    },
    /// Queue a transfer; it executes in the next block.
    Transfer {
        #[arg(long, value_parser = parse_account)]
        from: Address,
        #[arg(long, value_parser = parse_account)]
        to: Address,
        /// Amount in SES, e.g. "1,000,000" or "0.5".
        #[arg(long, value_parser = parse_tokens)]
        amount: Amount,
    },
    /// Seal the pending transactions into a block.
    ProduceBlock {
        #[arg(long, value_parser = parse_account, default_value = "miner")]
        coinbase: Address,
        #[arg(long)]
        timestamp: Option<u64>,
    },
    Balance {
        #[arg(value_parser = parse_account)]
        account: Address,
    },
    Supply,
    Points {
        #[arg(value_parser = parse_account)]
        account: Address,
    },
    /// Submit a platform event to the reward engine.
    Event {
        #[arg(long)]
        id: String,
        #[arg(long)]
        kind: EventKind,
        #[arg(long, value_parser = parse_account)]
        actor: Address,
        /// Seconds since the Unix epoch.
        #[arg(long)]
        at: u64,
        /// Metadata entries as key=value.
        #[arg(long = "meta", value_parser = parse_meta)]
        meta: Vec<(String, String)>,
    },
    /// Convert points into SES.
    Convert {
        #[arg(long, value_parser = parse_account)]
        actor: Address,
        #[arg(long)]
        points: u64,
    },
    /// Pay for an unlock.
    Redeem {
        #[arg(long, value_parser = parse_account)]
        actor: Address,
        #[arg(long)]
        unlock: String,
    },
    Leaderboard {
        #[arg(long, default_value_t = 0)]
        from: u64,
        #[arg(long, default_value_t = u64::MAX)]
        to: u64,
        #[arg(long, default_value_t = 10)]
        limit: usize,
    },
    #[command(subcommand)]
    Explorer(ExplorerCommand),
    /// Owner operations; need the admin key.
    #[command(subcommand)]
    Admin(AdminCommand),
    StateHash,
    /// Write a snapshot of the local data directory.
    Snapshot,
    #[command(subcommand)]
    Scenario(ScenarioCommand),
    /// Replay a ledger log and check every recorded hash.
    Replay { log: PathBuf },
}

#[derive(Subcommand)]
enum ExplorerCommand {
    /// History of one account.
    Txs(TxsArgs),
    /// One transaction with its receipt.
    Tx { id: Digest },
    /// Total supply after every block.
    Supply,
}

#[derive(Args)]
struct TxsArgs {
    #[arg(value_parser = parse_account)]
    account: Address,
    #[arg(long, default_value_t = 0)]
    page: usize,
    #[arg(long, default_value_t = 50)]
    page_size: usize,
    /// Print the whole history as CSV.
    #[arg(long)]
    csv: bool,
}

#[derive(Subcommand)]
enum AdminCommand {
    Mint {
        #[arg(long, value_parser = parse_account)]
        to: Address,
        #[arg(long, value_parser = parse_tokens)]
        amount: Amount,
    },
    BlockReward {
        #[arg(long, value_parser = parse_tokens)]
        amount: Amount,
    },
    Destroy,
}

#[derive(Subcommand)]
enum ScenarioCommand {
    /// Owner sends 70,000,000 SES to account-1, which sends 1,000,000 SES
    /// to account-2.
    Poc,
}

fn parse_tokens(s: &str) -> Result<Amount, String> {
    Amount::parse_tokens(s).map_err(|e| e.to_string())
}

fn parse_meta(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .ok_or_else(|| format!("{s:?} is not key=value"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), ApiError> {
    let req = match cli.command {
        Command::Serve { ref listen } => return serve(&cli, listen),
        Command::Replay { ref log } => return replay(log),
        Command::Snapshot => return snapshot(&cli),
        Command::Scenario(ScenarioCommand::Poc) => return poc(&cli),
        Command::Explorer(ExplorerCommand::Txs(TxsArgs { account, csv: true, .. })) => {
            return print_csv(&cli, account)
        }
        Command::Transfer { from, to, amount } => Request::Transfer(TransferBody { from, to, amount }),
        Command::ProduceBlock { coinbase, timestamp } => Request::ProduceBlock(BlockBody { coinbase, timestamp }),
        Command::Balance { account } => Request::Balance(account),
        Command::Supply => Request::Supply,
        Command::Points { account } => Request::Points(account),
        Command::Event { ref id, kind, actor, at, ref meta } => Request::Event(PlatformEvent {
            event_id: id.clone(),
            kind,
            actor,
            occurred_at: at,
            metadata: meta.iter().cloned().collect(),
        }),
        Command::Convert { actor, points } => Request::Convert(ConvertBody { actor, points }),
        Command::Redeem { actor, ref unlock } => Request::Redeem(RedeemBody { actor, unlock_id: unlock.clone() }),
        Command::Leaderboard { from, to, limit } => Request::Leaderboard { from, to, limit },
        Command::Explorer(ExplorerCommand::Txs(TxsArgs { account, page, page_size, .. })) => {
            if page_size == 0 || page_size > MAX_PAGE_SIZE {
                return Err(ApiError::malformed(format!("page size must be in 1..={MAX_PAGE_SIZE}")));
            }
            Request::ExplorerTxs { account, page, page_size }
        }
        Command::Explorer(ExplorerCommand::Tx { id }) => Request::ExplorerTx(id),
        Command::Explorer(ExplorerCommand::Supply) => Request::ExplorerSupply,
        Command::Admin(AdminCommand::Mint { to, amount }) => Request::AdminMint(MintBody { to, amount }),
        Command::Admin(AdminCommand::BlockReward { amount }) => Request::AdminBlockReward(BlockRewardBody { amount }),
        Command::Admin(AdminCommand::Destroy) => Request::AdminDestroy,
        Command::StateHash => Request::StateHash,
    };
    let value = call(&cli, &req)?;
    print_json(&value);
    Ok(())
}

fn print_json(value: &Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json prints"));
}

fn store_config(cli: &Cli) -> Result<StoreConfig, ApiError> {
    Ok(StoreConfig {
        data_dir: cli.data_dir.clone(),
        genesis: config::load_genesis(cli.genesis.as_deref())?,
        chain_seed: cli.chain_seed,
        policy: config::load_policy(cli.policy.as_deref())?,
        snapshot_every: 64,
    })
}

/// Sends `req` to the remote service, or runs it on the local data dir.
fn call(cli: &Cli, req: &Request) -> Result<Value, ApiError> {
    let key = std::env::var(&cli.admin_key_env).ok().filter(|k| !k.is_empty());
    if let Some(url) = &cli.remote {
        return Client::new(url, key).call(req);
    }
    if req.requires_admin() && key.is_none() {
        return Err(ApiError::unauthorized());
    }
    let (mut store, mut node) = Store::open(&store_config(cli)?)?;
    let result = api::execute(&mut node, req);
    store.persist(&mut node)?;
    result
}

fn serve(cli: &Cli, listen: &str) -> Result<(), ApiError> {
    let admin_key = config::admin_key_from_env(&cli.admin_key_env)?;
    let mut cfg = config::ServiceConfig::new(
        listen,
        cli.data_dir.clone(),
        config::load_genesis(cli.genesis.as_deref())?,
        config::load_policy(cli.policy.as_deref())?,
        admin_key,
    )?;
    cfg.store.chain_seed = cli.chain_seed;
    let (store, node) = Store::open(&cfg.store)?;
    eprintln!(
        "data dir {} at height {}, state {}",
        cfg.store.data_dir.display(),
        node.chain().height(),
        node.state_hash()
    );
    server::serve_forever(&cfg.listen.to_string(), store, node, cfg.admin_key)
        .map_err(|e| ApiError::internal("io_error", e.to_string()))
}

fn replay(path: &PathBuf) -> Result<(), ApiError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ApiError::new("invalid_config", 400, format!("{}: {e}", path.display())))?;
    let log = LedgerLog::parse(&text)?;
    let chain = Chain::replay(&log)?;
    chain.verify_integrity()?;
    println!(
        "ok entries={} height={} state_hash={}",
        log.len(),
        chain.height(),
        chain.state_hash()
    );
    Ok(())
}

fn snapshot(cli: &Cli) -> Result<(), ApiError> {
    if cli.remote.is_some() {
        return Err(ApiError::malformed("snapshots are taken on a local data directory"));
    }
    let (mut store, node) = Store::open(&store_config(cli)?)?;
    store.snapshot(&node)?;
    println!("snapshot at height {} written to {}", node.chain().height(), store.dir().display());
    Ok(())
}

fn poc(cli: &Cli) -> Result<(), ApiError> {
    let requests = scenario::poc_requests();
    let mut node = None;
    let mut run_req = |req: &Request| -> Result<Value, ApiError> {
        match &cli.remote {
            Some(url) => Client::new(url, None).call(req),
            None => {
                let node = match &mut node {
                    Some(n) => n,
                    None => node.insert(Node::genesis(
                        config::load_genesis(cli.genesis.as_deref())?,
                        cli.chain_seed,
                        config::load_policy(cli.policy.as_deref())?,
                    )?),
                };
                api::execute(node, req)
            }
        }
    };
    let mut tx_ids = Vec::new();
    for req in &requests {
        let out = run_req(req)?;
        if let Some(id) = out.get("tx_id").and_then(Value::as_str) {
            tx_ids.push(id.to_string());
        }
    }
    let balance = |run: &mut dyn FnMut(&Request) -> Result<Value, ApiError>, a: Address| -> Result<Amount, ApiError> {
        let v = run(&Request::Balance(a))?;
        amount_field(&v, "balance")
    };
    let a1 = balance(&mut run_req, scenario::account(1))?;
    let a2 = balance(&mut run_req, scenario::account(2))?;
    let supply = amount_field(&run_req(&Request::Supply)?, "total_supply")?;
    println!("A1={} SES", a1.to_token_string_grouped());
    println!("A2={} SES", a2.to_token_string_grouped());
    println!("total_supply={} SES", supply.to_token_string_grouped());
    for id in tx_ids {
        let digest: Digest = id.parse().map_err(|_| ApiError::internal("bad_response", "bad tx id"))?;
        let tx = run_req(&Request::ExplorerTx(digest))?;
        println!("tx {id} {}", tx["receipt"]["status"].as_str().unwrap_or("unknown"));
    }
    let hash = run_req(&Request::StateHash)?;
    println!("state_hash={}", hash["state_hash"].as_str().unwrap_or_default());
    Ok(())
}

fn amount_field(v: &Value, field: &str) -> Result<Amount, ApiError> {
    v.get(field)
        .and_then(Value::as_str)
        .and_then(|s| Amount::parse_base_units(s).ok())
        .ok_or_else(|| ApiError::internal("bad_response", format!("missing {field}")))
}

fn print_csv(cli: &Cli, account: Address) -> Result<(), ApiError> {
    println!("address,block,tx_id,kind,delta,running_balance");
    let mut page = 0;
    loop {
        let v = call(cli, &Request::ExplorerTxs { account, page, page_size: MAX_PAGE_SIZE })?;
        let entries: Vec<AccountHistoryEntry> = serde_json::from_value(v["entries"].clone())
            .map_err(|e| ApiError::internal("bad_response", e.to_string()))?;
        for e in &entries {
            let tx = e.tx_id.map(|d| d.to_string()).unwrap_or_default();
            println!("{account},{},{tx},{},{},{}", e.block_number, e.kind.as_str(), e.delta, e.running_balance);
        }
        if entries.len() < MAX_PAGE_SIZE {
            return Ok(());
        }
        page += 1;
    }
}
