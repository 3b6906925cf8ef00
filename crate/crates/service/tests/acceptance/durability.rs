//! The HTTP service against direct calls, simulated crashes at every log
//! append, and a real process kill.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ses_core::rewards::{parse_decision_log, EventKind};
use ses_core::{Amount, Chain, Digest, LedgerLog, Node, PlatformEvent};
use ses_service::api::{self, BlockBody, BlockRewardBody, ConvertBody, MintBody, RedeemBody, Request, TransferBody};
use ses_service::client::Client;
use ses_service::store::{DECISIONS_FILE, LEDGER_FILE};
use ses_service::{config, scenario, server, Store, StoreConfig};

use crate::criteria::s;

const ADMIN_KEY: &str = "acceptance-admin-key";

fn store_config(dir: &Path, snapshot_every: u64) -> Result<StoreConfig, String> {
    Ok(StoreConfig {
        data_dir: dir.to_path_buf(),
        genesis: config::load_genesis(None).map_err(s)?,
        chain_seed: 0,
        policy: config::load_policy(None).map_err(s)?,
        snapshot_every,
    })
}

pub fn service_and_recovery() -> Result<String, String> {
    let http = http_equivalence()?;
    let crashes = crash_at_every_append()?;
    let kills = process_kill()?;
    Ok(format!("{http}; {crashes}; {kills}"))
}

fn http_equivalence() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(s)?;
    let cfg = store_config(dir.path(), 64)?;
    let (store, node) = Store::open(&cfg).map_err(s)?;
    let running = server::spawn("127.0.0.1:0", store, node, ADMIN_KEY.into()).map_err(s)?;
    let client = Client::new(&running.url(), Some(ADMIN_KEY.into()));
    for req in scenario::poc_requests() {
        client.call(&req).map_err(|e| format!("{req:?}: {e}"))?;
    }
    let served = client.call(&Request::StateHash).map_err(s)?;
    running.stop();

    let mut direct = Node::genesis(cfg.genesis.clone(), cfg.chain_seed, cfg.policy.clone()).map_err(s)?;
    for req in scenario::poc_requests() {
        api::execute(&mut direct, &req).map_err(s)?;
    }
    let expected = api::query(&direct, &Request::StateHash).map_err(s)?;
    ensure!(served == expected, "service reported {served}, direct calls give {expected}");

    let (_store, reopened) = Store::open(&cfg).map_err(s)?;
    ensure!(reopened.state_hash() == direct.state_hash(), "state hash changed across restart");
    Ok(format!("HTTP state_hash {} equals direct calls and survives restart", direct.state_hash()))
}

/// Mixed traffic touching every kind of log append.
fn workload() -> Vec<Request> {
    let (owner, a1, a2, a3, miner) =
        (scenario::owner(), scenario::account(1), scenario::account(2), scenario::account(3), scenario::miner());
    let event = |id: &str, kind, actor, at| {
        Request::Event(PlatformEvent { event_id: id.into(), kind, actor, occurred_at: at, metadata: BTreeMap::new() })
    };
    let block = |ts| Request::ProduceBlock(BlockBody { coinbase: miner, timestamp: Some(ts) });
    vec![
        Request::Transfer(TransferBody { from: owner, to: a1, amount: Amount::from_tokens(1_000) }),
        event("c1", EventKind::CourseCompleted, a1, 100),
        event("q1", EventKind::QuestionAnswered, a2, 100),
        event("q2", EventKind::QuestionAnswered, a2, 200),
        event("q1", EventKind::QuestionAnswered, a2, 300),
        block(1),
        Request::Convert(ConvertBody { actor: a2, points: 20 }),
        Request::Redeem(RedeemBody { actor: a1, unlock_id: "premium_uml_pack".into() }),
        Request::AdminBlockReward(BlockRewardBody { amount: Amount::from_tokens(5) }),
        Request::Transfer(TransferBody { from: a1, to: a2, amount: Amount::from_tokens(10) }),
        block(2),
        Request::AdminMint(MintBody { to: a3, amount: Amount::from_tokens(50) }),
        event("b1", EventKind::BugFixed, a3, 400),
        event("m1", EventKind::MilestoneReached, a3, 500),
        block(3),
        Request::Transfer(TransferBody { from: a3, to: a1, amount: Amount::from_tokens(1) }),
        block(4),
    ]
}

fn read(path: &Path) -> Result<String, String> {
    match std::fs::read_to_string(path) {
        Ok(t) => Ok(t),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(String::new()),
        Err(e) => Err(format!("{}: {e}", path.display())),
    }
}

/// Runs the workload, stopping at the first persistence failure.
fn drive(store: &mut Store, node: &mut Node) {
    for req in workload() {
        // rejected requests are part of the workload; only persistence matters
        let _ = api::execute(node, &req);
        if store.persist(node).is_err() {
            return;
        }
    }
}

/// Reopens `dir` and checks the restored node against an independent
/// replay of the ledger file on disk.
fn verify_restart(cfg: &StoreConfig, what: &str) -> Result<(Store, Node), String> {
    let (store, node) = Store::open(cfg).map_err(|e| format!("{what}: reopen failed: {e}"))?;
    let ledger = read(&cfg.data_dir.join(LEDGER_FILE))?;
    let replayed = Chain::replay(&LedgerLog::parse(&ledger).map_err(s)?).map_err(s)?;
    let chain = node.chain();
    ensure!(
        chain.state_hash() == replayed.state_hash()
            && chain.head_hash() == replayed.head_hash()
            && chain.log().len() == replayed.log().len()
            && chain.mempool_len() == replayed.mempool_len(),
        "{what}: restored chain differs from a replay of ledger.log"
    );
    let decisions = parse_decision_log(&read(&cfg.data_dir.join(DECISIONS_FILE))?).map_err(s)?;
    ensure!(decisions.len() == node.engine().decision_log().len(), "{what}: decision count differs from file");
    for record in &decisions {
        if let Some(tx) = &record.tx {
            ensure!(chain.contains_tx(&tx.tx_id), "{what}: decision {} has no ledger transaction", record.seq);
        }
    }
    Ok((store, node))
}

fn crash_at_every_append() -> Result<String, String> {
    let full_dir = tempfile::tempdir().map_err(s)?;
    let full_cfg = store_config(full_dir.path(), 2)?;
    let final_hash = {
        let (mut store, mut node) = Store::open(&full_cfg).map_err(s)?;
        drive(&mut store, &mut node);
        node.state_hash()
    };
    let full_ledger = read(&full_dir.path().join(LEDGER_FILE))?;
    let full_decisions = read(&full_dir.path().join(DECISIONS_FILE))?;
    // the genesis line is written while opening, before a crash can be armed
    let appends = full_ledger.lines().count() + full_decisions.lines().count() - 1;

    let mut rolled_back = 0;
    for crash_after in 0..=appends as u64 {
        let what = format!("crash after {crash_after} appends");
        let dir = tempfile::tempdir().map_err(s)?;
        let cfg = store_config(dir.path(), 2)?;
        {
            let (mut store, mut node) = Store::open(&cfg).map_err(s)?;
            store.set_crash_after(crash_after);
            drive(&mut store, &mut node);
        }
        let ledger = read(&dir.path().join(LEDGER_FILE))?;
        let decisions_before = read(&dir.path().join(DECISIONS_FILE))?;
        ensure!(
            ledger.lines().count() + decisions_before.lines().count() == 1 + crash_after as usize,
            "{what}: wrong number of lines on disk"
        );
        ensure!(full_ledger.starts_with(&ledger), "{what}: ledger is not a prefix of the uncrashed run");
        ensure!(full_decisions.starts_with(&decisions_before), "{what}: decisions are not a prefix");

        let (mut store, mut node) = verify_restart(&cfg, &what)?;
        let decisions_after = read(&dir.path().join(DECISIONS_FILE))?;
        if decisions_after.len() < decisions_before.len() {
            rolled_back += 1;
        }
        if crash_after == appends as u64 {
            ensure!(node.state_hash() == final_hash, "{what}: final state differs from uncrashed run");
        }
        api::execute(&mut node, &Request::ProduceBlock(BlockBody { coinbase: scenario::miner(), timestamp: None }))
            .map_err(|e| format!("{what}: cannot continue: {e}"))?;
        store.persist(&mut node).map_err(|e| format!("{what}: cannot persist after restart: {e}"))?;
    }
    ensure!(rolled_back > 0, "no crash point left a decision without its transaction");
    Ok(format!(
        "crash at each of {} append points recovered to a replay of ledger.log ({rolled_back} orphaned decisions rolled back)",
        appends + 1
    ))
}

fn process_kill() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(s)?;
    let cfg = store_config(dir.path(), 64)?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut acknowledged_total = 0;
    let mut next_event = 0u64;
    for round in 0..3 {
        let mut child = Command::new(env!("CARGO_BIN_EXE_ses"))
            .arg("--data-dir")
            .arg(dir.path())
            .args(["serve", "--listen", "127.0.0.1:0"])
            .env("SES_ADMIN_KEY", ADMIN_KEY)
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| format!("cannot start ses serve: {e}"))?;
        let mut stderr = BufReader::new(child.stderr.take().ok_or("no stderr")?);
        let mut url = None;
        let mut line = String::new();
        while url.is_none() && stderr.read_line(&mut line).map_err(s)? > 0 {
            url = line.trim().strip_prefix("listening on ").map(str::to_string);
            line.clear();
        }
        let Some(url) = url else {
            let _ = child.kill();
            return Err(format!("round {round}: server exited before listening"));
        };

        let acked: Arc<Mutex<(Vec<Digest>, Vec<String>)>> = Arc::default();
        let first_event = next_event;
        let worker = {
            let acked = Arc::clone(&acked);
            std::thread::spawn(move || {
                let client = Client::new(&url, None);
                for i in 0.. {
                    let req = match i % 3 {
                        0 => Request::Transfer(TransferBody {
                            from: scenario::owner(),
                            to: scenario::account(1 + (i % 4) as u32),
                            amount: Amount::from_tokens(1),
                        }),
                        1 => Request::Event(PlatformEvent {
                            event_id: format!("kill-{}", first_event + i),
                            kind: EventKind::ModuleCompleted,
                            actor: scenario::account(5),
                            occurred_at: (first_event + i) * 86_400,
                            metadata: BTreeMap::new(),
                        }),
                        _ => Request::ProduceBlock(BlockBody { coinbase: scenario::miner(), timestamp: None }),
                    };
                    match client.call(&req) {
                        Ok(reply) => {
                            let mut acked = acked.lock().expect("lock");
                            if let Some(id) = reply.get("tx_id").and_then(|v| v.as_str()).and_then(|v| v.parse().ok()) {
                                acked.0.push(id);
                            }
                            if let Request::Event(e) = &req {
                                acked.1.push(e.event_id.clone());
                            }
                        }
                        Err(_) => return i,
                    }
                }
                unreachable!()
            })
        };
        std::thread::sleep(Duration::from_millis(rng.gen_range(200..700)));
        child.kill().map_err(s)?;
        child.wait().map_err(s)?;
        let sent = worker.join().map_err(|_| "client thread panicked")?;
        next_event += sent + 1;

        let what = format!("kill round {round}");
        let (store, node) = verify_restart(&cfg, &what)?;
        let (tx_ids, events) = &*acked.lock().expect("lock");
        for id in tx_ids {
            ensure!(node.chain().contains_tx(id), "{what}: acknowledged transaction {id} lost");
        }
        let logged: Vec<&str> = node
            .engine()
            .decision_log()
            .iter()
            .map(|r| r.decision.event_id.as_str())
            .collect();
        for id in events {
            ensure!(logged.contains(&id.as_str()), "{what}: acknowledged event {id} lost");
        }
        acknowledged_total += tx_ids.len() + events.len();
        drop((store, node));
    }
    ensure!(acknowledged_total > 0, "the service acknowledged nothing before being killed");
    Ok(format!("3 SIGKILL rounds of ses serve lost none of {acknowledged_total} acknowledged writes"))
}
