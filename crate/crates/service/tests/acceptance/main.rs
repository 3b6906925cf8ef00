//! Acceptance suite: one check per acceptance criterion, each with its own
//! time budget. Prints a PASS/FAIL line per criterion and exits non-zero if
//! any fails.

/// Returns early from a check with a formatted failure.
macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

mod durability;
mod model;

use std::process::ExitCode;
use std::time::{Duration, Instant};

type Check = fn() -> Result<String, String>;

fn main() -> ExitCode {
    let checks: [(u32, &str, Option<u64>, Check); 8] = [
        (1, "reference transfer scenario", Some(1), criteria::reference_scenario),
        (2, "token conservation against reference model", Some(30), criteria::conservation),
        (3, "miner reward per qualifying transfer", Some(10), criteria::miner_reward),
        (4, "owner-only administration and destruction", None, criteria::admin_and_destroy),
        (5, "ledger replay determinism and tamper detection", Some(30), criteria::replay_and_tamper),
        (6, "reward idempotency and limits", None, criteria::reward_limits),
        (7, "explorer agrees with the chain", None, criteria::explorer_consistency),
        (8, "service equivalence and crash recovery", Some(60), durability::service_and_recovery),
    ];
    let mut failed = 0;
    for (n, name, budget, check) in checks {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let outcome = match (outcome, budget) {
            (Ok(detail), Some(secs)) if elapsed > Duration::from_secs(secs) => {
                Err(format!("{detail}; over the {secs}s budget"))
            }
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("[PASS] {n} {name} ({:.2}s) {detail}", elapsed.as_secs_f64()),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {n} {name} ({:.2}s) {detail}", elapsed.as_secs_f64());
            }
        }
    }
    if failed == 0 {
        println!("acceptance: all 8 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of 8 criteria failed");
        ExitCode::FAILURE
    }
}
