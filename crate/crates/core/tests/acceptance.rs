//! Runs the twelve acceptance criteria and prints one PASS/FAIL line each.
//! `CONDFLOW_SEED` overrides the default seed.

use std::process::ExitCode;

use condflow::validation::{run_suites, ValidationOptions, DEFAULT_SEED};

fn main() -> ExitCode {
    let seed = std::env::var("CONDFLOW_SEED")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(DEFAULT_SEED);
    let opts = ValidationOptions {
        seed,
        ..Default::default()
    };
    println!("acceptance suite, seed {seed}");
    let reports = run_suites(&[], &opts, |r| {
        println!("{}", r.headline());
        for c in &r.checks {
            let mark = if c.passed() { "ok  " } else { "FAIL" };
            println!("       {mark} {c}");
        }
    });
    let failed = reports.iter().filter(|r| !r.passed()).count();
    println!("{} of {} criteria passed", reports.len() - failed, reports.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
