//! Reporting for the acceptance suite in `tests/acceptance.rs`.

use std::time::{Duration, Instant};

/// Result of one criterion's checks, with the measured values.
pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

/// Runs `f`, prints one PASS/FAIL line and returns whether it passed. A
/// criterion that overruns `limit` fails even if its checks hold.
pub fn criterion(id: u32, title: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = f();
    let elapsed = start.elapsed();
    let pass = outcome.pass && elapsed < limit;
    println!(
        "{} {id:>2} {title}: {} [{:.2} s, limit {} s]",
        if pass { "PASS" } else { "FAIL" },
        outcome.detail,
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    pass
}

pub fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}
