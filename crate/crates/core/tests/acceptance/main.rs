//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any fails. Pass criterion numbers as arguments to run a
//! subset.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

mod buildings;
mod end_to_end;
mod fill;
mod lod;
mod oracle;
mod raster;
mod transit;
mod triangulation;
mod vegetation;
mod water;

/// Detail line on success, reason on failure.
pub type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err(format!($($arg)+));
        }
    };
}
pub(crate) use ensure;

const CRITERIA: [(&str, fn() -> Outcome); 9] = [
    ("triangulation", triangulation::run),
    ("rasterization", raster::run),
    ("gap fill", fill::run),
    ("water", water::run),
    ("buildings", buildings::run),
    ("vegetation", vegetation::run),
    ("lod", lod::run),
    ("transit", transit::run),
    ("end-to-end", end_to_end::run),
];

fn main() -> ExitCode {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, check)) in CRITERIA.iter().enumerate() {
        let n = i + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {n} {name}: {detail} [{secs:.2} s]"),
            Err(reason) => {
                failed += 1;
                println!("FAIL {n} {name}: {reason} [{secs:.2} s]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
