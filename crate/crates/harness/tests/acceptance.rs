//! One line per acceptance criterion. Hard failures make the process exit
//! non-zero; the non-stationary comparison has no fixed threshold and is only
//! reported when it misses its target.

use std::process::ExitCode;

use shiftreg_harness::checks::{self, Status};

fn main() -> ExitCode {
    // `cargo test -- --list` and friends expect no heavy work
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    println!("running {} acceptance criteria", checks::ALL.len());
    let mut failed = 0;
    for id in checks::ALL {
        let outcome = checks::run(id);
        println!("{outcome}");
        if outcome.status == Status::Fail {
            failed += 1;
        }
    }
    println!(
        "acceptance: {} passed or reported, {failed} failed",
        checks::ALL.len() - failed
    );
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
