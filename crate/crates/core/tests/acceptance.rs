//! Runs the eleven acceptance criteria at full sample counts and prints one
//! line per criterion. Set `SPINSTAB_ACCEPTANCE_SCALE=reduced` for a quick run.

use std::process::ExitCode;

use spinstab_core::suite::{run_all, Scale, SuiteOptions};

fn main() -> ExitCode {
    let scale = match std::env::var("SPINSTAB_ACCEPTANCE_SCALE").as_deref() {
        Ok("reduced") => Scale::Reduced,
        _ => Scale::Full,
    };
    let opts = SuiteOptions::new(scale);
    println!("acceptance ({scale:?} scale, seed {})", opts.seed);
    let outcomes = run_all(&opts, |o| {
        let verdict = if o.passed { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {:<26} {verdict} ({:.1} s) {}", o.id, o.name, o.elapsed_s, o.detail);
    });
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} passed, {failed} failed", outcomes.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
