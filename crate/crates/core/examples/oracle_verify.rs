//! The exact verification suite, called as a library.
//!
//! `cargo run --example oracle_verify`

use bricklayers::oracle::{verify_suite, VerifyOptions};
use bricklayers::Result;

fn main() -> Result<()> {
    for opts in [
        VerifyOptions::default(),
        VerifyOptions {
            p_perturbation: Some(1e-6),
            ..VerifyOptions::default()
        },
    ] {
        println!("p perturbation {:?}", opts.p_perturbation);
        for r in verify_suite(&opts)? {
            println!("  {:<20} {:<5} {:.2e}  {}", r.id, if r.passed { "ok" } else { "FAIL" }, r.max_error, r.detail);
        }
    }
    Ok(())
}
