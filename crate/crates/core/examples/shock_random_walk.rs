//! Second class particle from the shock measure against the exact random
//! walk law; writes the report to a temporary directory.
//!
//! `cargo run --release --example shock_random_walk -- [replicas]`

use bricklayers::experiments::{exp_shock_random_walk, ShockConfig};
use bricklayers::Result;

fn main() -> Result<()> {
    let replicas = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5000);
    let cfg = ShockConfig {
        t: 2.0,
        window: (-40, 40),
        replicas,
        ..ShockConfig::default()
    };
    let report = exp_shock_random_walk(&cfg)?;
    for e in &report.estimates {
        println!("{:<16} {:>10.5} +- {:.1e} {:?}", e.name, e.value, e.stderr, e.reference);
    }
    let dir = std::env::temp_dir().join("taeblp-shock-example");
    for p in report.write(&dir)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}
