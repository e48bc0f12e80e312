//! Stationary height variance against `Var(omega) E|Q(t) - i|` from an
//! independent coupled-pair ensemble.
//!
//! `cargo run --release --example variance_identity -- [replicas]`

use bricklayers::experiments::{exp_characteristic_q, CharacteristicConfig};
use bricklayers::Result;

fn main() -> Result<()> {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3000);
    let cfg = CharacteristicConfig {
        rho: 0.5,
        t: 1.0,
        replicas_q: n,
        replicas_h: n,
        extra_sites: vec![-2, 3],
        ..CharacteristicConfig::default()
    };
    let report = exp_characteristic_q(&cfg)?;
    let table = report.table("identity").expect("identity table");
    println!("{}", table.header.join("  "));
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
        println!("{}", cells.join("  "));
    }
    for c in &report.checks {
        println!("{:<14} {}", c.name, c.detail);
    }
    Ok(())
}
