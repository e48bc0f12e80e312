//! Height variance growth on and off the characteristic and the tail of
//! the second class particle, at small sizes.
//!
//! `cargo run --release --example scaling_scan`

use bricklayers::experiments::{exp_scaling_scan, ScalingConfig};
use bricklayers::Result;

fn main() -> Result<()> {
    let report = exp_scaling_scan(&ScalingConfig {
        t_grid: vec![2.0, 4.0, 8.0],
        replicas: vec![400, 400, 400],
        off_t: 8.0,
        off_replicas: 400,
        tail_t: 4.0,
        tail_replicas: 2000,
        ..ScalingConfig::default()
    })?;
    for e in &report.estimates {
        println!("{:<24} {:>10.4} +- {:.1e}", e.name, e.value, e.stderr);
    }
    for c in &report.checks {
        println!("{:<12} {:<5} {}", c.name, if c.passed { "ok" } else { "FAIL" }, c.detail);
    }
    Ok(())
}
