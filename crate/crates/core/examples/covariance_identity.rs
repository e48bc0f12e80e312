//! Height variance against the weighted space-time covariance sum, with the
//! covariance profile and the truncation tail.
//!
//! `cargo run --release --example covariance_identity -- [replicas]`

use bricklayers::experiments::{exp_covariance_identity, CovarianceConfig};
use bricklayers::Result;

fn main() -> Result<()> {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5000);
    let report = exp_covariance_identity(&CovarianceConfig {
        t: 1.0,
        window: (-30, 30),
        replicas: n,
        ..CovarianceConfig::default()
    })?;
    let t = report.table("covariance").expect("profile");
    for row in t.rows.iter().filter(|r| r[0].abs() <= 6.0) {
        println!("n={:>3}  C={:>9.5}  +- {:.5}", row[0], row[1], row[2]);
    }
    for c in &report.checks {
        println!("{:<16} {}", c.name, c.detail);
    }
    Ok(())
}
