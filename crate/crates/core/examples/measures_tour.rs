//! Stationary marginals, density inversion, flux and the size-biased law.
//!
//! `cargo run --example measures_tour`

use bricklayers::measures::{flux_and_speed, rw_rates, theta_of_rho, SizeBiasedMarginal, StationaryMarginal, DEFAULT_TAIL_TOL};
use bricklayers::rng::stream;
use bricklayers::{RateParams, Result};

fn main() -> Result<()> {
    let params = RateParams::new(1.0)?;
    println!("{:>6} {:>10} {:>10} {:>10} {:>10}", "rho", "theta", "Var", "H", "V");
    for rho in [-1.0, -0.5, 0.0, 0.5, 1.0, 2.0] {
        let fs = flux_and_speed(rho, params)?;
        let m = StationaryMarginal::new(fs.theta, params, DEFAULT_TAIL_TOL)?;
        println!("{rho:>6.2} {:>10.6} {:>10.6} {:>10.6} {:>10.6}", fs.theta, m.var_omega(), fs.flux, fs.speed);
    }

    let theta = theta_of_rho(1.0, params)?;
    let m = StationaryMarginal::new(theta, params, DEFAULT_TAIL_TOL)?;
    let hat = SizeBiasedMarginal::new(m.clone());
    println!("\nsupport {:?}; size-biased support {:?}", m.support(), hat.support());
    println!("{:>4} {:>12} {:>12}", "z", "mu", "mu_hat");
    for z in -2..=4 {
        println!("{z:>4} {:>12.6e} {:>12.6e}", m.pmf(z), hat.value(z));
    }

    let mut rng = stream(1, 0, 0);
    let n = 100_000;
    let mean = (0..n).map(|_| hat.sample(&mut rng) as f64).sum::<f64>() / n as f64;
    println!("\nsize-biased mean: exact {:.5}, sampled {mean:.5}", hat.mean());

    let (right, left) = rw_rates(0.0, params)?;
    println!("shock walk rates at rho=0: right {right:.6}, left {left:.6}");
    Ok(())
}
