//! One discrepancy in the basic coupling, started from the size-biased pair;
//! its mean displacement follows the characteristic speed.
//!
//! `cargo run --example second_class_particle`

use bricklayers::coupling::{LayeredPairState, PairLaw};
use bricklayers::lattice::{Boundary, VolumeSpec, DEFAULT_OMEGA_MAX};
use bricklayers::measures::{flux_and_speed, DEFAULT_TAIL_TOL};
use bricklayers::rng::stream;
use bricklayers::stats::RunningStats;
use bricklayers::{RateParams, Result};

fn main() -> Result<()> {
    let params = RateParams::new(1.0)?;
    let rho = 1.0;
    let fs = flux_and_speed(rho, params)?;
    let spec = VolumeSpec::new(-40, 60, Boundary::theta(fs.theta))?;
    let law = PairLaw::characteristic(&spec, rho, params, DEFAULT_TAIL_TOL)?;
    let times = [0.5, 1.0, 2.0, 4.0];
    let mut q = vec![RunningStats::new(); times.len()];
    for k in 0..4000 {
        let mut rng = stream(3, 0, k);
        let (eta, omega) = law.sample(&spec, &mut rng)?;
        let mut pair = LayeredPairState::new(spec, eta, omega, params, DEFAULT_OMEGA_MAX, 0)?;
        for (s, &t) in q.iter_mut().zip(&times) {
            pair.run_until(t, &mut rng)?;
            s.push(pair.labels().position(0) as f64);
        }
        pair.check_invariants()?;
    }
    println!("V = {:.4}", fs.speed);
    for (s, t) in q.iter().zip(times) {
        println!("t={t:<4} E Q = {:>7.4} +- {:.4}   V t = {:.4}", s.mean(), s.stderr(), fs.speed * t);
    }
    Ok(())
}
