//! Label processes `y >= z` riding on an ordered pair with a lower density
//! in the middle; prints the labels, both tagged positions and the refresh
//! counts along one trajectory.
//!
//! `cargo run --example convexity_labels`

use bricklayers::convexity::{FourProcess, RefreshTable};
use bricklayers::coupling::{LayeredPairState, PairLaw};
use bricklayers::lattice::{Boundary, VolumeSpec, DEFAULT_OMEGA_MAX};
use bricklayers::measures::{theta_of_rho, DEFAULT_TAIL_TOL};
use bricklayers::rng::stream;
use bricklayers::{RateParams, Result};

fn main() -> Result<()> {
    let params = RateParams::new(1.0)?;
    let (lam, rho) = (0.0, 1.0);
    let spec = VolumeSpec::new(-30, 30, Boundary::theta(theta_of_rho(rho, params)?))?;
    let law = PairLaw::profiles(&spec, |i| if i.abs() <= 8 { lam } else { rho }, |_| rho, params, DEFAULT_TAIL_TOL)?;
    let mut rng = stream(9, 0, 0);
    let (eta, omega) = law.sample(&spec, &mut rng)?;
    let background = LayeredPairState::new(spec, eta, omega, params, DEFAULT_OMEGA_MAX, 0)?;
    let mut four = FourProcess::new(background, RefreshTable::new(1.0)?, true)?;
    println!("{:>5} {:>5} {:>5} {:>6} {:>6}", "t", "y", "z", "Q", "Q_eta");
    for k in 1..=10 {
        let t = 0.3 * k as f64;
        four.run_until(t, &mut rng)?;
        let l = four.labels();
        println!("{t:>5.1} {:>5} {:>5} {:>6} {:>6}", l.y, l.z, four.q(), four.q_eta());
        four.derived_views().check_sandwich(four.background())?;
    }
    let (refreshes, joint) = four.refreshes();
    println!("{} background events, {refreshes} label refreshes ({joint} joint)", four.events());
    Ok(())
}
