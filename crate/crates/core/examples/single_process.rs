//! Stationary single process on a theta-boundary window: moments stay put,
//! and a snapshot round-trips through its text format.
//!
//! `cargo run --example single_process`

use bricklayers::lattice::{init_stationary, Boundary, SingleProcess, Snapshot, VolumeSpec, DEFAULT_OMEGA_MAX};
use bricklayers::measures::{StationaryMarginal, DEFAULT_TAIL_TOL};
use bricklayers::rng::stream;
use bricklayers::stats::RunningStats;
use bricklayers::{RateParams, Result};

fn main() -> Result<()> {
    let params = RateParams::new(1.0)?;
    let theta = 0.4;
    let marginal = StationaryMarginal::new(theta, params, DEFAULT_TAIL_TOL)?;
    let spec = VolumeSpec::new(-30, 30, Boundary::theta(theta))?;

    let (mut at0, mut at_t, mut growth) = (RunningStats::new(), RunningStats::new(), RunningStats::new());
    let t = 3.0;
    for k in 0..2000 {
        let mut rng = stream(5, 0, k);
        let field = init_stationary(&marginal, &spec, &mut rng)?;
        at0.push(field.omega(0) as f64);
        let mut p = SingleProcess::new(spec, field, params, DEFAULT_OMEGA_MAX)?;
        p.run_until(t, &mut rng)?;
        at_t.push(p.field().omega(0) as f64);
        growth.push(p.field().height(0) as f64 / t);
    }
    let h = theta.exp() + (-theta).exp();
    println!("E omega_0: exact {:.4}, t=0 {:.4} +- {:.4}, t={t} {:.4} +- {:.4}", marginal.rho(), at0.mean(), at0.stderr(), at_t.mean(), at_t.stderr());
    println!("growth rate of column 0: exact {h:.4}, sampled {:.4} +- {:.4}", growth.mean(), growth.stderr());

    let mut rng = stream(5, 1, 0);
    let field = init_stationary(&marginal, &VolumeSpec::new(-3, 3, Boundary::theta(theta))?, &mut rng)?;
    let snap = Snapshot {
        theta: Some(theta),
        beta: 1.0,
        seed: 5,
        field,
    };
    let text = snap.dump();
    print!("\n{text}");
    assert_eq!(Snapshot::parse(&text)?, snap);
    Ok(())
}
