use serde::Serialize;

use super::{pair_replica, run_with_widening, Estimate, ExperimentReport, Table, WindowCache};
use crate::coupling::PairLaw;
use crate::lattice::{Boundary, VolumeSpec, DEFAULT_OMEGA_MAX};
use crate::measures::{rw_rates, theta_of_rho, DEFAULT_TAIL_TOL};
use crate::oracle::rw_law;
use crate::stats::{chi_square_gof, Histogram};
use crate::{Error, RateParams, Result};

/// Second class particle started from the shock measure.
#[derive(Debug, Clone, Serialize)]
pub struct ShockConfig {
    pub rho: f64,
    pub beta: f64,
    pub t: f64,
    pub window: (i64, i64),
    pub replicas: u64,
    pub seed: u64,
    pub omega_max: i64,
    pub tail_tol: f64,
}

impl Default for ShockConfig {
    fn default() -> Self {
        Self {
            rho: 0.0,
            beta: 1.0,
            t: 4.0,
            window: (-60, 60),
            replicas: 200_000,
            seed: 7,
            omega_max: DEFAULT_OMEGA_MAX,
            tail_tol: DEFAULT_TAIL_TOL,
        }
    }
}

/// Empirical law of `Q(t)` against the asymmetric random walk law.
///
/// Estimates: `mean`, `variance` (with references), `tv`, `tv_budget`,
/// `chi_square`, `chi_square_p`. The CSV lists one row per visited site.
pub fn exp_shock_random_walk(cfg: &ShockConfig) -> Result<ExperimentReport> {
    let params = RateParams::new(cfg.beta)?;
    if cfg.replicas == 0 || !(cfg.t >= 0.0) {
        return Err(Error::InvalidParameter("shock run needs replicas >= 1 and t >= 0".into()));
    }
    let theta = theta_of_rho(cfg.rho, params)?;
    let law = PairLaw::shock(cfg.rho, params, cfg.tail_tol)?;
    let boundary = Boundary::Theta {
        left: theta + cfg.beta,
        right: theta,
    };
    let specs = WindowCache::new();
    let (qs, counts) = run_with_widening("shock_rw", cfg.window, cfg.seed, 10, cfg.replicas, |w, _, rng| {
        let spec = specs.get(w, || VolumeSpec::new(w.0, w.1, boundary))?;
        pair_replica(*spec, &law, params, cfg.omega_max, cfg.t, rng)
    })?;

    let mut hist = Histogram::new();
    for &q in &qs {
        hist.push(q);
    }
    let (right, left) = rw_rates(cfg.rho, params)?;
    let (lo, hi) = hist.range().unwrap_or((0, 0));
    let span = ((right + left) * cfg.t + 10.0 * ((right + left) * cfg.t).sqrt()).ceil() as i64 + 10;
    let support = lo.min(-span)..=hi.max(span);
    let pmf: Vec<(i64, f64)> = support.clone().map(|k| rw_law(right, left, cfg.t, k).map(|p| (k, p))).collect::<Result<_>>()?;
    let p_at = |k: i64| -> f64 {
        if support.contains(&k) {
            pmf[(k - *support.start()) as usize].1
        } else {
            0.0
        }
    };
    let n = hist.total();
    let tv = hist.tv_distance(p_at, support.clone());
    let tv_budget = 0.5 * pmf.iter().map(|(_, p)| (p / n as f64).sqrt()).sum::<f64>();
    let chi = chi_square_gof(hist.counts(), p_at, n);
    let s = hist.stats();

    let mut report = ExperimentReport::new("shock_rw", "shock random walk", cfg.seed);
    report.echo("beta", cfg.beta);
    report.echo("rho", cfg.rho);
    report.echo("t", cfg.t);
    report.echo("window", cfg.window);
    report.echo("replicas", cfg.replicas);
    report.echo("omega_max", cfg.omega_max);
    report.echo("tail_tol", cfg.tail_tol);
    report.echo("rw_right", right);
    report.echo("rw_left", left);
    report.replicas.insert("pairs".into(), counts);

    let mean = Estimate::new("mean", s.mean(), s.stderr()).against((right - left) * cfg.t);
    // stderr of the sample variance from the fourth central moment
    let m4 = qs.iter().map(|&q| (q as f64 - s.mean()).powi(4)).sum::<f64>() / n as f64;
    let var_se = ((m4 - s.variance().powi(2)) / n as f64).max(0.0).sqrt();
    let variance = Estimate::new("variance", s.variance(), var_se).against((right + left) * cfg.t);
    report.add_check(
        "mean",
        mean.z_score().is_some_and(|z| z.abs() <= 3.0) || s.stderr() == 0.0 && mean.value == 0.0,
        format!("mean {:.6} vs {:.6} (stderr {:.2e})", mean.value, (right - left) * cfg.t, mean.stderr),
    );
    report.add_check("tv", tv <= 3.0 * tv_budget.max(1e-12), format!("tv {tv:.5} vs 3 x budget {:.5}", 3.0 * tv_budget));
    report.estimates.extend([
        mean,
        variance,
        Estimate::new("tv", tv, 0.0),
        Estimate::new("tv_budget", tv_budget, 0.0),
        Estimate::new("chi_square", chi.statistic, 0.0),
        Estimate::new("chi_square_dof", chi.dof as f64, 0.0),
        Estimate::new("chi_square_p", chi.p_value, 0.0),
    ]);

    let mut table = Table::new("histogram", &["k", "count", "empirical", "oracle"]);
    for k in lo..=hi {
        let c = hist.counts().get(&k).copied().unwrap_or(0);
        table.push(vec![k as f64, c as f64, hist.frequency(k), p_at(k)]);
    }
    report.tables.push(table);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_time_pins_the_particle() {
        let cfg = ShockConfig {
            t: 0.0,
            replicas: 50,
            window: (-20, 20),
            ..ShockConfig::default()
        };
        let r = exp_shock_random_walk(&cfg).unwrap();
        assert_eq!(r.estimate("mean").unwrap().value, 0.0);
        assert_eq!(r.estimate("tv").unwrap().value, 0.0);
    }

    #[test]
    fn small_run_is_consistent() {
        let cfg = ShockConfig {
            t: 1.0,
            replicas: 4000,
            window: (-30, 30),
            ..ShockConfig::default()
        };
        let r = exp_shock_random_walk(&cfg).unwrap();
        assert!(r.all_passed(), "{:?}", r.checks);
    }
}
