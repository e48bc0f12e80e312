use serde::Serialize;

use super::{run_replicas, Estimate, ExperimentReport, ReplicaCounts, Table, CONTAMINATION_MARGIN};
use crate::lattice::{init_stationary, Boundary, SingleProcess, VolumeSpec, DEFAULT_OMEGA_MAX};
use crate::measures::{StationaryMarginal, DEFAULT_TAIL_TOL};
use crate::stats::RunningStats;
use crate::{Error, RateParams, Result};

/// Height variance against the space-time covariance sum.
#[derive(Debug, Clone, Serialize)]
pub struct CovarianceConfig {
    pub theta: f64,
    pub beta: f64,
    pub t: f64,
    pub z: i64,
    pub window: (i64, i64),
    pub replicas: u64,
    /// Base sites `-offsets..=offsets` of the translation average.
    pub offsets: i64,
    pub seed: u64,
    pub omega_max: i64,
    pub tail_tol: f64,
}

impl Default for CovarianceConfig {
    fn default() -> Self {
        Self {
            theta: 0.0,
            beta: 1.0,
            t: 2.0,
            z: 0,
            window: (-40, 40),
            replicas: 100_000,
            offsets: 8,
            seed: 13,
            omega_max: DEFAULT_OMEGA_MAX,
            tail_tol: DEFAULT_TAIL_TOL,
        }
    }
}

struct Sample {
    lhs: f64,
    rhs: f64,
    cov: Vec<f64>,
}

/// Geometric extrapolation of the weighted sum beyond the last entry of
/// `side`, which runs outward from the peak of the profile as
/// `(C, stderr)` pairs. The entry `j` places past the end has weight
/// `end_weight + j`. Returns infinity when no decay is visible.
fn tail_estimate(side: &[(f64, f64)], end_weight: i64) -> f64 {
    let end = side.len() - 1;
    let mut last = 0;
    while last < end && side[last + 1].0 > 2.0 * side[last + 1].1 {
        last += 1;
    }
    if last == end {
        // still significant at the truncation index
        return f64::INFINITY;
    }
    let first = last.saturating_sub(4);
    let q = if last > first {
        let x: Vec<f64> = (first..=last).map(|m| m as f64).collect();
        let y: Vec<f64> = (first..=last).map(|m| side[m].0.ln()).collect();
        super::fit_slope(&x, &y).exp()
    } else {
        // the profile drops into noise right after the peak; the first
        // insignificant value is below twice its stderr
        2.0 * side[1].1 / side[0].0.abs()
    };
    if !(q < 1.0) {
        return f64::INFINITY;
    }
    let c_last = side[last].0.abs();
    let mut total = 0.0;
    for j in 1.. {
        let m = end + j;
        let term = (end_weight + j as i64) as f64 * c_last * q.powi((m - last) as i32);
        total += term;
        if term <= 1e-15 * total || j > 100_000 {
            break;
        }
    }
    total
}

/// Both sides of `Var h_z(t) = sum_n |n - z| Cov(omega_n(t), omega_0(0))` from
/// one stationary ensemble; the sum runs over `|n - z| <= n_max`, where
/// `n_max` keeps every used site [`CONTAMINATION_MARGIN`] inside the window.
pub fn exp_covariance_identity(cfg: &CovarianceConfig) -> Result<ExperimentReport> {
    let params = RateParams::new(cfg.beta)?;
    if cfg.replicas == 0 || !(cfg.t >= 0.0) || cfg.offsets < 0 {
        return Err(Error::InvalidParameter("covariance run needs replicas >= 1, t >= 0, offsets >= 0".into()));
    }
    let spec = VolumeSpec::new(cfg.window.0, cfg.window.1, Boundary::theta(cfg.theta))?;
    let reach = (spec.r() - CONTAMINATION_MARGIN).min(-CONTAMINATION_MARGIN - spec.ell());
    let n_max = reach - cfg.offsets - cfg.z.abs();
    if n_max < 1 {
        return Err(Error::InvalidParameter(format!(
            "window {:?} too small for offsets {} and z {}",
            cfg.window, cfg.offsets, cfg.z
        )));
    }
    let marginal = StationaryMarginal::new(cfg.theta, params, cfg.tail_tol)?;
    let rho = marginal.rho();
    let flux = cfg.theta.exp() + (-cfg.theta).exp();
    let ns: Vec<i64> = (cfg.z - n_max..=cfg.z + n_max).collect();
    let k_range = -cfg.offsets..=cfg.offsets;
    let width = (2 * cfg.offsets + 1) as f64;

    let mut events = 0u64;
    let records = run_replicas(cfg.seed, 20, cfg.replicas, |_, rng| {
        let field = init_stationary(&marginal, &spec, rng)?;
        let w0: Vec<f64> = k_range.clone().map(|k| field.omega(k) as f64 - rho).collect();
        let h0: Vec<i64> = k_range.clone().map(|k| field.height(k)).collect();
        let mut process = SingleProcess::new(spec, field, params, cfg.omega_max)?;
        process.run_until(cfg.t, rng)?;
        let f = process.field();
        let mean = -(cfg.z as f64) * rho + flux * cfg.t;
        let lhs = k_range
            .clone()
            .zip(&h0)
            .map(|(k, &h)| ((f.height(k + cfg.z) - h) as f64 - mean).powi(2))
            .sum::<f64>()
            / width;
        let cov: Vec<f64> = ns
            .iter()
            .map(|&n| k_range.clone().zip(&w0).map(|(k, &a)| (f.omega(k + n) as f64 - rho) * a).sum::<f64>() / width)
            .collect();
        let rhs = ns.iter().zip(&cov).map(|(&n, c)| (n - cfg.z).abs() as f64 * c).sum();
        Ok((Sample { lhs, rhs, cov }, process.events()))
    })?;

    let mut lhs = RunningStats::new();
    let mut rhs = RunningStats::new();
    let mut diff = RunningStats::new();
    let mut cov = vec![RunningStats::new(); ns.len()];
    for (s, e) in &records {
        events += e;
        lhs.push(s.lhs);
        rhs.push(s.rhs);
        diff.push(s.lhs - s.rhs);
        for (c, v) in cov.iter_mut().zip(&s.cov) {
            c.push(*v);
        }
    }

    let profile: Vec<(f64, f64)> = cov.iter().map(|c| (c.mean(), c.stderr())).collect();
    let peak = (0..profile.len()).max_by(|&a, &b| profile[a].0.total_cmp(&profile[b].0)).unwrap_or(0);
    let right: Vec<(f64, f64)> = profile[peak..].to_vec();
    let left: Vec<(f64, f64)> = profile[..=peak].iter().rev().copied().collect();
    let tail = tail_estimate(&right, n_max) + tail_estimate(&left, n_max);

    let mut report = ExperimentReport::new("covariance", "height variance as a covariance sum", cfg.seed);
    report.echo("beta", cfg.beta);
    report.echo("theta", cfg.theta);
    report.echo("rho", rho);
    report.echo("t", cfg.t);
    report.echo("z", cfg.z);
    report.echo("window", cfg.window);
    report.echo("replicas", cfg.replicas);
    report.echo("offsets", cfg.offsets);
    report.echo("truncation", n_max);
    report.echo("omega_max", cfg.omega_max);
    report.echo("tail_tol", cfg.tail_tol);
    report.replicas.insert(
        "stationary".into(),
        ReplicaCounts {
            total: cfg.replicas,
            used: cfg.replicas,
            contaminated: 0,
            window_scale: 1,
            window: cfg.window,
            events,
        },
    );

    let combined = (lhs.stderr().powi(2) + rhs.stderr().powi(2)).sqrt();
    let gap = lhs.mean() - rhs.mean();
    report.add_check(
        "identity",
        gap.abs() <= 3.0 * combined || combined == 0.0 && gap.abs() < 1e-9,
        format!("Var h = {:.5} +- {:.1e}, sum = {:.5} +- {:.1e}", lhs.mean(), lhs.stderr(), rhs.mean(), rhs.stderr()),
    );
    let scale = lhs.mean().abs().max(rhs.mean().abs());
    report.add_check(
        "truncation_tail",
        tail <= 0.01 * scale || scale == 0.0 && tail == 0.0,
        format!("tail estimate {tail:.3e} at truncation {n_max} (estimate {scale:.4})"),
    );
    report.estimates.extend([
        Estimate::new("var_h", lhs.mean(), lhs.stderr()),
        Estimate::new("covariance_sum", rhs.mean(), rhs.stderr()),
        Estimate::new("paired_difference", diff.mean(), diff.stderr()).against(0.0),
        Estimate::new("truncation_tail", tail, 0.0),
    ]);

    let mut table = Table::new("covariance", &["n", "cov", "stderr", "weighted"]);
    for (&n, c) in ns.iter().zip(&cov) {
        table.push(vec![n as f64, c.mean(), c.stderr(), (n - cfg.z).abs() as f64 * c.mean()]);
    }
    report.tables.push(table);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_time_is_exact_in_expectation() {
        let cfg = CovarianceConfig {
            t: 0.0,
            z: 3,
            replicas: 3000,
            window: (-30, 30),
            ..CovarianceConfig::default()
        };
        let r = exp_covariance_identity(&cfg).unwrap();
        assert!(r.all_passed(), "{:?}", r.checks);
        let var = StationaryMarginal::new(0.0, RateParams::new(1.0).unwrap(), DEFAULT_TAIL_TOL).unwrap().var_omega();
        let e = r.estimate("var_h").unwrap();
        assert!((e.value - 3.0 * var).abs() < 4.0 * e.stderr);
    }

    #[test]
    fn tail_of_a_geometric_profile() {
        // significant up to distance 9
        let side: Vec<(f64, f64)> = (0..=12).map(|m| (0.5f64.powi(m), 6e-4)).collect();
        let exact: f64 = (13..2000).map(|m| m as f64 * 0.5f64.powi(m)).sum();
        assert!((tail_estimate(&side, 12) - exact).abs() < 1e-9 * exact);
        let flat: Vec<(f64, f64)> = (0..=5).map(|_| (1.0, 0.01)).collect();
        assert!(tail_estimate(&flat, 5).is_infinite());
    }
}
