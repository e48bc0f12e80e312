use serde::Serialize;

use super::characteristic::{height_window, pair_window, HeightEnsemble};
use super::{fit_slope, pair_replica, run_with_widening, Estimate, ExperimentReport, Table, WindowCache};
use crate::coupling::PairLaw;
use crate::lattice::{Boundary, VolumeSpec, DEFAULT_OMEGA_MAX};
use crate::measures::{flux_and_speed, DEFAULT_TAIL_TOL};
use crate::{Error, RateParams, Result};

/// Growth of height fluctuations with time, on and off the characteristic,
/// and the tail of the second class particle.
#[derive(Debug, Clone, Serialize)]
pub struct ScalingConfig {
    pub rho: f64,
    pub beta: f64,
    pub t_grid: Vec<f64>,
    /// Stationary replicas per grid point.
    pub replicas: Vec<u64>,
    pub offsets: i64,
    /// Time of the off-characteristic comparison.
    pub off_t: f64,
    /// Offsets `V - V^rho` of the off-characteristic comparison.
    pub off_dv: Vec<f64>,
    pub off_replicas: u64,
    pub tail_rho: f64,
    pub tail_t: f64,
    /// Thresholds `K / t` of the tail estimate.
    pub tail_k: Vec<f64>,
    /// Thresholds at or above this are checked against `1e-3`; lower ones
    /// are only reported.
    pub tail_alpha: f64,
    pub tail_replicas: u64,
    pub seed: u64,
    pub omega_max: i64,
    pub tail_tol: f64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            beta: 1.0,
            t_grid: vec![8.0, 16.0, 32.0, 64.0],
            replicas: vec![4000, 4000, 3000, 2000],
            offsets: 10,
            off_t: 32.0,
            off_dv: vec![-1.0, 1.0],
            off_replicas: 2000,
            tail_rho: 0.0,
            tail_t: 8.0,
            tail_k: vec![2.0, 3.0, 4.0],
            tail_alpha: 3.0,
            tail_replicas: 20_000,
            seed: 19,
            omega_max: DEFAULT_OMEGA_MAX,
            tail_tol: DEFAULT_TAIL_TOL,
        }
    }
}

/// Checks: `sublinear` (log-log slope below 0.9), `off_dv{dv}` (`Var / t`
/// within 15% of `D`), `tail_k{k}` (`P(|Q(t)| > k t) < 1e-3` for `k >= tail_alpha`).
pub fn exp_scaling_scan(cfg: &ScalingConfig) -> Result<ExperimentReport> {
    let params = RateParams::new(cfg.beta)?;
    if cfg.t_grid.len() < 2 || cfg.t_grid.windows(2).any(|w| !(w[0] < w[1])) || cfg.t_grid[0] <= 0.0 {
        return Err(Error::InvalidParameter("t-grid must be positive and increasing with at least two points".into()));
    }
    if cfg.replicas.len() != cfg.t_grid.len() || cfg.replicas.contains(&0) || cfg.off_replicas == 0 || cfg.tail_replicas == 0 {
        return Err(Error::InvalidParameter("one positive replica count per grid point is required".into()));
    }
    let heights = HeightEnsemble::new(cfg.rho, params, cfg.omega_max, cfg.tail_tol)?;
    let fs = heights.fs;
    let var_omega = heights.marginal.var_omega();

    let mut report = ExperimentReport::new("scaling_scan", "current variance growth and off-characteristic diffusivity", cfg.seed);
    report.echo("beta", cfg.beta);
    report.echo("rho", cfg.rho);
    report.echo("t_grid", &cfg.t_grid);
    report.echo("replicas", &cfg.replicas);
    report.echo("offsets", cfg.offsets);
    report.echo("off_t", cfg.off_t);
    report.echo("off_dv", &cfg.off_dv);
    report.echo("off_replicas", cfg.off_replicas);
    report.echo("tail_rho", cfg.tail_rho);
    report.echo("tail_t", cfg.tail_t);
    report.echo("tail_k", &cfg.tail_k);
    report.echo("tail_alpha", cfg.tail_alpha);
    report.echo("tail_replicas", cfg.tail_replicas);
    report.echo("omega_max", cfg.omega_max);
    report.echo("tail_tol", cfg.tail_tol);
    report.echo("speed", fs.speed);
    report.echo("var_omega", var_omega);

    // on the characteristic
    let mut table = Table::new("on_characteristic", &["t", "i", "var_h", "stderr", "window_lo", "window_hi"]);
    let (mut xs, mut ys, mut ses) = (Vec::new(), Vec::new(), Vec::new());
    for (j, (&t, &n)) in cfg.t_grid.iter().zip(&cfg.replicas).enumerate() {
        let i = (fs.speed * t).floor() as i64;
        let window = height_window(cfg.offsets, &[i], &fs, t);
        let (stats, counts) = heights.run(window, t, &[i], cfg.offsets, cfg.seed, 40 + j as u32, n)?;
        let s = &stats[0];
        report.replicas.insert(format!("on_t{t}"), counts);
        report.estimates.push(Estimate::new(format!("var_h_t{t}"), s.mean(), s.stderr()));
        table.push(vec![t, i as f64, s.mean(), s.stderr(), window.0 as f64, window.1 as f64]);
        xs.push(t.ln());
        ys.push(s.mean().ln());
        ses.push(s.stderr() / s.mean());
    }
    let slope = fit_slope(&xs, &ys);
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope_se = xs.iter().zip(&ses).map(|(x, s)| ((x - mx) * s).powi(2)).sum::<f64>().sqrt() / sxx;
    report.estimates.push(Estimate::new("slope", slope, slope_se));
    report.add_check("sublinear", slope < 0.9, format!("log-log slope {slope:.4} +- {slope_se:.4}"));
    report.tables.push(table);

    // off the characteristic
    let mut off = Table::new("off_characteristic", &["v", "i", "var_h_over_t", "stderr", "d"]);
    for (j, &dv) in cfg.off_dv.iter().enumerate() {
        let v = fs.speed + dv;
        let i = (v * cfg.off_t).floor() as i64;
        let window = height_window(cfg.offsets, &[i], &fs, cfg.off_t);
        let (stats, counts) = heights.run(window, cfg.off_t, &[i], cfg.offsets, cfg.seed, 50 + j as u32, cfg.off_replicas)?;
        let (ratio, se) = (stats[0].mean() / cfg.off_t, stats[0].stderr() / cfg.off_t);
        let d = var_omega * dv.abs();
        report.replicas.insert(format!("off_dv{dv}"), counts);
        report.estimates.push(Estimate::new(format!("var_h_over_t_dv{dv}"), ratio, se).against(d));
        report.add_check(&format!("off_dv{dv}"), (ratio - d).abs() <= 0.15 * d, format!("Var/t = {ratio:.4} +- {se:.1e} vs D = {d:.4}"));
        off.push(vec![v, i as f64, ratio, se, d]);
    }
    report.tables.push(off);

    // second class particle tail
    let tail_fs = flux_and_speed(cfg.tail_rho, params)?;
    let k_max = cfg.tail_k.iter().copied().fold(0.0, f64::max);
    let reach = (k_max * cfg.tail_t).ceil() as i64 + 1;
    let (lo, hi) = pair_window(&tail_fs, cfg.tail_t);
    let base = (lo.min(-reach - super::CONTAMINATION_MARGIN), hi.max(reach + super::CONTAMINATION_MARGIN));
    let laws = WindowCache::new();
    let (qs, counts) = run_with_widening("scaling_tail", base, cfg.seed, 60, cfg.tail_replicas, |w, _, rng| {
        let law = laws.get(w, || {
            let spec = VolumeSpec::new(w.0, w.1, Boundary::theta(tail_fs.theta))?;
            Ok((spec, PairLaw::characteristic(&spec, cfg.tail_rho, params, cfg.tail_tol)?))
        })?;
        pair_replica(law.0, &law.1, params, cfg.omega_max, cfg.tail_t, rng)
    })?;
    report.replicas.insert("tail".into(), counts);
    let mut tail = Table::new("tail", &["k_over_t", "p_exceed", "stderr"]);
    for &k in &cfg.tail_k {
        let level = k * cfg.tail_t;
        // contaminated replicas count as exceedances
        let hits = qs.iter().filter(|&&q| q.abs() as f64 > level).count() as u64 + counts.contaminated;
        let p = hits as f64 / counts.total as f64;
        let se = (p * (1.0 - p) / counts.total as f64).sqrt();
        report.estimates.push(Estimate::new(format!("p_q_exceeds_{k}t"), p, se));
        if k >= cfg.tail_alpha {
            report.add_check(&format!("tail_k{k}"), p < 1e-3, format!("P(|Q({})| > {level}) = {p:.2e}", cfg.tail_t));
        }
        tail.push(vec![k, p, se]);
    }
    report.tables.push(tail);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_a_bad_grid() {
        let cfg = ScalingConfig {
            t_grid: vec![4.0, 2.0],
            replicas: vec![1, 1],
            ..ScalingConfig::default()
        };
        assert!(exp_scaling_scan(&cfg).is_err());
    }

    #[test]
    fn small_scan_runs() {
        let cfg = ScalingConfig {
            t_grid: vec![1.0, 2.0],
            replicas: vec![300, 300],
            off_t: 2.0,
            off_replicas: 300,
            tail_t: 1.0,
            tail_replicas: 300,
            ..ScalingConfig::default()
        };
        let r = exp_scaling_scan(&cfg).unwrap();
        assert!(r.estimate("slope").unwrap().value.is_finite());
        assert_eq!(r.tables.len(), 3);
    }
}
