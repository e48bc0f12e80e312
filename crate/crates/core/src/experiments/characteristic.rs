use rand::Rng;
use serde::Serialize;

use super::{light_cone_pad, pair_replica, run_replicas, run_with_widening, Estimate, ExperimentReport, ReplicaCounts, Table, Tracked, WindowCache};
use crate::coupling::PairLaw;
use crate::lattice::{init_stationary, Boundary, SingleProcess, VolumeSpec, DEFAULT_OMEGA_MAX};
use crate::measures::{flux_and_speed, FluxSpeed, StationaryMarginal, DEFAULT_TAIL_TOL};
use crate::stats::{Histogram, RunningStats};
use crate::{Error, RateParams, Result};

/// Single defect started from the size-biased pair, against stationary
/// height variances.
#[derive(Debug, Clone, Serialize)]
pub struct CharacteristicConfig {
    pub rho: f64,
    pub beta: f64,
    pub t: f64,
    /// Pair window; derived from the speed and `t` when absent.
    pub window: Option<(i64, i64)>,
    pub replicas_q: u64,
    pub replicas_h: u64,
    /// Translation average over base columns `-offsets..=offsets`.
    pub offsets: i64,
    /// Sites compared besides `0` and `floor(V t)`.
    pub extra_sites: Vec<i64>,
    pub seed: u64,
    pub omega_max: i64,
    pub tail_tol: f64,
}

impl Default for CharacteristicConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            beta: 1.0,
            t: 2.0,
            window: None,
            replicas_q: 100_000,
            replicas_h: 100_000,
            offsets: 10,
            extra_sites: Vec::new(),
            seed: 11,
            omega_max: DEFAULT_OMEGA_MAX,
            tail_tol: DEFAULT_TAIL_TOL,
        }
    }
}

/// Window for the pair ensemble: the particle starts at 0 and drifts to `vt`.
pub(crate) fn pair_window(fs: &FluxSpeed, t: f64) -> (i64, i64) {
    let pad = light_cone_pad(t, fs.flux);
    let v = fs.speed;
    let vt = v * t;
    ((vt.floor() as i64).min(0) - pad, (vt.ceil() as i64).max(0) + pad)
}

/// Window for height differences `h_{k+i}(t) - h_k(0)`, `|k| <= offsets`.
///
/// Growth at column `j` depends on the configuration near `j - V t`, and
/// boundary influence travels at speed `V` too, so the margin is measured
/// from `j - V t` on both sides.
pub(crate) fn height_window(offsets: i64, sites: &[i64], fs: &FluxSpeed, t: f64) -> (i64, i64) {
    let pad = light_cone_pad(t, fs.flux);
    let v = fs.speed;
    let vt = (v * t).round() as i64;
    let mut lo = -offsets;
    let mut hi = offsets;
    for &i in sites {
        lo = lo.min(-offsets + i).min(-offsets + i - vt);
        hi = hi.max(offsets + i).max(offsets + i - vt);
    }
    ((lo - pad).min(-1), (hi + pad).max(1))
}

/// Stationary height ensemble on a theta-boundary window.
pub(crate) struct HeightEnsemble {
    pub params: RateParams,
    pub marginal: StationaryMarginal,
    pub fs: FluxSpeed,
    pub omega_max: i64,
}

impl HeightEnsemble {
    pub fn new(rho: f64, params: RateParams, omega_max: i64, tail_tol: f64) -> Result<Self> {
        let fs = flux_and_speed(rho, params)?;
        Ok(Self {
            params,
            marginal: StationaryMarginal::new(fs.theta, params, tail_tol)?,
            fs,
            omega_max,
        })
    }

    /// Per site `i`: average over `|k| <= offsets` of the squared centred
    /// difference `h_{k+i}(t) - h_k(0) + i rho - H t`.
    pub fn replica<R: Rng + ?Sized>(&self, spec: VolumeSpec, t: f64, sites: &[i64], offsets: i64, rng: &mut R) -> Result<Tracked<Vec<f64>>> {
        let field = init_stationary(&self.marginal, &spec, rng)?;
        let h0: Vec<i64> = (-offsets..=offsets).map(|k| field.height(k)).collect();
        let mut process = SingleProcess::new(spec, field, self.params, self.omega_max)?;
        process.run_until(t, rng)?;
        let f = process.field();
        let rho = self.marginal.rho();
        let n = (2 * offsets + 1) as f64;
        let value = sites
            .iter()
            .map(|&i| {
                let mean = -(i as f64) * rho + self.fs.flux * t;
                (-offsets..=offsets)
                    .zip(&h0)
                    .map(|(k, &h)| {
                        let d = (f.height(k + i) - h) as f64 - mean;
                        d * d
                    })
                    .sum::<f64>()
                    / n
            })
            .collect();
        Ok(Tracked {
            value,
            contaminated: false,
            events: process.events(),
        })
    }

    /// Runs `replicas` stationary replicas and returns per-site statistics.
    pub fn run(&self, window: (i64, i64), t: f64, sites: &[i64], offsets: i64, seed: u64, namespace: u32, replicas: u64) -> Result<(Vec<RunningStats>, ReplicaCounts)> {
        let spec = VolumeSpec::new(window.0, window.1, Boundary::theta(self.fs.theta))?;
        let records = run_replicas(seed, namespace, replicas, |_, rng| self.replica(spec, t, sites, offsets, rng))?;
        let mut stats = vec![RunningStats::new(); sites.len()];
        let mut events = 0;
        for r in &records {
            events += r.events;
            for (s, v) in stats.iter_mut().zip(&r.value) {
                s.push(*v);
            }
        }
        let counts = ReplicaCounts {
            total: replicas,
            used: replicas,
            contaminated: 0,
            window_scale: 1,
            window,
            events,
        };
        Ok((stats, counts))
    }
}

/// `E Q(t)` against `V t`, and the variance identity
/// `Var h_i(t) = Var(omega) E|Q(t) - i|` at `i = 0`, `floor(V t)` and any
/// extra sites, from independent ensembles.
pub fn exp_characteristic_q(cfg: &CharacteristicConfig) -> Result<ExperimentReport> {
    let params = RateParams::new(cfg.beta)?;
    if cfg.replicas_q == 0 || cfg.replicas_h == 0 || !(cfg.t >= 0.0) || cfg.offsets < 0 {
        return Err(Error::InvalidParameter("characteristic run needs replicas >= 1, t >= 0, offsets >= 0".into()));
    }
    let heights = HeightEnsemble::new(cfg.rho, params, cfg.omega_max, cfg.tail_tol)?;
    let fs = heights.fs;
    let var_omega = heights.marginal.var_omega();
    let mut sites = vec![0, (fs.speed * cfg.t).floor() as i64];
    sites.extend(&cfg.extra_sites);
    sites.sort_unstable();
    sites.dedup();

    // coupled pairs
    let base = cfg.window.unwrap_or_else(|| pair_window(&fs, cfg.t));
    let laws = WindowCache::new();
    let (qs, q_counts) = run_with_widening("characteristic_q", base, cfg.seed, 1, cfg.replicas_q, |w, _, rng| {
        let law = laws.get(w, || {
            let spec = VolumeSpec::new(w.0, w.1, Boundary::theta(fs.theta))?;
            Ok((spec, PairLaw::characteristic(&spec, cfg.rho, params, cfg.tail_tol)?))
        })?;
        pair_replica(law.0, &law.1, params, cfg.omega_max, cfg.t, rng)
    })?;

    // stationary heights
    let mut h_window = height_window(cfg.offsets, &sites, &fs, cfg.t);
    if let Some(w) = cfg.window {
        h_window = (h_window.0.min(w.0), h_window.1.max(w.1));
    }
    let (h_stats, h_counts) = heights.run(h_window, cfg.t, &sites, cfg.offsets, cfg.seed, 2, cfg.replicas_h)?;

    let mut report = ExperimentReport::new("characteristic_q", "variance identity along the characteristic", cfg.seed);
    report.echo("beta", cfg.beta);
    report.echo("rho", cfg.rho);
    report.echo("theta", fs.theta);
    report.echo("t", cfg.t);
    report.echo("window", base);
    report.echo("height_window", h_window);
    report.echo("replicas_q", cfg.replicas_q);
    report.echo("replicas_h", cfg.replicas_h);
    report.echo("offsets", cfg.offsets);
    report.echo("sites", &sites);
    report.echo("omega_max", cfg.omega_max);
    report.echo("tail_tol", cfg.tail_tol);
    report.echo("speed", fs.speed);
    report.echo("flux", fs.flux);
    report.echo("var_omega", var_omega);
    report.replicas.insert("pairs".into(), q_counts);
    report.replicas.insert("stationary".into(), h_counts);

    let q_stats: RunningStats = qs.iter().map(|&q| q as f64).collect();
    let mean_q = Estimate::new("mean_q", q_stats.mean(), q_stats.stderr()).against(fs.speed * cfg.t);
    let dev = mean_q.value - fs.speed * cfg.t;
    report.add_check(
        "mean_q",
        dev.abs() <= 3.0 * mean_q.stderr,
        format!("E Q = {:.5} vs V t = {:.5} (stderr {:.2e})", mean_q.value, fs.speed * cfg.t, mean_q.stderr),
    );
    report.estimates.push(mean_q);

    let mut table = Table::new("identity", &["i", "var_h", "var_h_stderr", "var_omega_abs_q", "var_omega_abs_q_stderr", "z"]);
    for (&i, hs) in sites.iter().zip(&h_stats) {
        let abs: RunningStats = qs.iter().map(|&q| (q - i).abs() as f64 * var_omega).collect();
        let combined = (hs.stderr().powi(2) + abs.stderr().powi(2)).sqrt();
        let diff = hs.mean() - abs.mean();
        let z = if combined > 0.0 { diff / combined } else { 0.0 };
        let exact = combined == 0.0 && diff.abs() < 1e-9;
        report.add_check(
            &format!("identity_i{i}"),
            exact || z.abs() <= 3.0,
            format!("Var h = {:.5} +- {:.1e}, Var(omega) E|Q-i| = {:.5} +- {:.1e}", hs.mean(), hs.stderr(), abs.mean(), abs.stderr()),
        );
        report.estimates.push(Estimate::new(format!("var_h_i{i}"), hs.mean(), hs.stderr()));
        report.estimates.push(Estimate::new(format!("var_omega_abs_q_i{i}"), abs.mean(), abs.stderr()));
        table.push(vec![i as f64, hs.mean(), hs.stderr(), abs.mean(), abs.stderr(), z]);
    }
    report.tables.push(table);

    let mut hist = Histogram::new();
    for &q in &qs {
        hist.push(q);
    }
    let mut q_table = Table::new("q_histogram", &["k", "count", "empirical"]);
    for (&k, &c) in hist.counts() {
        q_table.push(vec![k as f64, c as f64, hist.frequency(k)]);
    }
    report.tables.push(q_table);
    Ok(report)
}
