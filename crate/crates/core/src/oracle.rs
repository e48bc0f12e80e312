//! Simulation-free checks of closed-form identities by exact summation.
//!
//! Nothing here draws random numbers. Generator identities are evaluated on
//! truncated product spaces: each site ranges over `[-K, K]` and values
//! whose single-site mass is below [`PRUNE`] are dropped; the dropped and
//! out-of-band mass is reported alongside every residual.

use serde::Serialize;
use statrs::function::factorial::ln_factorial;

use crate::convexity::RefreshTable;
use crate::coupling::joint_site_channels;
use crate::lattice::{column_rate_with, Boundary, VolumeSpec};
use crate::measures::{
    flux_and_speed, rw_rates, GeometricLabelLaw, RateParams, ShockPairMeasure, StationaryMarginal,
    DEFAULT_TAIL_TOL,
};
use crate::{Error, Result};

/// Single-site mass below which a value is left out of a summation.
pub const PRUNE: f64 = 1e-40;

/// Version of the fixed cylinder test-function suites.
pub const SUITE_VERSION: u32 = 1;

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub id: String,
    pub passed: bool,
    pub max_error: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl CheckReport {
    fn new(id: &str, max_error: f64, tolerance: f64, detail: String) -> Self {
        Self {
            id: id.to_string(),
            passed: max_error.is_finite() && max_error <= tolerance,
            max_error,
            tolerance,
            detail,
        }
    }
}

fn reference_p(beta: f64, d: i64) -> f64 {
    if d == 1 {
        return 1.0;
    }
    let (e1, e0) = ((beta * d as f64).exp(), (beta * (d - 1) as f64).exp());
    (e1 - e0) / (e1 - 1.0)
}

fn reference_q(beta: f64, d: i64) -> f64 {
    if d == 1 {
        return 1.0;
    }
    (beta.exp() - 1.0) / ((beta * d as f64).exp() - 1.0)
}

/// Verifies the refresh laws for `d = 1..=d_max` against closed forms
/// evaluated independently of `table`.
pub fn check_refresh_tables(table: &RefreshTable, d_max: i64) -> Result<CheckReport> {
    if d_max < 2 {
        return Err(Error::InvalidParameter(format!("d_max must be >= 2, got {d_max}")));
    }
    let beta = table.beta();
    let mut worst = 0.0f64;
    let mut first_failure: Option<String> = None;
    let mut note = |err: f64, what: String| {
        if err > worst {
            worst = err;
        }
        if err > 1e-12 && first_failure.is_none() {
            first_failure = Some(what);
        }
    };
    for d in 1..=d_max {
        let (p, q) = (reference_p(beta, d), reference_q(beta, d));
        note((table.p(d) - p).abs(), format!("beta={beta} d={d} p"));
        note((table.q(d) - q).abs(), format!("beta={beta} d={d} q"));
        let lines = table.joint_lines(d);
        for (k, (_, m)) in lines.iter().enumerate() {
            note((-m).max(0.0), format!("beta={beta} d={d} line {} negative", k + 1));
        }
        note((lines.iter().map(|l| l.1).sum::<f64>() - 1.0).abs(), format!("beta={beta} d={d} mass"));
        // marginals of the joint law against the single-label laws
        let (ref_y, ref_z): (Vec<(i64, f64)>, Vec<(i64, f64)>) = if d == 1 {
            (vec![(0, 1.0)], vec![(0, 1.0)])
        } else {
            (
                vec![(0, q), (d - 2, 1.0 - p - q), (d - 1, p)],
                vec![(0, p), (1, 1.0 - p - q), (d - 1, q)],
            )
        };
        for off in 0..d {
            let jy: f64 = lines.iter().filter(|l| l.0 .0 == off).map(|l| l.1).sum();
            let jz: f64 = lines.iter().filter(|l| l.0 .1 == off).map(|l| l.1).sum();
            let ry: f64 = ref_y.iter().filter(|l| l.0 == off).map(|l| l.1).sum();
            let rz: f64 = ref_z.iter().filter(|l| l.0 == off).map(|l| l.1).sum();
            note((jy - ry).abs(), format!("beta={beta} d={d} y-marginal at a+{off}"));
            note((jz - rz).abs(), format!("beta={beta} d={d} z-marginal at a+{off}"));
            let ty: f64 = table.y_law(d).iter().filter(|l| l.0 == off).map(|l| l.1).sum();
            let tz: f64 = table.z_law(d).iter().filter(|l| l.0 == off).map(|l| l.1).sum();
            note((ty - ry).abs(), format!("beta={beta} d={d} y-law at a+{off}"));
            note((tz - rz).abs(), format!("beta={beta} d={d} z-law at a+{off}"));
        }
        for l in &lines {
            if l.0 .0 < l.0 .1 {
                note(l.1.max(0.0), format!("beta={beta} d={d} y<z with mass"));
            }
        }
        if d == 2 {
            for k in [1, 3, 4] {
                note(lines[k].1.abs(), format!("beta={beta} d=2 line {} should vanish", k + 1));
            }
            note((table.p(2) + table.q(2) - 1.0).abs(), format!("beta={beta} p(2)+q(2)"));
        }
        if d == 1 {
            note((table.p(1) - 1.0).abs().max((table.q(1) - 1.0).abs()), format!("beta={beta} p(1), q(1)"));
        }
    }
    let detail = first_failure.unwrap_or_else(|| format!("beta={beta} d=1..={d_max}"));
    Ok(CheckReport::new("refresh-tables", worst, 1e-12, detail))
}

/// Push of the geometric law through the low-leaning refresh on `[a, b]`.
pub fn pushed_label_law(params: RateParams, a: i64, b: i64, table: &RefreshTable) -> Result<Vec<(i64, f64, f64)>> {
    if a > b {
        return Err(Error::Contract(format!("need a <= b, got a={a} b={b}")));
    }
    let nu = GeometricLabelLaw::new(params);
    let lo = a.min(0);
    let hi = b.max(0) + 2;
    let d = b - a + 1;
    let inside: f64 = (a..=b).map(|m| nu.pmf(m)).sum();
    let mut rows = Vec::new();
    for m in lo..=hi {
        let mut star = if (a..=b).contains(&m) { 0.0 } else { nu.pmf(m) };
        if d == 1 {
            star = nu.pmf(m);
        } else {
            for (off, w) in table.z_law(d) {
                if a + off == m {
                    star += w * inside;
                }
            }
        }
        rows.push((m, nu.pmf(m), star));
    }
    Ok(rows)
}

/// The pushed law is dominated by the geometric law: CDF above pointwise,
/// unchanged mass at `a >= 0`, no extra mass at `b`.
pub fn check_label_domination(params: RateParams, a: i64, b: i64, table: &RefreshTable) -> Result<(f64, Option<String>)> {
    let rows = pushed_label_law(params, a, b, table)?;
    let (mut cdf_nu, mut cdf_star) = (0.0, 0.0);
    let mut worst = 0.0f64;
    let mut failure = None;
    for &(m, nu, star) in &rows {
        cdf_nu += nu;
        cdf_star += star;
        let v = cdf_nu - cdf_star;
        if v > worst {
            worst = v;
        }
        if v > 1e-12 && failure.is_none() {
            failure = Some(format!("CDF below at m={m} (a={a}, b={b})"));
        }
        if m == a && a >= 0 && (star - nu).abs() > 1e-12 {
            worst = worst.max((star - nu).abs());
            failure.get_or_insert(format!("mass at a={a} changed"));
        }
        if m == b && star > nu + 1e-12 {
            worst = worst.max(star - nu);
            failure.get_or_insert(format!("mass at b={b} grew"));
        }
    }
    Ok((worst, failure))
}

/// Finite product space over a few sites with per-site value lists.
#[derive(Debug, Clone)]
pub struct TruncatedConfigSpace {
    laws: Vec<Vec<(i64, f64)>>,
    neglected: f64,
}

impl TruncatedConfigSpace {
    /// Per-site pmfs restricted to `[-band, band]` and pruned below [`PRUNE`].
    pub fn new(pmfs: &[&dyn Fn(i64) -> f64], band: i64) -> Result<Self> {
        if pmfs.len() > 5 {
            return Err(Error::InvalidParameter("at most five sites".into()));
        }
        let mut laws = Vec::new();
        let mut kept_product = 1.0;
        for pmf in pmfs {
            let law: Vec<(i64, f64)> = (-band..=band).map(|z| (z, pmf(z))).filter(|e| e.1 >= PRUNE).collect();
            kept_product *= law.iter().map(|e| e.1).sum::<f64>();
            laws.push(law);
        }
        Ok(Self {
            laws,
            neglected: (1.0 - kept_product).max(0.0),
        })
    }

    /// Product mass outside the enumerated set.
    pub fn neglected(&self) -> f64 {
        self.neglected
    }

    pub fn for_each(&self, mut f: impl FnMut(&[i64], f64)) {
        let n = self.laws.len();
        let mut idx = vec![0usize; n];
        let mut vals = vec![0i64; n];
        if self.laws.iter().any(|l| l.is_empty()) {
            return;
        }
        loop {
            let mut w = 1.0;
            for k in 0..n {
                let (v, p) = self.laws[k][idx[k]];
                vals[k] = v;
                w *= p;
            }
            f(&vals, w);
            let mut k = n;
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < self.laws[k].len() {
                    break;
                }
                idx[k] = 0;
            }
        }
    }
}

/// Named cylinder function of the increments on sites `ell..=r`.
pub struct SiteFunction {
    pub name: &'static str,
    pub f: fn(&[i64], i64) -> f64,
}

/// Fixed single-configuration suite; arguments are the values on
/// `ell..=r` and the index of site 0.
pub fn single_suite() -> Vec<SiteFunction> {
    vec![
        SiteFunction { name: "one", f: |_, _| 1.0 },
        SiteFunction { name: "omega_0", f: |w, o| w[o as usize] as f64 },
        SiteFunction { name: "sum", f: |w, _| w.iter().sum::<i64>() as f64 },
        SiteFunction {
            name: "omega_ell*omega_r",
            f: |w, _| (w[0] * w[w.len() - 1]) as f64,
        },
        SiteFunction {
            name: "1{omega_0=0}",
            f: |w, o| f64::from(w[o as usize] == 0),
        },
        SiteFunction {
            name: "1{omega_ell>=1, omega_r<=0}",
            f: |w, _| f64::from(w[0] >= 1 && w[w.len() - 1] <= 0),
        },
        SiteFunction {
            name: "min(exp(omega_0-omega_1),4)",
            f: |w, o| ((w[o as usize] - w[o as usize + 1]) as f64).exp().min(4.0),
        },
        SiteFunction {
            name: "omega_0^2",
            f: |w, o| (w[o as usize] * w[o as usize]) as f64,
        },
    ]
}

/// `max_phi |E_{mu^theta}[G phi]|` for the finite-volume generator on the
/// band sites of `spec` (3 to 5 sites).
pub fn stationarity_residual(theta: f64, params: RateParams, spec: &VolumeSpec, band: i64) -> Result<(f64, f64, String)> {
    let sites: Vec<i64> = spec.band_sites().collect();
    let marginal = StationaryMarginal::new(theta, params, DEFAULT_TAIL_TOL)?;
    let pmf = |z: i64| marginal.pmf(z);
    let pmfs: Vec<&dyn Fn(i64) -> f64> = sites.iter().map(|_| &pmf as &dyn Fn(i64) -> f64).collect();
    let space = TruncatedConfigSpace::new(&pmfs, band)?;
    let suite = single_suite();
    let origin = -spec.ell();
    let ell = spec.ell();
    let r = spec.r();
    let mut sums = vec![0.0f64; suite.len()];
    let mut after = vec![0i64; sites.len()];
    space.for_each(|w, prob| {
        let value = |i: i64| if (ell..=r).contains(&i) { w[(i - ell) as usize] } else { 0 };
        for c in spec.growth_columns() {
            let rate = column_rate_with(spec, c, value(c), value(c + 1), |z| params.f(z));
            after.copy_from_slice(w);
            if c >= ell {
                after[(c - ell) as usize] -= 1;
            }
            if c < r {
                after[(c + 1 - ell) as usize] += 1;
            }
            for (s, phi) in sums.iter_mut().zip(&suite) {
                *s += prob * rate * ((phi.f)(&after, origin) - (phi.f)(w, origin));
            }
        }
    });
    let (k, worst) = sums
        .iter()
        .enumerate()
        .map(|(k, s)| (k, s.abs()))
        .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
    Ok((worst, space.neglected(), suite[k].name.to_string()))
}

/// Named cylinder function of a pair on the sites `-1, 0, 1`.
pub struct PairFunction {
    pub name: &'static str,
    pub f: fn(&[i64; 3], &[i64; 3]) -> f64,
}

pub fn pair_suite() -> Vec<PairFunction> {
    vec![
        PairFunction { name: "one", f: |_, _| 1.0 },
        PairFunction {
            name: "1{defect at 0}",
            f: |l, u| f64::from(u[1] - l[1] == 1),
        },
        PairFunction {
            name: "defect position",
            f: |l, u| (-(u[0] - l[0]) + (u[2] - l[2])) as f64,
        },
        PairFunction { name: "upper_1", f: |_, u| u[2] as f64 },
        PairFunction { name: "lower_-1", f: |l, _| l[0] as f64 },
        PairFunction {
            name: "lower_-1*upper_0",
            f: |l, u| (l[0] * u[1]) as f64,
        },
        PairFunction {
            name: "min(exp(upper_0-lower_1),5)",
            f: |l, u| ((u[1] - l[2]) as f64).exp().min(5.0),
        },
        PairFunction {
            name: "1{lower_0>=0, upper_-1<=1}",
            f: |l, u| f64::from(l[1] >= 0 && u[0] <= 1),
        },
    ]
}

/// Residual of the shock-measure evolution identity at time zero:
/// `E[L phi] = R (E_{tau_1} phi - E phi) + L (E_{tau_-1} phi - E phi)` with
/// `(R, L)` the random-walk rates, maximised over [`pair_suite`].
pub fn shock_generator_residual(rho: f64, params: RateParams, band: i64) -> Result<(f64, f64, String)> {
    let shock = ShockPairMeasure::new(rho, params, DEFAULT_TAIL_TOL)?;
    let (right, left) = rw_rates(rho, params)?;
    let suite = pair_suite();
    let window = [-1i64, 0, 1];
    let mut lhs = vec![0.0f64; suite.len()];
    let mut neglected: f64 = 0.0;

    // E over the shock measure centred at `centre`, sites -1..=1 only.
    let expect = |centre: i64| -> Result<Vec<f64>> {
        let laws: Vec<(&StationaryMarginal, i64)> = window.iter().map(|&i| shock.site_law(i, centre)).collect();
        let pmfs: Vec<Box<dyn Fn(i64) -> f64>> = laws.iter().map(|(m, _)| Box::new(move |z| m.pmf(z)) as Box<dyn Fn(i64) -> f64>).collect();
        let refs: Vec<&dyn Fn(i64) -> f64> = pmfs.iter().map(|b| b.as_ref()).collect();
        let space = TruncatedConfigSpace::new(&refs, band)?;
        let mut out = vec![0.0; suite.len()];
        space.for_each(|y, prob| {
            let l = [y[0], y[1], y[2]];
            let u = [y[0] + laws[0].1, y[1] + laws[1].1, y[2] + laws[2].1];
            for (o, phi) in out.iter_mut().zip(&suite) {
                *o += prob * (phi.f)(&l, &u);
            }
        });
        Ok(out)
    };

    // Columns -2..=1 can change sites -1..=1; column c is grown by the
    // right channels at c and the left channels at c + 1.
    for c in -2i64..=1 {
        let mut sites: Vec<i64> = window.to_vec();
        for s in [c, c + 1] {
            if !sites.contains(&s) {
                sites.push(s);
            }
        }
        sites.sort();
        let laws: Vec<(&StationaryMarginal, i64)> = sites.iter().map(|&i| shock.site_law(i, 0)).collect();
        let pmfs: Vec<Box<dyn Fn(i64) -> f64>> = laws.iter().map(|(m, _)| Box::new(move |z| m.pmf(z)) as Box<dyn Fn(i64) -> f64>).collect();
        let refs: Vec<&dyn Fn(i64) -> f64> = pmfs.iter().map(|b| b.as_ref()).collect();
        let space = TruncatedConfigSpace::new(&refs, band)?;
        neglected = neglected.max(space.neglected());
        let idx = |s: i64| sites.iter().position(|&x| x == s).expect("site enumerated");
        let (ic, ic1) = (idx(c), idx(c + 1));
        let w_idx: Vec<usize> = window.iter().map(|&s| idx(s)).collect();
        space.for_each(|y, prob| {
            let mut lower = [0i64; 5];
            let mut upper = [0i64; 5];
            for k in 0..y.len() {
                lower[k] = y[k];
                upper[k] = y[k] + laws[k].1;
            }
            let restrict = |lo: &[i64; 5], up: &[i64; 5]| {
                (
                    [lo[w_idx[0]], lo[w_idx[1]], lo[w_idx[2]]],
                    [up[w_idx[0]], up[w_idx[1]], up[w_idx[2]]],
                )
            };
            let (l0, u0) = restrict(&lower, &upper);
            let right_ch = joint_site_channels(&[lower[ic], upper[ic]], |z| params.f(z));
            let left_ch = joint_site_channels(&[lower[ic1], upper[ic1]], |z| params.f(z));
            for ch in right_ch.right().iter().chain(left_ch.left()) {
                if ch.rate == 0.0 {
                    continue;
                }
                let (mut lo2, mut up2) = (lower, upper);
                if ch.mask & 1 != 0 {
                    lo2[ic] -= 1;
                    lo2[ic1] += 1;
                }
                if ch.mask & 2 != 0 {
                    up2[ic] -= 1;
                    up2[ic1] += 1;
                }
                let (l1, u1) = restrict(&lo2, &up2);
                for (s, phi) in lhs.iter_mut().zip(&suite) {
                    *s += prob * ch.rate * ((phi.f)(&l1, &u1) - (phi.f)(&l0, &u0));
                }
            }
        });
    }
    let e0 = expect(0)?;
    let e_right = expect(1)?;
    let e_left = expect(-1)?;
    let mut worst = (0.0f64, 0usize);
    for k in 0..suite.len() {
        let rhs = right * (e_right[k] - e0[k]) + left * (e_left[k] - e0[k]);
        let res = (lhs[k] - rhs).abs();
        if res > worst.0 {
            worst = (res, k);
        }
    }
    Ok((worst.0, neglected, suite[worst.1].name.to_string()))
}

/// `P(N_right(t) - N_left(t) = k)` for independent Poisson streams.
pub fn rw_law(right: f64, left: f64, t: f64, k: i64) -> Result<f64> {
    if !(right > 0.0 && left > 0.0 && t >= 0.0) {
        return Err(Error::InvalidParameter(format!("rw_law needs positive rates and t >= 0, got ({right}, {left}, {t})")));
    }
    if t == 0.0 {
        return Ok(if k == 0 { 1.0 } else { 0.0 });
    }
    let (lr, ll) = ((right * t).ln(), (left * t).ln());
    let j0 = (-k).max(0);
    let log_term = |j: i64| (k + j) as f64 * lr + j as f64 * ll - ln_factorial((k + j) as u64) - ln_factorial(j as u64);
    // terms are unimodal in j; sum until past the peak and negligible
    let mut terms = Vec::new();
    let mut j = j0;
    let mut peak = f64::NEG_INFINITY;
    loop {
        let lt = log_term(j);
        peak = peak.max(lt);
        terms.push(lt);
        if lt < peak + (1e-14f64).ln() - 5.0 && j > j0 + 2 && lt < log_term(j - 1) {
            break;
        }
        j += 1;
        if j > j0 + 100_000 {
            return Err(Error::NoConvergence {
                what: "random-walk series",
                iterations: 100_000,
            });
        }
    }
    let s: f64 = terms.iter().map(|lt| (lt - peak).exp()).sum();
    Ok((peak + s.ln() - (right + left) * t).exp())
}

/// Law of the walk at `t` by uniformisation on `[-n, n]`, for cross-checks.
pub fn rw_law_uniformized(right: f64, left: f64, t: f64, n: i64) -> Vec<f64> {
    let size = (2 * n + 1) as usize;
    let lam = right + left;
    let (pr, pl) = (right / lam, left / lam);
    let mut cur = vec![0.0; size];
    cur[n as usize] = 1.0;
    let mut out = vec![0.0; size];
    let mut log_w = -lam * t;
    let mut step = 0u64;
    loop {
        let w = log_w.exp();
        for (o, c) in out.iter_mut().zip(&cur) {
            *o += w * c;
        }
        step += 1;
        log_w += (lam * t).ln() - (step as f64).ln();
        if step as f64 > lam * t && log_w < -50.0 {
            break;
        }
        let mut next = vec![0.0; size];
        for k in 0..size {
            if cur[k] == 0.0 {
                continue;
            }
            if k + 1 < size {
                next[k + 1] += pr * cur[k];
            }
            if k > 0 {
                next[k - 1] += pl * cur[k];
            }
        }
        cur = next;
    }
    out
}

/// Options of the verification suite.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    /// Inverse temperatures of the refresh, domination and measure checks.
    pub betas: Vec<f64>,
    pub band: i64,
    pub d_max: i64,
    /// Mutation hook: scales `p(d)` by `1 + eps` in the refresh tables.
    pub p_perturbation: Option<f64>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            betas: BETA_GRID.to_vec(),
            band: 25,
            d_max: 60,
            p_perturbation: None,
        }
    }
}

pub const BETA_GRID: [f64; 4] = [0.25, 0.5, 1.0, 2.0];

fn table_for(beta: f64, opts: &VerifyOptions) -> Result<RefreshTable> {
    match opts.p_perturbation {
        Some(eps) => RefreshTable::perturbed(beta, eps),
        None => RefreshTable::new(beta),
    }
}

pub fn verify_refresh_tables(opts: &VerifyOptions) -> Result<CheckReport> {
    let mut worst: Option<CheckReport> = None;
    for &beta in &opts.betas {
        let rep = check_refresh_tables(&table_for(beta, opts)?, opts.d_max)?;
        if worst.as_ref().is_none_or(|w| rep.max_error > w.max_error || (!rep.passed && w.passed)) {
            worst = Some(rep);
        }
    }
    Ok(worst.expect("nonempty grid"))
}

pub fn verify_label_domination(opts: &VerifyOptions) -> Result<CheckReport> {
    let mut worst = 0.0f64;
    let mut failure = None;
    let mut count = 0;
    for &beta in &opts.betas {
        let params = RateParams::new(beta)?;
        let table = table_for(beta, opts)?;
        for a in -10..=20 {
            for b in a..=20 {
                let (w, f) = check_label_domination(params, a, b, &table)?;
                worst = worst.max(w);
                if failure.is_none() {
                    failure = f.map(|s| format!("beta={beta}: {s}"));
                }
                count += 1;
            }
        }
    }
    let detail = failure.unwrap_or_else(|| format!("{count} (beta, a, b) cases"));
    Ok(CheckReport::new("label-domination", worst, 1e-12, detail))
}

pub fn verify_measure_identities(opts: &VerifyOptions) -> Result<CheckReport> {
    let mut worst = 0.0f64;
    for &beta in &opts.betas {
        let params = RateParams::new(beta)?;
        for k in -10..=10 {
            let theta = 0.3 * k as f64;
            let m0 = StationaryMarginal::new(theta, params, DEFAULT_TAIL_TOL)?;
            let m1 = StationaryMarginal::new(theta + beta, params, DEFAULT_TAIL_TOL)?;
            worst = worst.max(((m1.log_z() - m0.log_z() - theta - beta / 2.0).exp() - 1.0).abs());
            worst = worst.max((m1.rho() - m0.rho() - 1.0).abs() / m1.rho().abs().max(1.0));
        }
        for &rho in &[-1.5, -0.2, 0.0, 0.5, 1.3] {
            let lower = StationaryMarginal::at_density(rho, params, DEFAULT_TAIL_TOL)?;
            let upper = StationaryMarginal::at_density(rho + 1.0, params, DEFAULT_TAIL_TOL)?;
            for z in -30..=30 {
                let (a, b) = (upper.pmf(z), lower.pmf(z - 1));
                if a.max(b) > 0.0 {
                    worst = worst.max((a - b).abs() / a.max(b));
                }
            }
        }
    }
    let mut convexity_ok = true;
    let params = RateParams::new(1.0)?;
    let h = 0.25;
    for k in -8..=8 {
        let rho = 0.25 * k as f64;
        let second = flux_and_speed(rho - h, params)?.flux + flux_and_speed(rho + h, params)?.flux - 2.0 * flux_and_speed(rho, params)?.flux;
        convexity_ok &= second > 0.0;
    }
    let mut rep = CheckReport::new("measure-identities", worst, 1e-9, "shift by beta, density shift, flux convexity on [-2, 2]".into());
    if !convexity_ok {
        rep.passed = false;
        rep.detail = "flux second difference not positive".into();
    }
    Ok(rep)
}

pub fn verify_stationarity(opts: &VerifyOptions) -> Result<CheckReport> {
    let mut worst = 0.0f64;
    let mut neglected = 0.0f64;
    let mut which = String::new();
    let params = RateParams::new(1.0)?;
    for (ell, r) in [(-1, 1), (-1, 2)] {
        for theta in [0.0, 0.6, -1.1] {
            let spec = VolumeSpec::new(ell, r, Boundary::theta(theta))?;
            let (res, neg, name) = stationarity_residual(theta, params, &spec, opts.band)?;
            neglected = neglected.max(neg);
            if res >= worst {
                worst = res;
                which = format!("{name} on ({ell},{r}) theta={theta}");
            }
        }
    }
    let detail = format!("worst {which}; neglected mass {neglected:.1e}; suite v{SUITE_VERSION}");
    Ok(CheckReport::new("stationarity", worst, 1e-6, detail))
}

pub fn verify_shock_generator(opts: &VerifyOptions) -> Result<CheckReport> {
    let mut worst = 0.0f64;
    let mut which = String::new();
    let mut neglected = 0.0f64;
    for (rho, beta) in [(0.0, 1.0), (0.4, 0.5)] {
        let (res, neg, name) = shock_generator_residual(rho, RateParams::new(beta)?, opts.band)?;
        neglected = neglected.max(neg);
        if res >= worst {
            worst = res;
            which = format!("{name} at rho={rho} beta={beta}");
        }
    }
    let detail = format!("worst {which}; neglected mass {neglected:.1e}; suite v{SUITE_VERSION}");
    Ok(CheckReport::new("shock-generator", worst, 1e-6, detail))
}

pub fn verify_rw_law(_opts: &VerifyOptions) -> Result<CheckReport> {
    let mut worst = 0.0f64;
    for &(right, left, t) in &[(1.718281828459045, 0.6321205588285577, 4.0), (0.3, 2.0, 1.5), (1.0, 1.0, 0.5)] {
        let n = 80;
        let direct: Vec<f64> = (-n..=n).map(|k| rw_law(right, left, t, k)).collect::<Result<_>>()?;
        let unif = rw_law_uniformized(right, left, t, n);
        for (a, b) in direct.iter().zip(&unif) {
            worst = worst.max((a - b).abs());
        }
        let total: f64 = direct.iter().sum();
        let mean: f64 = direct.iter().zip(-n..).map(|(p, k)| p * k as f64).sum();
        let var: f64 = direct.iter().zip(-n..).map(|(p, k)| p * (k as f64 - mean).powi(2)).sum();
        worst = worst.max((total - 1.0).abs());
        worst = worst.max((mean - (right - left) * t).abs() / t);
        worst = worst.max((var - (right + left) * t).abs() / t);
    }
    Ok(CheckReport::new("random-walk-law", worst, 1e-10, "series vs uniformisation, moments".into()))
}

impl VerifyOptions {
    /// Rejects an empty or invalid beta grid and a nonpositive band.
    pub fn validate(&self) -> Result<()> {
        if self.betas.is_empty() {
            return Err(Error::InvalidParameter("verify needs at least one beta".into()));
        }
        for &b in &self.betas {
            RateParams::new(b)?;
        }
        if self.band < 1 || self.d_max < 2 {
            return Err(Error::InvalidParameter("verify needs band >= 1 and d_max >= 2".into()));
        }
        Ok(())
    }
}

/// Runs every oracle check after validating the options.
pub fn verify_suite(opts: &VerifyOptions) -> Result<Vec<CheckReport>> {
    opts.validate()?;
    Ok(vec![
        verify_refresh_tables(opts)?,
        verify_label_domination(opts)?,
        verify_measure_identities(opts)?,
        verify_stationarity(opts)?,
        verify_shock_generator(opts)?,
        verify_rw_law(opts)?,
    ])
}
