//! Single TAEBLP configuration on a finite window and its exact simulation.
//!
//! A [`VolumeSpec`] `(ell, r)` fixes which columns may grow:
//!
//! * frozen: columns `ell..=r-1`, everything else is frozen;
//! * theta-boundary: columns `ell-1..=r`, where the two outer columns carry
//!   the constant ghost rates `e^theta` (left) and `e^-theta` (right).
//!
//! Increments live on sites `ell-1..=r+1` and heights on columns
//! `ell-2..=r+1`, so `omega_i = h_{i-1} - h_i` holds on the whole window.
//! The ghost increments `omega_{ell-1}` and `omega_{r+1}` drift and never
//! enter a rate; the admissible band is enforced on `ell..=r` only.

use std::fmt::Write as _;
use std::ops::RangeInclusive;

use rand::Rng;

use crate::measures::{RateLookup, RateParams, StationaryMarginal};
use crate::rng::exponential;
use crate::sumtree::SumTree;
use crate::{Error, Result};

/// Default admissible increment band.
pub const DEFAULT_OMEGA_MAX: i64 = 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundary {
    Frozen,
    /// Ghost rates `e^left` on column `ell-1` and `e^-right` on column `r`.
    Theta { left: f64, right: f64 },
}

impl Boundary {
    pub fn theta(theta: f64) -> Self {
        Boundary::Theta { left: theta, right: theta }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeSpec {
    ell: i64,
    r: i64,
    boundary: Boundary,
}

impl VolumeSpec {
    pub fn new(ell: i64, r: i64, boundary: Boundary) -> Result<Self> {
        if !(ell < 0 && r > 0) {
            return Err(Error::InvalidParameter(format!("volume needs ell < 0 < r, got ({ell}, {r})")));
        }
        if let Boundary::Theta { left, right } = boundary {
            if !(left.is_finite() && right.is_finite()) {
                return Err(Error::InvalidParameter("boundary theta must be finite".into()));
            }
        }
        Ok(Self { ell, r, boundary })
    }

    pub fn ell(&self) -> i64 {
        self.ell
    }

    pub fn r(&self) -> i64 {
        self.r
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Sites carrying an increment, ghosts included.
    pub fn omega_sites(&self) -> RangeInclusive<i64> {
        self.ell - 1..=self.r + 1
    }

    /// Sites whose increments drive rates and must stay in the band.
    pub fn band_sites(&self) -> RangeInclusive<i64> {
        self.ell..=self.r
    }

    pub fn growth_columns(&self) -> RangeInclusive<i64> {
        match self.boundary {
            Boundary::Frozen => self.ell..=self.r - 1,
            Boundary::Theta { .. } => self.ell - 1..=self.r,
        }
    }

    /// Distance from `site` to the nearer window edge.
    pub fn edge_distance(&self, site: i64) -> i64 {
        (site - self.ell).min(self.r - site)
    }
}

/// Rate of one column given its two adjacent increments, covering the ghost
/// columns of the theta variant. `f` evaluates the rate function.
#[inline]
pub fn column_rate_with(spec: &VolumeSpec, column: i64, omega_left: i64, omega_right: i64, f: impl Fn(i64) -> f64) -> f64 {
    match spec.boundary {
        Boundary::Theta { left, .. } if column == spec.ell - 1 => left.exp() + f(-omega_right),
        Boundary::Theta { right, .. } if column == spec.r => (-right).exp() + f(omega_left),
        _ => f(omega_left) + f(-omega_right),
    }
}

/// Increments, heights and clock over the window of a [`VolumeSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementField {
    lo: i64,
    omega: Vec<i64>,
    /// Columns `lo-1..=hi`.
    height: Vec<i64>,
    clock: f64,
}

impl IncrementField {
    /// Builds the field from increments on sites `lo..`, normalising
    /// `h_0 = 0`.
    pub fn from_increments(lo: i64, omega: Vec<i64>) -> Result<Self> {
        let hi = lo + omega.len() as i64 - 1;
        if !(lo <= 0 && hi >= 0) {
            return Err(Error::Contract(format!("window {lo}..={hi} must contain site 0")));
        }
        let mut height = vec![0i64; omega.len() + 1];
        // height index k corresponds to column lo - 1 + k
        let zero = (1 - lo) as usize;
        for k in zero + 1..height.len() {
            height[k] = height[k - 1] - omega[k - 1];
        }
        for k in (0..zero).rev() {
            height[k] = height[k + 1] + omega[k];
        }
        Ok(Self {
            lo,
            omega,
            height,
            clock: 0.0,
        })
    }

    pub fn from_fn(sites: RangeInclusive<i64>, mut value: impl FnMut(i64) -> i64) -> Result<Self> {
        let lo = *sites.start();
        let omega = sites.map(&mut value).collect();
        Self::from_increments(lo, omega)
    }

    pub fn sites(&self) -> RangeInclusive<i64> {
        self.lo..=self.lo + self.omega.len() as i64 - 1
    }

    pub fn columns(&self) -> RangeInclusive<i64> {
        self.lo - 1..=self.lo + self.omega.len() as i64 - 1
    }

    #[inline]
    pub fn omega(&self, i: i64) -> i64 {
        self.omega[(i - self.lo) as usize]
    }

    #[inline]
    pub fn height(&self, i: i64) -> i64 {
        self.height[(i - self.lo + 1) as usize]
    }

    pub fn omegas(&self) -> &[i64] {
        &self.omega
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn set_clock(&mut self, t: f64) {
        self.clock = t;
    }

    /// `omega_i -= 1`, `omega_{i+1} += 1`, `h_i += 1`.
    #[inline]
    pub fn apply_brick(&mut self, column: i64) {
        let k = (column - self.lo) as usize;
        self.omega[k] -= 1;
        self.omega[k + 1] += 1;
        self.height[k + 1] += 1;
        debug_assert_eq!(self.omega[k], self.height[k] - self.height[k + 1]);
        debug_assert_eq!(self.omega[k + 1], self.height[k + 1] - self.height[k + 2]);
    }

    /// Checks `omega_i = h_{i-1} - h_i` on the whole window.
    pub fn check_gradient(&self) -> Result<()> {
        for (k, w) in self.omega.iter().enumerate() {
            if *w != self.height[k] - self.height[k + 1] {
                return Err(Error::Inconsistency(format!(
                    "gradient identity broken at site {}",
                    self.lo + k as i64
                )));
            }
        }
        Ok(())
    }

    pub fn check_band(&self, sites: RangeInclusive<i64>, omega_max: i64) -> Result<()> {
        for i in sites {
            let w = self.omega(i);
            if w.abs() > omega_max {
                return Err(Error::BandViolation {
                    site: i,
                    value: w,
                    omega_max,
                    time: self.clock,
                });
            }
        }
        Ok(())
    }

    /// Sum of increments over `sites`.
    pub fn window_sum(&self, sites: RangeInclusive<i64>) -> i64 {
        sites.map(|i| self.omega(i)).sum()
    }
}

/// Draws `omega_i` i.i.d. from `mu^theta` over the window of `spec`.
pub fn init_stationary<R: Rng + ?Sized>(marginal: &StationaryMarginal, spec: &VolumeSpec, rng: &mut R) -> Result<IncrementField> {
    IncrementField::from_fn(spec.omega_sites(), |_| marginal.sample(rng))
}

/// Snapshot header plus field, in the line format `i omega_i h_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub theta: Option<f64>,
    pub beta: f64,
    pub seed: u64,
    pub field: IncrementField,
}

impl Snapshot {
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let theta = self.theta.map_or_else(|| "none".to_string(), |t| t.to_string());
        let _ = writeln!(
            s,
            "# taeblp snapshot {} theta={} beta={} clock={} seed={}",
            crate::version(),
            theta,
            self.beta,
            self.field.clock,
            self.seed
        );
        for i in self.field.sites() {
            let _ = writeln!(s, "{} {} {}", i, self.field.omega(i), self.field.height(i));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::InvalidParameter(format!("snapshot: {msg}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty input"))?;
        let mut theta = None;
        let mut beta = None;
        let mut clock = None;
        let mut seed = None;
        for tok in header.split_whitespace() {
            if let Some((k, v)) = tok.split_once('=') {
                match k {
                    "theta" if v != "none" => theta = Some(v.parse::<f64>().map_err(|_| bad("theta"))?),
                    "beta" => beta = Some(v.parse::<f64>().map_err(|_| bad("beta"))?),
                    "clock" => clock = Some(v.parse::<f64>().map_err(|_| bad("clock"))?),
                    "seed" => seed = Some(v.parse::<u64>().map_err(|_| bad("seed"))?),
                    _ => {}
                }
            }
        }
        let mut rows = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let v: Vec<i64> = line
                .split_whitespace()
                .map(|x| x.parse::<i64>().map_err(|_| bad("row")))
                .collect::<Result<_>>()?;
            if v.len() != 3 {
                return Err(bad("row needs three integers"));
            }
            rows.push((v[0], v[1], v[2]));
        }
        let first = rows.first().ok_or_else(|| bad("no rows"))?.0;
        if rows.iter().enumerate().any(|(k, r)| r.0 != first + k as i64) {
            return Err(bad("sites must be consecutive"));
        }
        let omega: Vec<i64> = rows.iter().map(|r| r.1).collect();
        let mut height = Vec::with_capacity(rows.len() + 1);
        height.push(rows[0].2 + rows[0].1);
        height.extend(rows.iter().map(|r| r.2));
        let field = IncrementField {
            lo: first,
            omega,
            height,
            clock: clock.ok_or_else(|| bad("missing clock"))?,
        };
        field.check_gradient()?;
        Ok(Self {
            theta,
            beta: beta.ok_or_else(|| bad("missing beta"))?,
            seed: seed.ok_or_else(|| bad("missing seed"))?,
            field,
        })
    }
}

/// Exact Gillespie simulation of one field: one channel per growth column.
#[derive(Debug, Clone)]
pub struct SingleProcess {
    spec: VolumeSpec,
    field: IncrementField,
    rates: RateLookup,
    omega_max: i64,
    tree: SumTree,
    first_column: i64,
    events: u64,
}

impl SingleProcess {
    pub fn new(spec: VolumeSpec, field: IncrementField, params: RateParams, omega_max: i64) -> Result<Self> {
        if field.sites() != spec.omega_sites() {
            return Err(Error::Contract(format!(
                "field window {:?} does not match volume {:?}",
                field.sites(),
                spec.omega_sites()
            )));
        }
        field.check_band(spec.band_sites(), omega_max)?;
        let rates = RateLookup::new(params, omega_max)?;
        let cols = spec.growth_columns();
        let first_column = *cols.start();
        let initial: Vec<f64> = cols
            .map(|c| column_rate_with(&spec, c, field.omega(c), field.omega(c + 1), |z| rates.f(z)))
            .collect();
        Ok(Self {
            spec,
            field,
            rates,
            omega_max,
            tree: SumTree::from_rates(&initial),
            first_column,
            events: 0,
        })
    }

    pub fn spec(&self) -> &VolumeSpec {
        &self.spec
    }

    pub fn field(&self) -> &IncrementField {
        &self.field
    }

    pub fn into_field(self) -> IncrementField {
        self.field
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn total_rate(&self) -> f64 {
        self.tree.total()
    }

    /// Rate of a growth column in the current state.
    pub fn column_rate(&self, column: i64) -> Result<f64> {
        let cols = self.spec.growth_columns();
        if !cols.contains(&column) {
            return Err(Error::SiteOutOfRange {
                site: column,
                lo: *cols.start(),
                hi: *cols.end(),
            });
        }
        Ok(self.tree.get((column - self.first_column) as usize))
    }

    /// Recomputes every channel from the field and compares with the index.
    pub fn check_rates(&self) -> Result<()> {
        let mut sum = 0.0;
        for c in self.spec.growth_columns() {
            let want = column_rate_with(&self.spec, c, self.field.omega(c), self.field.omega(c + 1), |z| self.rates.f(z));
            let have = self.tree.get((c - self.first_column) as usize);
            if (want - have).abs() > 1e-12 * want {
                return Err(Error::Inconsistency(format!("column {c}: indexed rate {have}, actual {want}")));
            }
            sum += want;
        }
        if (sum - self.tree.total()).abs() > 1e-9 * sum {
            return Err(Error::Inconsistency(format!("total rate {} vs {sum}", self.tree.total())));
        }
        Ok(())
    }

    fn refresh_column(&mut self, c: i64) {
        let cols = self.spec.growth_columns();
        if cols.contains(&c) {
            let rate = column_rate_with(&self.spec, c, self.field.omega(c), self.field.omega(c + 1), |z| self.rates.f(z));
            self.tree.set((c - self.first_column) as usize, rate);
        }
    }

    /// Fires one event if it occurs before `t_end`; returns the grown column.
    pub fn step<R: Rng + ?Sized>(&mut self, t_end: f64, rng: &mut R) -> Result<Option<i64>> {
        let total = self.tree.total();
        let dt = exponential(rng, total);
        if self.field.clock + dt > t_end {
            self.field.clock = t_end;
            return Ok(None);
        }
        self.field.clock += dt;
        let c = self.first_column + self.tree.sample(rng) as i64;
        self.field.apply_brick(c);
        self.events += 1;
        let band = self.spec.band_sites();
        for i in [c, c + 1] {
            let w = self.field.omega(i);
            if band.contains(&i) && w.abs() > self.omega_max {
                return Err(Error::BandViolation {
                    site: i,
                    value: w,
                    omega_max: self.omega_max,
                    time: self.field.clock,
                });
            }
        }
        self.refresh_column(c - 1);
        self.refresh_column(c);
        self.refresh_column(c + 1);
        Ok(Some(c))
    }

    /// Runs until `t_end`, stopping before the first event past it.
    pub fn run_until<R: Rng + ?Sized>(&mut self, t_end: f64, rng: &mut R) -> Result<()> {
        if t_end < self.field.clock {
            return Err(Error::Contract(format!("t_end {t_end} precedes clock {}", self.field.clock)));
        }
        while self.step(t_end, rng)?.is_some() {}
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::DEFAULT_TAIL_TOL;
    use crate::rng::stream;
    use crate::stats::RunningStats;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params() -> RateParams {
        RateParams::new(1.0).unwrap()
    }

    fn flat(spec: &VolumeSpec) -> IncrementField {
        IncrementField::from_fn(spec.omega_sites(), |_| 0).unwrap()
    }

    #[test]
    fn column_rate_examples() {
        let p = params();
        let spec = VolumeSpec::new(-3, 3, Boundary::theta(0.0)).unwrap();
        let proc_ = SingleProcess::new(spec, flat(&spec), p, DEFAULT_OMEGA_MAX).unwrap();
        assert_relative_eq!(proc_.column_rate(0).unwrap(), 1.2130613194252668, epsilon = 1e-12);
        assert_relative_eq!(proc_.column_rate(-4).unwrap(), 1.6065306597126334, epsilon = 1e-12);
        assert_relative_eq!(proc_.column_rate(3).unwrap(), 1.6065306597126334, epsilon = 1e-12);
        assert!(matches!(proc_.column_rate(4), Err(Error::SiteOutOfRange { .. })));
        let frozen = VolumeSpec::new(-3, 3, Boundary::Frozen).unwrap();
        let proc_ = SingleProcess::new(frozen, flat(&frozen), p, DEFAULT_OMEGA_MAX).unwrap();
        assert!(proc_.column_rate(-4).is_err());
        assert!(proc_.column_rate(3).is_err());
        assert!(proc_.column_rate(2).is_ok());
    }

    #[test]
    fn apply_brick_examples() {
        let mut f = IncrementField::from_increments(-2, vec![0; 5]).unwrap();
        f.apply_brick(0);
        assert_eq!((f.omega(0), f.omega(1), f.height(0)), (-1, 1, 1));
        f.apply_brick(0);
        assert_eq!((f.omega(0), f.height(0)), (-2, 2));
        f.check_gradient().unwrap();
    }

    #[test]
    fn heights_are_normalised() {
        let f = IncrementField::from_increments(-3, vec![1, -2, 3, 0, 5, -1]).unwrap();
        assert_eq!(f.height(0), 0);
        assert_eq!(f.height(1), -5);
        assert_eq!(f.height(-1), 0);
        assert_eq!(f.height(-2), 3);
        f.check_gradient().unwrap();
        assert!(IncrementField::from_increments(1, vec![0; 3]).is_err());
    }

    #[test]
    fn no_events_at_current_clock() {
        let spec = VolumeSpec::new(-5, 5, Boundary::theta(0.0)).unwrap();
        let mut p = SingleProcess::new(spec, flat(&spec), params(), DEFAULT_OMEGA_MAX).unwrap();
        let mut rng = stream(1, 0, 0);
        p.run_until(0.0, &mut rng).unwrap();
        assert_eq!(p.events(), 0);
        assert!(p.run_until(-1.0, &mut rng).is_err());
    }

    #[test]
    fn gradient_and_growth_over_a_million_events() {
        let p = params();
        let m = StationaryMarginal::new(0.0, p, DEFAULT_TAIL_TOL).unwrap();
        let spec = VolumeSpec::new(-30, 30, Boundary::theta(0.0)).unwrap();
        let mut rng = stream(2, 0, 0);
        let field = init_stationary(&m, &spec, &mut rng).unwrap();
        let mut sim = SingleProcess::new(spec, field, p, DEFAULT_OMEGA_MAX).unwrap();
        let mut prev: Vec<i64> = spec.omega_sites().map(|i| sim.field().height(i)).collect();
        let mut t = 0.0;
        while sim.events() < 1_000_000 {
            t += 1.0;
            sim.run_until(t, &mut rng).unwrap();
            let now: Vec<i64> = spec.omega_sites().map(|i| sim.field().height(i)).collect();
            assert!(now.iter().zip(&prev).all(|(a, b)| a >= b));
            prev = now;
            sim.field().check_gradient().unwrap();
        }
        sim.check_rates().unwrap();
    }

    #[test]
    fn frozen_window_sum_is_conserved() {
        let p = params();
        let m = StationaryMarginal::new(0.3, p, DEFAULT_TAIL_TOL).unwrap();
        let spec = VolumeSpec::new(-10, 10, Boundary::Frozen).unwrap();
        for rep in 0..50 {
            let mut rng = stream(3, 0, rep);
            let field = init_stationary(&m, &spec, &mut rng).unwrap();
            let before = field.window_sum(spec.band_sites());
            let h_edges = (field.height(-11), field.height(10));
            let mut sim = SingleProcess::new(spec, field, p, DEFAULT_OMEGA_MAX).unwrap();
            sim.run_until(5.0, &mut rng).unwrap();
            let f = sim.field();
            assert_eq!(f.window_sum(spec.band_sites()), before);
            assert_eq!((f.height(-11), f.height(10)), h_edges);
            // h_z(t) - h_z(0) from the windowed increment sums
            assert_eq!(f.height(-11) - f.height(10), before);
        }
    }

    #[test]
    fn stationary_mean_is_preserved() {
        let p = params();
        let m = StationaryMarginal::new(0.0, p, DEFAULT_TAIL_TOL).unwrap();
        let spec = VolumeSpec::new(-20, 20, Boundary::theta(0.0)).unwrap();
        let mut per_site = vec![RunningStats::new(); 41];
        for rep in 0..10_000 {
            let mut rng = stream(4, 0, rep);
            let field = init_stationary(&m, &spec, &mut rng).unwrap();
            let mut sim = SingleProcess::new(spec, field, p, DEFAULT_OMEGA_MAX).unwrap();
            sim.run_until(2.0, &mut rng).unwrap();
            for (k, i) in spec.band_sites().enumerate() {
                per_site[k].push(sim.field().omega(i) as f64);
            }
        }
        let mut exceed = 0;
        for s in &per_site {
            if s.mean().abs() > 3.0 * s.stderr() {
                exceed += 1;
            }
        }
        // 41 sites at 3 sigma: expect about 0.1 exceedances
        assert!(exceed <= 2, "{exceed} sites off");
    }

    #[test]
    fn determinism() {
        let p = params();
        let m = StationaryMarginal::new(0.2, p, DEFAULT_TAIL_TOL).unwrap();
        let spec = VolumeSpec::new(-8, 8, Boundary::theta(0.2)).unwrap();
        let run = || {
            let mut rng = stream(9, 1, 1);
            let field = init_stationary(&m, &spec, &mut rng).unwrap();
            let mut sim = SingleProcess::new(spec, field, p, DEFAULT_OMEGA_MAX).unwrap();
            sim.run_until(3.0, &mut rng).unwrap();
            (sim.events(), sim.into_field())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn band_violation_is_reported() {
        let p = params();
        let spec = VolumeSpec::new(-2, 2, Boundary::Frozen).unwrap();
        let field = IncrementField::from_fn(spec.omega_sites(), |i| if i == 0 { 3 } else { 0 }).unwrap();
        assert!(matches!(SingleProcess::new(spec, field.clone(), p, 2), Err(Error::BandViolation { .. })));
        let mut sim = SingleProcess::new(spec, field, p, 3).unwrap();
        let mut rng = stream(5, 0, 0);
        let err = sim.run_until(1e6, &mut rng).unwrap_err();
        assert!(matches!(err, Error::BandViolation { omega_max: 3, .. }), "{err}");
    }

    #[test]
    fn snapshot_round_trip() {
        let p = params();
        let m = StationaryMarginal::new(0.0, p, DEFAULT_TAIL_TOL).unwrap();
        let spec = VolumeSpec::new(-4, 4, Boundary::theta(0.0)).unwrap();
        let mut rng = stream(6, 0, 0);
        let field = init_stationary(&m, &spec, &mut rng).unwrap();
        let mut sim = SingleProcess::new(spec, field, p, DEFAULT_OMEGA_MAX).unwrap();
        sim.run_until(1.7, &mut rng).unwrap();
        let snap = Snapshot {
            theta: Some(0.0),
            beta: 1.0,
            seed: 6,
            field: sim.field().clone(),
        };
        let text = snap.dump();
        assert!(text.lines().nth(1).unwrap().split_whitespace().count() == 3);
        assert_eq!(Snapshot::parse(&text).unwrap(), snap);
        assert!(Snapshot::parse("# clock=0 beta=1 seed=1\n0 1 2\n2 0 0\n").is_err());
    }

    #[test]
    fn initial_height_variance_grows_linearly() {
        let p = params();
        let m = StationaryMarginal::new(0.0, p, DEFAULT_TAIL_TOL).unwrap();
        let spec = VolumeSpec::new(-10, 10, Boundary::theta(0.0)).unwrap();
        let mut s5 = RunningStats::new();
        for rep in 0..20_000 {
            let mut rng = stream(7, 0, rep);
            let f = init_stationary(&m, &spec, &mut rng).unwrap();
            assert_eq!(f.height(0), 0);
            s5.push(f.height(5) as f64);
        }
        let want = 5.0 * m.var_omega();
        let se = want * (2.0 / 20_000f64).sqrt();
        assert!((s5.variance() - want).abs() < 4.0 * se, "{} vs {want}", s5.variance());
    }

    proptest! {
        #[test]
        fn rates_stay_consistent(seed in 0u64..1000, theta in -1.0f64..1.0) {
            let p = params();
            let m = StationaryMarginal::new(theta, p, DEFAULT_TAIL_TOL).unwrap();
            let spec = VolumeSpec::new(-6, 7, Boundary::theta(theta)).unwrap();
            let mut rng = stream(seed, 2, 0);
            let field = init_stationary(&m, &spec, &mut rng).unwrap();
            let mut sim = SingleProcess::new(spec, field, p, DEFAULT_OMEGA_MAX).unwrap();
            sim.run_until(2.0, &mut rng).unwrap();
            prop_assert!(sim.check_rates().is_ok());
            prop_assert!(sim.field().check_gradient().is_ok());
        }
    }
}
