//! Two label processes `y >= z` riding on an ordered coupled pair.
//!
//! `y` and `z` are labels of `omega - eta` particles. After every background
//! event touching the site of a label, that label is redrawn among the
//! labels `a..=b` present at its (post-move) site: `y` leans high, `z` leans
//! low, and when both share a site they are redrawn jointly so that
//! `y >= z` survives. `Q = X_y` then behaves as the second class particle
//! of `(omega - delta_Q, omega)` and `Q_eta = X_z` as that of
//! `(eta, eta + delta_{Q_eta})`.

use rand::Rng;

use crate::coupling::{LayeredPairState, PairStep};
use crate::rng::uniform;
use crate::{Error, Result};

/// `p(d)` and `q(d)` as functions of the discrepancy count `d >= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefreshTable {
    beta: f64,
    /// Multiplier applied to `p(d)` for `d >= 2`; `1.0` except in mutation tests.
    p_scale: f64,
}

impl RefreshTable {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
        }
        Ok(Self { beta, p_scale: 1.0 })
    }

    /// Table with `p(d)` scaled by `1 + eps` for `d >= 2`, for mutation tests.
    pub fn perturbed(beta: f64, eps: f64) -> Result<Self> {
        Ok(Self {
            p_scale: 1.0 + eps,
            ..Self::new(beta)?
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `p(d) = (e^{beta d} - e^{beta (d-1)}) / (e^{beta d} - 1)`.
    pub fn p(&self, d: i64) -> f64 {
        assert!(d >= 1, "discrepancy count must be positive");
        if d == 1 {
            return 1.0;
        }
        self.p_scale * (-self.beta).exp_m1() / (-self.beta * d as f64).exp_m1()
    }

    /// `q(d) = (e^beta - 1) / (e^{beta d} - 1) = p(d) e^{-beta (d-1)}`.
    pub fn q(&self, d: i64) -> f64 {
        assert!(d >= 1, "discrepancy count must be positive");
        if d == 1 {
            return 1.0;
        }
        (-self.beta).exp_m1() / (-self.beta * d as f64).exp_m1() * (-self.beta * (d - 1) as f64).exp()
    }

    /// Law of `y` as `(offset from a, probability)`: `a` w.p. `q`, `b-1` w.p.
    /// `1-p-q`, `b` w.p. `p`.
    pub fn y_law(&self, d: i64) -> Vec<(i64, f64)> {
        if d == 1 {
            return vec![(0, 1.0)];
        }
        let (p, q) = (self.p(d), self.q(d));
        merge(vec![(0, q), (d - 2, 1.0 - p - q), (d - 1, p)])
    }

    /// Law of `z`: `a` w.p. `p`, `a+1` w.p. `1-p-q`, `b` w.p. `q`.
    pub fn z_law(&self, d: i64) -> Vec<(i64, f64)> {
        if d == 1 {
            return vec![(0, 1.0)];
        }
        let (p, q) = (self.p(d), self.q(d));
        merge(vec![(0, p), (1, 1.0 - p - q), (d - 1, q)])
    }

    /// The six lines of the joint law, as `((y offset, z offset), mass)`,
    /// in the order `(a,a) (b-1,a) (b,a) (b-1,a+1) (b,a+1) (b,b)`.
    pub fn joint_lines(&self, d: i64) -> [((i64, i64), f64); 6] {
        if d == 1 {
            return [((0, 0), 1.0), ((0, 0), 0.0), ((0, 0), 0.0), ((0, 0), 0.0), ((0, 0), 0.0), ((0, 0), 0.0)];
        }
        let (p, q) = (self.p(d), self.q(d));
        let mid = (p - q).min(1.0 - p - q);
        let b = d - 1;
        [
            ((0, 0), q),
            ((b - 1, 0), mid),
            ((b, 0), (2.0 * p - 1.0).max(0.0)),
            ((b - 1, 1), (1.0 - 2.0 * p).max(0.0)),
            ((b, 1), mid),
            ((b, b), q),
        ]
    }
}

fn merge(mut law: Vec<(i64, f64)>) -> Vec<(i64, f64)> {
    law.sort_by_key(|e| e.0);
    let mut out: Vec<(i64, f64)> = Vec::with_capacity(law.len());
    for (k, p) in law {
        match out.last_mut() {
            Some(last) if last.0 == k => last.1 += p,
            _ => out.push((k, p)),
        }
    }
    out
}

fn draw<R: Rng + ?Sized, T: Copy>(items: impl IntoIterator<Item = (T, f64)>, rng: &mut R) -> T {
    let mut u = uniform(rng);
    let mut last = None;
    for (x, p) in items {
        if p > 0.0 {
            last = Some(x);
            if u < p {
                return x;
            }
            u -= p;
        }
    }
    last.expect("law with positive mass")
}

/// New `y` among labels `a..=b`.
pub fn refresh_y<R: Rng + ?Sized>(a: i64, b: i64, table: &RefreshTable, rng: &mut R) -> i64 {
    let d = b - a + 1;
    if d == 1 {
        return a;
    }
    a + draw(table.y_law(d), rng)
}

/// New `z` among labels `a..=b`.
pub fn refresh_z<R: Rng + ?Sized>(a: i64, b: i64, table: &RefreshTable, rng: &mut R) -> i64 {
    let d = b - a + 1;
    if d == 1 {
        return a;
    }
    a + draw(table.z_law(d), rng)
}

/// Joint redraw `(y, z)` with `y >= z` among labels `a..=b`.
pub fn refresh_joint<R: Rng + ?Sized>(a: i64, b: i64, table: &RefreshTable, rng: &mut R) -> (i64, i64) {
    let d = b - a + 1;
    if d == 1 {
        return (a, a);
    }
    let (dy, dz) = draw(table.joint_lines(d), rng);
    (a + dy, a + dz)
}

/// The labels and the label intervals at their sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelPair {
    pub y: i64,
    pub z: i64,
    pub a_y: i64,
    pub b_y: i64,
    pub a_z: i64,
    pub b_z: i64,
}

/// What a step did to the labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RefreshOutcome {
    pub y_refreshed: bool,
    pub z_refreshed: bool,
    pub joint: bool,
}

/// Background pair plus the label processes.
#[derive(Debug, Clone)]
pub struct FourProcess {
    background: LayeredPairState,
    labels: LabelPair,
    table: RefreshTable,
    refresh_on_joint: bool,
    extent: (i64, i64),
    refreshes: u64,
    joint_refreshes: u64,
}

impl FourProcess {
    /// Starts with `y = z = 0`; `refresh_on_joint` selects whether joint
    /// background moves at a label's site trigger a refresh.
    pub fn new(background: LayeredPairState, table: RefreshTable, refresh_on_joint: bool) -> Result<Self> {
        let x0 = background.labels().position(0);
        let mut s = Self {
            background,
            labels: LabelPair {
                y: 0,
                z: 0,
                a_y: 0,
                b_y: 0,
                a_z: 0,
                b_z: 0,
            },
            table,
            refresh_on_joint,
            extent: (x0, x0),
            refreshes: 0,
            joint_refreshes: 0,
        };
        s.update_intervals()?;
        Ok(s)
    }

    pub fn background(&self) -> &LayeredPairState {
        &self.background
    }

    pub fn labels(&self) -> LabelPair {
        self.labels
    }

    pub fn clock(&self) -> f64 {
        self.background.clock()
    }

    /// `X_y`.
    pub fn q(&self) -> i64 {
        self.background.labels().position(self.labels.y)
    }

    /// `X_z`.
    pub fn q_eta(&self) -> i64 {
        self.background.labels().position(self.labels.z)
    }

    /// Leftmost and rightmost sites visited by `X_y` or `X_z`.
    pub fn extent(&self) -> (i64, i64) {
        self.extent
    }

    pub fn refreshes(&self) -> (u64, u64) {
        (self.refreshes, self.joint_refreshes)
    }

    fn interval_at(&self, site: i64) -> Result<(i64, i64)> {
        self.background
            .interval(site)
            .ok_or_else(|| Error::Inconsistency(format!("label carrier at site {site} without discrepancies")))
    }

    fn update_intervals(&mut self) -> Result<()> {
        let (a_y, b_y) = self.interval_at(self.q())?;
        let (a_z, b_z) = self.interval_at(self.q_eta())?;
        let l = &mut self.labels;
        (l.a_y, l.b_y, l.a_z, l.b_z) = (a_y, b_y, a_z, b_z);
        if !(a_y <= l.y && l.y <= b_y && a_z <= l.z && l.z <= b_z) {
            return Err(Error::Inconsistency(format!("labels outside their intervals: {l:?}")));
        }
        Ok(())
    }

    fn triggered(&self, site_before: i64, step: &PairStep) -> bool {
        if self.refresh_on_joint {
            site_before == step.event.column || site_before == step.event.column + 1
        } else {
            step.moved.is_some_and(|m| m.from == site_before || m.to == site_before)
        }
    }

    /// Background event, label relocation, then refresh.
    pub fn step<R: Rng + ?Sized>(&mut self, t_end: f64, rng: &mut R) -> Result<Option<RefreshOutcome>> {
        let (sy, sz) = (self.q(), self.q_eta());
        let Some(step) = self.background.step(t_end, rng)? else {
            return Ok(None);
        };
        let ty = self.triggered(sy, &step);
        let tz = self.triggered(sz, &step);
        let (ny, nz) = (self.q(), self.q_eta());
        let mut out = RefreshOutcome::default();
        if ty && tz && ny == nz {
            let (a, b) = self.interval_at(ny)?;
            let (y, z) = refresh_joint(a, b, &self.table, rng);
            self.labels.y = y;
            self.labels.z = z;
            out = RefreshOutcome {
                y_refreshed: true,
                z_refreshed: true,
                joint: true,
            };
            self.joint_refreshes += 1;
        } else {
            if ty {
                let (a, b) = self.interval_at(ny)?;
                self.labels.y = refresh_y(a, b, &self.table, rng);
                out.y_refreshed = true;
            }
            if tz {
                let (a, b) = self.interval_at(nz)?;
                self.labels.z = refresh_z(a, b, &self.table, rng);
                out.z_refreshed = true;
            }
        }
        self.refreshes += u64::from(out.y_refreshed) + u64::from(out.z_refreshed);
        if self.labels.y < self.labels.z {
            return Err(Error::LabelOrder {
                y: self.labels.y,
                z: self.labels.z,
                time: self.clock(),
            });
        }
        self.update_intervals()?;
        let (q, qe) = (self.q(), self.q_eta());
        self.extent = (self.extent.0.min(qe), self.extent.1.max(q));
        Ok(Some(out))
    }

    pub fn run_until<R: Rng + ?Sized>(&mut self, t_end: f64, rng: &mut R) -> Result<()> {
        while self.step(t_end, rng)?.is_some() {}
        Ok(())
    }

    pub fn events(&self) -> u64 {
        self.background.system().events()
    }

    pub fn derived_views(&self) -> DerivedViews {
        let eta = self.background.eta();
        let omega = self.background.omega();
        let (q, q_eta) = (self.q(), self.q_eta());
        let lo = *eta.sites().start();
        let omega_minus = eta.sites().map(|i| omega.omega(i) - i64::from(i == q)).collect();
        let eta_plus = eta.sites().map(|i| eta.omega(i) + i64::from(i == q_eta)).collect();
        DerivedViews {
            lo,
            q,
            q_eta,
            omega_minus,
            eta_plus,
        }
    }
}

/// `omega^- = omega - delta_Q` and `eta^+ = eta + delta_{Q_eta}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedViews {
    pub lo: i64,
    pub q: i64,
    pub q_eta: i64,
    pub omega_minus: Vec<i64>,
    pub eta_plus: Vec<i64>,
}

impl DerivedViews {
    /// `eta <= eta^+ <= omega`, `eta <= omega^- <= omega`, `Q_eta <= Q`.
    pub fn check_sandwich(&self, background: &LayeredPairState) -> Result<()> {
        if self.q_eta > self.q {
            return Err(Error::Inconsistency(format!("Q_eta = {} > Q = {}", self.q_eta, self.q)));
        }
        for (k, i) in background.eta().sites().enumerate() {
            let (e, w) = (background.eta().omega(i), background.omega().omega(i));
            let (wm, ep) = (self.omega_minus[k], self.eta_plus[k]);
            if !(e <= wm && wm <= w && e <= ep && ep <= w) {
                return Err(Error::Inconsistency(format!("sandwich broken at site {i}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::PairLaw;
    use crate::lattice::{Boundary, VolumeSpec, DEFAULT_OMEGA_MAX};
    use crate::measures::{theta_of_rho, RateParams, DEFAULT_TAIL_TOL};
    use crate::rng::stream;
    use approx::assert_relative_eq;

    fn table() -> RefreshTable {
        RefreshTable::new(1.0).unwrap()
    }

    #[test]
    fn table_values() {
        let t = table();
        assert_eq!((t.p(1), t.q(1)), (1.0, 1.0));
        assert_relative_eq!(t.p(2), 0.7310585786300049, epsilon = 1e-12);
        assert_relative_eq!(t.q(2), 0.2689414213699951, epsilon = 1e-12);
        assert_relative_eq!(t.p(2) + t.q(2), 1.0, epsilon = 1e-15);
        // mpmath: p(3) = 0.66524095..., q(3) = 0.09003057...
        assert_relative_eq!(t.p(3), 0.6652409557748219, epsilon = 1e-12);
        assert_relative_eq!(t.q(3), 0.09003057317038046, epsilon = 1e-12);
        for d in 2..200 {
            assert!(t.p(d) >= t.q(d) && t.p(d) + t.q(d) <= 1.0 + 1e-15);
            let closed = ((d as f64).exp() - ((d - 1) as f64).exp()) / ((d as f64).exp() - 1.0);
            if d < 600 {
                assert!((t.p(d) - closed).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn joint_lines_small_d() {
        let t = table();
        let l2: Vec<f64> = t.joint_lines(2).iter().map(|l| l.1).collect();
        assert_relative_eq!(l2[0], 0.2689414213699951, epsilon = 1e-12);
        assert_relative_eq!(l2[2], 0.4621171572600098, epsilon = 1e-12);
        assert_relative_eq!(l2[5], 0.2689414213699951, epsilon = 1e-12);
        assert!(l2[1].abs() < 1e-15 && l2[3] == 0.0 && l2[4].abs() < 1e-15);
        let l3: Vec<f64> = t.joint_lines(3).iter().map(|l| l.1).collect();
        let want = [0.0900305731703805, 0.2447284710547977, 0.3304819115496438, 0.0, 0.2447284710547977, 0.0900305731703805];
        for (a, b) in l3.iter().zip(want) {
            assert_relative_eq!(*a, b, epsilon = 1e-12);
        }
        assert_relative_eq!(l3.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn degenerate_refreshes() {
        let mut rng = stream(1, 0, 0);
        for _ in 0..100 {
            assert_eq!(refresh_y(4, 4, &table(), &mut rng), 4);
            assert_eq!(refresh_z(4, 4, &table(), &mut rng), 4);
            assert_eq!(refresh_joint(4, 4, &table(), &mut rng), (4, 4));
        }
    }

    #[test]
    fn refresh_frequencies() {
        let t = table();
        let mut rng = stream(2, 0, 0);
        let n = 200_000;
        let mut y = [0u64; 3];
        let mut z = [0u64; 3];
        let mut j = std::collections::BTreeMap::new();
        for _ in 0..n {
            y[(refresh_y(10, 12, &t, &mut rng) - 10) as usize] += 1;
            z[(refresh_z(10, 12, &t, &mut rng) - 10) as usize] += 1;
            let (a, b) = refresh_joint(10, 12, &t, &mut rng);
            assert!(a >= b);
            *j.entry((a, b)).or_insert(0u64) += 1;
        }
        let (p, q) = (t.p(3), t.q(3));
        for (emp, want) in y.iter().zip([q, 1.0 - p - q, p]).chain(z.iter().zip([p, 1.0 - p - q, q])) {
            let e = *emp as f64 / n as f64;
            assert!((e - want).abs() < 5.0 * (want * (1.0 - want) / n as f64).sqrt());
        }
        assert!(!j.contains_key(&(11, 11)));
        // d = 2: the middle option never fires
        for _ in 0..10_000 {
            let v = refresh_y(0, 1, &t, &mut rng);
            assert!(v == 0 || v == 1);
            let (a, b) = refresh_joint(0, 1, &t, &mut rng);
            assert!(a >= b);
        }
    }

    fn four(seed: u64, lam: f64, rho: f64, half: i64, window: i64) -> FourProcess {
        let p = RateParams::new(1.0).unwrap();
        let spec = VolumeSpec::new(-window, window, Boundary::theta(theta_of_rho(rho, p).unwrap())).unwrap();
        let law = PairLaw::profiles(&spec, |i| if i.abs() <= half { lam } else { rho }, |_| rho, p, DEFAULT_TAIL_TOL).unwrap();
        let mut rng = stream(seed, 3, 0);
        let (eta, omega) = law.sample(&spec, &mut rng).unwrap();
        let bg = LayeredPairState::new(spec, eta, omega, p, DEFAULT_OMEGA_MAX, 0).unwrap();
        FourProcess::new(bg, table(), true).unwrap()
    }

    #[test]
    fn labels_stay_ordered_and_sandwiched() {
        for seed in 0..30 {
            let mut fp = four(seed, -0.6, 0.6, 10, 20);
            assert_eq!((fp.q(), fp.q_eta()), (0, 0));
            let mut rng = stream(seed, 4, 0);
            let mut t = 0.0;
            for _ in 0..20 {
                t += 0.1;
                fp.run_until(t, &mut rng).unwrap();
                let l = fp.labels();
                assert!(l.y >= l.z);
                assert!(l.a_y <= l.y && l.y <= l.b_y && l.a_z <= l.z && l.z <= l.b_z);
                let views = fp.derived_views();
                views.check_sandwich(fp.background()).unwrap();
                fp.background().check_invariants().unwrap();
            }
        }
    }

    #[test]
    fn equal_densities_pin_both_labels() {
        for seed in 0..20 {
            let mut fp = four(seed, 0.3, 0.3, 10, 20);
            let mut rng = stream(seed, 5, 0);
            while fp.step(1.5, &mut rng).unwrap().is_some() {
                assert_eq!((fp.labels().y, fp.labels().z), (0, 0));
            }
        }
    }

    #[test]
    fn shared_site_events_use_one_joint_refresh() {
        let mut joint_seen = 0;
        for seed in 0..20 {
            let mut fp = four(seed, -1.0, 1.0, 10, 20);
            let mut rng = stream(seed, 6, 0);
            loop {
                let shared = fp.q() == fp.q_eta();
                let Some(out) = fp.step(1.0, &mut rng).unwrap() else { break };
                if out.joint {
                    assert!(out.y_refreshed && out.z_refreshed);
                    joint_seen += 1;
                }
                if shared && out.y_refreshed && out.z_refreshed && fp.q() == fp.q_eta() {
                    assert!(out.joint);
                }
            }
        }
        assert!(joint_seen > 0);
    }

    #[test]
    fn perturbed_table_breaks_normalisation() {
        let t = RefreshTable::perturbed(1.0, 1e-3).unwrap();
        assert!((t.p(2) + t.q(2) - 1.0).abs() > 1e-6);
    }
}
