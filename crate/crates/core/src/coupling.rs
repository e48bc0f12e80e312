//! Basic coupling of up to four layered configurations, and labelled
//! second class particles between an ordered pair.
//!
//! At a site with values `omega^1..omega^n`, sort the layers increasingly,
//! `l(1), ..., l(n)`. Right bricks come in `n` channels: channel `m` has rate
//! `f(omega^{l(m)}) - f(omega^{l(m-1)})` and moves layers `l(m..=n)`. Left
//! bricks come in `n` channels: channel `m` has rate
//! `f(-omega^{l(m)}) - f(-omega^{l(m+1)})` and moves layers `l(1..=m)`.
//! Each layer therefore sees its own single-process rates, and a right
//! brick of a lower layer is always shared by every higher one, which keeps
//! the sitewise order.
//!
//! The ghost bricklayers of the theta variant lay at constant rates and are
//! joint across all layers.

use std::ops::RangeInclusive;
use std::sync::Arc;

use rand::Rng;

use crate::lattice::{Boundary, IncrementField, VolumeSpec};
use crate::measures::{OrderedPairSampler, RateLookup, RateParams, ShockPairMeasure};
use crate::rng::{exponential, uniform};
use crate::sumtree::SumTree;
use crate::{Error, Result};

pub const MAX_LAYERS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Right,
    Left,
}

/// One coupled channel: its rate and the layers that lay a brick.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Channel {
    pub rate: f64,
    pub mask: u8,
}

/// Right and left channels of a single bricklayer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteChannels {
    n: usize,
    right: [Channel; MAX_LAYERS],
    left: [Channel; MAX_LAYERS],
}

impl SiteChannels {
    pub fn right(&self) -> &[Channel] {
        &self.right[..self.n]
    }

    pub fn left(&self) -> &[Channel] {
        &self.left[..self.n]
    }

    pub fn channels(&self, dir: Direction) -> &[Channel] {
        match dir {
            Direction::Right => self.right(),
            Direction::Left => self.left(),
        }
    }

    pub fn total(&self, dir: Direction) -> f64 {
        self.channels(dir).iter().map(|c| c.rate).sum()
    }

    /// Channel whose cumulative rate interval contains `target`.
    pub fn pick(&self, dir: Direction, mut target: f64) -> Channel {
        let chans = self.channels(dir);
        let mut last = chans[0];
        for c in chans {
            if c.rate > 0.0 {
                last = *c;
                if target < c.rate {
                    return *c;
                }
                target -= c.rate;
            }
        }
        last
    }
}

/// Coupled channels at one site from the layer values there.
pub fn joint_site_channels(values: &[i64], f: impl Fn(i64) -> f64) -> SiteChannels {
    let n = values.len();
    assert!((1..=MAX_LAYERS).contains(&n), "between 1 and {MAX_LAYERS} layers");
    let mut order = [0usize; MAX_LAYERS];
    for (k, o) in order.iter_mut().enumerate().take(n) {
        *o = k;
    }
    order[..n].sort_by_key(|&k| values[k]);

    let mut right = [Channel::default(); MAX_LAYERS];
    let mut left = [Channel::default(); MAX_LAYERS];
    let mut upper_mask: u8 = (1u8 << n) - 1;
    let mut prev = 0.0;
    for m in 0..n {
        let p = f(values[order[m]]);
        right[m] = Channel {
            rate: p - prev,
            mask: upper_mask,
        };
        upper_mask &= !(1u8 << order[m]);
        prev = p;
    }
    let mut lower_mask: u8 = 0;
    for m in 0..n {
        lower_mask |= 1u8 << order[m];
        let q = f(-values[order[m]]);
        let q_next = if m + 1 < n { f(-values[order[m + 1]]) } else { 0.0 };
        left[m] = Channel {
            rate: q - q_next,
            mask: lower_mask,
        };
    }
    SiteChannels { n, right, left }
}

/// One fired event: the bricklayer, its direction, the grown column and
/// the layers that laid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BrickEvent {
    pub site: i64,
    pub direction: Direction,
    pub column: i64,
    pub mask: u8,
}

impl BrickEvent {
    pub fn moves_layer(&self, layer: usize) -> bool {
        self.mask & (1 << layer) != 0
    }
}

/// Discrepancy movement caused by `event` for the ordered pair
/// `lower <= upper`; joint events move nothing.
pub fn which_moves(event: &BrickEvent, lower: usize, upper: usize) -> Option<Direction> {
    let (lo, up) = (event.moves_layer(lower), event.moves_layer(upper));
    match event.direction {
        Direction::Right if up && !lo => Some(Direction::Right),
        Direction::Left if lo && !up => Some(Direction::Left),
        _ => None,
    }
}

/// `n` layers evolving in the basic coupling on a common volume.
#[derive(Debug, Clone)]
pub struct LayeredSystem {
    spec: VolumeSpec,
    layers: Vec<IncrementField>,
    rates: RateLookup,
    omega_max: i64,
    tree: SumTree,
    clock: f64,
    events: u64,
}

impl LayeredSystem {
    pub fn new(spec: VolumeSpec, layers: Vec<IncrementField>, params: RateParams, omega_max: i64) -> Result<Self> {
        if layers.is_empty() || layers.len() > MAX_LAYERS {
            return Err(Error::InvalidParameter(format!("need 1..={MAX_LAYERS} layers, got {}", layers.len())));
        }
        for l in &layers {
            if l.sites() != spec.omega_sites() {
                return Err(Error::Contract("layer window does not match the volume".into()));
            }
            l.check_band(spec.band_sites(), omega_max)?;
        }
        let rates = RateLookup::new(params, omega_max)?;
        let band = spec.band_sites().count();
        let ghost_leaves = match spec.boundary() {
            Boundary::Frozen => None,
            Boundary::Theta { left, right } => Some((left.exp(), (-right).exp())),
        };
        let mut sys = Self {
            spec,
            layers,
            rates,
            omega_max,
            tree: SumTree::new(2 * band + 2),
            clock: 0.0,
            events: 0,
        };
        for s in spec.band_sites() {
            sys.refresh_site(s);
        }
        if let Some((gl, gr)) = ghost_leaves {
            sys.tree.set(2 * band, gl);
            sys.tree.set(2 * band + 1, gr);
        }
        Ok(sys)
    }

    pub fn spec(&self) -> &VolumeSpec {
        &self.spec
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, k: usize) -> &IncrementField {
        &self.layers[k]
    }

    pub fn layers(&self) -> &[IncrementField] {
        &self.layers
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn total_rate(&self) -> f64 {
        self.tree.total()
    }

    pub fn rates(&self) -> &RateLookup {
        &self.rates
    }

    fn values_at(&self, site: i64) -> ([i64; MAX_LAYERS], usize) {
        let mut v = [0i64; MAX_LAYERS];
        for (k, l) in self.layers.iter().enumerate() {
            v[k] = l.omega(site);
        }
        (v, self.layers.len())
    }

    /// Coupled channels of the bricklayer at a band site.
    pub fn site_channels(&self, site: i64) -> SiteChannels {
        let (v, n) = self.values_at(site);
        joint_site_channels(&v[..n], |z| self.rates.f(z))
    }

    fn leaf(&self, site: i64, dir: Direction) -> usize {
        2 * (site - self.spec.ell()) as usize + usize::from(dir == Direction::Left)
    }

    fn refresh_site(&mut self, site: i64) {
        if !self.spec.band_sites().contains(&site) {
            return;
        }
        let (v, n) = self.values_at(site);
        let (mut lo, mut hi) = (v[0], v[0]);
        for &x in &v[1..n] {
            lo = lo.min(x);
            hi = hi.max(x);
        }
        let frozen = self.spec.boundary() == Boundary::Frozen;
        let right = if frozen && site == self.spec.r() { 0.0 } else { self.rates.f(hi) };
        let left = if frozen && site == self.spec.ell() { 0.0 } else { self.rates.f(-lo) };
        let (lr, ll) = (self.leaf(site, Direction::Right), self.leaf(site, Direction::Left));
        self.tree.set(lr, right);
        self.tree.set(ll, left);
    }

    /// Checks `layer a <= layer b` sitewise.
    pub fn check_order(&self, a: usize, b: usize) -> Result<()> {
        for i in self.spec.omega_sites() {
            if self.layers[a].omega(i) > self.layers[b].omega(i) {
                return Err(Error::Inconsistency(format!("layer order {a} <= {b} broken at site {i} (t={})", self.clock)));
            }
        }
        Ok(())
    }

    /// Recomputes the rate index from scratch and compares.
    pub fn check_rates(&self) -> Result<()> {
        let mut fresh = self.clone();
        for s in self.spec.band_sites() {
            fresh.refresh_site(s);
            for dir in [Direction::Right, Direction::Left] {
                let (a, b) = (self.tree.get(self.leaf(s, dir)), fresh.tree.get(self.leaf(s, dir)));
                if (a - b).abs() > 1e-12 * b.max(1e-300) {
                    return Err(Error::Inconsistency(format!("site {s} {dir:?}: indexed {a}, actual {b}")));
                }
            }
        }
        Ok(())
    }

    /// Fires one event if it occurs before `t_end`.
    pub fn step<R: Rng + ?Sized>(&mut self, t_end: f64, rng: &mut R) -> Result<Option<BrickEvent>> {
        let total = self.tree.total();
        let dt = exponential(rng, total);
        if self.clock + dt > t_end {
            self.set_clock(t_end);
            return Ok(None);
        }
        self.clock += dt;
        let leaf = self.tree.sample(rng);
        let band = self.spec.band_sites().count();
        let all: u8 = (1u8 << self.layers.len()) - 1;
        let event = if leaf >= 2 * band {
            if leaf == 2 * band {
                BrickEvent {
                    site: self.spec.ell() - 1,
                    direction: Direction::Right,
                    column: self.spec.ell() - 1,
                    mask: all,
                }
            } else {
                BrickEvent {
                    site: self.spec.r() + 1,
                    direction: Direction::Left,
                    column: self.spec.r(),
                    mask: all,
                }
            }
        } else {
            let site = self.spec.ell() + (leaf / 2) as i64;
            let direction = if leaf % 2 == 0 { Direction::Right } else { Direction::Left };
            let chans = self.site_channels(site);
            let ch = chans.pick(direction, uniform(rng) * self.tree.get(leaf));
            let column = if direction == Direction::Right { site } else { site - 1 };
            BrickEvent {
                site,
                direction,
                column,
                mask: ch.mask,
            }
        };
        for (k, l) in self.layers.iter_mut().enumerate() {
            if event.mask & (1 << k) != 0 {
                l.apply_brick(event.column);
            }
        }
        self.events += 1;
        for site in [event.column, event.column + 1] {
            if self.spec.band_sites().contains(&site) {
                for l in &self.layers {
                    let w = l.omega(site);
                    if w.abs() > self.omega_max {
                        return Err(Error::BandViolation {
                            site,
                            value: w,
                            omega_max: self.omega_max,
                            time: self.clock,
                        });
                    }
                }
            }
            self.refresh_site(site);
        }
        Ok(Some(event))
    }

    fn set_clock(&mut self, t: f64) {
        self.clock = t;
        for l in &mut self.layers {
            l.set_clock(t);
        }
    }

    pub fn run_until<R: Rng + ?Sized>(&mut self, t_end: f64, rng: &mut R) -> Result<()> {
        if t_end < self.clock {
            return Err(Error::Contract(format!("t_end {t_end} precedes clock {}", self.clock)));
        }
        while self.step(t_end, rng)?.is_some() {}
        Ok(())
    }
}

/// Sorted labels of the `omega - eta` particles.
///
/// Labels are contiguous integers; the labels at site `i` are
/// `low_at(i) .. low_at(i) + (omega_i - eta_i)`, where `low_at(i)` is the
/// smallest label not strictly left of `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Labels {
    lo_site: i64,
    m_min: i64,
    pos: Vec<i64>,
    low_at: Vec<i64>,
}

impl Labels {
    /// Labels the discrepancies `counts` (on sites `lo_site..`) left to
    /// right so that label 0 is the highest one at `origin`.
    pub fn new(lo_site: i64, counts: &[i64], origin: i64) -> Result<Self> {
        let oi = (origin - lo_site) as usize;
        if counts.get(oi).copied().unwrap_or(0) < 1 {
            return Err(Error::Contract(format!("no discrepancy at site {origin} to carry label 0")));
        }
        let up_to_origin: i64 = counts[..=oi].iter().sum();
        let m_min = 1 - up_to_origin;
        let mut pos = Vec::new();
        let mut low_at = Vec::with_capacity(counts.len());
        let mut next = m_min;
        for (k, &c) in counts.iter().enumerate() {
            if c < 0 {
                return Err(Error::Contract(format!("negative discrepancy count at site {}", lo_site + k as i64)));
            }
            low_at.push(next);
            for _ in 0..c {
                pos.push(lo_site + k as i64);
            }
            next += c;
        }
        Ok(Self {
            lo_site,
            m_min,
            pos,
            low_at,
        })
    }

    pub fn range(&self) -> RangeInclusive<i64> {
        self.m_min..=self.m_min + self.pos.len() as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.pos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pos.is_empty()
    }

    #[inline]
    pub fn position(&self, m: i64) -> i64 {
        self.pos[(m - self.m_min) as usize]
    }

    #[inline]
    pub fn low_at(&self, site: i64) -> i64 {
        self.low_at[(site - self.lo_site) as usize]
    }

    /// Label interval at `site` given its discrepancy count.
    pub fn interval(&self, site: i64, count: i64) -> Option<(i64, i64)> {
        (count > 0).then(|| {
            let a = self.low_at(site);
            (a, a + count - 1)
        })
    }

    /// Moves the highest label at `site` (which holds `count` labels) one
    /// step right; it becomes the lowest at `site + 1`.
    pub fn move_right(&mut self, site: i64, count: i64) -> Result<i64> {
        if count < 1 {
            return Err(Error::Inconsistency(format!("right discrepancy move from empty site {site}")));
        }
        let m = self.low_at(site) + count - 1;
        self.pos[(m - self.m_min) as usize] = site + 1;
        self.low_at[(site + 1 - self.lo_site) as usize] -= 1;
        Ok(m)
    }

    /// Moves the lowest label at `site` one step left; it becomes the
    /// highest at `site - 1`.
    pub fn move_left(&mut self, site: i64, count: i64) -> Result<i64> {
        if count < 1 {
            return Err(Error::Inconsistency(format!("left discrepancy move from empty site {site}")));
        }
        let m = self.low_at(site);
        self.pos[(m - self.m_min) as usize] = site - 1;
        self.low_at[(site - self.lo_site) as usize] += 1;
        Ok(m)
    }
}

/// Label relocation caused by one event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelMove {
    pub label: i64,
    pub from: i64,
    pub to: i64,
}

/// Outcome of one coupled step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairStep {
    pub event: BrickEvent,
    pub moved: Option<LabelMove>,
}

/// Ordered pair `eta <= omega` (layers 0 and 1) with labelled discrepancies.
#[derive(Debug, Clone)]
pub struct LayeredPairState {
    system: LayeredSystem,
    labels: Labels,
    tracked: Vec<i64>,
    extent: Option<(i64, i64)>,
}

pub const ETA: usize = 0;
pub const OMEGA: usize = 1;

impl LayeredPairState {
    /// Builds the pair; label 0 is the highest discrepancy at `origin`.
    pub fn new(spec: VolumeSpec, eta: IncrementField, omega: IncrementField, params: RateParams, omega_max: i64, origin: i64) -> Result<Self> {
        let system = LayeredSystem::new(spec, vec![eta, omega], params, omega_max)?;
        system.check_order(ETA, OMEGA)?;
        let lo = *spec.omega_sites().start();
        let counts: Vec<i64> = spec
            .omega_sites()
            .map(|i| system.layer(OMEGA).omega(i) - system.layer(ETA).omega(i))
            .collect();
        let labels = Labels::new(lo, &counts, origin)?;
        Ok(Self {
            system,
            labels,
            tracked: vec![0],
            extent: Some((origin, origin)),
        })
    }

    pub fn system(&self) -> &LayeredSystem {
        &self.system
    }

    pub fn eta(&self) -> &IncrementField {
        self.system.layer(ETA)
    }

    pub fn omega(&self) -> &IncrementField {
        self.system.layer(OMEGA)
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn clock(&self) -> f64 {
        self.system.clock()
    }

    /// Number of discrepancies at `site`.
    #[inline]
    pub fn count(&self, site: i64) -> i64 {
        self.omega().omega(site) - self.eta().omega(site)
    }

    /// Label interval `(a, b)` at `site`, if nonempty.
    pub fn interval(&self, site: i64) -> Option<(i64, i64)> {
        self.labels.interval(site, self.count(site))
    }

    /// Labels whose positions feed the contamination extent.
    pub fn set_tracked(&mut self, labels: Vec<i64>) {
        self.extent = labels.first().map(|&m| {
            let p = self.labels.position(m);
            (p, p)
        });
        for &m in &labels {
            self.note_position(self.labels.position(m));
        }
        self.tracked = labels;
    }

    /// Leftmost and rightmost positions visited by tracked labels.
    pub fn extent(&self) -> Option<(i64, i64)> {
        self.extent
    }

    pub fn note_position(&mut self, p: i64) {
        self.extent = Some(match self.extent {
            None => (p, p),
            Some((a, b)) => (a.min(p), b.max(p)),
        });
    }

    /// Fires one event and relocates the label it carries, if any.
    pub fn step<R: Rng + ?Sized>(&mut self, t_end: f64, rng: &mut R) -> Result<Option<PairStep>> {
        let Some(event) = self.system.step(t_end, rng)? else {
            return Ok(None);
        };
        let moved = match which_moves(&event, ETA, OMEGA) {
            None => None,
            Some(Direction::Right) => {
                let from = event.site;
                // post-move count at `from` is one less than before
                let label = self.labels.move_right(from, self.count(from) + 1)?;
                Some(LabelMove { label, from, to: from + 1 })
            }
            Some(Direction::Left) => {
                let from = event.site;
                let label = self.labels.move_left(from, self.count(from) + 1)?;
                Some(LabelMove { label, from, to: from - 1 })
            }
        };
        if let Some(mv) = moved {
            if self.tracked.contains(&mv.label) {
                self.note_position(mv.to);
            }
        }
        Ok(Some(PairStep { event, moved }))
    }

    pub fn run_until<R: Rng + ?Sized>(&mut self, t_end: f64, rng: &mut R) -> Result<()> {
        if t_end < self.clock() {
            return Err(Error::Contract(format!("t_end {t_end} precedes clock {}", self.clock())));
        }
        while self.step(t_end, rng)?.is_some() {}
        Ok(())
    }

    /// Order, multiplicity and sortedness of the label bookkeeping.
    pub fn check_invariants(&self) -> Result<()> {
        self.system.check_order(ETA, OMEGA)?;
        let spec = self.system.spec();
        let mut expect_low = self.labels.m_min;
        for i in spec.omega_sites() {
            if self.labels.low_at(i) != expect_low {
                return Err(Error::Inconsistency(format!("label index at site {i} is {} (expected {expect_low})", self.labels.low_at(i))));
            }
            let c = self.count(i);
            for m in expect_low..expect_low + c {
                if self.labels.position(m) != i {
                    return Err(Error::Inconsistency(format!("label {m} at {} but counted at {i}", self.labels.position(m))));
                }
            }
            expect_low += c;
        }
        if expect_low - self.labels.m_min != self.labels.len() as i64 {
            return Err(Error::Inconsistency("label count changed".into()));
        }
        Ok(())
    }
}

/// Site-by-site law of the initial pair `(eta, omega)`.
#[derive(Debug, Clone)]
pub enum PairLaw {
    /// Ordered pairs from profiles `lam_i <= rho_i`; the origin carries the
    /// strict size-biased pair, so one discrepancy sits there for sure.
    Profiles {
        sites: RangeInclusive<i64>,
        samplers: Vec<Arc<OrderedPairSampler>>,
    },
    Shock(Arc<ShockPairMeasure>),
}

impl PairLaw {
    /// Equal densities `lam` and `rho` everywhere, except that they may
    /// differ on `inner` sites.
    pub fn profiles(
        spec: &VolumeSpec,
        lam: impl Fn(i64) -> f64,
        rho: impl Fn(i64) -> f64,
        params: RateParams,
        tail_tol: f64,
    ) -> Result<Self> {
        let mut cache: Vec<((u64, u64), Arc<OrderedPairSampler>)> = Vec::new();
        let mut samplers = Vec::new();
        for i in spec.omega_sites() {
            let key = (lam(i).to_bits(), rho(i).to_bits());
            let s = match cache.iter().find(|(k, _)| *k == key) {
                Some((_, s)) => s.clone(),
                None => {
                    let s = Arc::new(OrderedPairSampler::new(lam(i), rho(i), params, tail_tol)?);
                    cache.push((key, s.clone()));
                    s
                }
            };
            samplers.push(s);
        }
        Ok(PairLaw::Profiles {
            sites: spec.omega_sites(),
            samplers,
        })
    }

    /// The single-defect start: `eta` is `mu^rho` with `mu_hat^rho` at the
    /// origin, and `omega = eta + delta_0`.
    pub fn characteristic(spec: &VolumeSpec, rho: f64, params: RateParams, tail_tol: f64) -> Result<Self> {
        Self::profiles(spec, |_| rho, |_| rho, params, tail_tol)
    }

    pub fn shock(rho: f64, params: RateParams, tail_tol: f64) -> Result<Self> {
        Ok(PairLaw::Shock(Arc::new(ShockPairMeasure::new(rho, params, tail_tol)?)))
    }

    /// Samples `(eta, omega)` over the window of `spec`; ghost sites carry
    /// no discrepancy.
    pub fn sample<R: Rng + ?Sized>(&self, spec: &VolumeSpec, rng: &mut R) -> Result<(IncrementField, IncrementField)> {
        let window = spec.omega_sites();
        let (lo, hi) = (*window.start(), *window.end());
        let (mut eta, omega) = match self {
            PairLaw::Profiles { sites, samplers } => {
                if *sites != window {
                    return Err(Error::Contract("pair law prepared for a different window".into()));
                }
                let mut eta = Vec::with_capacity(samplers.len());
                let mut omega = Vec::with_capacity(samplers.len());
                for (i, s) in window.clone().zip(samplers) {
                    let (y, z) = s.sample(i == 0, rng);
                    eta.push(y);
                    omega.push(z);
                }
                (eta, omega)
            }
            PairLaw::Shock(m) => m.sample(window.clone(), rng)?,
        };
        let last = (hi - lo) as usize;
        eta[0] = omega[0];
        eta[last] = omega[last];
        Ok((IncrementField::from_increments(lo, eta)?, IncrementField::from_increments(lo, omega)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{init_stationary, SingleProcess, DEFAULT_OMEGA_MAX};
    use crate::measures::{StationaryMarginal, DEFAULT_TAIL_TOL};
    use crate::rng::stream;
    use crate::stats::RunningStats;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params() -> RateParams {
        RateParams::new(1.0).unwrap()
    }

    #[test]
    fn two_layer_channel_example() {
        let p = params();
        let ch = joint_site_channels(&[0, 1], |z| p.f(z));
        assert_relative_eq!(ch.right()[0].rate, 0.6065306597126334, epsilon = 1e-12);
        assert_eq!(ch.right()[0].mask, 0b11);
        assert_relative_eq!(ch.right()[1].rate, 1.0421906109874948, epsilon = 1e-12);
        assert_eq!(ch.right()[1].mask, 0b10);
        let ev = BrickEvent {
            site: 0,
            direction: Direction::Right,
            column: 0,
            mask: ch.right()[1].mask,
        };
        assert_eq!(which_moves(&ev, 0, 1), Some(Direction::Right));
        // left: eta alone at rate f(0) - f(-1)
        assert_eq!(ch.left()[0].mask, 0b01);
        assert_relative_eq!(ch.left()[0].rate, p.f(0) - p.f(-1), epsilon = 1e-15);
        let ev = BrickEvent {
            site: 0,
            direction: Direction::Left,
            column: -1,
            mask: 0b01,
        };
        assert_eq!(which_moves(&ev, 0, 1), Some(Direction::Left));
        let ev = BrickEvent { mask: 0b11, ..ev };
        assert_eq!(which_moves(&ev, 0, 1), None);
    }

    #[test]
    fn tied_layers_only_move_jointly() {
        let p = params();
        let ch = joint_site_channels(&[2, 2], |z| p.f(z));
        for dir in [Direction::Right, Direction::Left] {
            let live: Vec<_> = ch.channels(dir).iter().filter(|c| c.rate > 0.0).collect();
            assert_eq!(live.len(), 1);
            assert_eq!(live[0].mask, 0b11);
        }
    }

    proptest! {
        #[test]
        fn marginal_rates_are_exact(values in prop::collection::vec(-12i64..12, 1..=4), b in 0.25f64..2.0) {
            let p = RateParams::new(b).unwrap();
            let ch = joint_site_channels(&values, |z| p.f(z));
            for (a, &v) in values.iter().enumerate() {
                let r: f64 = ch.right().iter().filter(|c| c.mask & (1 << a) != 0).map(|c| c.rate).sum();
                let l: f64 = ch.left().iter().filter(|c| c.mask & (1 << a) != 0).map(|c| c.rate).sum();
                prop_assert!((r - p.f(v)).abs() <= 1e-12 * p.f(v));
                prop_assert!((l - p.f(-v)).abs() <= 1e-12 * p.f(-v));
            }
            for c in ch.right().iter().chain(ch.left()) {
                prop_assert!(c.rate >= 0.0);
            }
        }

        #[test]
        fn coupled_moves_preserve_order(values in prop::collection::vec(-6i64..6, 2..=4)) {
            // sort so that layer k <= layer k+1; every channel must keep that
            let mut v = values.clone();
            v.sort();
            let p = params();
            let ch = joint_site_channels(&v, |z| p.f(z));
            for c in ch.right().iter().filter(|c| c.rate > 0.0) {
                // a right brick lowers omega_i: if layer k lays, every higher one lays
                for k in 0..v.len() - 1 {
                    if c.mask & (1 << k) != 0 && v[k] == v[k + 1] {
                        prop_assert!(c.mask & (1 << (k + 1)) != 0);
                    }
                }
            }
            for c in ch.left().iter().filter(|c| c.rate > 0.0) {
                for k in 0..v.len() - 1 {
                    if c.mask & (1 << (k + 1)) != 0 && v[k] == v[k + 1] {
                        prop_assert!(c.mask & (1 << k) != 0);
                    }
                }
            }
        }
    }

    #[test]
    fn label_moves_follow_the_highest_lowest_rule() {
        // sites -1..=2, counts 0, 3, 0, 1 with origin 0 -> labels -2, -1, 0 at site 0
        let mut l = Labels::new(-1, &[0, 3, 0, 1], 0).unwrap();
        assert_eq!(l.range(), -2..=1);
        assert_eq!(l.interval(0, 3), Some((-2, 0)));
        assert_eq!(l.move_right(0, 3).unwrap(), 0);
        assert_eq!(l.position(0), 1);
        assert_eq!(l.interval(1, 1), Some((0, 0)));
        assert_eq!(l.move_left(0, 2).unwrap(), -2);
        assert_eq!(l.position(-2), -1);
        assert_eq!(l.interval(0, 1), Some((-1, -1)));
        assert!(l.move_left(1, 0).is_err());
        assert!(Labels::new(-1, &[1, 0, 0], 0).is_err());
    }

    #[test]
    fn labels_three_at_a_site() {
        let mut l = Labels::new(0, &[0, 0, 0, 3, 0], 3).unwrap();
        let (a, b) = l.interval(3, 3).unwrap();
        assert_eq!(b - a, 2);
        assert_eq!(l.move_right(3, 3).unwrap(), b);
        assert_eq!(l.move_left(3, 2).unwrap(), a);
        let mut single = Labels::new(0, &[1, 0, 0], 0).unwrap();
        assert_eq!(single.move_right(0, 1).unwrap(), 0);
        assert_eq!(single.move_left(1, 1).unwrap(), 0);
    }

    fn pair_state(seed: u64, lam: f64, rho: f64, window: i64) -> LayeredPairState {
        let p = params();
        let spec = VolumeSpec::new(-window, window, Boundary::theta(crate::measures::theta_of_rho(rho, p).unwrap())).unwrap();
        let law = PairLaw::profiles(&spec, |i| if i.abs() <= window / 2 { lam } else { rho }, |_| rho, p, DEFAULT_TAIL_TOL).unwrap();
        let mut rng = stream(seed, 7, 0);
        let (eta, omega) = law.sample(&spec, &mut rng).unwrap();
        LayeredPairState::new(spec, eta, omega, p, DEFAULT_OMEGA_MAX, 0).unwrap()
    }

    #[test]
    fn pair_invariants_hold_along_paths() {
        for seed in 0..20 {
            let mut st = pair_state(seed, -0.5, 0.7, 12);
            let n_labels = st.labels().len();
            let mut rng = stream(seed, 8, 0);
            let mut t = 0.0;
            for _ in 0..40 {
                t += 0.1;
                while let Some(step) = st.step(t, &mut rng).unwrap() {
                    if let Some(mv) = step.moved {
                        assert_eq!((mv.to - mv.from).abs(), 1);
                    }
                    st.check_invariants().unwrap();
                }
            }
            assert_eq!(st.labels().len(), n_labels);
            st.system().check_rates().unwrap();
        }
    }

    #[test]
    fn characteristic_start_has_one_label_at_origin() {
        let p = params();
        let spec = VolumeSpec::new(-10, 10, Boundary::theta(0.0)).unwrap();
        let law = PairLaw::characteristic(&spec, 0.0, p, DEFAULT_TAIL_TOL).unwrap();
        let mut rng = stream(1, 0, 0);
        for _ in 0..1000 {
            let (eta, omega) = law.sample(&spec, &mut rng).unwrap();
            for i in spec.omega_sites() {
                assert_eq!(omega.omega(i) - eta.omega(i), i64::from(i == 0));
            }
        }
    }

    #[test]
    fn shock_start_has_one_label_at_origin() {
        let p = params();
        let spec = VolumeSpec::new(-6, 6, Boundary::Theta { left: 1.0, right: 0.0 }).unwrap();
        let law = PairLaw::shock(0.0, p, DEFAULT_TAIL_TOL).unwrap();
        let mut rng = stream(2, 0, 0);
        let (eta, omega) = law.sample(&spec, &mut rng).unwrap();
        let st = LayeredPairState::new(spec, eta, omega, p, DEFAULT_OMEGA_MAX, 0).unwrap();
        assert_eq!(st.labels().len(), 1);
        assert_eq!(st.labels().position(0), 0);
    }

    #[test]
    fn layered_marginal_matches_single_process() {
        // layer 1 of a three-layer system against the single process
        let p = params();
        let spec = VolumeSpec::new(-15, 15, Boundary::theta(0.0)).unwrap();
        let m = StationaryMarginal::new(0.0, p, DEFAULT_TAIL_TOL).unwrap();
        let lower = StationaryMarginal::new(-0.8, p, DEFAULT_TAIL_TOL).unwrap();
        let upper = StationaryMarginal::new(0.9, p, DEFAULT_TAIL_TOL).unwrap();
        let n = 6000;
        let (mut a, mut b) = (RunningStats::new(), RunningStats::new());
        let (mut a2, mut b2) = (RunningStats::new(), RunningStats::new());
        for rep in 0..n {
            let mut rng = stream(11, 1, rep);
            let mid = init_stationary(&m, &spec, &mut rng).unwrap();
            let lo = IncrementField::from_fn(spec.omega_sites(), |i| mid.omega(i).min(lower.sample(&mut rng))).unwrap();
            let hi = IncrementField::from_fn(spec.omega_sites(), |i| mid.omega(i).max(upper.sample(&mut rng))).unwrap();
            let mut sys = LayeredSystem::new(spec, vec![lo, mid, hi], p, DEFAULT_OMEGA_MAX).unwrap();
            sys.run_until(1.5, &mut rng).unwrap();
            sys.check_order(0, 1).unwrap();
            sys.check_order(1, 2).unwrap();
            a.push((sys.layer(1).height(0)) as f64);
            a2.push(sys.layer(1).omega(0) as f64);

            let mut rng = stream(11, 2, rep);
            let f = init_stationary(&m, &spec, &mut rng).unwrap();
            let mut single = SingleProcess::new(spec, f, p, DEFAULT_OMEGA_MAX).unwrap();
            single.run_until(1.5, &mut rng).unwrap();
            b.push(single.field().height(0) as f64);
            b2.push(single.field().omega(0) as f64);
        }
        let z = (a.mean() - b.mean()) / (a.stderr().powi(2) + b.stderr().powi(2)).sqrt();
        assert!(z.abs() < 4.0, "height z-score {z}");
        let z = (a2.mean() - b2.mean()) / (a2.stderr().powi(2) + b2.stderr().powi(2)).sqrt();
        assert!(z.abs() < 4.0, "omega z-score {z}");
        let vz = (a.variance() - b.variance()) / (a.variance() * (2.0 / n as f64).sqrt());
        assert!(vz.abs() < 4.0 * 2f64.sqrt(), "variance z-score {vz}");
    }
}
