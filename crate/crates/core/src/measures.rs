//! Product stationary marginals of the exponential bricklayers process and
//! everything derived from them.
//!
//! With rates `f(z) = exp(beta (z - 1/2))` the factorial `f(z)!` telescopes
//! to `exp(beta z^2 / 2)` for every integer `z`, so the stationary marginal
//! with chemical potential `theta` has weights `exp(theta z - beta z^2 / 2)`:
//! a discrete Gaussian centred at `theta / beta`. All evaluation happens in
//! log space; sampling uses exact inversion of truncated tables.

use std::ops::RangeInclusive;

use rand::Rng;

use crate::rng::uniform;
use crate::{Error, Result};

/// Largest admissible `|beta * z|` for a rate evaluation.
pub const RATE_EXPONENT_LIMIT: f64 = 80.0;

/// Default relative truncation tolerance for marginal tables.
pub const DEFAULT_TAIL_TOL: f64 = 1e-12;

/// Convexity parameter of the exponential rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateParams {
    beta: f64,
}

impl RateParams {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
        }
        Ok(Self { beta })
    }

    #[inline]
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `f(z)` without the overflow guard.
    #[inline]
    pub fn f(&self, z: i64) -> f64 {
        (self.beta * (z as f64 - 0.5)).exp()
    }

    /// `ln f(z)! = beta z^2 / 2`.
    #[inline]
    pub fn log_factorial(&self, z: i64) -> f64 {
        0.5 * self.beta * (z as f64) * (z as f64)
    }
}

/// `f(z) = exp(beta (z - 1/2))`, rejecting arguments beyond the overflow guard.
pub fn rate_f(z: i64, params: RateParams) -> Result<f64> {
    let product = (params.beta * z as f64).abs();
    if product > RATE_EXPONENT_LIMIT {
        return Err(Error::RateOverflow {
            z,
            product,
            limit: RATE_EXPONENT_LIMIT,
        });
    }
    Ok(params.f(z))
}

/// Precomputed `f(z)` for `|z| <= omega_max + 1`, the hot-path lookup used by
/// the simulators.
#[derive(Debug, Clone)]
pub struct RateLookup {
    offset: i64,
    values: Vec<f64>,
}

impl RateLookup {
    pub fn new(params: RateParams, omega_max: i64) -> Result<Self> {
        if omega_max < 1 {
            return Err(Error::InvalidParameter(format!("omega_max must be >= 1, got {omega_max}")));
        }
        let offset = omega_max + 1;
        let values = (-offset..=offset)
            .map(|z| rate_f(z, params))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { offset, values })
    }

    /// `f(z)`; `z` must lie in `[-omega_max - 1, omega_max + 1]`.
    #[inline]
    pub fn f(&self, z: i64) -> f64 {
        self.values[(z + self.offset) as usize]
    }
}

/// Stationary single-site marginal `mu^theta`.
#[derive(Debug, Clone)]
pub struct StationaryMarginal {
    theta: f64,
    beta: f64,
    log_z: f64,
    rho: f64,
    var_omega: f64,
    fourth_moment: f64,
    tail_tol: f64,
    z_min: i64,
    pmf: Vec<f64>,
    cdf: Vec<f64>,
}

impl StationaryMarginal {
    /// Builds the marginal by truncated summation; the neglected relative
    /// mass is below `tail_tol` (bounded by a geometric tail estimate).
    pub fn new(theta: f64, params: RateParams, tail_tol: f64) -> Result<Self> {
        if !(tail_tol > 0.0 && tail_tol <= 1e-6) {
            return Err(Error::InvalidParameter(format!("tail_tol must be in (0, 1e-6], got {tail_tol}")));
        }
        if !theta.is_finite() {
            return Err(Error::InvalidParameter(format!("theta must be finite, got {theta}")));
        }
        let beta = params.beta;
        let log_w = |z: i64| theta * z as f64 - 0.5 * beta * (z as f64) * (z as f64);
        let mode = (theta / beta).round() as i64;
        let peak = log_w(mode);

        let mut total = 1.0;
        let mut hi = mode;
        loop {
            // w(z+1)/w(z) = exp(theta - beta (z + 1/2)) decreases in z.
            let ratio = (theta - beta * (hi as f64 + 0.5)).exp();
            let w = (log_w(hi) - peak).exp();
            if ratio < 1.0 && w * ratio / (1.0 - ratio) < tail_tol * total {
                break;
            }
            hi += 1;
            total += (log_w(hi) - peak).exp();
        }
        let mut lo = mode;
        loop {
            // w(z-1)/w(z) = exp(-theta + beta (z - 1/2)) decreases as z decreases.
            let ratio = (-theta + beta * (lo as f64 - 0.5)).exp();
            let w = (log_w(lo) - peak).exp();
            if ratio < 1.0 && w * ratio / (1.0 - ratio) < tail_tol * total {
                break;
            }
            lo -= 1;
            total += (log_w(lo) - peak).exp();
        }

        let weights: Vec<f64> = (lo..=hi).map(|z| (log_w(z) - peak).exp()).collect();
        let sum: f64 = weights.iter().sum();
        let log_z = peak + sum.ln();
        let pmf: Vec<f64> = weights.iter().map(|w| w / sum).collect();
        let rho: f64 = pmf.iter().zip(lo..).map(|(p, z)| p * z as f64).sum();
        let (var_omega, fourth_moment) = pmf.iter().zip(lo..).fold((0.0, 0.0), |(v, m4), (p, z)| {
            let d = z as f64 - rho;
            (v + p * d * d, m4 + p * d * d * d * d)
        });
        let mut acc = 0.0;
        let cdf = pmf
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();

        Ok(Self {
            theta,
            beta,
            log_z,
            rho,
            var_omega,
            fourth_moment,
            tail_tol,
            z_min: lo,
            pmf,
            cdf,
        })
    }

    /// Marginal with prescribed density `rho`.
    pub fn at_density(rho: f64, params: RateParams, tail_tol: f64) -> Result<Self> {
        let theta = theta_of_rho(rho, params)?;
        Self::new(theta, params, tail_tol)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    /// Density `E omega`.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn var_omega(&self) -> f64 {
        self.var_omega
    }

    /// Fourth central moment of `omega`.
    pub fn fourth_moment(&self) -> f64 {
        self.fourth_moment
    }

    pub fn tail_tol(&self) -> f64 {
        self.tail_tol
    }

    /// Support of the truncated table.
    pub fn support(&self) -> RangeInclusive<i64> {
        self.z_min..=self.z_min + self.pmf.len() as i64 - 1
    }

    pub fn log_pmf(&self, z: i64) -> f64 {
        self.theta * z as f64 - 0.5 * self.beta * (z as f64) * (z as f64) - self.log_z
    }

    /// Exact `mu^theta(z)` (closed form, valid outside the table as well).
    pub fn pmf(&self, z: i64) -> f64 {
        self.log_pmf(z).exp()
    }

    /// Table pmf (zero outside the truncated support).
    pub fn table_pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn cdf(&self, z: i64) -> f64 {
        if z < self.z_min {
            0.0
        } else {
            let idx = ((z - self.z_min) as usize).min(self.cdf.len() - 1);
            self.cdf[idx]
        }
    }

    /// Smallest `z` with `cdf(z) > u`.
    pub fn quantile(&self, u: f64) -> i64 {
        let idx = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        self.z_min + idx as i64
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        self.quantile(uniform(rng))
    }

    /// `E^theta[f(omega)]`, equal to `exp(theta)` in closed form.
    pub fn mean_rate(&self, params: RateParams) -> f64 {
        self.pmf
            .iter()
            .zip(self.z_min..)
            .map(|(p, z)| p * params.f(z))
            .sum()
    }
}

/// Density as a function of the chemical potential.
pub fn rho_of_theta(theta: f64, params: RateParams) -> Result<f64> {
    Ok(StationaryMarginal::new(theta, params, DEFAULT_TAIL_TOL)?.rho())
}

/// Inverts the strictly increasing map `theta -> rho(theta)`.
///
/// Uses `rho(k beta) = k` to bracket the root between `beta floor(rho)` and
/// `beta ceil(rho)`, then safeguarded Newton steps with `d rho / d theta =
/// Var(omega)`.
pub fn theta_of_rho(rho: f64, params: RateParams) -> Result<f64> {
    const MAX_ITER: usize = 200;
    if !rho.is_finite() {
        return Err(Error::InvalidParameter(format!("density must be finite, got {rho}")));
    }
    let beta = params.beta;
    if rho.fract() == 0.0 {
        return Ok(rho * beta);
    }
    let mut lo = rho.floor() * beta;
    let mut hi = rho.ceil() * beta;
    let mut theta = lo + (rho - rho.floor()) * beta;
    for _ in 0..MAX_ITER {
        let m = StationaryMarginal::new(theta, params, DEFAULT_TAIL_TOL)?;
        let residual = m.rho() - rho;
        if residual.abs() <= 1e-13 * rho.abs().max(1.0) {
            return Ok(theta);
        }
        if residual > 0.0 {
            hi = theta;
        } else {
            lo = theta;
        }
        let newton = theta - residual / m.var_omega();
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - theta).abs() <= 1e-15 * theta.abs().max(1.0) || hi - lo <= 1e-15 * theta.abs().max(1.0) {
            return Ok(next);
        }
        theta = next;
    }
    Err(Error::NoConvergence {
        what: "density inversion",
        iterations: MAX_ITER,
    })
}

/// Hydrodynamic flux and characteristic speed at one density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxSpeed {
    pub theta: f64,
    /// `H = exp(theta) + exp(-theta)`.
    pub flux: f64,
    /// `V = H'(rho)`, computed through `theta` by the chain rule.
    pub speed: f64,
}

pub fn flux_and_speed(rho: f64, params: RateParams) -> Result<FluxSpeed> {
    let theta = theta_of_rho(rho, params)?;
    let m = StationaryMarginal::new(theta, params, DEFAULT_TAIL_TOL)?;
    Ok(FluxSpeed {
        theta,
        flux: theta.exp() + (-theta).exp(),
        speed: (theta.exp() - (-theta).exp()) / m.var_omega(),
    })
}

/// Jump rates `(right, left)` of the second class particle started from the
/// shock measure at density `rho`.
pub fn rw_rates(rho: f64, params: RateParams) -> Result<(f64, f64)> {
    let theta = theta_of_rho(rho, params)?;
    Ok(rw_rates_at_theta(theta, params))
}

/// Same as [`rw_rates`], parametrised by `theta(rho)`; uses
/// `theta(rho + 1) = theta(rho) + beta`.
pub fn rw_rates_at_theta(theta: f64, params: RateParams) -> (f64, f64) {
    let b = params.beta;
    let right = (theta + b).exp() - theta.exp();
    let left = (-theta).exp() - (-theta - b).exp();
    (right, left)
}

/// Size-biased marginal `mu_hat^rho(y) = Var^{-1} sum_{z > y} (z - rho) mu(z)`.
#[derive(Debug, Clone)]
pub struct SizeBiasedMarginal {
    underlying: StationaryMarginal,
    y_min: i64,
    pmf: Vec<f64>,
    cdf: Vec<f64>,
}

impl SizeBiasedMarginal {
    pub fn new(underlying: StationaryMarginal) -> Self {
        let support = underlying.support();
        let (lo, hi) = (*support.start(), *support.end());
        let y_min = lo - 1;
        let mut pmf: Vec<f64> = Vec::with_capacity((hi - y_min + 1) as usize);
        let mut this = Self {
            underlying,
            y_min,
            pmf: Vec::new(),
            cdf: Vec::new(),
        };
        for y in y_min..=hi {
            pmf.push(this.value(y));
        }
        let total: f64 = pmf.iter().sum();
        let mut acc = 0.0;
        let cdf = pmf
            .iter()
            .map(|p| {
                acc += p / total;
                acc
            })
            .collect();
        this.pmf = pmf;
        this.cdf = cdf;
        this
    }

    pub fn underlying(&self) -> &StationaryMarginal {
        &self.underlying
    }

    pub fn rho(&self) -> f64 {
        self.underlying.rho
    }

    /// Forward form `Var^{-1} sum_{z > y} (z - rho) mu(z)`.
    pub fn forward(&self, y: i64) -> f64 {
        let m = &self.underlying;
        let hi = (y + 1).max(*m.support().end()) + 8;
        ((y + 1)..=hi)
            .map(|z| (z as f64 - m.rho) * m.pmf(z))
            .sum::<f64>()
            / m.var_omega
    }

    /// Backward form `Var^{-1} sum_{z <= y} (rho - z) mu(z)`.
    pub fn backward(&self, y: i64) -> f64 {
        let m = &self.underlying;
        let lo = y.min(*m.support().start()) - 8;
        (lo..=y).map(|z| (m.rho - z as f64) * m.pmf(z)).sum::<f64>() / m.var_omega
    }

    /// `mu_hat(y)`, using whichever form is a sum of nonnegative terms.
    pub fn value(&self, y: i64) -> f64 {
        if y as f64 >= self.underlying.rho {
            self.forward(y)
        } else {
            self.backward(y)
        }
    }

    /// `mu_hat(y) / mu(y)` evaluated without underflow, for any `y`.
    pub fn ratio_to_stationary(&self, y: i64) -> f64 {
        let m = &self.underlying;
        let lw = |z: i64| m.theta * z as f64 - 0.5 * m.beta * (z as f64) * (z as f64);
        let base = lw(y);
        let mut sum = 0.0;
        if y as f64 >= m.rho {
            let mut z = y + 1;
            loop {
                let term = (z as f64 - m.rho) * (lw(z) - base).exp();
                sum += term;
                if z as f64 > m.theta / m.beta && term < 1e-18 * sum.max(f64::MIN_POSITIVE) {
                    break;
                }
                z += 1;
            }
        } else {
            let mut z = y;
            loop {
                let term = (m.rho - z as f64) * (lw(z) - base).exp();
                sum += term;
                if (z as f64) < m.theta / m.beta && term < 1e-18 * sum.max(f64::MIN_POSITIVE) {
                    break;
                }
                z -= 1;
            }
        }
        sum / m.var_omega
    }

    pub fn support(&self) -> RangeInclusive<i64> {
        self.y_min..=self.y_min + self.pmf.len() as i64 - 1
    }

    pub fn table_pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn quantile(&self, u: f64) -> i64 {
        let idx = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        self.y_min + idx as i64
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        self.quantile(uniform(rng))
    }

    /// Mean of `mu_hat`.
    pub fn mean(&self) -> f64 {
        let total: f64 = self.pmf.iter().sum();
        self.pmf.iter().zip(self.y_min..).map(|(p, y)| p * y as f64).sum::<f64>() / total
    }
}

/// Geometric law `nu(m) = exp(-beta m) (1 - exp(-beta))` on `m >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricLabelLaw {
    beta: f64,
}

impl GeometricLabelLaw {
    pub fn new(params: RateParams) -> Self {
        Self { beta: params.beta }
    }

    pub fn pmf(&self, m: i64) -> f64 {
        if m < 0 {
            0.0
        } else {
            (-self.beta * m as f64).exp() * (-(-self.beta).exp_m1())
        }
    }

    /// `nu{0, ..., m}`.
    pub fn cdf(&self, m: i64) -> f64 {
        if m < 0 {
            0.0
        } else {
            -(-self.beta * (m + 1) as f64).exp_m1()
        }
    }

    /// `nu{m, m+1, ...}`.
    pub fn tail(&self, m: i64) -> f64 {
        if m <= 0 {
            1.0
        } else {
            (-self.beta * m as f64).exp()
        }
    }
}

/// Monotone coupling of two marginals by a shared uniform.
#[derive(Debug, Clone)]
pub struct OrderedPairSampler {
    lower: StationaryMarginal,
    upper: StationaryMarginal,
    lower_hat: SizeBiasedMarginal,
    upper_hat: SizeBiasedMarginal,
}

impl OrderedPairSampler {
    pub fn new(lam: f64, rho: f64, params: RateParams, tail_tol: f64) -> Result<Self> {
        if lam > rho {
            return Err(Error::Contract(format!("ordered pair needs lam <= rho, got {lam} > {rho}")));
        }
        let lower = StationaryMarginal::at_density(lam, params, tail_tol)?;
        let upper = if lam == rho {
            lower.clone()
        } else {
            StationaryMarginal::at_density(rho, params, tail_tol)?
        };
        Ok(Self {
            lower_hat: SizeBiasedMarginal::new(lower.clone()),
            upper_hat: SizeBiasedMarginal::new(upper.clone()),
            lower,
            upper,
        })
    }

    pub fn lower(&self) -> &StationaryMarginal {
        &self.lower
    }

    pub fn upper(&self) -> &StationaryMarginal {
        &self.upper
    }

    /// Draws `(y, z)` with `y <= z`; with `strict_at_origin` the pair comes
    /// from `mu_hat^lam` and `mu_hat^rho + 1`, so `y < z`.
    pub fn sample<R: Rng + ?Sized>(&self, strict_at_origin: bool, rng: &mut R) -> (i64, i64) {
        let u = uniform(rng);
        if strict_at_origin {
            (self.lower_hat.quantile(u), self.upper_hat.quantile(u) + 1)
        } else {
            (self.lower.quantile(u), self.upper.quantile(u))
        }
    }
}

/// Convenience wrapper around [`OrderedPairSampler`].
pub fn sample_ordered_pair<R: Rng + ?Sized>(
    lam: f64,
    rho: f64,
    strict_at_origin: bool,
    params: RateParams,
    rng: &mut R,
) -> Result<(i64, i64)> {
    Ok(OrderedPairSampler::new(lam, rho, params, DEFAULT_TAIL_TOL)?.sample(strict_at_origin, rng))
}

/// Shock product measure: density `rho + 1` left of the origin, `rho` to the
/// right, and a single discrepancy `(y, y + 1)` with `y ~ mu^rho` at 0.
#[derive(Debug, Clone)]
pub struct ShockPairMeasure {
    rho: f64,
    left: StationaryMarginal,
    right: StationaryMarginal,
}

impl ShockPairMeasure {
    pub fn new(rho: f64, params: RateParams, tail_tol: f64) -> Result<Self> {
        let theta = theta_of_rho(rho, params)?;
        Ok(Self {
            rho,
            left: StationaryMarginal::new(theta + params.beta, params, tail_tol)?,
            right: StationaryMarginal::new(theta, params, tail_tol)?,
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Marginal at density `rho + 1`.
    pub fn left_marginal(&self) -> &StationaryMarginal {
        &self.left
    }

    /// Marginal at density `rho`.
    pub fn right_marginal(&self) -> &StationaryMarginal {
        &self.right
    }

    /// Pair distribution at `site` relative to a shock sitting at `shock`;
    /// returns the per-site law of the lower coordinate and the offset of
    /// the upper one.
    pub fn site_law(&self, site: i64, shock: i64) -> (&StationaryMarginal, i64) {
        use std::cmp::Ordering::*;
        match site.cmp(&shock) {
            Less => (&self.left, 0),
            Equal => (&self.right, 1),
            Greater => (&self.right, 0),
        }
    }

    /// Samples `(lower, upper)` over `sites`, which must contain 0.
    pub fn sample<R: Rng + ?Sized>(&self, sites: RangeInclusive<i64>, rng: &mut R) -> Result<(Vec<i64>, Vec<i64>)> {
        if !sites.contains(&0) {
            return Err(Error::Contract(format!(
                "shock window {}..={} must contain the origin",
                sites.start(),
                sites.end()
            )));
        }
        let mut lower = Vec::with_capacity(sites.clone().count());
        let mut upper = Vec::with_capacity(lower.capacity());
        for i in sites {
            let (law, offset) = self.site_law(i, 0);
            let y = law.sample(rng);
            lower.push(y);
            upper.push(y + offset);
        }
        Ok((lower, upper))
    }
}
