//! Replica orchestration, estimators and report output.
//!
//! Replica `k` of an ensemble always uses stream `(seed, namespace, k)`, and
//! results are collected in replica order, so reports do not depend on the
//! number of worker threads.

mod characteristic;
mod covariance;
mod labels;
mod scaling;
mod shock;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::Serialize;
use rand::Rng;
use serde_json::Value;

use crate::coupling::{LayeredPairState, PairLaw};
use crate::lattice::VolumeSpec;
use crate::rng::{stream, SimRng};
use crate::RateParams;
use crate::{Error, Result};

pub use characteristic::{exp_characteristic_q, CharacteristicConfig};
pub use covariance::{exp_covariance_identity, CovarianceConfig};
pub use labels::{exp_convexity_labels, LabelsConfig};
pub use scaling::{exp_scaling_scan, ScalingConfig};
pub use shock::{exp_shock_random_walk, ShockConfig};

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "TAEBLP_WORKERS";

/// Distance to a window edge at which a tracked object contaminates a run.
pub const CONTAMINATION_MARGIN: i64 = 10;

/// Contaminated fraction that triggers a wider window.
pub const WIDEN_FRACTION: f64 = 1e-3;

/// Contaminated fraction beyond which a run is invalid.
pub const INVALID_FRACTION: f64 = 1e-2;

/// Worker threads: `TAEBLP_WORKERS` if set, else the available parallelism.
pub fn workers() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| Error::InvalidParameter(format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Runs `count` replicas in parallel; output is in replica order.
pub fn run_replicas<T, F>(seed: u64, namespace: u32, count: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, &mut SimRng) -> Result<T> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers()?)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(|| {
        (0..count)
            .into_par_iter()
            .map(|k| {
                let mut rng = stream(seed, namespace, k);
                f(k, &mut rng)
            })
            .collect()
    })
}

/// Replica bookkeeping of one ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplicaCounts {
    pub total: u64,
    pub used: u64,
    pub contaminated: u64,
    /// Factor applied to the base window after automatic widening.
    pub window_scale: i64,
    pub window: (i64, i64),
    pub events: u64,
}

impl ReplicaCounts {
    pub fn contaminated_fraction(&self) -> f64 {
        self.contaminated as f64 / self.total.max(1) as f64
    }
}

/// Per-replica record plus its contamination flag and event count.
pub struct Tracked<T> {
    pub value: T,
    pub contaminated: bool,
    pub events: u64,
}

/// Runs an ensemble on `base` scaled by 1, 2, 4 until the contaminated
/// fraction is at most [`WIDEN_FRACTION`]; fails above [`INVALID_FRACTION`].
pub fn run_with_widening<T, F>(name: &str, base: (i64, i64), seed: u64, namespace: u32, count: u64, f: F) -> Result<(Vec<T>, ReplicaCounts)>
where
    T: Send,
    F: Fn((i64, i64), u64, &mut SimRng) -> Result<Tracked<T>> + Sync,
{
    let mut scale = 1;
    loop {
        let window = (base.0 * scale, base.1 * scale);
        let records = run_replicas(seed, namespace, count, |k, rng| f(window, k, rng))?;
        let contaminated = records.iter().filter(|r| r.contaminated).count() as u64;
        let events = records.iter().map(|r| r.events).sum();
        let counts = ReplicaCounts {
            total: count,
            used: count - contaminated,
            contaminated,
            window_scale: scale,
            window,
            events,
        };
        let frac = counts.contaminated_fraction();
        if frac > WIDEN_FRACTION && scale < 4 {
            scale *= 2;
            continue;
        }
        if frac > INVALID_FRACTION {
            return Err(Error::Contaminated {
                name: name.to_string(),
                contaminated,
                total: count,
            });
        }
        let values = records.into_iter().filter(|r| !r.contaminated).map(|r| r.value).collect();
        return Ok((values, counts));
    }
}

/// A reported number with its standard error and optional reference.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub name: String,
    pub value: f64,
    pub stderr: f64,
    pub reference: Option<f64>,
}

impl Estimate {
    pub fn new(name: impl Into<String>, value: f64, stderr: f64) -> Self {
        Self {
            name: name.into(),
            value,
            stderr,
            reference: None,
        }
    }

    pub fn against(mut self, reference: f64) -> Self {
        self.reference = Some(reference);
        self
    }

    /// `(value - reference) / stderr`.
    pub fn z_score(&self) -> Option<f64> {
        self.reference.map(|r| (self.value - r) / self.stderr)
    }
}

/// Named pass/fail verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Columnar table written as CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    /// CSV with `#`-prefixed provenance lines before the header.
    pub fn to_csv(&self, provenance: &[String]) -> String {
        let mut s = String::new();
        for line in provenance {
            let _ = writeln!(s, "# {line}");
        }
        let _ = writeln!(s, "{}", self.header.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }
}

/// Aggregated outcome of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub tag: String,
    pub version: String,
    pub seed: u64,
    pub config: BTreeMap<String, Value>,
    pub estimates: Vec<Estimate>,
    pub checks: Vec<Check>,
    pub replicas: BTreeMap<String, ReplicaCounts>,
    #[serde(skip)]
    pub tables: Vec<Table>,
}

impl ExperimentReport {
    pub fn new(name: &str, tag: &str, seed: u64) -> Self {
        Self {
            name: name.into(),
            tag: tag.into(),
            version: crate::version(),
            seed,
            config: BTreeMap::new(),
            estimates: Vec::new(),
            checks: Vec::new(),
            replicas: BTreeMap::new(),
            tables: Vec::new(),
        }
    }

    pub fn echo(&mut self, key: &str, value: impl Serialize) {
        self.config.insert(key.into(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    pub fn estimate(&self, name: &str) -> Option<&Estimate> {
        self.estimates.iter().find(|e| e.name == name)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn add_check(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail,
        });
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    fn provenance(&self) -> Vec<String> {
        let config = serde_json::to_string(&self.config).unwrap_or_default();
        vec![
            format!("experiment={} tag={} version={} seed={}", self.name, self.tag, self.version, self.seed),
            format!("config={config}"),
        ]
    }

    /// Writes `<name>.json` and one CSV per table; returns the paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut paths = Vec::new();
        let json = dir.join(format!("{}.json", self.name));
        std::fs::write(&json, self.to_json()?)?;
        paths.push(json);
        for (k, t) in self.tables.iter().enumerate() {
            let file = if k == 0 {
                format!("{}.csv", self.name)
            } else {
                format!("{}_{}.csv", self.name, t.name)
            };
            let path = dir.join(file);
            std::fs::write(&path, t.to_csv(&self.provenance()))?;
            paths.push(path);
        }
        Ok(paths)
    }
}

/// Whether `[lo, hi]` comes within [`CONTAMINATION_MARGIN`] of an edge.
pub(crate) fn touches_margin(spec: &VolumeSpec, lo: i64, hi: i64) -> bool {
    spec.edge_distance(lo) < CONTAMINATION_MARGIN || spec.edge_distance(hi) < CONTAMINATION_MARGIN
}

/// One coupled pair drawn from `law`, run to `t`; records where label 0 ends.
pub(crate) fn pair_replica<R: Rng + ?Sized>(spec: VolumeSpec, law: &PairLaw, params: RateParams, omega_max: i64, t: f64, rng: &mut R) -> Result<Tracked<i64>> {
    let (eta, omega) = law.sample(&spec, rng)?;
    let mut state = LayeredPairState::new(spec, eta, omega, params, omega_max, 0)?;
    state.run_until(t, rng)?;
    let (lo, hi) = state.extent().unwrap_or((0, 0));
    Ok(Tracked {
        value: state.labels().position(0),
        contaminated: touches_margin(&spec, lo, hi),
        events: state.system().events(),
    })
}

/// Lazily built objects keyed by window, shared across worker threads.
pub(crate) struct WindowCache<T> {
    slots: Mutex<Vec<((i64, i64), Arc<T>)>>,
}

impl<T> WindowCache<T> {
    pub(crate) fn new() -> Self {
        Self { slots: Mutex::new(Vec::new()) }
    }

    pub(crate) fn get(&self, window: (i64, i64), build: impl FnOnce() -> Result<T>) -> Result<Arc<T>> {
        let mut slots = self.slots.lock().unwrap_or_else(|e| e.into_inner());
        if let Some((_, v)) = slots.iter().find(|(w, _)| *w == window) {
            return Ok(v.clone());
        }
        let v = Arc::new(build()?);
        slots.push((window, v.clone()));
        Ok(v)
    }
}

/// Window padding for a run of length `t` at flux `h`: the contamination
/// margin plus four spreads `sqrt(2 h t) + t^(2/3)`, which bound the observed
/// standard deviation of a second class particle at short and long times.
pub(crate) fn light_cone_pad(t: f64, h: f64) -> i64 {
    let spread = (2.0 * h * t).sqrt() + t.powf(2.0 / 3.0);
    CONTAMINATION_MARGIN + (4.0 * spread).ceil() as i64
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replicas_are_ordered_and_seeded() {
        use rand::Rng;
        let a = run_replicas(5, 1, 64, |k, rng| Ok((k, rng.random::<u64>()))).unwrap();
        let b = run_replicas(5, 1, 64, |k, rng| Ok((k, rng.random::<u64>()))).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().enumerate().all(|(i, (k, _))| i as u64 == *k));
    }

    #[test]
    fn widening_and_invalidation() {
        // contaminated only on the narrow window
        let (vals, counts) = run_with_widening("t", (-5, 5), 1, 0, 100, |w, k, _| {
            Ok(Tracked {
                value: k,
                contaminated: w.1 < 10 && k % 10 == 0,
                events: 1,
            })
        })
        .unwrap();
        assert_eq!(counts.window_scale, 2);
        assert_eq!(vals.len(), 100);
        let err = run_with_widening("t", (-5, 5), 1, 0, 100, |_, k, _| {
            Ok(Tracked {
                value: k,
                contaminated: k % 10 == 0,
                events: 1,
            })
        })
        .unwrap_err();
        assert!(matches!(err, Error::Contaminated { .. }));
    }

    #[test]
    fn csv_and_json_are_deterministic() {
        let mut r = ExperimentReport::new("demo", "demo-tag", 3);
        r.echo("beta", 1.0);
        r.estimates.push(Estimate::new("x", 0.1, 0.01).against(0.1));
        let mut t = Table::new("main", &["k", "p"]);
        t.push(vec![0.0, 0.5]);
        r.tables.push(t);
        let dir = tempfile::tempdir().unwrap();
        let first = r.write(dir.path()).unwrap();
        let bytes: Vec<Vec<u8>> = first.iter().map(|p| std::fs::read(p).unwrap()).collect();
        r.write(dir.path()).unwrap();
        let again: Vec<Vec<u8>> = first.iter().map(|p| std::fs::read(p).unwrap()).collect();
        assert_eq!(bytes, again);
        let csv = String::from_utf8(bytes[1].clone()).unwrap();
        assert!(csv.starts_with("# experiment=demo"));
        assert!(csv.contains("k,p\n0,0.5\n"));
    }

    #[test]
    fn slope_of_a_power_law() {
        let x: Vec<f64> = [8.0f64, 16.0, 32.0].iter().map(|t| t.ln()).collect();
        let y: Vec<f64> = [8.0f64, 16.0, 32.0].iter().map(|t| (3.0 * t.powf(0.66)).ln()).collect();
        assert!((fit_slope(&x, &y) - 0.66).abs() < 1e-12);
    }
}
