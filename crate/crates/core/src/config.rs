//! Flat `key=value` run configuration and experiment dispatch.
//!
//! A configuration is assembled from an optional file and command-line
//! overrides, later sources winning. Blank lines and `#` comments are
//! ignored. Keys:
//!
//! | key | meaning |
//! |-----|---------|
//! | `experiment` | `characteristic_q`, `shock_rw`, `convexity_labels`, `covariance`, `scaling_scan` |
//! | `beta` | inverse temperature, `> 0` |
//! | `rho` / `theta` | density or potential; exactly one |
//! | `window` | `ell,r` with `ell < 0 < r` |
//! | `boundary` | `theta` (the only variant the experiments accept) |
//! | `t` / `t_grid` | time, or comma-separated increasing times |
//! | `replicas` | required, `>= 1` |
//! | `seed`, `out`, `omega_max`, `tail_tol` | as named |
//! | `lam`, `inner`, `z`, `offsets`, `tail_replicas` | experiment specific |

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Serialize;

use crate::experiments::{
    exp_characteristic_q, exp_convexity_labels, exp_covariance_identity, exp_scaling_scan, exp_shock_random_walk, CharacteristicConfig, CovarianceConfig,
    ExperimentReport, LabelsConfig, ScalingConfig, ShockConfig,
};
use crate::lattice::DEFAULT_OMEGA_MAX;
use crate::measures::{rho_of_theta, theta_of_rho, DEFAULT_TAIL_TOL};
use crate::{Error, RateParams, Result};

const KEYS: &[&str] = &[
    "experiment",
    "beta",
    "rho",
    "theta",
    "window",
    "boundary",
    "t",
    "t_grid",
    "replicas",
    "seed",
    "out",
    "omega_max",
    "tail_tol",
    "lam",
    "inner",
    "z",
    "offsets",
    "tail_replicas",
];

pub const EXPERIMENTS: &[&str] = &["characteristic_q", "shock_rw", "convexity_labels", "covariance", "scaling_scan"];

/// Density or potential, whichever was given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Level {
    Rho(f64),
    Theta(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub experiment: String,
    pub beta: f64,
    pub level: Level,
    pub window: Option<(i64, i64)>,
    pub t: Option<f64>,
    pub t_grid: Option<Vec<f64>>,
    pub replicas: u64,
    pub seed: u64,
    pub out: PathBuf,
    pub omega_max: i64,
    pub tail_tol: f64,
    pub lam: Option<f64>,
    pub inner: Option<i64>,
    pub z: Option<i64>,
    pub offsets: Option<i64>,
    pub tail_replicas: Option<u64>,
}

/// Parses `key=value` lines into a map; later keys overwrite earlier ones.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidParameter(format!("line {}: expected key=value, got {raw:?}", n + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn num<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    map.get(key)
        .map(|v| v.parse::<T>().map_err(|_| Error::InvalidParameter(format!("{key}: cannot parse {v:?}"))))
        .transpose()
}

fn list(map: &BTreeMap<String, String>, key: &str) -> Result<Option<Vec<f64>>> {
    map.get(key)
        .map(|v| {
            v.split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|_| Error::InvalidParameter(format!("{key}: cannot parse {v:?}"))))
                .collect()
        })
        .transpose()
}

impl RunConfig {
    pub fn from_pairs(map: &BTreeMap<String, String>) -> Result<Self> {
        if let Some(k) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(Error::InvalidParameter(format!("unknown key {k:?}")));
        }
        let experiment = map.get("experiment").cloned().ok_or_else(|| Error::InvalidParameter("missing experiment".into()))?;
        let beta = num::<f64>(map, "beta")?.unwrap_or(1.0);
        let level = match (num::<f64>(map, "rho")?, num::<f64>(map, "theta")?) {
            (Some(r), None) => Level::Rho(r),
            (None, Some(t)) => Level::Theta(t),
            _ => return Err(Error::InvalidParameter("give exactly one of rho and theta".into())),
        };
        let window = match map.get("window") {
            None => None,
            Some(v) => {
                let parts: Vec<i64> = v
                    .split(',')
                    .map(|x| x.trim().parse::<i64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::InvalidParameter(format!("window: cannot parse {v:?}")))?;
                match parts[..] {
                    [l, r] => Some((l, r)),
                    _ => return Err(Error::InvalidParameter("window needs two integers ell,r".into())),
                }
            }
        };
        if let Some(b) = map.get("boundary") {
            if b != "theta" {
                return Err(Error::InvalidParameter(format!("boundary {b:?}: the experiments need boundary=theta")));
            }
        }
        let cfg = Self {
            experiment,
            beta,
            level,
            window,
            t: num(map, "t")?,
            t_grid: list(map, "t_grid")?,
            replicas: num(map, "replicas")?.ok_or_else(|| Error::InvalidParameter("missing replicas".into()))?,
            seed: num(map, "seed")?.unwrap_or(1),
            out: map.get("out").map_or_else(|| PathBuf::from("out"), PathBuf::from),
            omega_max: num(map, "omega_max")?.unwrap_or(DEFAULT_OMEGA_MAX),
            tail_tol: num(map, "tail_tol")?.unwrap_or(DEFAULT_TAIL_TOL),
            lam: num(map, "lam")?,
            inner: num(map, "inner")?,
            z: num(map, "z")?,
            offsets: num(map, "offsets")?,
            tail_replicas: num(map, "tail_replicas")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let params = RateParams::new(self.beta)?;
        if !EXPERIMENTS.contains(&self.experiment.as_str()) {
            return Err(Error::InvalidParameter(format!("unknown experiment {:?}; one of {EXPERIMENTS:?}", self.experiment)));
        }
        if self.replicas < 1 {
            return Err(Error::InvalidParameter("replicas must be >= 1".into()));
        }
        if let Some((l, r)) = self.window {
            if !(l < 0 && 0 < r) {
                return Err(Error::InvalidParameter(format!("window ({l}, {r}) must contain 0 strictly inside")));
            }
        }
        if let Some(t) = self.t {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::InvalidParameter(format!("t must be finite and >= 0, got {t}")));
            }
        }
        if !(self.tail_tol > 0.0 && self.tail_tol < 1e-3) || self.omega_max < 1 {
            return Err(Error::InvalidParameter("tail_tol must lie in (0, 1e-3) and omega_max >= 1".into()));
        }
        // the level must map to a finite density and potential
        self.rho(params)?;
        self.theta(params)?;
        Ok(())
    }

    pub fn rho(&self, params: RateParams) -> Result<f64> {
        match self.level {
            Level::Rho(r) => Ok(r),
            Level::Theta(t) => rho_of_theta(t, params),
        }
    }

    pub fn theta(&self, params: RateParams) -> Result<f64> {
        match self.level {
            Level::Rho(r) => theta_of_rho(r, params),
            Level::Theta(t) => Ok(t),
        }
    }

    fn time(&self, default: f64) -> f64 {
        self.t.unwrap_or(default)
    }

    fn reject(&self, keys: &[(&str, bool)]) -> Result<()> {
        match keys.iter().find(|(_, given)| *given) {
            Some((k, _)) => Err(Error::InvalidParameter(format!("{k} does not apply to {}", self.experiment))),
            None => Ok(()),
        }
    }

    /// Runs the named experiment.
    pub fn execute(&self) -> Result<ExperimentReport> {
        let params = RateParams::new(self.beta)?;
        let rho = self.rho(params)?;
        let n = self.replicas;
        match self.experiment.as_str() {
            "characteristic_q" => {
                self.reject(&[("t_grid", self.t_grid.is_some()), ("lam", self.lam.is_some()), ("z", self.z.is_some())])?;
                exp_characteristic_q(&CharacteristicConfig {
                    rho,
                    beta: self.beta,
                    t: self.time(2.0),
                    window: self.window,
                    replicas_q: n,
                    replicas_h: n,
                    offsets: self.offsets.unwrap_or(10),
                    extra_sites: Vec::new(),
                    seed: self.seed,
                    omega_max: self.omega_max,
                    tail_tol: self.tail_tol,
                })
            }
            "shock_rw" => {
                self.reject(&[("t_grid", self.t_grid.is_some()), ("lam", self.lam.is_some()), ("offsets", self.offsets.is_some())])?;
                exp_shock_random_walk(&ShockConfig {
                    rho,
                    beta: self.beta,
                    t: self.time(4.0),
                    window: self.window.unwrap_or((-60, 60)),
                    replicas: n,
                    seed: self.seed,
                    omega_max: self.omega_max,
                    tail_tol: self.tail_tol,
                })
            }
            "convexity_labels" => {
                self.reject(&[("t_grid", self.t_grid.is_some()), ("z", self.z.is_some())])?;
                exp_convexity_labels(&LabelsConfig {
                    lam: self.lam.unwrap_or(rho - 1.0),
                    rho,
                    inner: self.inner.unwrap_or(10),
                    beta: self.beta,
                    t: self.time(2.0),
                    window: self.window.unwrap_or((-40, 40)),
                    replicas: n,
                    m_max: 10,
                    refresh_on_joint: true,
                    seed: self.seed,
                    omega_max: self.omega_max,
                    tail_tol: self.tail_tol,
                })
            }
            "covariance" => {
                self.reject(&[("t_grid", self.t_grid.is_some()), ("lam", self.lam.is_some())])?;
                exp_covariance_identity(&CovarianceConfig {
                    theta: self.theta(params)?,
                    beta: self.beta,
                    t: self.time(2.0),
                    z: self.z.unwrap_or(0),
                    window: self.window.unwrap_or((-40, 40)),
                    replicas: n,
                    offsets: self.offsets.unwrap_or(8),
                    seed: self.seed,
                    omega_max: self.omega_max,
                    tail_tol: self.tail_tol,
                })
            }
            "scaling_scan" => {
                self.reject(&[("window", self.window.is_some()), ("t", self.t.is_some()), ("lam", self.lam.is_some())])?;
                let d = ScalingConfig::default();
                let t_grid = self.t_grid.clone().unwrap_or(d.t_grid);
                exp_scaling_scan(&ScalingConfig {
                    rho,
                    beta: self.beta,
                    replicas: vec![n; t_grid.len()],
                    off_t: *t_grid.last().unwrap_or(&d.off_t),
                    t_grid,
                    offsets: self.offsets.unwrap_or(d.offsets),
                    off_replicas: n,
                    tail_replicas: self.tail_replicas.unwrap_or(10 * n),
                    seed: self.seed,
                    omega_max: self.omega_max,
                    tail_tol: self.tail_tol,
                    ..d
                })
            }
            other => Err(Error::InvalidParameter(format!("unknown experiment {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(s: &str) -> BTreeMap<String, String> {
        parse_pairs(&s.replace(' ', "\n")).unwrap()
    }

    #[test]
    fn parses_the_shock_command() {
        let cfg = RunConfig::from_pairs(&pairs("experiment=shock_rw rho=0 beta=1 t=4 replicas=200000 seed=7")).unwrap();
        assert_eq!(cfg.replicas, 200_000);
        assert_eq!(cfg.level, Level::Rho(0.0));
        assert_eq!(cfg.seed, 7);
    }

    #[test]
    fn rejects_bad_configs() {
        for bad in [
            "experiment=shock_rw rho=0 t=4",
            "experiment=shock_rw rho=0 theta=0 replicas=3",
            "experiment=shock_rw replicas=3",
            "experiment=shock_rw rho=0 beta=0 replicas=3",
            "experiment=shock_rw rho=0 replicas=0",
            "experiment=shock_rw rho=0 replicas=3 window=2,9",
            "experiment=nope rho=0 replicas=3",
            "experiment=shock_rw rho=0 replicas=3 colour=red",
            "experiment=shock_rw rho=0 replicas=3 boundary=frozen",
        ] {
            assert!(RunConfig::from_pairs(&pairs(bad)).is_err(), "{bad}");
        }
        assert!(parse_pairs("no equals sign").is_err());
    }

    #[test]
    fn comments_and_overrides() {
        let mut map = parse_pairs("# header\nexperiment=covariance\ntheta = 0.5 # inline\nreplicas=10\n").unwrap();
        map.insert("replicas".into(), "20".into());
        let cfg = RunConfig::from_pairs(&map).unwrap();
        assert_eq!(cfg.replicas, 20);
        let p = RateParams::new(1.0).unwrap();
        assert!((cfg.theta(p).unwrap() - 0.5).abs() < 1e-15);
        assert!((theta_of_rho(cfg.rho(p).unwrap(), p).unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn inapplicable_keys_are_errors() {
        let cfg = RunConfig::from_pairs(&pairs("experiment=scaling_scan rho=1 replicas=2 window=-5,5")).unwrap();
        assert!(cfg.execute().is_err());
    }
}
