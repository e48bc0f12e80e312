//! Exact event-driven simulation of the totally asymmetric exponential
//! bricklayers process (TAEBLP) and a verification lab around it.
//!
//! The crate is organised bottom-up:
//!
//! * [`measures`] evaluates and samples the product stationary marginals,
//!   their size-biased versions, ordered-pair couplings, the shock pair
//!   measure and the macroscopic flux.
//! * [`lattice`] holds a single increment/height configuration on a finite
//!   window and simulates it exactly (Gillespie with a sum-tree rate index).
//! * [`coupling`] runs several ordered layers under the basic coupling and
//!   keeps track of labelled second class particles.
//! * [`convexity`] superimposes the two label processes `y >= z` on a coupled
//!   pair.
//! * [`oracle`] checks closed-form identities by exact summation.
//! * [`experiments`] orchestrates replicas and produces reports.
//!
//! Every stochastic routine takes an explicit RNG; replicas derive their
//! streams from a master seed (see [`rng`]) so results are reproducible
//! bit for bit.

pub mod config;
pub mod convexity;
pub mod coupling;
mod error;
pub mod experiments;
pub mod lattice;
pub mod measures;
pub mod oracle;
pub mod rng;
pub mod stats;
pub mod sumtree;

pub use error::{Error, Result};
pub use measures::RateParams;

/// Version string embedded into every output file.
pub fn version() -> String {
    format!("v{}", env!("CARGO_PKG_VERSION"))
}
