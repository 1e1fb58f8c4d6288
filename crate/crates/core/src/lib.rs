//! Unadjusted Langevin Monte Carlo with certified constants, step-size
//! planning, Gaussian oracles and divergence estimators.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the bottom of this file fix the scalar to `f64`, which is what the
//! command-line tool uses.

pub mod certificates;
pub mod divergence;
pub mod error;
pub mod lsi;
pub mod numerics;
pub mod oracle;
pub mod planner;
pub mod potentials;
pub mod rng;
pub mod sampler;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::{ExactField, Real};

pub type PotentialSpec64 = potentials::PotentialSpec<f64>;
pub type Certificate64 = certificates::Certificate<f64>;
pub type LsiBound64 = lsi::LsiBound<f64>;
pub type GaussianLaw64 = oracle::GaussianLaw<f64>;
pub type ChainConfig64 = sampler::ChainConfig<f64>;
pub type DensityGrid64 = divergence::DensityGrid<f64>;
pub type LmcPlan64 = planner::LmcPlan<f64>;
