//! Unit-lag autocovariance of random-walk Metropolis–Hastings chains.
//!
//! The crate evaluates the lag-one covariance of a stationary MH chain by
//! quadrature (a general two-dimensional form, a symmetric random-walk form
//! and a one-dimensional form for symmetric unimodal targets), designs the
//! covariance-minimizing random-walk increment, and checks all of it against
//! seeded Monte Carlo runs.

pub mod densities;
pub mod design;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod highdim;
pub mod proposals;
pub mod quadrature;
pub mod rng;
pub mod roots;
pub mod sampler;
pub mod special;
pub mod theory;

pub use densities::{Family, TargetDensity};
pub use error::{Error, ErrorClass, Result};
