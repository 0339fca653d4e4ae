//! Numerical laboratory for classical and quantum walks on the torus.
//!
//! The crate builds torus and grid walks, computes hitting, escape and
//! extended hitting times with independent cross-checks, measures the
//! locality of random walks by Monte Carlo, simulates Szegedy-type quantum
//! walks on their invariant subspace, and runs the multi-marked-element torus
//! search end to end with setup/update/check cost accounting.

pub mod calibration;
pub mod error;
pub mod graph;
pub mod instances;
pub mod locality;
pub mod markov;
pub mod quantum;
pub mod search;
pub mod specs;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
