//! Hierarchical optimal transport for unsupervised domain adaptation.
//!
//! The pipeline has three phases:
//!
//! 1. the unlabeled target domain is split into `k` structures with
//!    Wasserstein-spectral clustering ([`wspectral`]),
//! 2. source classes and target clusters are matched by an entropic optimal
//!    transport problem whose ground cost is itself a Wasserstein distance
//!    between structures ([`hotda`]),
//! 3. every source class is moved onto its matched cluster with the
//!    barycentric mapping of the inner transport plan.
//!
//! A classifier ([`classify`]) trained on the transported source then labels
//! the target. [`ot`] holds the discrete OT machinery the other modules share,
//! [`datasets`] the synthetic generators and CSV I/O, and [`bench`] the moons
//! benchmark harness.

pub mod bench;
pub mod classify;
pub mod datasets;
mod error;
pub mod hotda;
pub mod matching;
pub mod measures;
pub mod ot;
pub mod wspectral;

pub use error::{Error, Result};
