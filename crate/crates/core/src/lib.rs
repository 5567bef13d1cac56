//! Simulation and verification toolkit for multiparty energy-time Bell tests.
//!
//! - [`numerics`]: dense complex matrices and state vectors.
//! - [`optics`]: beam-splitter networks, DFT analyzers, triangular-mesh decomposition.
//! - [`states`]: GHZ and qunit states, expectation values, Mermin functionals,
//!   postselected preparation through interferometer geometries.
//! - [`lhv`]: deterministic local strategies, postselected correlations and
//!   exhaustive searches under setting-dependent and setting-independent selection.
//! - [`source`]: the pulsed two-pair source, coincidence filtering, event
//!   streams and locality audits.

pub mod error;
pub mod lhv;
pub mod numerics;
pub mod optics;
pub mod source;
pub mod states;

pub use error::{Error, Result};
