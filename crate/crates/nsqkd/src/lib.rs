//! Device-independent secret-key rates for the three-setting/two-setting
//! (AMP-style) no-signaling protocol, computed by linear programming.
//!
//! The pipeline has four stages:
//!
//! 1. [`protocol`] produces the Alice–Bob correlation tables of the protocol
//!    measurements on a Werner state, or validates externally supplied tables.
//! 2. [`lp`] assembles the eavesdropper's joint-probability LP (full
//!    48-variable and reduced 24-variable forms), solves it with a two-phase
//!    bounded-variable simplex method, and emits duality certificates.
//! 3. [`keyrate`] converts the optimal guessing probability into a mutual
//!    information bound and the one-way key rate, and locates the
//!    positive-key threshold.
//! 4. [`sweep`] runs parameter sweeps over the noise parameter and
//!    serializes the results (CSV and JSON).
//!
//! [`testkit`] holds shared oracles for tests: feasible-point samplers,
//! random Bob–Eve joints, and the golden-value fixture suite.

pub mod keyrate;
pub mod lp;
pub mod protocol;
pub mod sweep;
pub mod testkit;
