//! Simulation and analysis toolkit for resistive-coupling tomographic tactile
//! sensors.
//!
//! The pipeline mirrors how such a sensor is designed on the desk:
//!
//! 1. [`mesh`] builds structured shell and volume meshes of the detector, with
//!    exponential through-thickness conductivity, electrode pads, a driven
//!    contact disc and optional dot-patterned adhesion layers.
//! 2. [`fem`] assembles and solves `div(sigma grad phi) = 0` with Dirichlet
//!    conditions using a skyline Cholesky factorization.
//! 3. [`protocol`] runs the sequential grounding cycle and packs the 16 x 16
//!    electrode readings into a [`protocol::PotentialFrame`].
//! 4. [`jacobian`] computes the thin-shell sensitivity matrix used for
//!    reconstruction, and [`recon`] solves the Tikhonov problem and extracts
//!    image geometry.
//! 5. [`metrics`] holds the analytic contact model, the output-model fit and the
//!    four performance metrics; [`studies`] orchestrates the design sweeps.
//!
//! Data-parallel loops (ground conditions, Jacobian blocks, sweep cells) go
//! through [`exec::Execution`]; building without the default `parallel` feature
//! drops rayon and runs everything sequentially.

pub mod cli;
pub mod error;
pub mod exec;
pub mod fem;
pub mod fingerprint;
pub mod io;
pub mod jacobian;
pub mod mesh;
pub mod metrics;
pub mod protocol;
pub mod recon;
pub mod studies;

pub use error::{Error, Result};
pub use exec::Execution;
