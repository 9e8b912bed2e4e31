//! Online Bayesian experiment design for the NV-center ground-state qutrit.
//!
//! The crate is organised bottom-up:
//!
//! - [`qutrit`]: Lindblad simulation of the spin-1 system under bang-bang
//!   Rabi/Ramsey control, producing survival probabilities.
//! - [`measurement`]: the referenced-Poisson photon-count model, its Fisher
//!   information, and effective-strong-measurement (ESM) bookkeeping.
//! - [`model`]: the 10-dimensional hypothesis vector carried by particles.
//! - [`smc`]: the sequential Monte Carlo posterior with Liu–West resampling,
//!   reference drift and tracking resets.
//! - [`risk`]: Bayes-risk estimators used to rank candidate experiments.
//! - [`heuristics`]: offline sweeps and online risk minimisers.

pub mod error;
pub mod expm;
pub mod heuristics;
pub mod measurement;
pub mod model;
pub mod qutrit;
pub mod risk;
pub mod smc;

pub use error::{Error, Result};
pub use measurement::{Datum, ReferenceRates};
pub use model::{DriftHyper, ModelParameters, Particle, DIM};
pub use qutrit::{ExperimentConfig, ExperimentKind, SpinParams};
pub use smc::ParticleCloud;
