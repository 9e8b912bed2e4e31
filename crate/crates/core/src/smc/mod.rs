//! Sequential Monte Carlo posterior over [`Particle`](crate::model::Particle)s.
//!
//! The cloud is exclusively owned during mutation. Per-particle likelihoods
//! are evaluated in parallel, and every reduction runs sequentially in particle
//! order, so a fixed seed gives bit-identical results under any thread count.

mod cloud;
mod drift;
mod prior;
mod resample;
mod update;

pub use cloud::{effective_sample_size, posterior_cov, posterior_mean, Mat10, ParticleCloud, CLOUD_FORMAT_VERSION};
pub use drift::drift_step;
pub use prior::{
    reference_reset, sample_prior, GammaPrior, HamiltonianPrior, InverseWishart, PriorSpec, ReferencePrior,
    CALIBRATED_COV, CALIBRATED_MEAN, DRIFT_CORRELATION, DRIFT_DOF, DRIFT_SIGMA, WIDE_DEPHASING_TIME_US, WIDE_HYPERFINE,
    WIDE_RABI, WIDE_ZEEMAN, WIDE_ZFS_OFFSET,
};
pub use resample::liu_west_resample;
pub use update::{bayes_update, datum_esm, Bridging, UpdateOptions, UpdateReport};

/// Upper bound on rejection or redraw attempts for a single particle.
pub const MAX_REDRAWS: usize = 10_000;
