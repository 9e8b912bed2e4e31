use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{liu_west_resample, ParticleCloud};
use crate::error::{Error, Result};
use crate::measurement::{esm, log_likelihood, Datum, EsmInputs};
use crate::model::{refs_of, spin_of, Particle, BRIGHT, DARK};
use crate::qutrit::{survival_probability, ExperimentConfig};

/// How a single datum is split into tempered sub-updates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Bridging {
    Off,
    Fixed { steps: u32 },
    /// `m = ceil(ESM / esm_per_step)`, at least one.
    Adaptive { esm_per_step: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateOptions {
    /// Resample iff `n_eff / K` drops below this.
    pub resample_threshold: f64,
    pub liu_west_a: f64,
    pub bridging: Bridging,
    /// Doublings of `m` tried after an all-zero likelihood before giving up.
    pub max_retry_doublings: u32,
}

impl Default for UpdateOptions {
    fn default() -> Self {
        UpdateOptions {
            resample_threshold: 0.5,
            liu_west_a: 0.98,
            bridging: Bridging::Adaptive { esm_per_step: 10.0 },
            max_retry_doublings: 3,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateReport {
    pub steps: u32,
    pub resamples: u32,
    pub retries: u32,
    pub n_eff: f64,
}

/// ESM carried by a datum: observed reference totals with the cloud's
/// reference uncertainty scaled to `N` shots.
pub fn datum_esm(cloud: &ParticleCloud, datum: &Datum) -> f64 {
    let var = cloud.variance();
    let n = datum.repetitions as f64;
    let (a, b) = (datum.bright_counts as f64, datum.dark_counts as f64);
    if a <= b {
        return 0.0;
    }
    esm(&EsmInputs {
        alpha_hat: a,
        beta_hat: b,
        sigma_alpha: n * var[BRIGHT].sqrt(),
        sigma_beta: n * var[DARK].sqrt(),
    })
}

impl ParticleCloud {
    /// Multiply weights by `exp(loglik)` split over `steps` tempered sub-updates,
    /// resampling after any sub-update that leaves `n_eff / K` below threshold.
    pub fn update_with<F, R>(&mut self, loglik: F, steps: u32, opts: &UpdateOptions, rng: &mut R) -> Result<UpdateReport>
    where
        F: Fn(&Particle) -> f64 + Sync,
        R: Rng + ?Sized,
    {
        let original = self.clone();
        let mut m = steps.max(1);
        let mut retries = 0;
        loop {
            match self.tempered(&loglik, m, opts, rng) {
                Ok(mut report) => {
                    report.retries = retries;
                    return Ok(report);
                }
                Err(Error::DegenerateUpdate { .. }) if retries < opts.max_retry_doublings => {
                    *self = original.clone();
                    retries += 1;
                    m *= 2;
                    log::warn!("all likelihoods underflowed; retrying with {m} tempered steps");
                }
                Err(Error::DegenerateUpdate { particles, .. }) => {
                    *self = original;
                    return Err(Error::DegenerateUpdate { particles, steps: m as usize });
                }
                Err(e) => {
                    *self = original;
                    return Err(e);
                }
            }
        }
    }

    fn tempered<F, R>(&mut self, loglik: &F, m: u32, opts: &UpdateOptions, rng: &mut R) -> Result<UpdateReport>
    where
        F: Fn(&Particle) -> f64 + Sync,
        R: Rng + ?Sized,
    {
        let exponent = 1.0 / m as f64;
        let mut resamples = 0;
        for _ in 0..m {
            let ll: Vec<f64> = self.locations.par_iter().map(loglik).collect();
            let log_w: Vec<f64> = self
                .weights
                .iter()
                .zip(&ll)
                .map(|(w, l)| {
                    let v = w.ln() + l * exponent;
                    if v.is_nan() {
                        f64::NEG_INFINITY
                    } else {
                        v
                    }
                })
                .collect();
            let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !max.is_finite() {
                return Err(Error::DegenerateUpdate { particles: self.len(), steps: m as usize });
            }
            for (w, lw) in self.weights.iter_mut().zip(&log_w) {
                *w = (lw - max).exp();
            }
            self.normalize()?;
            if self.effective_sample_size() < opts.resample_threshold * self.len() as f64 {
                liu_west_resample(self, opts.liu_west_a, rng)?;
                resamples += 1;
            }
        }
        Ok(UpdateReport { steps: m, resamples, retries: 0, n_eff: self.effective_sample_size() })
    }
}

/// Bayes update on one NV datum.
pub fn bayes_update<R: Rng + ?Sized>(
    cloud: &mut ParticleCloud,
    datum: &Datum,
    config: &ExperimentConfig,
    opts: &UpdateOptions,
    rng: &mut R,
) -> Result<UpdateReport> {
    config.validate()?;
    let steps = match opts.bridging {
        Bridging::Off => 1,
        Bridging::Fixed { steps } => steps,
        Bridging::Adaptive { esm_per_step } => (datum_esm(cloud, datum) / esm_per_step).ceil().max(1.0) as u32,
    };
    let loglik = |x: &Particle| log_likelihood(&refs_of(x), datum, survival_probability(&spin_of(x), config));
    cloud.update_with(loglik, steps, opts, rng)
}
