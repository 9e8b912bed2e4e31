//! Referenced-Poisson photon counting.
//!
//! A datum is the triple `(X, Y, Z)` summed over `N` repetitions:
//! `X ~ Poisson(Nα)`, `Y ~ Poisson(Nβ)`, `Z ~ Poisson(N(β + p(α − β)))`,
//! where `α > β > 0` are per-shot bright/dark reference rates.

use nalgebra::Matrix3;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

pub mod equivalence;

/// Per-shot bright (`α`) and dark (`β`) reference rates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRates {
    pub bright: f64,
    pub dark: f64,
}

impl ReferenceRates {
    pub fn new(bright: f64, dark: f64) -> Result<Self> {
        let refs = ReferenceRates { bright, dark };
        refs.validate()?;
        Ok(refs)
    }

    pub fn is_valid(&self) -> bool {
        self.dark.is_finite() && self.bright.is_finite() && 0.0 < self.dark && self.dark < self.bright
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("references must satisfy 0 < dark < bright: {self:?}")))
        }
    }

    /// Per-shot rate of the signal channel.
    pub fn signal_rate(&self, p: f64) -> f64 {
        self.dark + p * (self.bright - self.dark)
    }
}

/// One photon-count triple.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Datum {
    pub bright_counts: u64,
    pub dark_counts: u64,
    pub signal_counts: u64,
    pub repetitions: u64,
    /// Wall-clock (or simulated) acquisition time in seconds.
    pub timestamp: f64,
}

fn draw_poisson<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> u64 {
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).expect("finite positive rate").sample(rng) as u64
}

/// Draw `(X, Y, Z)` for survival probability `p` with `n` repetitions.
pub fn sample_datum<R: Rng + ?Sized>(p: f64, refs: &ReferenceRates, n: u64, rng: &mut R) -> Result<Datum> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::ProbabilityOutOfRange(p));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("repetitions must be at least 1".into()));
    }
    refs.validate()?;
    let n_f = n as f64;
    Ok(Datum {
        bright_counts: draw_poisson(n_f * refs.bright, rng),
        dark_counts: draw_poisson(n_f * refs.dark, rng),
        signal_counts: draw_poisson(n_f * refs.signal_rate(p), rng),
        repetitions: n,
        timestamp: 0.0,
    })
}

/// `ln(e^{−λ} λ^k / k!)`.
pub fn poisson_ln_pmf(k: u64, rate: f64) -> f64 {
    if rate == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if k == 0 {
        return -rate;
    }
    let k_f = k as f64;
    k_f * rate.ln() - rate - ln_gamma(k_f + 1.0)
}

/// Log-likelihood of a datum given references and survival probability.
pub fn log_likelihood(refs: &ReferenceRates, datum: &Datum, p: f64) -> f64 {
    let n = datum.repetitions as f64;
    poisson_ln_pmf(datum.bright_counts, n * refs.bright)
        + poisson_ln_pmf(datum.dark_counts, n * refs.dark)
        + poisson_ln_pmf(datum.signal_counts, n * refs.signal_rate(p))
}

/// Inputs to the ESM metric, all on the total (summed over `N`) scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EsmInputs {
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub sigma_alpha: f64,
    pub sigma_beta: f64,
}

impl EsmInputs {
    /// Scale per-shot estimates and uncertainties up to `n` repetitions.
    pub fn from_per_shot(refs: &ReferenceRates, sigmas: (f64, f64), n: u64) -> Self {
        let n = n as f64;
        EsmInputs {
            alpha_hat: n * refs.bright,
            beta_hat: n * refs.dark,
            sigma_alpha: n * sigmas.0,
            sigma_beta: n * sigmas.1,
        }
    }
}

/// Number of effective strong measurements:
/// `(α̂ − β̂)² / (3(α̂ + β̂) + 2(σ_α² + σ_β²))`.
pub fn esm(inputs: &EsmInputs) -> f64 {
    let contrast = inputs.alpha_hat - inputs.beta_hat;
    let denom = 3.0 * (inputs.alpha_hat + inputs.beta_hat)
        + 2.0 * (inputs.sigma_alpha.powi(2) + inputs.sigma_beta.powi(2));
    if denom <= 0.0 {
        return 0.0;
    }
    contrast * contrast / denom
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepetitionChoice {
    pub repetitions: u64,
    /// True when the target ESM is unreachable at or below `n_max`.
    pub saturated: bool,
}

/// Smallest `N` whose expected ESM reaches `target`, or `n_max` (flagged
/// saturated) when the uncertainty floor `Δ²/(2σ²)` keeps it out of reach.
pub fn choose_repetitions(
    per_shot: &ReferenceRates,
    per_shot_sigmas: (f64, f64),
    target: f64,
    n_max: u64,
) -> Result<RepetitionChoice> {
    if !(target > 0.0) {
        return Err(Error::InvalidArgument(format!("target ESM must be positive, got {target}")));
    }
    let n_max = n_max.max(1);
    let saturated = RepetitionChoice { repetitions: n_max, saturated: true };
    let contrast_sq = (per_shot.bright - per_shot.dark).powi(2);
    let total = per_shot.bright + per_shot.dark;
    let var = per_shot_sigmas.0.powi(2) + per_shot_sigmas.1.powi(2);
    let headroom = contrast_sq - 2.0 * target * var;
    if headroom <= 0.0 {
        return Ok(saturated);
    }
    let esm_at = |n: u64| esm(&EsmInputs::from_per_shot(per_shot, per_shot_sigmas, n));
    let estimate = (3.0 * total * target / headroom).ceil();
    if !estimate.is_finite() || estimate > n_max as f64 {
        return Ok(if esm_at(n_max) >= target {
            RepetitionChoice { repetitions: n_max, saturated: false }
        } else {
            saturated
        });
    }
    // Closed form, then correct any last-ulp disagreement with the direct formula.
    let mut n = (estimate as u64).max(1);
    while n > 1 && esm_at(n - 1) >= target {
        n -= 1;
    }
    while esm_at(n) < target {
        if n >= n_max {
            return Ok(saturated);
        }
        n += 1;
    }
    Ok(RepetitionChoice { repetitions: n, saturated: false })
}

/// Fisher information of a single `(X, Y, Z)` triple in `(p, α, β)`, with
/// its closed-form inverse. Rates are on the total scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FisherInformation {
    pub matrix: Matrix3<f64>,
    pub inverse: Matrix3<f64>,
}

pub fn fisher_information(p: f64, alpha: f64, beta: f64) -> FisherInformation {
    let d = alpha - beta;
    let lam = p * d + beta;
    let matrix = Matrix3::new(
        d * d / lam,
        p * d / lam,
        alpha / lam - 1.0,
        p * d / lam,
        p * p / lam + 1.0 / alpha,
        -(p - 1.0) * p / lam,
        alpha / lam - 1.0,
        -(p - 1.0) * p / lam,
        (p * alpha + (p - 2.0) * (p - 1.0) * beta) / (beta * lam),
    );
    let inverse = Matrix3::new(
        (p * (p + 1.0) * alpha + (p - 2.0) * (p - 1.0) * beta) / (d * d),
        p * alpha / (beta - alpha),
        (p - 1.0) * beta / d,
        p * alpha / (beta - alpha),
        alpha,
        0.0,
        (p - 1.0) * beta / d,
        0.0,
        beta,
    );
    FisherInformation { matrix, inverse }
}

/// Variance bound on `p` with partial prior knowledge of the references,
/// interpolating between perfect knowledge (`σ = 0`) and a single reference
/// sample (`σ_α² = α`, `σ_β² = β`).
pub fn interpolated_variance_bound(p: f64, alpha: f64, beta: f64, sigma_alpha: f64, sigma_beta: f64) -> f64 {
    let sa2 = sigma_alpha * sigma_alpha;
    let sb2 = sigma_beta * sigma_beta;
    (beta + p * (alpha - beta + p * sa2 + (p - 2.0) * sb2) + sb2) / (alpha - beta).powi(2)
}
