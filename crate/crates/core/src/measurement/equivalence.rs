//! Monte Carlo comparison of the Bayes mean-squared error of the
//! referenced-Poisson model with a binomial model of `n = round(ESM)` strong
//! measurements, both with a uniform prior on `p`.
//!
//! Prior knowledge of the references is a Gamma prior with the given mean and
//! standard deviation; only `Z` is observed. The posterior mean `E[p | Z]` is
//! tabulated by quadrature over `(α, β, p)` and looked up per sample.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma as GammaDist, Poisson};
use statrs::distribution::{ContinuousCDF, Gamma};

use super::{esm, EsmInputs};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EquivalenceRegime {
    pub alpha: f64,
    pub beta: f64,
    pub sigma_alpha: f64,
    pub sigma_beta: f64,
}

impl EquivalenceRegime {
    pub fn esm(&self) -> f64 {
        esm(&EsmInputs {
            alpha_hat: self.alpha,
            beta_hat: self.beta,
            sigma_alpha: self.sigma_alpha,
            sigma_beta: self.sigma_beta,
        })
    }

    pub fn binomial_trials(&self) -> u64 {
        self.esm().round() as u64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MseComparison {
    pub p_grid: Vec<f64>,
    pub referenced_poisson: Vec<f64>,
    pub binomial: Vec<f64>,
    pub trials: u64,
}

impl MseComparison {
    /// `|mse_rp / mse_bin − 1|` at each grid point.
    pub fn relative_errors(&self) -> Vec<f64> {
        self.referenced_poisson
            .iter()
            .zip(&self.binomial)
            .map(|(a, b)| (a / b - 1.0).abs())
            .collect()
    }

    /// Relative error of the grid-averaged MSEs.
    pub fn averaged_relative_error(&self) -> f64 {
        let a: f64 = self.referenced_poisson.iter().sum();
        let b: f64 = self.binomial.iter().sum();
        (a / b - 1.0).abs()
    }
}

/// Equal-probability midpoints of a Gamma law with the given moments.
fn gamma_nodes(mean: f64, sd: f64, count: usize) -> Vec<f64> {
    let shape = (mean / sd).powi(2);
    let rate = mean / (sd * sd);
    let law = Gamma::new(shape, rate).expect("valid gamma moments");
    (0..count)
        .map(|i| law.inverse_cdf((i as f64 + 0.5) / count as f64))
        .collect()
}

struct QuadraturePoint {
    ln_weight: f64,
    rate: f64,
    ln_rate: f64,
    p: f64,
}

/// `E[p | Z = z]` for `z` in `z_lo..=z_hi`.
pub fn posterior_mean_table(regime: &EquivalenceRegime, z_lo: u64, z_hi: u64, nodes: usize) -> Vec<f64> {
    let alphas = gamma_nodes(regime.alpha, regime.sigma_alpha, nodes);
    let betas = gamma_nodes(regime.beta, regime.sigma_beta, nodes);
    // composite Simpson on p ∈ [0, 1]
    let intervals = 256;
    let mut points = Vec::with_capacity(nodes * nodes * (intervals + 1));
    for &a in &alphas {
        for &b in &betas {
            if a <= b {
                continue;
            }
            for m in 0..=intervals {
                let p = m as f64 / intervals as f64;
                let simpson = if m == 0 || m == intervals {
                    1.0
                } else if m % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                let rate = b + p * (a - b);
                points.push(QuadraturePoint { ln_weight: f64::ln(simpson), rate, ln_rate: rate.ln(), p });
            }
        }
    }
    (z_lo..=z_hi)
        .map(|z| {
            let z = z as f64;
            let max = points
                .iter()
                .map(|q| q.ln_weight + z * q.ln_rate - q.rate)
                .fold(f64::NEG_INFINITY, f64::max);
            let (mut num, mut den) = (0.0, 0.0);
            for q in &points {
                let w = (q.ln_weight + z * q.ln_rate - q.rate - max).exp();
                num += w * q.p;
                den += w;
            }
            num / den
        })
        .collect()
}

fn draw_references<R: Rng + ?Sized>(regime: &EquivalenceRegime, rng: &mut R) -> (f64, f64) {
    let law = |mean: f64, sd: f64| GammaDist::new((mean / sd).powi(2), sd * sd / mean).expect("valid gamma");
    let (la, lb) = (law(regime.alpha, regime.sigma_alpha), law(regime.beta, regime.sigma_beta));
    loop {
        let a = la.sample(rng);
        let b = lb.sample(rng);
        if a > b {
            return (a, b);
        }
    }
}

/// Monte Carlo Bayes MSE of both models on `p_grid` with `samples` draws per
/// grid point. Reference rates are redrawn from their prior for every sample.
pub fn compare_bayes_mse<R: Rng + ?Sized>(
    regime: &EquivalenceRegime,
    p_grid: &[f64],
    samples: usize,
    rng: &mut R,
) -> MseComparison {
    let trials = regime.binomial_trials();
    let mut signal = Vec::with_capacity(p_grid.len());
    for &p in p_grid {
        let zs: Vec<u64> = (0..samples)
            .map(|_| {
                let (a, b) = draw_references(regime, rng);
                Poisson::new(b + p * (a - b)).expect("positive rate").sample(rng) as u64
            })
            .collect();
        signal.push(zs);
    }
    let z_lo = signal.iter().flatten().copied().min().unwrap_or(0);
    let z_hi = signal.iter().flatten().copied().max().unwrap_or(0);
    let table = posterior_mean_table(regime, z_lo, z_hi, 32);

    let mut referenced_poisson = Vec::with_capacity(p_grid.len());
    let mut binomial = Vec::with_capacity(p_grid.len());
    for (&p, zs) in p_grid.iter().zip(&signal) {
        let mse = zs
            .iter()
            .map(|&z| (table[(z - z_lo) as usize] - p).powi(2))
            .sum::<f64>()
            / samples as f64;
        referenced_poisson.push(mse);

        let law = Binomial::new(trials, p).expect("valid binomial");
        let mse_bin = (0..samples)
            .map(|_| {
                let k = law.sample(rng) as f64;
                ((k + 1.0) / (trials as f64 + 2.0) - p).powi(2)
            })
            .sum::<f64>()
            / samples as f64;
        binomial.push(mse_bin);
    }
    MseComparison { p_grid: p_grid.to_vec(), referenced_poisson, binomial, trials }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn posterior_mean_is_increasing_in_counts() {
        let regime = EquivalenceRegime { alpha: 200.0, beta: 100.0, sigma_alpha: 10.0, sigma_beta: 7.0 };
        let table = posterior_mean_table(&regime, 60, 260, 12);
        assert!(table.windows(2).all(|w| w[1] >= w[0]));
        assert!(table[0] < 0.1 && *table.last().unwrap() > 0.9);
    }

    #[test]
    fn binomial_trial_count_rounds_esm() {
        let regime = EquivalenceRegime { alpha: 50.0, beta: 20.0, sigma_alpha: 0.0, sigma_beta: 0.0 };
        assert_eq!(regime.binomial_trials(), 4);
    }
}
