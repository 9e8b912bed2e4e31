use nalgebra::{Matrix4, Vector4};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ParticleCloud, MAX_REDRAWS};
use crate::error::{Error, Result};
use crate::model::{self, DriftHyper, Particle, BRIGHT, DARK};
use crate::qutrit::SpinParams;

pub const WIDE_RABI: (f64, f64) = (0.0, 20.0);
pub const WIDE_ZEEMAN: (f64, f64) = (0.0, 10.0);
pub const WIDE_ZFS_OFFSET: (f64, f64) = (-5.0, 5.0);
pub const WIDE_HYPERFINE: (f64, f64) = (1.5, 3.5);
/// Range of T2* itself; the particle stores its inverse.
pub const WIDE_DEPHASING_TIME_US: (f64, f64) = (1.0, 20.0);

/// Mean of `(Ω, δD, A, 1/T2*)` from a previous calibration run.
pub const CALIBRATED_MEAN: [f64; 4] = [11.55, -0.86, 2.18, 0.35];
pub const CALIBRATED_COV: [[f64; 4]; 4] = [
    [2.56e-05, 1.02e-03, 7.67e-07, 3.80e-05],
    [1.02e-03, 1.06e-01, 1.97e-04, 2.50e-03],
    [7.67e-07, 1.97e-04, 7.51e-05, -1.02e-04],
    [3.80e-05, 2.50e-03, -1.02e-04, 1.01e-03],
];

pub const DRIFT_DOF: f64 = 30.0;
/// Prior-mean drift scale per √hour for both references.
pub const DRIFT_SIGMA: f64 = 0.036;
pub const DRIFT_CORRELATION: f64 = 0.7;

/// Prior on `(Ω, ωe, δD, A, 1/T2*)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HamiltonianPrior {
    /// Independent uniforms, with T2* (not its inverse) uniform.
    Wide,
    /// Gaussian on `(Ω, δD, A, 1/T2*)`, ωe uniform on the wide range.
    Calibrated { mean: [f64; 4], cov: [[f64; 4]; 4] },
    /// Gaussian on `(Ω, δD, A, 1/T2*)` and an independent Gaussian on ωe.
    Tight { mean: [f64; 4], cov: [[f64; 4]; 4], zeeman_mean: f64, zeeman_sd: f64 },
}

impl HamiltonianPrior {
    pub fn calibrated() -> Self {
        HamiltonianPrior::Calibrated { mean: CALIBRATED_MEAN, cov: CALIBRATED_COV }
    }

    pub fn tight(zeeman_mean: f64, zeeman_sd: f64) -> Self {
        HamiltonianPrior::Tight { mean: CALIBRATED_MEAN, cov: CALIBRATED_COV, zeeman_mean, zeeman_sd }
    }

    fn cholesky(cov: &[[f64; 4]; 4]) -> Result<Matrix4<f64>> {
        let m = Matrix4::from_fn(|r, c| cov[r][c]);
        if (m - m.transpose()).abs().max() > 1e-15 {
            return Err(Error::InconsistentPrior("calibrated covariance is not symmetric".into()));
        }
        m.cholesky()
            .map(|c| c.l())
            .ok_or_else(|| Error::InconsistentPrior("calibrated covariance is not positive definite".into()))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            HamiltonianPrior::Wide => Ok(()),
            HamiltonianPrior::Calibrated { cov, .. } => Self::cholesky(cov).map(|_| ()),
            HamiltonianPrior::Tight { cov, zeeman_sd, .. } => {
                if !(*zeeman_sd > 0.0) {
                    return Err(Error::InconsistentPrior("zeeman_sd must be positive".into()));
                }
                Self::cholesky(cov).map(|_| ())
            }
        }
    }

    /// Draw a valid spin hypothesis, rejecting Ω < 0 or 1/T2* < 0.
    pub fn sample_spin<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SpinParams> {
        match self {
            HamiltonianPrior::Wide => Ok(SpinParams {
                rabi_max: rng.random_range(WIDE_RABI.0..WIDE_RABI.1),
                zeeman: rng.random_range(WIDE_ZEEMAN.0..WIDE_ZEEMAN.1),
                zfs_offset: rng.random_range(WIDE_ZFS_OFFSET.0..WIDE_ZFS_OFFSET.1),
                hyperfine: rng.random_range(WIDE_HYPERFINE.0..WIDE_HYPERFINE.1),
                dephasing_rate: 1.0 / rng.random_range(WIDE_DEPHASING_TIME_US.0..WIDE_DEPHASING_TIME_US.1),
            }),
            HamiltonianPrior::Calibrated { mean, cov } | HamiltonianPrior::Tight { mean, cov, .. } => {
                let l = Self::cholesky(cov)?;
                let mean = Vector4::from_column_slice(mean);
                for _ in 0..MAX_REDRAWS {
                    let z = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
                    let v = mean + l * z;
                    let zeeman = match self {
                        HamiltonianPrior::Tight { zeeman_mean, zeeman_sd, .. } => {
                            zeeman_mean + zeeman_sd * rng.sample::<f64, _>(StandardNormal)
                        }
                        _ => rng.random_range(WIDE_ZEEMAN.0..WIDE_ZEEMAN.1),
                    };
                    if v[0] >= 0.0 && v[3] >= 0.0 {
                        return Ok(SpinParams {
                            rabi_max: v[0],
                            zeeman,
                            zfs_offset: v[1],
                            hyperfine: v[2],
                            dephasing_rate: v[3],
                        });
                    }
                }
                Err(Error::RedrawExhausted { what: "spin hypothesis", attempts: MAX_REDRAWS })
            }
        }
    }
}

/// Gamma distribution parametrised by its mean and standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub mean: f64,
    pub sd: f64,
}

impl GammaPrior {
    fn distribution(&self) -> Result<Gamma<f64>> {
        if !(self.mean > 0.0 && self.sd > 0.0 && self.mean.is_finite() && self.sd.is_finite()) {
            return Err(Error::InconsistentPrior(format!("gamma prior {self:?} is improper")));
        }
        let shape = (self.mean / self.sd).powi(2);
        let scale = self.sd * self.sd / self.mean;
        Gamma::new(shape, scale).map_err(|e| Error::InconsistentPrior(e.to_string()))
    }
}

/// Independent Gamma priors on the per-shot references, truncated to `β < α`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferencePrior {
    pub bright: GammaPrior,
    pub dark: GammaPrior,
}

impl ReferencePrior {
    /// Empirical prior from a reference-only acquisition of `n` shots:
    /// mean `X/N`, standard deviation `3√X/N`.
    pub fn empirical(bright_counts: u64, dark_counts: u64, n: u64) -> Result<Self> {
        if n == 0 || bright_counts == 0 || dark_counts == 0 {
            return Err(Error::InconsistentPrior(format!(
                "reference acquisition X={bright_counts}, Y={dark_counts}, N={n} cannot define a prior"
            )));
        }
        let n = n as f64;
        let g = |c: u64| GammaPrior { mean: c as f64 / n, sd: 3.0 * (c as f64).sqrt() / n };
        Ok(ReferencePrior { bright: g(bright_counts), dark: g(dark_counts) })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(f64, f64)> {
        let a = self.bright.distribution()?;
        let b = self.dark.distribution()?;
        for _ in 0..MAX_REDRAWS {
            let (alpha, beta) = (a.sample(rng), b.sample(rng));
            if 0.0 < beta && beta < alpha {
                return Ok((alpha, beta));
            }
        }
        Err(Error::InconsistentPrior(format!("no draws with 0 < β < α in {MAX_REDRAWS} attempts from {self:?}")))
    }
}

/// Inverse-Wishart prior on the 2×2 hourly drift covariance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseWishart {
    pub dof: f64,
    pub scale: [[f64; 2]; 2],
}

impl Default for InverseWishart {
    /// Prior mean `Ψ/(ν − 3)` equals the covariance with σ = 0.036 and ρ = 0.7.
    fn default() -> Self {
        let mean = DriftHyper { sigma_bright: DRIFT_SIGMA, sigma_dark: DRIFT_SIGMA, correlation: DRIFT_CORRELATION }
            .hourly_covariance();
        let k = DRIFT_DOF - 3.0;
        InverseWishart { dof: DRIFT_DOF, scale: mean.map(|row| row.map(|v| v * k)) }
    }
}

impl InverseWishart {
    pub fn mean(&self) -> [[f64; 2]; 2] {
        let k = self.dof - 3.0;
        self.scale.map(|row| row.map(|v| v / k))
    }

    pub fn validate(&self) -> Result<()> {
        let [[a, b], [c, d]] = self.scale;
        if self.dof > 3.0 && a > 0.0 && (b - c).abs() <= 1e-15 * a.max(d) && a * d - b * c > 0.0 {
            Ok(())
        } else {
            Err(Error::InconsistentPrior(format!("inverse-Wishart {self:?} is improper or has no mean")))
        }
    }

    /// Bartlett draw of `W ~ Wishart(ν, Ψ⁻¹)`, returned as `W⁻¹`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<[[f64; 2]; 2]> {
        self.validate()?;
        let [[a, b], [_, d]] = self.scale;
        let det = a * d - b * b;
        let (v11, v12, v22) = (d / det, -b / det, a / det);
        let l11 = v11.sqrt();
        let l21 = v12 / l11;
        let l22 = (v22 - l21 * l21).sqrt();

        let chi = |k: f64| ChiSquared::new(k).map_err(|e| Error::InconsistentPrior(e.to_string()));
        let c1 = chi(self.dof)?.sample(rng).sqrt();
        let c2 = chi(self.dof - 1.0)?.sample(rng).sqrt();
        let n21: f64 = rng.sample(StandardNormal);

        // M = L·A with A = [[c1, 0], [n21, c2]]; W = M Mᵀ.
        let m11 = l11 * c1;
        let m21 = l21 * c1 + l22 * n21;
        let m22 = l22 * c2;
        let w11 = m11 * m11;
        let w12 = m11 * m21;
        let w22 = m21 * m21 + m22 * m22;
        let wdet = w11 * w22 - w12 * w12;
        Ok([[w22 / wdet, -w12 / wdet], [-w12 / wdet, w11 / wdet]])
    }

    pub fn sample_hyper<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DriftHyper> {
        Ok(DriftHyper::from_covariance(self.sample(rng)?))
    }
}

/// Full prior over the 10-parameter hypothesis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub hamiltonian: HamiltonianPrior,
    pub references: ReferencePrior,
    #[serde(default)]
    pub drift: InverseWishart,
}

impl PriorSpec {
    pub fn new(hamiltonian: HamiltonianPrior, references: ReferencePrior) -> Self {
        PriorSpec { hamiltonian, references, drift: InverseWishart::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.hamiltonian.validate()?;
        self.references.bright.distribution()?;
        self.references.dark.distribution()?;
        self.drift.validate()
    }

    pub fn sample_particle<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Particle> {
        let spin = self.hamiltonian.sample_spin(rng)?;
        let (bright, dark) = self.references.sample(rng)?;
        let drift = self.drift.sample_hyper(rng)?;
        let params = model::ModelParameters {
            spin,
            refs: crate::measurement::ReferenceRates { bright, dark },
            drift,
        };
        Ok(params.to_particle())
    }
}

/// `K` i.i.d. prior draws with uniform weights.
pub fn sample_prior<R: Rng + ?Sized>(spec: &PriorSpec, k: usize, rng: &mut R) -> Result<ParticleCloud> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 particles, got {k}")));
    }
    spec.validate()?;
    let locations = (0..k).map(|_| spec.sample_particle(rng)).collect::<Result<Vec<_>>>()?;
    ParticleCloud::uniform(locations)
}

/// Redraw every particle's `(α, β)` from the reference prior; nothing else changes.
pub fn reference_reset<R: Rng + ?Sized>(cloud: &mut ParticleCloud, prior: &ReferencePrior, rng: &mut R) -> Result<()> {
    for x in &mut cloud.locations {
        let (alpha, beta) = prior.sample(rng)?;
        x[BRIGHT] = alpha;
        x[DARK] = beta;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use crate::model::DIM;

    #[test]
    fn default_drift_prior_mean() {
        let iw = InverseWishart::default();
        let m = iw.mean();
        assert!((m[0][0] - 0.036f64.powi(2)).abs() < 1e-15);
        assert!((m[0][1] - 0.7 * 0.036f64.powi(2)).abs() < 1e-15);
    }

    #[test]
    fn bartlett_sample_mean_matches_prior_mean() {
        let iw = InverseWishart::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 40_000;
        let mut acc = [[0.0; 2]; 2];
        for _ in 0..n {
            let s = iw.sample(&mut rng).unwrap();
            for r in 0..2 {
                for c in 0..2 {
                    acc[r][c] += s[r][c] / n as f64;
                }
            }
        }
        let m = iw.mean();
        // Var of an IW diagonal entry is 2m²/(ν−5); 5σ band on the sample mean.
        let band = 5.0 * (2.0 / 25.0f64).sqrt() * m[0][0] / (n as f64).sqrt();
        assert!((acc[0][0] - m[0][0]).abs() < band, "{acc:?} vs {m:?}");
        assert!((acc[1][1] - m[1][1]).abs() < band);
        assert!((acc[0][1] - m[0][1]).abs() < band);
    }

    #[test]
    fn wide_prior_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..2000 {
            let s = HamiltonianPrior::Wide.sample_spin(&mut rng).unwrap();
            assert!((0.0..20.0).contains(&s.rabi_max));
            assert!((0.0..10.0).contains(&s.zeeman));
            assert!((-5.0..5.0).contains(&s.zfs_offset));
            assert!((1.5..3.5).contains(&s.hyperfine));
            assert!(s.dephasing_rate > 1.0 / 20.0 && s.dephasing_rate <= 1.0);
        }
    }

    #[test]
    fn calibrated_prior_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 20_000;
        let prior = HamiltonianPrior::calibrated();
        let mut acc = [0.0; 4];
        for _ in 0..n {
            let s = prior.sample_spin(&mut rng).unwrap();
            acc[0] += s.rabi_max / n as f64;
            acc[1] += s.zfs_offset / n as f64;
            acc[2] += s.hyperfine / n as f64;
            acc[3] += s.dephasing_rate / n as f64;
        }
        for k in 0..4 {
            let band = 5.0 * CALIBRATED_COV[k][k].sqrt() / (n as f64).sqrt();
            assert!((acc[k] - CALIBRATED_MEAN[k]).abs() < band, "{k}: {}", acc[k]);
        }
    }

    #[test]
    fn empirical_reference_prior_moments() {
        let prior = ReferencePrior::empirical(15_000, 6_000, 300_000).unwrap();
        assert!((prior.bright.mean - 0.05).abs() < 1e-15);
        assert!((prior.bright.sd - 3.0 * 15_000f64.sqrt() / 300_000.0).abs() < 1e-15);
        assert!(ReferencePrior::empirical(0, 10, 100).is_err());
    }

    #[test]
    fn inconsistent_reference_prior_fails() {
        let prior = ReferencePrior {
            bright: GammaPrior { mean: 0.01, sd: 1e-5 },
            dark: GammaPrior { mean: 0.05, sd: 1e-5 },
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(prior.sample(&mut rng), Err(Error::InconsistentPrior(_))));
    }

    #[test]
    fn prior_cloud_is_valid_and_uniform() {
        let spec = PriorSpec::new(HamiltonianPrior::Wide, ReferencePrior::empirical(15_000, 6_000, 300_000).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cloud = sample_prior(&spec, 500, &mut rng).unwrap();
        assert!(cloud.locations.iter().all(model::is_valid));
        assert!(cloud.weights.iter().all(|w| *w == 1.0 / 500.0));
        assert!(sample_prior(&spec, 1, &mut rng).is_err());
    }

    #[test]
    fn reference_reset_touches_only_references() {
        let refs = ReferencePrior::empirical(15_000, 6_000, 300_000).unwrap();
        let spec = PriorSpec::new(HamiltonianPrior::Wide, refs);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut cloud = sample_prior(&spec, 50, &mut rng).unwrap();
        cloud.weights[0] *= 3.0;
        cloud.normalize().unwrap();
        let before = cloud.clone();
        reference_reset(&mut cloud, &refs, &mut rng).unwrap();
        assert_eq!(cloud.weights, before.weights);
        for (a, b) in cloud.locations.iter().zip(&before.locations) {
            for k in (0..DIM).filter(|k| *k != BRIGHT && *k != DARK) {
                assert_eq!(a[k], b[k]);
            }
            assert_ne!(a[BRIGHT], b[BRIGHT]);
        }
    }
}
