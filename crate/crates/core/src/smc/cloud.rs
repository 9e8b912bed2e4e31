use std::path::Path;

use nalgebra::SMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Particle, DIM};

pub type Mat10 = SMatrix<f64, DIM, DIM>;

pub const CLOUD_FORMAT_VERSION: u32 = 1;

/// Weighted particle approximation `π(x) = Σ w_i δ(x − x_i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleCloud {
    pub locations: Vec<Particle>,
    pub weights: Vec<f64>,
    /// Simulated time of the most recent update, in hours.
    pub last_update_time: f64,
}

#[derive(Serialize, Deserialize)]
struct CloudFile {
    version: u32,
    #[serde(flatten)]
    cloud: ParticleCloud,
}

impl ParticleCloud {
    pub fn new(locations: Vec<Particle>, weights: Vec<f64>, last_update_time: f64) -> Result<Self> {
        if locations.is_empty() || locations.len() != weights.len() {
            return Err(Error::InvalidArgument(format!(
                "{} locations with {} weights",
                locations.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
        }
        let mut cloud = ParticleCloud { locations, weights, last_update_time };
        cloud.normalize()?;
        Ok(cloud)
    }

    pub fn uniform(locations: Vec<Particle>) -> Result<Self> {
        if locations.is_empty() {
            return Err(Error::InvalidArgument("cloud needs at least one particle".into()));
        }
        let k = locations.len();
        Ok(ParticleCloud { locations, weights: vec![1.0 / k as f64; k], last_update_time: 0.0 })
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub(crate) fn normalize(&mut self) -> Result<()> {
        let total: f64 = self.weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::DegenerateUpdate { particles: self.len(), steps: 0 });
        }
        for w in &mut self.weights {
            *w /= total;
        }
        Ok(())
    }

    pub fn mean(&self) -> Particle {
        posterior_mean(self)
    }

    pub fn covariance(&self) -> Mat10 {
        posterior_cov(self)
    }

    /// Diagonal of the posterior covariance.
    pub fn variance(&self) -> Particle {
        let mean = self.mean();
        let mut var = [0.0; DIM];
        for (x, w) in self.locations.iter().zip(&self.weights) {
            for k in 0..DIM {
                var[k] += w * (x[k] - mean[k]).powi(2);
            }
        }
        var
    }

    pub fn effective_sample_size(&self) -> f64 {
        effective_sample_size(self)
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Borrowed<'a> {
            version: u32,
            #[serde(flatten)]
            cloud: &'a ParticleCloud,
        }
        Ok(serde_json::to_string(&Borrowed { version: CLOUD_FORMAT_VERSION, cloud: self })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CloudFile = serde_json::from_str(text)?;
        if file.version != CLOUD_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion { found: file.version, expected: CLOUD_FORMAT_VERSION });
        }
        Ok(file.cloud)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

pub fn posterior_mean(cloud: &ParticleCloud) -> Particle {
    let mut mean = [0.0; DIM];
    for (x, w) in cloud.locations.iter().zip(&cloud.weights) {
        for k in 0..DIM {
            mean[k] += w * x[k];
        }
    }
    mean
}

/// Weighted covariance `Σ w_i (x_i − x̄)(x_i − x̄)ᵀ`, symmetric by construction.
pub fn posterior_cov(cloud: &ParticleCloud) -> Mat10 {
    let mean = posterior_mean(cloud);
    let mut cov = Mat10::zeros();
    for (x, w) in cloud.locations.iter().zip(&cloud.weights) {
        for r in 0..DIM {
            let dr = x[r] - mean[r];
            for c in 0..=r {
                cov[(r, c)] += w * dr * (x[c] - mean[c]);
            }
        }
    }
    for r in 0..DIM {
        for c in 0..r {
            cov[(c, r)] = cov[(r, c)];
        }
    }
    cov
}

/// `n_eff = 1 / Σ w_i²`.
pub fn effective_sample_size(cloud: &ParticleCloud) -> f64 {
    1.0 / cloud.weights.iter().map(|w| w * w).sum::<f64>()
}
