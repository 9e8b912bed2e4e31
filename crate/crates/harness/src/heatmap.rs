//! Accuracy and cost of the MIS risk estimator as a function of its sample
//! sizes, measured against one large-sample reference evaluation.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use nvdesign_core::heuristics::{repetitions_for, HeuristicKind, HeuristicState, DEFAULT_MAX_REPETITIONS};
use nvdesign_core::risk::{risk_profile, RiskSizes};
use nvdesign_core::smc::{sample_prior, HamiltonianPrior, ParticleCloud, PriorSpec, ReferencePrior};
use nvdesign_core::ReferenceRates;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{DEFAULT_REFERENCE_REPS, DEFAULT_TRUTH_REFS};

fn default_heuristic() -> HeuristicKind {
    HeuristicKind::UniformRisk
}
fn default_particles() -> usize {
    4000
}
fn default_reference() -> RiskSizes {
    RiskSizes { outcomes: 4000, particles: 4000 }
}
fn default_outcomes() -> Vec<usize> {
    vec![64, 128, 256, 512, 1024]
}
fn default_inner() -> Vec<usize> {
    vec![128, 256, 512, 1024, 2048]
}
fn default_seeds() -> usize {
    10
}
fn default_target() -> f64 {
    20.0
}
fn default_stride() -> usize {
    1
}
fn default_out() -> PathBuf {
    PathBuf::from("heatmap")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatmapConfig {
    pub prior: HamiltonianPrior,
    /// Online heuristic whose weight matrix defines the risk.
    #[serde(default = "default_heuristic")]
    pub heuristic: HeuristicKind,
    /// Size of the cloud the risk is evaluated on.
    #[serde(default = "default_particles")]
    pub particles: usize,
    #[serde(default = "default_reference")]
    pub reference: RiskSizes,
    /// Tested `K′` values.
    #[serde(default = "default_outcomes")]
    pub outcomes: Vec<usize>,
    /// Tested `K` values.
    #[serde(default = "default_inner")]
    pub inner: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_target")]
    pub target_esm: f64,
    /// Evaluate every `candidate_stride`-th candidate only.
    #[serde(default = "default_stride")]
    pub candidate_stride: usize,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
}

impl HeatmapConfig {
    pub fn new(prior: HamiltonianPrior) -> Self {
        serde_json::from_value(serde_json::json!({ "prior": prior })).expect("defaults deserialize")
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.heuristic.weight_matrix().is_none() {
            bail!("heatmap needs an online heuristic, got {}", self.heuristic);
        }
        if self.outcomes.is_empty() || self.inner.is_empty() || self.seeds == 0 || self.candidate_stride == 0 {
            bail!("heatmap grid, seeds and stride must be nonempty");
        }
        let max_out = *self.outcomes.iter().max().expect("nonempty");
        let max_in = *self.inner.iter().max().expect("nonempty");
        if self.reference.outcomes < max_out || self.reference.particles < max_in {
            bail!("reference sizes {:?} must cover every tested size", self.reference);
        }
        if self.outcomes.contains(&0) || self.inner.contains(&0) || self.particles < 2 {
            bail!("sizes must be positive");
        }
        self.prior.validate()?;
        Ok(())
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let config: HeatmapConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapCell {
    pub outcomes: usize,
    pub particles: usize,
    pub seed: usize,
    /// Mean over candidates of the squared deviation from the reference risk.
    pub log10_mse: f64,
    pub log10_seconds: f64,
}

/// Prior cloud with references as if from an ideal reference acquisition.
pub fn heatmap_cloud(config: &HeatmapConfig, rng: &mut ChaCha8Rng) -> anyhow::Result<ParticleCloud> {
    let ReferenceRates { bright, dark } = DEFAULT_TRUTH_REFS;
    let n = DEFAULT_REFERENCE_REPS;
    let refs = ReferencePrior::empirical((bright * n as f64).round() as u64, (dark * n as f64).round() as u64, n)?;
    Ok(sample_prior(&PriorSpec::new(config.prior.clone(), refs), config.particles, rng)?)
}

pub fn risk_heatmap(config: &HeatmapConfig) -> anyhow::Result<Vec<HeatmapCell>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let cloud = heatmap_cloud(config, &mut rng)?;
    let q = config.heuristic.weight_matrix().expect("validated online heuristic");
    let reps = repetitions_for(&cloud, config.target_esm, DEFAULT_MAX_REPETITIONS)?.repetitions;
    let candidates: Vec<_> = HeuristicState::candidates(&cloud)?
        .into_iter()
        .step_by(config.candidate_stride)
        .map(|e| e.with_repetitions(reps))
        .collect();

    let reference: Vec<f64> = risk_profile(&cloud, &candidates, &q, config.reference, false, &mut rng)?
        .iter()
        .map(|(_, r)| r.value)
        .collect();

    let mut cells = Vec::new();
    for &outcomes in &config.outcomes {
        for &particles in &config.inner {
            for seed in 0..config.seeds {
                let mut cell_rng = ChaCha8Rng::seed_from_u64(rng.next_u64());
                let sizes = RiskSizes { outcomes, particles };
                let start = Instant::now();
                let profile = risk_profile(&cloud, &candidates, &q, sizes, false, &mut cell_rng)?;
                let seconds = start.elapsed().as_secs_f64();
                let mse = profile.iter().zip(&reference).map(|((_, r), r0)| (r.value - r0).powi(2)).sum::<f64>()
                    / reference.len() as f64;
                cells.push(HeatmapCell {
                    outcomes,
                    particles,
                    seed,
                    log10_mse: mse.log10(),
                    log10_seconds: seconds.log10(),
                });
            }
        }
    }
    Ok(cells)
}

pub fn write_heatmap_csv(cells: &[HeatmapCell], path: &Path) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for c in cells {
        w.serialize(c)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        HeatmapConfig::new(HamiltonianPrior::Wide).validate().unwrap();
    }

    #[test]
    fn reference_must_cover_grid() {
        let mut c = HeatmapConfig::new(HamiltonianPrior::Wide);
        c.outcomes.push(5000);
        assert!(c.validate().is_err());
        c.outcomes.pop();
        c.heuristic = HeuristicKind::RamseySweeps;
        assert!(c.validate().is_err());
    }
}
