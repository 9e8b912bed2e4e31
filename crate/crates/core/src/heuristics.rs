//! Experiment-design policies: two offline sweeps and two online Bayes-risk
//! minimisers, all with repetition counts set by ESM targeting.

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::{choose_repetitions, ReferenceRates, RepetitionChoice};
use crate::model::{BRIGHT, DARK, RABI};
use crate::qutrit::{ExperimentConfig, ExperimentKind};
use crate::risk::{reference_sds, risk_profile, RiskEstimate, RiskSizes, WeightMatrix};
use crate::smc::{ParticleCloud, PriorSpec};

pub const RABI_T_MAX_NS: f64 = 500.0;
pub const RAMSEY_T_MAX_NS: f64 = 2000.0;
pub const SET_SIZE: usize = 100;
pub const DEFAULT_TARGET_ESM: f64 = 20.0;
pub const DEFAULT_MAX_REPETITIONS: u64 = 10_000_000;
/// Tracking fires when the posterior mean of α falls this many prior
/// standard deviations below the prior mean.
pub const TRACK_SIGMAS: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeuristicKind {
    AlternatingLinear,
    RamseySweeps,
    UniformRisk,
    MagnetometryRisk,
}

impl HeuristicKind {
    pub const ALL: [HeuristicKind; 4] = [
        HeuristicKind::AlternatingLinear,
        HeuristicKind::RamseySweeps,
        HeuristicKind::UniformRisk,
        HeuristicKind::MagnetometryRisk,
    ];

    pub fn is_online(self) -> bool {
        matches!(self, HeuristicKind::UniformRisk | HeuristicKind::MagnetometryRisk)
    }

    pub fn weight_matrix(self) -> Option<WeightMatrix> {
        match self {
            HeuristicKind::UniformRisk => Some(WeightMatrix::uniform()),
            HeuristicKind::MagnetometryRisk => Some(WeightMatrix::magnetometry()),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HeuristicKind::AlternatingLinear => "alternating_linear",
            HeuristicKind::RamseySweeps => "ramsey_sweeps",
            HeuristicKind::UniformRisk => "uniform_risk",
            HeuristicKind::MagnetometryRisk => "magnetometry_risk",
        }
    }
}

impl std::fmt::Display for HeuristicKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Rabi pulses `t_max/m, 2·t_max/m, …, t_max` at the default drive, N = 1.
pub fn experiment_set_rabi(t_max_ns: f64, m: usize) -> Vec<ExperimentConfig> {
    (1..=m).map(|k| ExperimentConfig::rabi(k as f64 * t_max_ns / m as f64, 1)).collect()
}

/// Ramsey waits `t_max/m, …, t_max` at fixed pulse time, N = 1.
pub fn experiment_set_ramsey(pulse_ns: f64, t_max_ns: f64, m: usize) -> Vec<ExperimentConfig> {
    (1..=m).map(|k| ExperimentConfig::ramsey(pulse_ns, k as f64 * t_max_ns / m as f64, 1)).collect()
}

/// `1/(4Ω̂)` in ns rounded to the nearest even nanosecond, halves away from
/// zero, and never below 2 ns.
pub fn best_tip_time_for(rabi_mhz: f64) -> Result<f64> {
    if !(rabi_mhz > 0.0 && rabi_mhz.is_finite()) {
        return Err(Error::InvalidArgument(format!("Rabi estimate {rabi_mhz} MHz must be positive")));
    }
    let t = 1000.0 / (4.0 * rabi_mhz);
    Ok((2.0 * (t / 2.0).round()).max(2.0))
}

pub fn best_tip_time(cloud: &ParticleCloud) -> Result<f64> {
    best_tip_time_for(cloud.mean()[RABI])
}

/// `N` for the target ESM, from posterior reference means and standard
/// deviations.
pub fn repetitions_for(cloud: &ParticleCloud, target_esm: f64, n_max: u64) -> Result<RepetitionChoice> {
    let mean = cloud.mean();
    let refs = ReferenceRates { bright: mean[BRIGHT], dark: mean[DARK] };
    choose_repetitions(&refs, reference_sds(cloud), target_esm, n_max)
}

/// True when the posterior mean of α is strictly below
/// `prior mean − 5·prior sd`.
pub fn should_track(cloud: &ParticleCloud, prior: &PriorSpec) -> bool {
    let bright = prior.references.bright;
    cloud.mean()[BRIGHT] < bright.mean - TRACK_SIGMAS * bright.sd
}

/// Index of the smallest risk; ties go to the shorter total evolution time,
/// then the lower index. Non-finite values never win.
pub fn argmin_risk(profile: &[(ExperimentConfig, RiskEstimate)]) -> Option<usize> {
    let key = |v: f64| if v.is_nan() { f64::INFINITY } else { v };
    (0..profile.len()).min_by(|&a, &b| {
        let (ea, ra) = &profile[a];
        let (eb, rb) = &profile[b];
        key(ra.value)
            .partial_cmp(&key(rb.value))
            .unwrap_or(Ordering::Equal)
            .then(ea.evolution_time_ns().partial_cmp(&eb.evolution_time_ns()).unwrap_or(Ordering::Equal))
            .then(a.cmp(&b))
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeuristicConfig {
    pub kind: HeuristicKind,
    #[serde(default)]
    pub risk_sizes: RiskSizes,
    #[serde(default = "default_target")]
    pub target_esm: f64,
    #[serde(default = "default_n_max")]
    pub max_repetitions: u64,
}

fn default_target() -> f64 {
    DEFAULT_TARGET_ESM
}

fn default_n_max() -> u64 {
    DEFAULT_MAX_REPETITIONS
}

impl HeuristicConfig {
    pub fn new(kind: HeuristicKind) -> Self {
        HeuristicConfig {
            kind,
            risk_sizes: RiskSizes::default(),
            target_esm: DEFAULT_TARGET_ESM,
            max_repetitions: DEFAULT_MAX_REPETITIONS,
        }
    }
}

/// One design decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub config: ExperimentConfig,
    pub repetitions: RepetitionChoice,
    /// Risk of the chosen candidate, for online heuristics.
    pub risk: Option<RiskEstimate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeuristicState {
    pub config: HeuristicConfig,
    pub step: usize,
}

impl HeuristicState {
    pub fn new(config: HeuristicConfig) -> Self {
        HeuristicState { config, step: 0 }
    }

    /// Offline schedule as a function of step and tip time only.
    pub fn offline_config(kind: HeuristicKind, step: usize, tip_ns: f64) -> Option<ExperimentConfig> {
        let at = |k: usize, t_max: f64| (k % SET_SIZE + 1) as f64 * t_max / SET_SIZE as f64;
        match kind {
            HeuristicKind::AlternatingLinear if step % 2 == 0 => {
                Some(ExperimentConfig::rabi(at(step / 2, RABI_T_MAX_NS), 1))
            }
            HeuristicKind::AlternatingLinear => Some(ExperimentConfig::ramsey(tip_ns, at(step / 2, RAMSEY_T_MAX_NS), 1)),
            HeuristicKind::RamseySweeps => Some(ExperimentConfig::ramsey(tip_ns, at(step, RAMSEY_T_MAX_NS), 1)),
            _ => None,
        }
    }

    /// The online candidate union, with the Ramsey tip time taken from the
    /// current Rabi estimate.
    pub fn candidates(cloud: &ParticleCloud) -> Result<Vec<ExperimentConfig>> {
        let tip = best_tip_time(cloud)?;
        let mut set = experiment_set_rabi(RABI_T_MAX_NS, SET_SIZE);
        set.extend(experiment_set_ramsey(tip, RAMSEY_T_MAX_NS, SET_SIZE));
        Ok(set)
    }

    /// Design the next experiment from `cloud` and advance the cursor.
    pub fn next_experiment<R: Rng + ?Sized>(&mut self, cloud: &ParticleCloud, rng: &mut R) -> Result<Design> {
        let cfg = &self.config;
        let reps = repetitions_for(cloud, cfg.target_esm, cfg.max_repetitions)?;
        if reps.saturated {
            log::warn!("target ESM {} unattainable; using N = {}", cfg.target_esm, reps.repetitions);
        }
        let design = match cfg.kind.weight_matrix() {
            None => {
                let tip = best_tip_time(cloud)?;
                let config = Self::offline_config(cfg.kind, self.step, tip)
                    .expect("offline kinds have a schedule")
                    .with_repetitions(reps.repetitions);
                Design { config, repetitions: reps, risk: None }
            }
            Some(q) => {
                let candidates: Vec<_> =
                    Self::candidates(cloud)?.into_iter().map(|e| e.with_repetitions(reps.repetitions)).collect();
                let profile = risk_profile(cloud, &candidates, &q, cfg.risk_sizes, false, rng)?;
                let best = argmin_risk(&profile)
                    .ok_or_else(|| Error::InvalidArgument("risk profile had no candidates".into()))?;
                let (config, risk) = profile[best];
                Design { config, repetitions: reps, risk: Some(risk) }
            }
        };
        self.step += 1;
        Ok(design)
    }
}

/// Position of a config in the 200-bin candidate grid: Rabi pulses first,
/// then Ramsey waits. `None` for off-grid configs.
pub fn candidate_bin(config: &ExperimentConfig) -> Option<usize> {
    let (t, step, offset) = match config.kind {
        ExperimentKind::Rabi => (config.pulse_time_ns, RABI_T_MAX_NS / SET_SIZE as f64, 0),
        ExperimentKind::Ramsey => (config.wait_time_ns, RAMSEY_T_MAX_NS / SET_SIZE as f64, SET_SIZE),
    };
    let k = (t / step).round();
    if (t - k * step).abs() > 1e-9 * step || k < 1.0 || k > SET_SIZE as f64 {
        return None;
    }
    Some(offset + k as usize - 1)
}
