//! JSON run configuration.
//!
//! ```json
//! {
//!   "heuristics": ["alternating_linear", "magnetometry_risk"],
//!   "prior": {"kind": "wide"},
//!   "trials": 20,
//!   "experiments": 100,
//!   "particles": 4000,
//!   "risk_sizes": {"outcomes": 512, "particles": 1024},
//!   "target_esm": 20.0,
//!   "seed": 1,
//!   "out_dir": "results",
//!   "lab": {"mode": "in_process"}
//! }
//! ```
//!
//! Every other field is optional; see [`RunConfig`] for defaults. A TCP lab
//! is selected with `"lab": {"mode": "tcp", "address": "127.0.0.1:7070"}`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use nvdesign_core::heuristics::{HeuristicConfig, HeuristicKind, DEFAULT_MAX_REPETITIONS, DEFAULT_TARGET_ESM};
use nvdesign_core::risk::RiskSizes;
use nvdesign_core::smc::{HamiltonianPrior, UpdateOptions};
use nvdesign_core::ReferenceRates;
use nvdesign_lab::LabSettings;
use serde::{Deserialize, Serialize};

/// Shots in the reference-only acquisition taken at the start of a trial.
pub const DEFAULT_REFERENCE_REPS: u64 = 300_000;

/// Nominal per-shot references of simulated truths.
pub const DEFAULT_TRUTH_REFS: ReferenceRates = ReferenceRates { bright: 0.05, dark: 0.02 };

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LabMode {
    InProcess,
    Tcp { address: String },
}

impl LabMode {
    /// Accepts `in-process` or `tcp://host:port`.
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        if text == "in-process" || text == "in_process" {
            return Ok(LabMode::InProcess);
        }
        match text.strip_prefix("tcp://") {
            Some(address) if !address.is_empty() => Ok(LabMode::Tcp { address: address.to_string() }),
            _ => bail!("lab must be `in-process` or `tcp://host:port`, got {text:?}"),
        }
    }
}

fn default_particles() -> usize {
    4000
}
fn default_trials() -> usize {
    20
}
fn default_experiments() -> usize {
    100
}
fn default_target() -> f64 {
    DEFAULT_TARGET_ESM
}
fn default_n_max() -> u64 {
    DEFAULT_MAX_REPETITIONS
}
fn default_reference_reps() -> u64 {
    DEFAULT_REFERENCE_REPS
}
fn default_truth_refs() -> ReferenceRates {
    DEFAULT_TRUTH_REFS
}
fn default_out() -> PathBuf {
    PathBuf::from("results")
}
fn default_curve_points() -> usize {
    101
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub heuristics: Vec<HeuristicKind>,
    pub prior: HamiltonianPrior,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_experiments")]
    pub experiments: usize,
    #[serde(default = "default_particles")]
    pub particles: usize,
    #[serde(default)]
    pub risk_sizes: RiskSizes,
    #[serde(default = "default_target")]
    pub target_esm: f64,
    #[serde(default = "default_n_max")]
    pub max_repetitions: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default = "lab_default")]
    pub lab: LabMode,
    #[serde(default = "default_reference_reps")]
    pub reference_reps: u64,
    /// Nominal references of every simulated truth.
    #[serde(default = "default_truth_refs")]
    pub truth_refs: ReferenceRates,
    #[serde(default)]
    pub update: UpdateOptions,
    /// Only used by the in-process lab; a TCP lab owns its own settings.
    #[serde(default)]
    pub lab_settings: LabSettings,
    /// Write each trial's final posterior next to its record.
    #[serde(default)]
    pub save_clouds: bool,
    /// Grid size for the learning-curve table.
    #[serde(default = "default_curve_points")]
    pub curve_points: usize,
}

fn lab_default() -> LabMode {
    LabMode::InProcess
}

impl RunConfig {
    pub fn new(heuristics: Vec<HeuristicKind>, prior: HamiltonianPrior) -> Self {
        RunConfig {
            heuristics,
            prior,
            trials: default_trials(),
            experiments: default_experiments(),
            particles: default_particles(),
            risk_sizes: RiskSizes::default(),
            target_esm: DEFAULT_TARGET_ESM,
            max_repetitions: DEFAULT_MAX_REPETITIONS,
            seed: 0,
            out_dir: default_out(),
            lab: LabMode::InProcess,
            reference_reps: DEFAULT_REFERENCE_REPS,
            truth_refs: DEFAULT_TRUTH_REFS,
            update: UpdateOptions::default(),
            lab_settings: LabSettings::default(),
            save_clouds: false,
            curve_points: default_curve_points(),
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.heuristics.is_empty() {
            bail!("at least one heuristic is required");
        }
        if self.trials == 0 || self.experiments == 0 {
            bail!("trials and experiments must be at least 1");
        }
        if self.particles < 2 {
            bail!("need at least 2 particles");
        }
        if self.risk_sizes.outcomes == 0 || self.risk_sizes.particles == 0 {
            bail!("risk sizes must be at least 1");
        }
        if !(self.target_esm > 0.0) {
            bail!("target ESM must be positive");
        }
        if self.reference_reps == 0 {
            bail!("reference_reps must be at least 1");
        }
        if self.curve_points < 2 {
            bail!("curve_points must be at least 2");
        }
        self.truth_refs.validate()?;
        self.prior.validate()?;
        Ok(())
    }

    pub fn heuristic_config(&self, kind: HeuristicKind) -> HeuristicConfig {
        HeuristicConfig {
            kind,
            risk_sizes: self.risk_sizes,
            target_esm: self.target_esm,
            max_repetitions: self.max_repetitions,
        }
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let config: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }
}
