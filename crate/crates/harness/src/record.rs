use std::path::Path;

use anyhow::Context;
use nvdesign_core::heuristics::HeuristicKind;
use nvdesign_core::smc::{HamiltonianPrior, ReferencePrior, UpdateReport};
use nvdesign_core::{Datum, ExperimentConfig, ModelParameters, Particle};
use serde::{Deserialize, Serialize};

pub const RECORD_FORMAT_VERSION: u32 = 1;

/// Sub-seeds of one trial; the truth and lab seeds are shared by every
/// heuristic so trials are paired.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSeeds {
    pub truth: u64,
    pub lab: u64,
    pub engine: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub config: ExperimentConfig,
    pub datum: Datum,
    /// ESM of this datum under the pre-update posterior.
    pub esm: f64,
    pub cumulative_esm: f64,
    pub mean: Particle,
    pub variance: Particle,
    /// Lab clock at the end of the experiment, seconds.
    pub sim_time_s: f64,
    /// A refocus and reference reset happened just before this update.
    pub tracked: bool,
    /// Risk of the chosen candidate, for online heuristics.
    pub risk: Option<f64>,
    pub repetitions_saturated: bool,
    pub update: UpdateReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum TrialStatus {
    Completed,
    Failed { step: usize, message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub version: u32,
    pub heuristic: HeuristicKind,
    pub prior: HamiltonianPrior,
    pub trial: usize,
    pub base_seed: u64,
    pub seeds: TrialSeeds,
    pub particles: usize,
    pub experiments: usize,
    /// Hidden truth, when the lab is simulated by this process or reset by it.
    pub truth: Option<ModelParameters>,
    pub reference_prior: Option<ReferencePrior>,
    pub initial_mean: Option<Particle>,
    pub initial_variance: Option<Particle>,
    pub steps: Vec<StepRecord>,
    pub status: TrialStatus,
}

impl TrialRecord {
    pub fn completed(&self) -> bool {
        self.status == TrialStatus::Completed
    }

    pub fn final_esm(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.cumulative_esm)
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, text).with_context(|| format!("writing {}", tmp.display()))?;
        std::fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
        Ok(())
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let record: TrialRecord =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        anyhow::ensure!(
            record.version == RECORD_FORMAT_VERSION,
            "{}: record version {} (expected {RECORD_FORMAT_VERSION})",
            path.display(),
            record.version
        );
        Ok(record)
    }
}

/// Load every `*.json` record in `dir`, sorted by file name.
pub fn load_records(dir: &Path) -> anyhow::Result<Vec<TrialRecord>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| TrialRecord::load(p)).collect()
}
