use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use nvdesign_core::heuristics::HeuristicKind;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{LabMode, RunConfig};
use crate::record::TrialRecord;
use crate::stats::{experiment_histogram, learning_curve_stats, write_curves_csv, write_histogram_csv};
use crate::trial::run_trial;

pub fn records_dir(out: &Path) -> PathBuf {
    out.join("records")
}

pub fn record_path(out: &Path, kind: HeuristicKind, trial: usize) -> PathBuf {
    records_dir(out).join(format!("{kind}_trial{trial:03}.json"))
}

#[derive(Clone, Debug)]
pub struct ComparisonSummary {
    /// Heuristic-major, trial-minor, in config order.
    pub records: Vec<TrialRecord>,
    pub resumed: usize,
    pub failed: usize,
}

impl ComparisonSummary {
    pub fn all_completed(&self) -> bool {
        self.failed == 0
    }

    pub fn of(&self, kind: HeuristicKind) -> Vec<&TrialRecord> {
        self.records.iter().filter(|r| r.heuristic == kind).collect()
    }
}

#[derive(Serialize)]
struct TrialLine<'a> {
    heuristic: HeuristicKind,
    trial: usize,
    steps: usize,
    final_esm: f64,
    status: &'a crate::record::TrialStatus,
}

/// An existing record counts as a checkpoint only if it completed under the
/// same settings.
fn checkpoint(config: &RunConfig, kind: HeuristicKind, trial: usize) -> Option<TrialRecord> {
    let path = record_path(&config.out_dir, kind, trial);
    let record = TrialRecord::load(&path).ok()?;
    let matches = record.completed()
        && record.heuristic == kind
        && record.trial == trial
        && record.base_seed == config.seed
        && record.particles == config.particles
        && record.experiments == config.experiments
        && record.prior == config.prior;
    matches.then_some(record)
}

/// Run every (heuristic, trial) pair, reusing completed records already in
/// the output directory, then write the aggregate tables.
pub fn run_comparison(config: &RunConfig) -> anyhow::Result<ComparisonSummary> {
    config.validate()?;
    let out = &config.out_dir;
    std::fs::create_dir_all(records_dir(out)).with_context(|| format!("creating {}", out.display()))?;
    std::fs::write(out.join("config.json"), serde_json::to_string_pretty(config)?)?;

    let jobs: Vec<(HeuristicKind, usize)> =
        config.heuristics.iter().flat_map(|&h| (0..config.trials).map(move |t| (h, t))).collect();
    let run_one = |&(kind, trial): &(HeuristicKind, usize)| -> anyhow::Result<(TrialRecord, bool, Option<f64>)> {
        if let Some(record) = checkpoint(config, kind, trial) {
            log::info!("{kind} trial {trial}: reusing completed record");
            return Ok((record, true, None));
        }
        let start = Instant::now();
        let record = run_trial(config, kind, trial);
        let secs = start.elapsed().as_secs_f64();
        log::info!("{kind} trial {trial}: {:?} after {} steps in {secs:.1} s", record.status, record.steps.len());
        record.save(&record_path(out, kind, trial))?;
        Ok((record, false, Some(secs)))
    };
    // A remote lab holds one truth at a time, so its trials run in sequence.
    let results: Vec<_> = match config.lab {
        LabMode::InProcess => jobs.par_iter().map(run_one).collect::<anyhow::Result<_>>()?,
        LabMode::Tcp { .. } => jobs.iter().map(run_one).collect::<anyhow::Result<_>>()?,
    };

    let mut timings = csv::Writer::from_path(out.join("timings.csv"))?;
    timings.write_record(["heuristic", "trial", "wall_seconds"])?;
    for (r, _, secs) in &results {
        if let Some(secs) = secs {
            timings.write_record([r.heuristic.to_string(), r.trial.to_string(), format!("{secs:.3}")])?;
        }
    }
    timings.flush()?;

    let resumed = results.iter().filter(|(_, resumed, _)| *resumed).count();
    let records: Vec<TrialRecord> = results.into_iter().map(|(r, _, _)| r).collect();
    let failed = records.iter().filter(|r| !r.completed()).count();
    let lines: Vec<_> = records
        .iter()
        .map(|r| TrialLine {
            heuristic: r.heuristic,
            trial: r.trial,
            steps: r.steps.len(),
            final_esm: r.final_esm(),
            status: &r.status,
        })
        .collect();
    std::fs::write(out.join("summary.json"), serde_json::to_string_pretty(&lines)?)?;
    write_tables(&records, config.curve_points, out)?;
    Ok(ComparisonSummary { records, resumed, failed })
}

/// Learning curves and experiment histograms for `records`, as CSV in `out`.
pub fn write_tables(records: &[TrialRecord], points: usize, out: &Path) -> anyhow::Result<()> {
    let completed: Vec<TrialRecord> = records.iter().filter(|r| r.completed()).cloned().collect();
    if completed.is_empty() {
        log::warn!("no completed trials; skipping aggregate tables");
        return Ok(());
    }
    write_curves_csv(&learning_curve_stats(&completed, points), &out.join("learning_curves.csv"))?;
    write_histogram_csv(&experiment_histogram(&completed), &out.join("histogram.csv"))?;
    Ok(())
}
