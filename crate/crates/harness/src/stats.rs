//! Aggregation of trial records into learning curves and experiment
//! histograms.

use std::collections::BTreeMap;
use std::path::Path;

use nvdesign_core::heuristics::{candidate_bin, HeuristicKind, RABI_T_MAX_NS, RAMSEY_T_MAX_NS, SET_SIZE};
use nvdesign_core::model::{DIM, PARAMETER_NAMES};
use nvdesign_core::ExperimentKind;

use crate::record::TrialRecord;

/// Linear-interpolated percentile of sorted data, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `points` equally spaced ESM values from 0 to the smallest final
/// cumulative ESM, so every trial is observed across the whole grid.
pub fn esm_grid(records: &[TrialRecord], points: usize) -> Vec<f64> {
    let top = records.iter().map(TrialRecord::final_esm).fold(f64::INFINITY, f64::min);
    let top = if top.is_finite() { top } else { 0.0 };
    (0..points).map(|i| top * i as f64 / (points - 1).max(1) as f64).collect()
}

/// Posterior variance of `param` at each grid point, carrying the last
/// update forward; before the first update it is the prior variance.
pub fn locf_variance(record: &TrialRecord, grid: &[f64], param: usize) -> Vec<f64> {
    let initial = record.initial_variance.map_or(f64::NAN, |v| v[param]);
    let mut k = 0;
    let mut current = initial;
    grid.iter()
        .map(|&g| {
            while k < record.steps.len() && record.steps[k].cumulative_esm <= g {
                current = record.steps[k].variance[param];
                k += 1;
            }
            current
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Envelope {
    pub median: Vec<f64>,
    pub p10: Vec<f64>,
    pub p90: Vec<f64>,
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveTable {
    pub grid: Vec<f64>,
    /// Indexed by parameter.
    pub curves: BTreeMap<HeuristicKind, Vec<Envelope>>,
}

pub fn learning_curve_stats(records: &[TrialRecord], points: usize) -> CurveTable {
    assert!(!records.is_empty(), "learning curves need at least one record");
    let grid = esm_grid(records, points);
    let mut by_kind: BTreeMap<HeuristicKind, Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        by_kind.entry(r.heuristic).or_default().push(r);
    }
    let curves = by_kind
        .into_iter()
        .map(|(kind, rs)| {
            let envelopes = (0..DIM)
                .map(|param| {
                    let series: Vec<Vec<f64>> = rs.iter().map(|r| locf_variance(r, &grid, param)).collect();
                    let mut env =
                        Envelope { median: Vec::new(), p10: Vec::new(), p90: Vec::new(), trials: rs.len() };
                    for g in 0..grid.len() {
                        let mut column: Vec<f64> = series.iter().map(|s| s[g]).collect();
                        column.sort_by(f64::total_cmp);
                        env.median.push(percentile(&column, 0.5));
                        env.p10.push(percentile(&column, 0.1));
                        env.p90.push(percentile(&column, 0.9));
                    }
                    env
                })
                .collect();
            (kind, envelopes)
        })
        .collect();
    CurveTable { grid, curves }
}

/// Least-squares slope of `ln y` against `ln x` over the last `fraction` of
/// the grid, skipping nonpositive points.
pub fn late_slope(grid: &[f64], values: &[f64], fraction: f64) -> f64 {
    let start = ((1.0 - fraction) * grid.len() as f64).floor() as usize;
    let pts: Vec<(f64, f64)> = grid[start..]
        .iter()
        .zip(&values[start..])
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    slope(&pts)
}

pub fn slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

pub const HISTOGRAM_BINS: usize = 2 * SET_SIZE;

/// Average uses per trial of each candidate-grid bin, per heuristic.
pub fn experiment_histogram(records: &[TrialRecord]) -> BTreeMap<HeuristicKind, Vec<f64>> {
    let mut counts: BTreeMap<HeuristicKind, (Vec<f64>, usize)> = BTreeMap::new();
    for r in records {
        let (bins, trials) = counts.entry(r.heuristic).or_insert_with(|| (vec![0.0; HISTOGRAM_BINS], 0));
        *trials += 1;
        for s in &r.steps {
            match candidate_bin(&s.config) {
                Some(b) => bins[b] += 1.0,
                None => log::warn!("{} step {} is off the candidate grid", r.heuristic, s.step),
            }
        }
    }
    counts
        .into_iter()
        .map(|(k, (bins, trials))| (k, bins.into_iter().map(|c| c / trials as f64).collect()))
        .collect()
}

/// Fraction of all steps in `records` that were Ramsey experiments.
pub fn ramsey_fraction(records: &[&TrialRecord]) -> f64 {
    let (ramsey, total) = records.iter().flat_map(|r| &r.steps).fold((0usize, 0usize), |(a, n), s| {
        (a + usize::from(s.config.kind == ExperimentKind::Ramsey), n + 1)
    });
    ramsey as f64 / total as f64
}

pub fn write_curves_csv(table: &CurveTable, path: &Path) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["heuristic", "parameter", "esm", "median", "p10", "p90", "trials"])?;
    for (kind, envelopes) in &table.curves {
        for (param, env) in envelopes.iter().enumerate() {
            for (g, esm) in table.grid.iter().enumerate() {
                w.write_record([
                    kind.to_string(),
                    PARAMETER_NAMES[param].to_string(),
                    esm.to_string(),
                    env.median[g].to_string(),
                    env.p10[g].to_string(),
                    env.p90[g].to_string(),
                    env.trials.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_histogram_csv(hist: &BTreeMap<HeuristicKind, Vec<f64>>, path: &Path) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["heuristic", "bin", "kind", "time_ns", "uses_per_trial"])?;
    for (kind, bins) in hist {
        for (b, uses) in bins.iter().enumerate() {
            let (label, time) = if b < SET_SIZE {
                ("rabi", (b + 1) as f64 * RABI_T_MAX_NS / SET_SIZE as f64)
            } else {
                ("ramsey", (b - SET_SIZE + 1) as f64 * RAMSEY_T_MAX_NS / SET_SIZE as f64)
            };
            w.write_record([kind.to_string(), b.to_string(), label.to_string(), time.to_string(), uses.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
