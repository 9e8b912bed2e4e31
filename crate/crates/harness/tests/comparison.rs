use std::path::Path;

use nvdesign_core::heuristics::HeuristicKind;
use nvdesign_core::risk::RiskSizes;
use nvdesign_core::smc::HamiltonianPrior;
use nvdesign_harness::comparison::record_path;
use nvdesign_harness::stats::{experiment_histogram, learning_curve_stats, HISTOGRAM_BINS};
use nvdesign_harness::{load_records, run_comparison, RunConfig};

fn config(out: &Path) -> RunConfig {
    let mut c = RunConfig::new(vec![HeuristicKind::AlternatingLinear, HeuristicKind::UniformRisk], HamiltonianPrior::Wide);
    c.trials = 2;
    c.experiments = 4;
    c.particles = 120;
    c.risk_sizes = RiskSizes { outcomes: 16, particles: 32 };
    c.seed = 21;
    c.out_dir = out.to_path_buf();
    c
}

fn snapshot(out: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    for sub in [out.to_path_buf(), out.join("records")] {
        for entry in std::fs::read_dir(&sub).unwrap() {
            let path = entry.unwrap().path();
            let name = path.file_name().unwrap().to_string_lossy().to_string();
            if path.is_file() && name != "timings.csv" {
                files.push((name, std::fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn two_by_two_bookkeeping() {
    let dir = tempfile::tempdir().unwrap();
    let summary = run_comparison(&config(dir.path())).unwrap();
    assert!(summary.all_completed());
    assert_eq!(summary.records.len(), 4);
    assert_eq!(summary.resumed, 0);
    assert_eq!(load_records(&dir.path().join("records")).unwrap().len(), 4);
    for name in ["learning_curves.csv", "histogram.csv", "summary.json", "config.json", "timings.csv"] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
    // Paired truths across heuristics.
    let al = summary.of(HeuristicKind::AlternatingLinear);
    let ur = summary.of(HeuristicKind::UniformRisk);
    for (a, b) in al.iter().zip(&ur) {
        assert_eq!(a.truth, b.truth);
        assert_ne!(a.truth, None);
    }
    assert_ne!(al[0].truth, al[1].truth);

    let hist = experiment_histogram(&summary.records);
    for bins in hist.values() {
        assert_eq!(bins.len(), HISTOGRAM_BINS);
        assert!((bins.iter().sum::<f64>() - 4.0).abs() < 1e-12);
    }
    let curves = learning_curve_stats(&summary.records, 11);
    for envs in curves.curves.values() {
        for env in envs {
            for g in 0..curves.grid.len() {
                assert!(env.p10[g] <= env.median[g] && env.median[g] <= env.p90[g]);
            }
        }
    }
}

#[test]
fn resume_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(dir.path());
    run_comparison(&c).unwrap();
    let before = snapshot(dir.path());

    std::fs::remove_file(record_path(dir.path(), HeuristicKind::UniformRisk, 1)).unwrap();
    std::fs::write(record_path(dir.path(), HeuristicKind::AlternatingLinear, 0), "{\"truncated\":").unwrap();
    let summary = run_comparison(&c).unwrap();
    assert_eq!(summary.resumed, 2);
    assert_eq!(snapshot(dir.path()), before);
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_comparison(&config(a.path())).unwrap();
    let mut cb = config(b.path());
    cb.out_dir = b.path().to_path_buf();
    run_comparison(&cb).unwrap();
    let strip = |files: Vec<(String, Vec<u8>)>| -> Vec<(String, Vec<u8>)> {
        files.into_iter().filter(|(n, _)| n != "config.json").collect()
    };
    assert_eq!(strip(snapshot(a.path())), strip(snapshot(b.path())));
}
