use nvdesign_core::heuristics::{HeuristicKind, HeuristicState};
use nvdesign_core::risk::RiskSizes;
use nvdesign_core::smc::{HamiltonianPrior, ParticleCloud};
use nvdesign_harness::config::LabMode;
use nvdesign_harness::trial::{draw_truth, open_lab, trial_seeds, TrialObserver};
use nvdesign_harness::{run_trial, run_trial_with, RunConfig, TrialStatus};

fn small(kind: HeuristicKind, experiments: usize) -> RunConfig {
    let mut c = RunConfig::new(vec![kind], HamiltonianPrior::Wide);
    c.particles = 200;
    c.experiments = experiments;
    c.trials = 1;
    c.risk_sizes = RiskSizes { outcomes: 16, particles: 32 };
    c.seed = 11;
    c
}

#[test]
fn single_offline_experiment_is_first_sweep_point() {
    let record = run_trial(&small(HeuristicKind::AlternatingLinear, 1), HeuristicKind::AlternatingLinear, 0);
    assert_eq!(record.status, TrialStatus::Completed);
    assert_eq!(record.steps.len(), 1);
    let first = HeuristicState::offline_config(HeuristicKind::AlternatingLinear, 0, 2.0).unwrap();
    assert_eq!(record.steps[0].config.kind, first.kind);
    assert_eq!(record.steps[0].config.pulse_time_ns, first.pulse_time_ns);
    assert!(record.steps[0].config.repetitions > 1);
}

#[derive(Default)]
struct Probe {
    designs: Vec<(usize, usize)>,
    updates: Vec<usize>,
}

impl TrialObserver for Probe {
    fn before_design(&mut self, step: usize, data_seen: usize, _cloud: &ParticleCloud) {
        self.designs.push((step, data_seen));
    }

    fn after_update(&mut self, step: usize, _cloud: &ParticleCloud) {
        self.updates.push(step);
    }
}

#[test]
fn design_for_step_n_plus_two_excludes_datum_n_plus_one() {
    let config = small(HeuristicKind::UniformRisk, 6);
    let seeds = trial_seeds(config.seed, 0);
    let truth = draw_truth(&config, seeds.truth).unwrap();
    let mut lab = open_lab(&config, truth, seeds.lab).unwrap();
    let mut probe = Probe::default();
    let record = run_trial_with(&config, HeuristicKind::UniformRisk, 0, lab.as_mut(), &mut probe);
    assert_eq!(record.status, TrialStatus::Completed);
    // Design j sees data 0..j-2: datum j-1 is still in flight.
    let expected: Vec<(usize, usize)> = (0..6usize).map(|j| (j, j.saturating_sub(1))).collect();
    assert_eq!(probe.designs, expected);
    assert_eq!(probe.updates, (0..6).collect::<Vec<_>>());
}

#[test]
fn trials_are_deterministic_and_esm_is_nondecreasing() {
    for kind in [HeuristicKind::RamseySweeps, HeuristicKind::MagnetometryRisk] {
        let config = small(kind, 5);
        let a = run_trial(&config, kind, 2);
        let b = run_trial(&config, kind, 2);
        assert_eq!(a.status, TrialStatus::Completed);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(a.steps.windows(2).all(|w| w[1].cumulative_esm >= w[0].cumulative_esm));
        assert!(a.steps.iter().enumerate().all(|(i, s)| s.step == i));
        if kind.is_online() {
            assert!(a.steps.iter().all(|s| s.risk.is_some()));
        }
    }
}

#[test]
fn unreachable_lab_fails_the_trial_with_a_diagnostic() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let address = listener.local_addr().unwrap().to_string();
    drop(listener);
    let mut config = small(HeuristicKind::RamseySweeps, 3);
    config.lab = LabMode::Tcp { address };
    let record = run_trial(&config, HeuristicKind::RamseySweeps, 0);
    match record.status {
        TrialStatus::Failed { step: 0, message } => assert!(message.contains("connect"), "{message}"),
        other => panic!("expected failure, got {other:?}"),
    }
}

#[test]
fn cumulative_esm_tracks_target() {
    let config = small(HeuristicKind::AlternatingLinear, 200);
    let record = run_trial(&config, HeuristicKind::AlternatingLinear, 0);
    assert_eq!(record.status, TrialStatus::Completed);
    let total = record.final_esm();
    assert!((total - 4000.0).abs() < 0.15 * 4000.0, "cumulative ESM {total}");
}
