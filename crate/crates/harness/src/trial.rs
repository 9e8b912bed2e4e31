//! One trial: a heuristic learning a hidden truth through the lab.
//!
//! The loop is pipelined. A worker thread owns the lab and executes
//! experiments from a queue while the engine updates on the previous datum
//! and designs the experiment after next. Experiments 1 and 2 are both
//! designed from the prior; from then on the design for step `n + 2` sees
//! the posterior after datum `n`, never datum `n + 1`.

use std::sync::mpsc;

use anyhow::{anyhow, Context};
use nvdesign_core::heuristics::{should_track, HeuristicKind, HeuristicState};
use nvdesign_core::smc::{
    bayes_update, datum_esm, drift_step, reference_reset, sample_prior, InverseWishart, ParticleCloud, PriorSpec,
    ReferencePrior,
};
use nvdesign_core::{Datum, ExperimentConfig, ModelParameters};
use nvdesign_lab::{InProcessLab, Lab, LabError, RunOutcome, TcpLab, TrueSystem};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{LabMode, RunConfig};
use crate::record::{StepRecord, TrialRecord, TrialSeeds, TrialStatus, RECORD_FORMAT_VERSION};

/// Deterministic sub-seeds for trial `trial` of a run seeded with `base`.
pub fn trial_seeds(base: u64, trial: usize) -> TrialSeeds {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(trial as u64);
    TrialSeeds { truth: rng.next_u64(), lab: rng.next_u64(), engine: rng.next_u64() }
}

/// Hidden truth of one trial: spin from the Hamiltonian prior, drift from
/// the hyperprior, references nominal.
pub fn draw_truth(config: &RunConfig, seed: u64) -> anyhow::Result<ModelParameters> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spin = config.prior.sample_spin(&mut rng)?;
    let drift = InverseWishart::default().sample_hyper(&mut rng)?;
    Ok(ModelParameters { spin, refs: config.truth_refs, drift })
}

/// Instrumentation hooks. All methods default to no-ops.
pub trait TrialObserver {
    /// Called just before designing `step`, with the number of data already
    /// folded into `cloud`.
    fn before_design(&mut self, _step: usize, _data_seen: usize, _cloud: &ParticleCloud) {}

    fn after_update(&mut self, _step: usize, _cloud: &ParticleCloud) {}
}

pub struct NoObserver;

impl TrialObserver for NoObserver {}

enum Command {
    Run(ExperimentConfig),
    Track,
}

enum Event {
    Ran(Result<RunOutcome, LabError>),
    Tracked(Result<Option<Datum>, LabError>),
}

/// Open a lab for `mode`; the truth and seed are installed by the trial.
pub fn open_lab(config: &RunConfig, truth: ModelParameters, seed: u64) -> anyhow::Result<Box<dyn Lab>> {
    Ok(match &config.lab {
        LabMode::InProcess => Box::new(InProcessLab::new(TrueSystem::new(truth, config.lab_settings, seed)?)),
        LabMode::Tcp { address } => {
            Box::new(TcpLab::connect(address.as_str()).with_context(|| format!("connecting to lab at {address}"))?)
        }
    })
}

/// Run trial `trial` of `kind` against a lab opened from the config.
pub fn run_trial(config: &RunConfig, kind: HeuristicKind, trial: usize) -> TrialRecord {
    let seeds = trial_seeds(config.seed, trial);
    let mut record = empty_record(config, kind, trial, seeds);
    let lab = draw_truth(config, seeds.truth).and_then(|truth| {
        record.truth = Some(truth);
        open_lab(config, truth, seeds.lab)
    });
    match lab {
        Ok(mut lab) => run_trial_with(config, kind, trial, lab.as_mut(), &mut NoObserver),
        Err(e) => {
            record.status = TrialStatus::Failed { step: 0, message: format!("{e:#}") };
            record
        }
    }
}

fn empty_record(config: &RunConfig, kind: HeuristicKind, trial: usize, seeds: TrialSeeds) -> TrialRecord {
    TrialRecord {
        version: RECORD_FORMAT_VERSION,
        heuristic: kind,
        prior: config.prior.clone(),
        trial,
        base_seed: config.seed,
        seeds,
        particles: config.particles,
        experiments: config.experiments,
        truth: None,
        reference_prior: None,
        initial_mean: None,
        initial_variance: None,
        steps: Vec::new(),
        status: TrialStatus::Completed,
    }
}

/// Run one trial against `lab`, which is reset to the trial's truth first.
/// Failures end the trial early and are reported in its status.
pub fn run_trial_with(
    config: &RunConfig,
    kind: HeuristicKind,
    trial: usize,
    lab: &mut dyn Lab,
    observer: &mut dyn TrialObserver,
) -> TrialRecord {
    let seeds = trial_seeds(config.seed, trial);
    let mut record = empty_record(config, kind, trial, seeds);
    if let Err(e) = execute(config, kind, seeds, lab, observer, &mut record) {
        log::warn!("{kind} trial {trial} failed after {} steps: {e:#}", record.steps.len());
        record.status = TrialStatus::Failed { step: record.steps.len(), message: format!("{e:#}") };
    }
    record
}

fn execute(
    config: &RunConfig,
    kind: HeuristicKind,
    seeds: TrialSeeds,
    lab: &mut dyn Lab,
    observer: &mut dyn TrialObserver,
    record: &mut TrialRecord,
) -> anyhow::Result<()> {
    config.validate()?;
    let truth = draw_truth(config, seeds.truth)?;
    record.truth = Some(truth);
    lab.reset(&truth, seeds.lab)?;

    // Refocus at the start and build the reference prior from its counts.
    let refs = lab.track(config.reference_reps)?.ok_or_else(|| anyhow!("lab returned no reference datum"))?;
    let references = ReferencePrior::empirical(refs.bright_counts, refs.dark_counts, refs.repetitions)?;
    record.reference_prior = Some(references);
    let prior = PriorSpec::new(config.prior.clone(), references);

    let mut rng = ChaCha8Rng::seed_from_u64(seeds.engine);
    let mut cloud = sample_prior(&prior, config.particles, &mut rng)?;
    cloud.last_update_time = refs.timestamp / 3600.0;
    record.initial_mean = Some(cloud.mean());
    record.initial_variance = Some(cloud.variance());

    let mut heuristic = HeuristicState::new(config.heuristic_config(kind));
    let total = config.experiments;
    let mut designs = std::collections::VecDeque::new();
    for step in 0..total.min(2) {
        observer.before_design(step, 0, &cloud);
        designs.push_back(heuristic.next_experiment(&cloud, &mut rng)?);
    }

    std::thread::scope(|scope| -> anyhow::Result<()> {
        let (cmd_tx, cmd_rx) = mpsc::channel::<Command>();
        let (event_tx, event_rx) = mpsc::channel::<Event>();
        scope.spawn(move || {
            for cmd in cmd_rx {
                let event = match cmd {
                    Command::Run(e) => Event::Ran(lab.run(&e)),
                    Command::Track => Event::Tracked(lab.track(0)),
                };
                if event_tx.send(event).is_err() {
                    break;
                }
            }
        });
        for d in &designs {
            cmd_tx.send(Command::Run(d.config)).expect("lab worker alive");
        }

        let mut cumulative = 0.0;
        let mut track_pending = false;
        for step in 0..total {
            let mut tracked = false;
            let outcome = loop {
                match event_rx.recv().map_err(|_| anyhow!("lab worker stopped"))? {
                    Event::Tracked(r) => {
                        r?;
                        reference_reset(&mut cloud, &prior.references, &mut rng)?;
                        track_pending = false;
                        tracked = true;
                    }
                    Event::Ran(r) => break r?,
                }
            };
            let design = designs.pop_front().expect("one design per queued run");
            let datum = outcome.datum;

            let now_h = datum.timestamp / 3600.0;
            let elapsed_h = (now_h - cloud.last_update_time).max(0.0);
            drift_step(&mut cloud, elapsed_h, &mut rng)?;
            let esm = datum_esm(&cloud, &datum);
            cumulative += esm;
            let report = bayes_update(&mut cloud, &datum, &design.config, &config.update, &mut rng)
                .with_context(|| format!("Bayes update at step {step}"))?;
            observer.after_update(step, &cloud);
            record.steps.push(StepRecord {
                step,
                config: design.config,
                datum,
                esm,
                cumulative_esm: cumulative,
                mean: cloud.mean(),
                variance: cloud.variance(),
                sim_time_s: datum.timestamp,
                tracked,
                risk: design.risk.map(|r| r.value),
                repetitions_saturated: design.repetitions.saturated,
                update: report,
            });

            if !track_pending && should_track(&cloud, &prior) {
                log::info!("{kind}: bright reference dropped below threshold after step {step}; refocusing");
                cmd_tx.send(Command::Track).map_err(|_| anyhow!("lab worker stopped"))?;
                track_pending = true;
            }
            let next = step + 2;
            if next < total {
                observer.before_design(next, step + 1, &cloud);
                let design = heuristic.next_experiment(&cloud, &mut rng)?;
                cmd_tx.send(Command::Run(design.config)).map_err(|_| anyhow!("lab worker stopped"))?;
                designs.push_back(design);
            }
        }
        Ok(())
    })?;
    if config.save_clouds {
        let dir = config.out_dir.join("clouds");
        std::fs::create_dir_all(&dir)?;
        cloud.save(&dir.join(format!("{}_trial{:03}.json", kind, record.trial)))?;
    }
    Ok(())
}
