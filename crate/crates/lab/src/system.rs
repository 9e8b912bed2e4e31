use nvdesign_core::measurement::{sample_datum, ReferenceRates};
use nvdesign_core::qutrit::survival_probability;
use nvdesign_core::{Datum, ExperimentConfig, ModelParameters};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cache::WaveformCache;

/// Per-shot timing and fixed overheads. The per-shot values are invented
/// defaults; nothing about the simulation depends on them beyond elapsed time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    /// Laser repump before each shot.
    pub reset_us: f64,
    pub settle_us: f64,
    /// One photon-counting window.
    pub measure_ns: f64,
    /// Adiabatic transfer pulse of the dark reference.
    pub adiabatic_us: f64,
    /// Fixed cost per request, in seconds.
    pub overhead_s: f64,
    /// Cost of uploading a waveform that is not cached, in seconds.
    pub upload_latency_s: f64,
    /// Duration of a refocus, in seconds.
    pub track_s: f64,
}

impl Default for Timing {
    fn default() -> Self {
        Timing {
            reset_us: 3.0,
            settle_us: 1.0,
            measure_ns: 300.0,
            adiabatic_us: 2.0,
            overhead_s: 0.1,
            upload_latency_s: 0.5,
            track_s: 10.0,
        }
    }
}

impl Timing {
    /// One shot: `t_r + t_s + t_e + 3·t_m + t_a`, in seconds.
    pub fn shot_s(&self, evolution_ns: f64) -> f64 {
        (self.reset_us + self.settle_us + self.adiabatic_us) * 1e-6 + (evolution_ns + 3.0 * self.measure_ns) * 1e-9
    }

    /// A reference-only shot has no experiment window.
    pub fn reference_shot_s(&self) -> f64 {
        (self.reset_us + self.settle_us + self.adiabatic_us) * 1e-6 + 2.0 * self.measure_ns * 1e-9
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabSettings {
    pub timing: Timing,
    /// Relative standard deviation of the brightness after a refocus.
    pub refocus_sd: f64,
}

impl Default for LabSettings {
    fn default() -> Self {
        LabSettings { timing: Timing::default(), refocus_sd: 0.01 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub datum: Datum,
    pub cache_hit: bool,
}

/// Ground truth plus the simulated clock, drift state and AWG cache.
#[derive(Clone, Debug)]
pub struct TrueSystem {
    truth: ModelParameters,
    /// Current (drifted) references; `truth.refs` holds the nominal ones.
    refs: ReferenceRates,
    clock_s: f64,
    rng: ChaCha8Rng,
    pub settings: LabSettings,
    pub cache: WaveformCache,
    /// Upload latency accrued on cache misses, in seconds.
    pub upload_time_s: f64,
}

impl TrueSystem {
    pub fn new(truth: ModelParameters, settings: LabSettings, seed: u64) -> nvdesign_core::Result<Self> {
        truth.validate()?;
        Ok(TrueSystem {
            truth,
            refs: truth.refs,
            clock_s: 0.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            settings,
            cache: WaveformCache::default(),
            upload_time_s: 0.0,
        })
    }

    pub fn reset(&mut self, truth: ModelParameters, seed: u64) -> nvdesign_core::Result<()> {
        *self = TrueSystem::new(truth, self.settings, seed)?;
        Ok(())
    }

    pub fn truth(&self) -> &ModelParameters {
        &self.truth
    }

    pub fn current_refs(&self) -> ReferenceRates {
        self.refs
    }

    pub fn clock_s(&self) -> f64 {
        self.clock_s
    }

    /// Advance the clock and the reference random walk by `dt_s`. Proposals
    /// are reflected through `β = 0` and `β = α` until they land inside.
    fn elapse(&mut self, dt_s: f64) {
        self.clock_s += dt_s;
        let dt_h = dt_s / 3600.0;
        let [[s11, s12], [_, s22]] = self.truth.drift.hourly_covariance();
        if dt_h <= 0.0 || (s11 == 0.0 && s22 == 0.0) {
            return;
        }
        let l11 = (dt_h * s11).sqrt();
        let l21 = if l11 > 0.0 { dt_h * s12 / l11 } else { 0.0 };
        let l22 = (dt_h * s22 - l21 * l21).max(0.0).sqrt();
        let z1: f64 = self.rng.sample(StandardNormal);
        let z2: f64 = self.rng.sample(StandardNormal);
        let mut a = self.refs.bright + l11 * z1;
        let mut b = self.refs.dark + l21 * z1 + l22 * z2;
        for _ in 0..64 {
            if 0.0 < b && b < a {
                self.refs = ReferenceRates { bright: a, dark: b };
                return;
            }
            if b <= 0.0 {
                b = -b;
            }
            if b >= a {
                std::mem::swap(&mut a, &mut b);
            }
        }
        log::warn!("drift reflection did not converge; references held");
    }

    pub fn execute(&mut self, config: &ExperimentConfig) -> nvdesign_core::Result<RunOutcome> {
        config.validate()?;
        let timing = self.settings.timing;
        let cache_hit = self.cache.lookup(config);
        let mut duration = timing.overhead_s + config.repetitions as f64 * timing.shot_s(config.evolution_time_ns());
        if !cache_hit {
            duration += timing.upload_latency_s;
            self.upload_time_s += timing.upload_latency_s;
        }
        self.elapse(duration);
        let p = survival_probability(&self.truth.spin, config);
        let mut datum = sample_datum(p, &self.refs, config.repetitions, &mut self.rng)?;
        datum.timestamp = self.clock_s;
        Ok(RunOutcome { datum, cache_hit })
    }

    /// Refocus: both references become nominal × (1 + ε), ε ~ N(0, sd²).
    pub fn track(&mut self, reference_reps: u64) -> nvdesign_core::Result<Option<Datum>> {
        let timing = self.settings.timing;
        self.clock_s += timing.track_s;
        let eps: f64 = self.settings.refocus_sd * self.rng.sample::<f64, _>(StandardNormal);
        let nominal = self.truth.refs;
        let scale = (1.0 + eps).max(1e-6);
        self.refs = ReferenceRates { bright: nominal.bright * scale, dark: nominal.dark * scale };
        if reference_reps == 0 {
            return Ok(None);
        }
        let n = reference_reps as f64;
        self.elapse(timing.overhead_s + n * timing.reference_shot_s());
        let mut draw = |rate: f64| Poisson::new(n * rate).map(|d| d.sample(&mut self.rng) as u64);
        let bright = draw(self.refs.bright)
            .map_err(|e| nvdesign_core::Error::InvalidArgument(e.to_string()))?;
        let dark = draw(self.refs.dark).map_err(|e| nvdesign_core::Error::InvalidArgument(e.to_string()))?;
        Ok(Some(Datum {
            bright_counts: bright,
            dark_counts: dark,
            signal_counts: 0,
            repetitions: reference_reps,
            timestamp: self.clock_s,
        }))
    }
}
