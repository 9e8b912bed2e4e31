//! Simulated experiment computer.
//!
//! A [`TrueSystem`] owns a hidden ground-truth NV centre whose optical
//! references drift in simulated time. It is reachable in-process through
//! [`InProcessLab`] or over TCP through [`serve`](server::Server) and
//! [`TcpLab`]; both paths produce identical data for identical seeds.

pub mod cache;
pub mod client;
pub mod error;
pub mod protocol;
pub mod server;
pub mod system;

pub use cache::{cache_key, WaveformCache};
pub use client::TcpLab;
pub use error::LabError;
pub use protocol::{Request, Response, PROTOCOL_VERSION};
pub use server::{Server, ShutdownHandle};
pub use system::{LabSettings, RunOutcome, Timing, TrueSystem};

use nvdesign_core::{Datum, ExperimentConfig, ModelParameters};

/// The processing computer's view of the experiment computer.
pub trait Lab: Send {
    fn run(&mut self, config: &ExperimentConfig) -> Result<RunOutcome, LabError>;

    /// Refocus the microscope. With `reference_reps > 0`, also acquire a
    /// reference-only datum (`Z = 0`) of that many shots afterwards.
    fn track(&mut self, reference_reps: u64) -> Result<Option<Datum>, LabError>;

    /// Replace the hidden truth and reseed, as at the start of a trial.
    fn reset(&mut self, truth: &ModelParameters, seed: u64) -> Result<(), LabError>;
}

/// Direct calls into a locally owned [`TrueSystem`].
pub struct InProcessLab {
    pub system: TrueSystem,
}

impl InProcessLab {
    pub fn new(system: TrueSystem) -> Self {
        InProcessLab { system }
    }
}

impl Lab for InProcessLab {
    fn run(&mut self, config: &ExperimentConfig) -> Result<RunOutcome, LabError> {
        Ok(self.system.execute(config)?)
    }

    fn track(&mut self, reference_reps: u64) -> Result<Option<Datum>, LabError> {
        Ok(self.system.track(reference_reps)?)
    }

    fn reset(&mut self, truth: &ModelParameters, seed: u64) -> Result<(), LabError> {
        Ok(self.system.reset(*truth, seed)?)
    }
}
