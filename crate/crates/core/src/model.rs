//! The hypothesis vector carried by every particle.
//!
//! A particle is a flat `[f64; 10]`:
//!
//! | index | meaning                         | units          |
//! |-------|---------------------------------|----------------|
//! | 0     | Ω, maximum drive strength       | MHz            |
//! | 1     | ωe, Zeeman splitting            | MHz            |
//! | 2     | δD, ZFS offset from 2870 MHz    | MHz            |
//! | 3     | A, hyperfine coupling           | MHz            |
//! | 4     | 1/T2*                           | 1/µs           |
//! | 5     | α, bright reference per shot    | photons        |
//! | 6     | β, dark reference per shot      | photons        |
//! | 7     | ln σ_α (drift scale of α)       | ln(1/√hour)    |
//! | 8     | ln σ_β (drift scale of β)       | ln(1/√hour)    |
//! | 9     | atanh ρ (drift correlation)     | n/a            |
//!
//! The drift hyperparameters are stored in the unconstrained chart
//! `(ln σ_α, ln σ_β, atanh ρ)` so that Gaussian kernel moves always map back
//! to a valid covariance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::ReferenceRates;
use crate::qutrit::SpinParams;

pub const DIM: usize = 10;

pub type Particle = [f64; DIM];

pub const RABI: usize = 0;
pub const ZEEMAN: usize = 1;
pub const ZFS_OFFSET: usize = 2;
pub const HYPERFINE: usize = 3;
pub const DEPHASING: usize = 4;
pub const BRIGHT: usize = 5;
pub const DARK: usize = 6;
pub const LOG_SIGMA_BRIGHT: usize = 7;
pub const LOG_SIGMA_DARK: usize = 8;
pub const ATANH_CORRELATION: usize = 9;

pub const PARAMETER_NAMES: [&str; DIM] = [
    "rabi_max",
    "zeeman",
    "zfs_offset",
    "hyperfine",
    "dephasing_rate",
    "bright",
    "dark",
    "log_sigma_bright",
    "log_sigma_dark",
    "atanh_correlation",
];

/// Random-walk hyperparameters of the per-shot references.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftHyper {
    /// Per-shot rate per √hour.
    pub sigma_bright: f64,
    /// Per-shot rate per √hour.
    pub sigma_dark: f64,
    pub correlation: f64,
}

impl DriftHyper {
    pub const ZERO: DriftHyper = DriftHyper { sigma_bright: 0.0, sigma_dark: 0.0, correlation: 0.0 };

    pub fn validate(&self) -> Result<()> {
        let ok = self.sigma_bright >= 0.0
            && self.sigma_dark >= 0.0
            && self.correlation.abs() < 1.0
            && self.sigma_bright.is_finite()
            && self.sigma_dark.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid drift hyperparameters {self:?}")))
        }
    }

    /// Covariance of one hour of drift, `[[σα², ρσασβ], [ρσασβ, σβ²]]`.
    pub fn hourly_covariance(&self) -> [[f64; 2]; 2] {
        let off = self.correlation * self.sigma_bright * self.sigma_dark;
        [[self.sigma_bright.powi(2), off], [off, self.sigma_dark.powi(2)]]
    }

    pub fn from_covariance(cov: [[f64; 2]; 2]) -> Self {
        let sb = cov[0][0].sqrt();
        let sd = cov[1][1].sqrt();
        DriftHyper { sigma_bright: sb, sigma_dark: sd, correlation: cov[0][1] / (sb * sd) }
    }
}

/// The full 10-parameter hypothesis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    pub spin: SpinParams,
    pub refs: ReferenceRates,
    pub drift: DriftHyper,
}

impl ModelParameters {
    pub fn validate(&self) -> Result<()> {
        self.spin.validate()?;
        self.refs.validate()?;
        self.drift.validate()
    }

    pub fn to_particle(&self) -> Particle {
        // σ = 0 maps to −∞ in the chart; clamp to a negligible scale instead.
        let log_floor = |s: f64| s.max(1e-300).ln();
        [
            self.spin.rabi_max,
            self.spin.zeeman,
            self.spin.zfs_offset,
            self.spin.hyperfine,
            self.spin.dephasing_rate,
            self.refs.bright,
            self.refs.dark,
            log_floor(self.drift.sigma_bright),
            log_floor(self.drift.sigma_dark),
            self.drift.correlation.clamp(-1.0 + 1e-15, 1.0 - 1e-15).atanh(),
        ]
    }

    pub fn from_particle(x: &Particle) -> Self {
        ModelParameters {
            spin: spin_of(x),
            refs: refs_of(x),
            drift: drift_of(x),
        }
    }
}

pub fn spin_of(x: &Particle) -> SpinParams {
    SpinParams {
        rabi_max: x[RABI],
        zeeman: x[ZEEMAN],
        zfs_offset: x[ZFS_OFFSET],
        hyperfine: x[HYPERFINE],
        dephasing_rate: x[DEPHASING],
    }
}

pub fn refs_of(x: &Particle) -> ReferenceRates {
    ReferenceRates { bright: x[BRIGHT], dark: x[DARK] }
}

pub fn drift_of(x: &Particle) -> DriftHyper {
    DriftHyper {
        sigma_bright: x[LOG_SIGMA_BRIGHT].exp(),
        sigma_dark: x[LOG_SIGMA_DARK].exp(),
        correlation: x[ATANH_CORRELATION].tanh(),
    }
}

/// Whether a particle satisfies every model-parameter constraint.
pub fn is_valid(x: &Particle) -> bool {
    x.iter().all(|v| v.is_finite())
        && x[RABI] >= 0.0
        && x[DEPHASING] >= 0.0
        && 0.0 < x[DARK]
        && x[DARK] < x[BRIGHT]
}
