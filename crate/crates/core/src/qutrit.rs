//! Open-system simulation of the NV ground-state spin-1 manifold.
//!
//! Units: frequencies are in MHz, times in ns, the dephasing rate in 1/µs.
//! The only conversion to angular units happens in [`build_hamiltonian`] and
//! [`lindblad_generator`]; every matrix below those functions is in rad/ns.
//!
//! Basis ordering is `|+1⟩, |0⟩, |−1⟩` so that `Sz = diag(1, 0, −1)`.
//! Superoperators use column stacking: `vec(ρ)[i + 3j] = ρ[i][j]`, hence
//! `vec(A ρ B) = (Bᵀ ⊗ A) vec(ρ)`.
//!
//! The static nitrogen spin enters only through `A·Iz·Sz`; since `Iz` is
//! diagonal and conserved, the 9-level evolution splits into three 3-level
//! evolutions with `Iz` replaced by `mI ∈ {−1, 0, +1}`, averaged uniformly
//! (the nitrogen starts maximally mixed).

use nalgebra::{Matrix3, SVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expm::{expm, Mat9};

/// Zero-field splitting reference point in MHz.
pub const ZFS_MHZ: f64 = 2870.0;

/// Microwave carrier used for every experiment (on the ZFS, low-field regime).
pub const DEFAULT_DRIVE_MHZ: f64 = 2870.0;

/// MHz × ns → rad.
const ANGULAR_PER_MHZ_NS: f64 = 2.0 * std::f64::consts::PI * 1e-3;

/// 1/µs → 1/ns.
const RATE_PER_US_TO_PER_NS: f64 = 1e-3;

/// Column-stacked index of `|0⟩⟨0|`.
const ZERO_ZERO: usize = 4;

/// Magnetic quantum numbers in basis order.
const SPIN_M: [f64; 3] = [1.0, 0.0, -1.0];

pub type Mat3 = Matrix3<Complex64>;
pub type Vec9 = SVector<Complex64, 9>;

/// Hamiltonian and decoherence parameters of the spin system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinParams {
    /// Maximum drive strength Ω (MHz).
    pub rabi_max: f64,
    /// Zeeman splitting ωe (MHz).
    pub zeeman: f64,
    /// Deviation of the zero-field splitting from 2870 MHz (MHz).
    pub zfs_offset: f64,
    /// Nitrogen-14 hyperfine coupling A (MHz).
    pub hyperfine: f64,
    /// 1/T2* (1/µs).
    pub dephasing_rate: f64,
}

impl SpinParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.rabi_max,
            self.zeeman,
            self.zfs_offset,
            self.hyperfine,
            self.dephasing_rate,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite spin parameter in {self:?}")));
        }
        if self.rabi_max < 0.0 || self.dephasing_rate < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "rabi_max and dephasing_rate must be nonnegative: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Rabi,
    Ramsey,
}

/// A Rabi (single square pulse) or Ramsey (pulse, free wait, pulse) experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub pulse_time_ns: f64,
    pub wait_time_ns: f64,
    pub drive_frequency_mhz: f64,
    pub repetitions: u64,
}

impl ExperimentConfig {
    pub fn rabi(pulse_time_ns: f64, repetitions: u64) -> Self {
        ExperimentConfig {
            kind: ExperimentKind::Rabi,
            pulse_time_ns,
            wait_time_ns: 0.0,
            drive_frequency_mhz: DEFAULT_DRIVE_MHZ,
            repetitions,
        }
    }

    pub fn ramsey(pulse_time_ns: f64, wait_time_ns: f64, repetitions: u64) -> Self {
        ExperimentConfig {
            kind: ExperimentKind::Ramsey,
            pulse_time_ns,
            wait_time_ns,
            drive_frequency_mhz: DEFAULT_DRIVE_MHZ,
            repetitions,
        }
    }

    pub fn with_repetitions(mut self, repetitions: u64) -> Self {
        self.repetitions = repetitions;
        self
    }

    /// Total evolution time t_e in ns.
    pub fn evolution_time_ns(&self) -> f64 {
        match self.kind {
            ExperimentKind::Rabi => self.pulse_time_ns,
            ExperimentKind::Ramsey => 2.0 * self.pulse_time_ns + self.wait_time_ns,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(format!("{msg}: {self:?}")));
        if !(self.pulse_time_ns.is_finite() && self.pulse_time_ns > 0.0) {
            return bad("pulse time must be positive");
        }
        if !(self.wait_time_ns.is_finite() && self.wait_time_ns >= 0.0) {
            return bad("wait time must be nonnegative");
        }
        if self.kind == ExperimentKind::Rabi && self.wait_time_ns != 0.0 {
            return bad("Rabi experiments have no wait time");
        }
        if !self.drive_frequency_mhz.is_finite() {
            return bad("drive frequency must be finite");
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1");
        }
        Ok(())
    }
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn spin_x() -> Mat3 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Mat3::new(c(0.0), c(s), c(0.0), c(s), c(0.0), c(s), c(0.0), c(s), c(0.0))
}

pub fn spin_z() -> Mat3 {
    Mat3::from_diagonal(&nalgebra::Vector3::new(c(1.0), c(0.0), c(-1.0)))
}

/// The rotating-frame Hamiltonian in rad/ns for nitrogen projection `m_i` and
/// drive amplitude `a ∈ [−1, 1]`:
/// `2π·[(δD + 2870 − ω_μw)·Sz² + (ωe + A·mI)·Sz + a·Ω·Sx]`.
pub fn build_hamiltonian(params: &SpinParams, drive_mhz: f64, m_i: i8, amplitude: f64) -> Mat3 {
    debug_assert!((-1..=1).contains(&m_i));
    debug_assert!((-1.0..=1.0).contains(&amplitude));
    let detuning = params.zfs_offset + ZFS_MHZ - drive_mhz;
    let splitting = params.zeeman + params.hyperfine * m_i as f64;
    let sz = spin_z();
    let h = sz * sz * c(detuning) + sz * c(splitting) + spin_x() * c(amplitude * params.rabi_max);
    h * c(ANGULAR_PER_MHZ_NS)
}

/// `A ⊗ B` for 3×3 factors.
pub fn kron3(a: &Mat3, b: &Mat3) -> Mat9 {
    Mat9::from_fn(|r, col| a[(r / 3, col / 3)] * b[(r % 3, col % 3)])
}

/// `C[H] + D[L]` with `L = sqrt(1/T2*)·Sz`, in 1/ns.
pub fn lindblad_generator(params: &SpinParams, drive_mhz: f64, m_i: i8, amplitude: f64) -> Mat9 {
    let h = build_hamiltonian(params, drive_mhz, m_i, amplitude);
    let id = Mat3::identity();
    let coherent = (kron3(&id, &h) - kron3(&h.conjugate(), &id)) * Complex64::new(0.0, -1.0);
    let l = spin_z() * c((params.dephasing_rate * RATE_PER_US_TO_PER_NS).sqrt());
    let ldl = l.adjoint() * l;
    let dissipator = kron3(&l.conjugate(), &l) - (kron3(&id, &ldl) + kron3(&ldl.conjugate(), &id)) * c(0.5);
    coherent + dissipator
}

/// Superoperator acting on column-stacked density matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct Propagator {
    pub matrix: Mat9,
}

impl Propagator {
    pub fn identity() -> Self {
        Propagator { matrix: Mat9::identity() }
    }

    pub fn apply(&self, rho: &Vec9) -> Vec9 {
        self.matrix * rho
    }

    /// The propagator for `self` followed by `next`.
    pub fn then(&self, next: &Propagator) -> Propagator {
        Propagator { matrix: next.matrix * self.matrix }
    }

    /// Largest deviation of `vec(I)† S` from `vec(I)†`.
    pub fn trace_preservation_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for col in 0..9 {
            let traced: Complex64 = (0..3).map(|i| self.matrix[(i + 3 * i, col)]).sum();
            let expected = if col % 4 == 0 { 1.0 } else { 0.0 };
            worst = worst.max((traced - c(expected)).norm());
        }
        worst
    }
}

/// `exp(duration·(C[H] + D[L]))` for a constant drive amplitude.
pub fn lindblad_propagator(
    params: &SpinParams,
    drive_mhz: f64,
    m_i: i8,
    amplitude: f64,
    duration_ns: f64,
) -> Propagator {
    debug_assert!(duration_ns >= 0.0);
    let generator = lindblad_generator(params, drive_mhz, m_i, amplitude) * c(duration_ns);
    Propagator { matrix: expm(&generator) }
}

/// Diagonal of the undriven generator. Free evolution is diagonal in the
/// `|i⟩⟨j|` basis: phase `E_i − E_j` and dephasing `γ/2·(m_i − m_j)²`.
fn free_generator_diagonal(params: &SpinParams, drive_mhz: f64, m_i: i8) -> [Complex64; 9] {
    let detuning = params.zfs_offset + ZFS_MHZ - drive_mhz;
    let splitting = params.zeeman + params.hyperfine * m_i as f64;
    let energy = SPIN_M.map(|m| ANGULAR_PER_MHZ_NS * (detuning * m * m + splitting * m));
    let gamma = params.dephasing_rate * RATE_PER_US_TO_PER_NS;
    let mut diag = [c(0.0); 9];
    for j in 0..3 {
        for i in 0..3 {
            let dm = SPIN_M[i] - SPIN_M[j];
            diag[i + 3 * j] = Complex64::new(-0.5 * gamma * dm * dm, -(energy[i] - energy[j]));
        }
    }
    diag
}

fn clamp_probability(p: f64) -> f64 {
    if !(-1e-6..=1.0 + 1e-6).contains(&p) {
        log::warn!("survival probability {p} left [0, 1] by more than 1e-6; clamping");
    }
    p.clamp(0.0, 1.0)
}

fn rho0() -> Vec9 {
    let mut v = Vec9::zeros();
    v[ZERO_ZERO] = c(1.0);
    v
}

/// Survival probabilities for one nitrogen branch over Rabi pulse times given
/// in ascending order. Equal consecutive increments reuse one exponential.
fn rabi_branch(params: &SpinParams, drive_mhz: f64, m_i: i8, pulse_times: &[f64], out: &mut [f64]) {
    let generator = lindblad_generator(params, drive_mhz, m_i, 1.0);
    let mut state = rho0();
    let mut elapsed = 0.0;
    let mut cached: Option<(f64, Mat9)> = None;
    for (k, &t) in pulse_times.iter().enumerate() {
        let dt = t - elapsed;
        if dt > 0.0 {
            let step = match &cached {
                Some((cached_dt, m)) if *cached_dt == dt => *m,
                _ => {
                    let m = expm(&(generator * c(dt)));
                    cached = Some((dt, m));
                    m
                }
            };
            state = step * state;
            elapsed = t;
        }
        out[k] += state[ZERO_ZERO].re;
    }
}

fn ramsey_branch(
    params: &SpinParams,
    drive_mhz: f64,
    m_i: i8,
    pulse_time: f64,
    wait_times: &[f64],
    out: &mut [f64],
) {
    let pulse = expm(&(lindblad_generator(params, drive_mhz, m_i, 1.0) * c(pulse_time)));
    let after_first: Vec9 = pulse.column(ZERO_ZERO).into_owned();
    let readout = pulse.row(ZERO_ZERO);
    let diag = free_generator_diagonal(params, drive_mhz, m_i);
    for (k, &tw) in wait_times.iter().enumerate() {
        let mut acc = c(0.0);
        for idx in 0..9 {
            acc += readout[idx] * (diag[idx] * c(tw)).exp() * after_first[idx];
        }
        out[k] += acc.re;
    }
}

/// `p(x, e) = ⟪P₀|S(x, e)|ρ₀⟫`, averaged over the nitrogen projection.
pub fn survival_probability(params: &SpinParams, config: &ExperimentConfig) -> f64 {
    let mut p = [0.0];
    for m_i in [-1i8, 0, 1] {
        match config.kind {
            ExperimentKind::Rabi => {
                rabi_branch(params, config.drive_frequency_mhz, m_i, &[config.pulse_time_ns], &mut p)
            }
            ExperimentKind::Ramsey => ramsey_branch(
                params,
                config.drive_frequency_mhz,
                m_i,
                config.pulse_time_ns,
                &[config.wait_time_ns],
                &mut p,
            ),
        }
    }
    clamp_probability(p[0] / 3.0)
}

/// Survival probability for a single nitrogen branch (no averaging).
pub fn branch_survival_probability(params: &SpinParams, config: &ExperimentConfig, m_i: i8) -> f64 {
    let mut p = [0.0];
    match config.kind {
        ExperimentKind::Rabi => {
            rabi_branch(params, config.drive_frequency_mhz, m_i, &[config.pulse_time_ns], &mut p)
        }
        ExperimentKind::Ramsey => ramsey_branch(
            params,
            config.drive_frequency_mhz,
            m_i,
            config.pulse_time_ns,
            &[config.wait_time_ns],
            &mut p,
        ),
    }
    clamp_probability(p[0])
}

/// Survival probabilities for many configurations at once.
///
/// Rabi configurations sharing a drive frequency are evolved as one pulse of
/// increasing length; Ramsey configurations sharing a pulse time reuse the
/// pulse superoperator and apply the diagonal free evolution in closed form.
/// Results are returned in input order.
pub fn survival_probabilities(params: &SpinParams, configs: &[ExperimentConfig]) -> Vec<f64> {
    let mut out = vec![0.0; configs.len()];
    let mut groups: Vec<(ExperimentKind, u64, u64, Vec<usize>)> = Vec::new();
    for (i, cfg) in configs.iter().enumerate() {
        let pulse_key = match cfg.kind {
            ExperimentKind::Rabi => 0,
            ExperimentKind::Ramsey => cfg.pulse_time_ns.to_bits(),
        };
        let drive_key = cfg.drive_frequency_mhz.to_bits();
        match groups
            .iter_mut()
            .find(|(k, p, d, _)| *k == cfg.kind && *p == pulse_key && *d == drive_key)
        {
            Some(group) => group.3.push(i),
            None => groups.push((cfg.kind, pulse_key, drive_key, vec![i])),
        }
    }
    for (kind, _, _, mut members) in groups {
        let first = configs[members[0]];
        let time_of = |i: &usize| match kind {
            ExperimentKind::Rabi => configs[*i].pulse_time_ns,
            ExperimentKind::Ramsey => configs[*i].wait_time_ns,
        };
        members.sort_by(|a, b| time_of(a).total_cmp(&time_of(b)));
        let times: Vec<f64> = members.iter().map(time_of).collect();
        let mut acc = vec![0.0; times.len()];
        for m_i in [-1i8, 0, 1] {
            match kind {
                ExperimentKind::Rabi => {
                    rabi_branch(params, first.drive_frequency_mhz, m_i, &times, &mut acc)
                }
                ExperimentKind::Ramsey => ramsey_branch(
                    params,
                    first.drive_frequency_mhz,
                    m_i,
                    first.pulse_time_ns,
                    &times,
                    &mut acc,
                ),
            }
        }
        for (slot, value) in members.iter().zip(acc) {
            out[*slot] = clamp_probability(value / 3.0);
        }
    }
    out
}
