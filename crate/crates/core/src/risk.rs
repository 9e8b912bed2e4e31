//! Q-weighted mean-squared-error Bayes risk of a candidate experiment.
//!
//! Both estimators sample outcomes from particles drawn by weight. The
//! brute-force estimator scores each sampled particle against the posterior
//! mean built from the same sample, costing `O(K′²)` likelihoods. The MIS
//! estimator reweights a separate inner set of `K` particles for every outcome
//! and averages the posterior `Tr[Q Cov]`, costing `O(K·K′)`.

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::{sample_datum, ReferenceRates};
use crate::model::{refs_of, spin_of, Particle, BRIGHT, DARK, DIM};
use crate::qutrit::{survival_probabilities, ExperimentConfig};
use crate::smc::{Mat10, ParticleCloud};

/// Fraction of dropped outcomes above which an estimate is flagged.
pub const UNRELIABLE_DROP_FRACTION: f64 = 0.05;

/// Symmetric positive-semidefinite weight on the 10 model coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMatrix {
    matrix: Mat10,
    support: Vec<usize>,
}

impl WeightMatrix {
    pub fn new(matrix: Mat10) -> Result<Self> {
        let scale = matrix.abs().max().max(f64::MIN_POSITIVE);
        if (matrix - matrix.transpose()).abs().max() > 1e-12 * scale {
            return Err(Error::InvalidArgument("weight matrix is not symmetric".into()));
        }
        let min_eig = matrix.symmetric_eigenvalues().min();
        if min_eig < -1e-12 * scale {
            return Err(Error::InvalidArgument(format!("weight matrix has eigenvalue {min_eig} < 0")));
        }
        let support = (0..DIM).filter(|&r| (0..DIM).any(|c| matrix[(r, c)] != 0.0)).collect();
        Ok(WeightMatrix { matrix, support })
    }

    /// Diagonal over `(Ω, ωe, δD, A, 1/T2*)`, zero on references and drift.
    pub fn spin_diagonal(d: [f64; 5]) -> Result<Self> {
        let mut m = Mat10::zeros();
        for (k, v) in d.into_iter().enumerate() {
            m[(k, k)] = v;
        }
        Self::new(m)
    }

    pub fn uniform() -> Self {
        Self::spin_diagonal([1.0; 5]).expect("identity block is PSD")
    }

    pub fn magnetometry() -> Self {
        Self::spin_diagonal([0.0, 1.0, 0.0, 0.0, 0.0]).expect("projector is PSD")
    }

    pub fn zero() -> Self {
        Self::new(Mat10::zeros()).expect("zero is PSD")
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.matrix * c)
    }

    pub fn matrix(&self) -> &Mat10 {
        &self.matrix
    }

    /// `Tr[Q·cov]`.
    pub fn trace_with(&self, cov: &Mat10) -> f64 {
        (self.matrix * cov).trace()
    }

    fn quad(&self, y: &[f64]) -> f64 {
        let s = &self.support;
        let mut acc = 0.0;
        for (a, &r) in s.iter().enumerate() {
            for (b, &c) in s.iter().enumerate() {
                acc += y[a] * self.matrix[(r, c)] * y[b];
            }
        }
        acc
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub value: f64,
    pub std_error: f64,
    /// Outcomes that contributed (`K′` minus drops).
    pub n_outcomes: usize,
    /// Distinct inner particles.
    pub n_particles: usize,
    pub dropped: usize,
    pub unreliable: bool,
}

impl RiskEstimate {
    fn from_terms(terms: &[Option<f64>], n_particles: usize) -> Self {
        let kept: Vec<f64> = terms.iter().flatten().copied().collect();
        let dropped = terms.len() - kept.len();
        let n = kept.len();
        let (value, std_error) = if n == 0 {
            (f64::NAN, f64::NAN)
        } else {
            let mean = kept.iter().sum::<f64>() / n as f64;
            let var = if n > 1 { kept.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
            (mean.max(0.0), (var / n as f64).sqrt())
        };
        let unreliable = n == 0 || dropped as f64 > UNRELIABLE_DROP_FRACTION * terms.len() as f64;
        if dropped > 0 {
            log::warn!("dropped {dropped} of {} risk outcomes with vanishing likelihood", terms.len());
        }
        RiskEstimate { value, std_error, n_outcomes: n, n_particles, dropped, unreliable }
    }

    fn scaled(mut self, c: f64) -> Self {
        self.value *= c;
        self.std_error *= c;
        self
    }
}

/// Outcome (K′) and inner-particle (K) sample sizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskSizes {
    pub outcomes: usize,
    pub particles: usize,
}

impl Default for RiskSizes {
    fn default() -> Self {
        RiskSizes { outcomes: 512, particles: 1024 }
    }
}

/// Likelihood over a fixed, indexed set of points.
pub trait OutcomeModel: Sync {
    type Outcome: Send + Sync;

    fn sample_outcome<R: Rng + ?Sized>(&self, point: usize, rng: &mut R) -> Self::Outcome;

    /// Log-likelihood up to an additive constant that may depend on the
    /// outcome but not on the point.
    fn log_likelihood(&self, outcome: &Self::Outcome, point: usize) -> f64;
}

/// Finite-outcome model given by an explicit pmf row per point.
#[derive(Clone, Debug)]
pub struct TableModel {
    pub pmf: Vec<Vec<f64>>,
}

impl OutcomeModel for TableModel {
    type Outcome = usize;

    fn sample_outcome<R: Rng + ?Sized>(&self, point: usize, rng: &mut R) -> usize {
        WeightedIndex::new(&self.pmf[point]).expect("pmf row has positive mass").sample(rng)
    }

    fn log_likelihood(&self, outcome: &usize, point: usize) -> f64 {
        self.pmf[point][*outcome].ln()
    }
}

/// Referenced-Poisson model with precomputed per-point rates.
#[derive(Clone, Debug)]
pub struct NvOutcomeModel {
    repetitions: u64,
    refs: Vec<ReferenceRates>,
    probs: Vec<f64>,
    ln_rates: Vec<[f64; 3]>,
    total_rate: Vec<f64>,
}

impl NvOutcomeModel {
    pub fn new(points: &[Particle], probs: &[f64], repetitions: u64) -> Self {
        let refs: Vec<_> = points.iter().map(refs_of).collect();
        let n = repetitions as f64;
        let ln_rates = refs
            .iter()
            .zip(probs)
            .map(|(r, p)| [r.bright.ln(), r.dark.ln(), r.signal_rate(*p).ln()])
            .collect();
        let total_rate = refs.iter().zip(probs).map(|(r, p)| n * (r.bright + r.dark + r.signal_rate(*p))).collect();
        NvOutcomeModel { repetitions, refs, probs: probs.to_vec(), ln_rates, total_rate }
    }
}

impl OutcomeModel for NvOutcomeModel {
    type Outcome = [f64; 3];

    fn sample_outcome<R: Rng + ?Sized>(&self, point: usize, rng: &mut R) -> [f64; 3] {
        let d = sample_datum(self.probs[point], &self.refs[point], self.repetitions, rng)
            .expect("particles satisfy the reference constraints");
        [d.bright_counts as f64, d.dark_counts as f64, d.signal_counts as f64]
    }

    /// `X ln α + Y ln β + Z ln s − N(α + β + s)`; the dropped terms depend
    /// only on the datum.
    fn log_likelihood(&self, d: &[f64; 3], j: usize) -> f64 {
        let l = &self.ln_rates[j];
        let v = d[0] * l[0] + d[1] * l[1] + d[2] * l[2] - self.total_rate[j];
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }
}

fn centred_support(points: &[Particle], centre: &Particle, q: &WeightMatrix) -> Vec<Vec<f64>> {
    points.iter().map(|x| q.support.iter().map(|&k| x[k] - centre[k]).collect()).collect()
}

/// MIS estimator. `inner`/`inner_weights` define the reweighted particle set
/// and `outer` the points that generate one outcome each; all are indices
/// into `points`.
pub fn mis_risk_with<M: OutcomeModel, R: Rng + ?Sized>(
    model: &M,
    points: &[Particle],
    inner: &[usize],
    inner_weights: &[f64],
    outer: &[usize],
    q: &WeightMatrix,
    rng: &mut R,
) -> RiskEstimate {
    let inner_points: Vec<Particle> = inner.iter().map(|&j| points[j]).collect();
    let total_w: f64 = inner_weights.iter().sum();
    let mut centre = [0.0; DIM];
    for (x, w) in inner_points.iter().zip(inner_weights) {
        for k in 0..DIM {
            centre[k] += w / total_w * x[k];
        }
    }
    let y = centred_support(&inner_points, &centre, q);
    let qq: Vec<f64> = y.iter().map(|v| q.quad(v)).collect();
    let ln_w: Vec<f64> = inner_weights.iter().map(|w| w.ln()).collect();
    let dim = q.support.len();

    let outcomes: Vec<M::Outcome> = outer.iter().map(|&i| model.sample_outcome(i, rng)).collect();
    let terms: Vec<Option<f64>> = outcomes
        .par_iter()
        .map(|d| {
            if dim == 0 {
                return Some(0.0);
            }
            let lw: Vec<f64> = inner.iter().zip(&ln_w).map(|(&j, lnw)| lnw + model.log_likelihood(d, j)).collect();
            let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !max.is_finite() {
                return None;
            }
            let mut norm = 0.0;
            let mut second = 0.0;
            let mut mean = vec![0.0; dim];
            for ((l, yj), qj) in lw.iter().zip(&y).zip(&qq) {
                let w = (l - max).exp();
                norm += w;
                second += w * qj;
                for (m, v) in mean.iter_mut().zip(yj) {
                    *m += w * v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= norm);
            Some(second / norm - q.quad(&mean))
        })
        .collect();
    RiskEstimate::from_terms(&terms, inner.len())
}

/// Brute-force estimator over one uniformly weighted sample (indices into
/// `points`, duplicates allowed).
pub fn brute_force_risk_with<M: OutcomeModel, R: Rng + ?Sized>(
    model: &M,
    points: &[Particle],
    sample: &[usize],
    q: &WeightMatrix,
    rng: &mut R,
) -> RiskEstimate {
    let dim = q.support.len();
    let sampled: Vec<Particle> = sample.iter().map(|&j| points[j]).collect();
    let mut centre = [0.0; DIM];
    for x in &sampled {
        for k in 0..DIM {
            centre[k] += x[k] / sampled.len() as f64;
        }
    }
    let y = centred_support(&sampled, &centre, q);
    let outcomes: Vec<M::Outcome> = sample.iter().map(|&i| model.sample_outcome(i, rng)).collect();
    let terms: Vec<Option<f64>> = outcomes
        .par_iter()
        .enumerate()
        .map(|(i, d)| {
            if dim == 0 {
                return Some(0.0);
            }
            let ll: Vec<f64> = sample.iter().map(|&j| model.log_likelihood(d, j)).collect();
            let max = ll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !max.is_finite() {
                return None;
            }
            let mut norm = 0.0;
            let mut mean = vec![0.0; dim];
            for (l, yj) in ll.iter().zip(&y) {
                let w = (l - max).exp();
                norm += w;
                for (m, v) in mean.iter_mut().zip(yj) {
                    *m += w * v;
                }
            }
            let err: Vec<f64> = y[i].iter().zip(&mean).map(|(v, m)| v - m / norm).collect();
            Some(q.quad(&err))
        })
        .collect();
    RiskEstimate::from_terms(&terms, sample.len())
}

/// Particles drawn once from a cloud for risk evaluation.
#[derive(Clone, Debug)]
pub struct RiskSample {
    /// Distinct cloud particles referenced below.
    pub points: Vec<Particle>,
    pub inner: Vec<usize>,
    pub inner_weights: Vec<f64>,
    pub outer: Vec<usize>,
}

impl RiskSample {
    /// Outer particles are `K′` draws by weight. The inner set is the whole
    /// cloud when `K ≥ len`, otherwise `K` multinomial draws merged into
    /// distinct particles weighted by multiplicity.
    pub fn draw<R: Rng + ?Sized>(cloud: &ParticleCloud, sizes: RiskSizes, rng: &mut R) -> Result<Self> {
        if sizes.outcomes < 2 || sizes.particles < 2 {
            return Err(Error::InvalidArgument(format!("risk sizes {sizes:?} must be at least 2")));
        }
        let by_weight = WeightedIndex::new(&cloud.weights).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut slot = vec![usize::MAX; cloud.len()];
        let mut points = Vec::new();
        let mut intern = |i: usize, points: &mut Vec<Particle>| {
            if slot[i] == usize::MAX {
                slot[i] = points.len();
                points.push(cloud.locations[i]);
            }
            slot[i]
        };

        let (inner, inner_weights) = if sizes.particles >= cloud.len() {
            let idx = (0..cloud.len()).map(|i| intern(i, &mut points)).collect();
            (idx, cloud.weights.clone())
        } else {
            let mut counts = vec![0usize; cloud.len()];
            for _ in 0..sizes.particles {
                counts[by_weight.sample(rng)] += 1;
            }
            let mut idx = Vec::new();
            let mut w = Vec::new();
            for (i, c) in counts.into_iter().enumerate().filter(|(_, c)| *c > 0) {
                idx.push(intern(i, &mut points));
                w.push(c as f64 / sizes.particles as f64);
            }
            (idx, w)
        };
        let outer = (0..sizes.outcomes).map(|_| intern(by_weight.sample(rng), &mut points)).collect();
        Ok(RiskSample { points, inner, inner_weights, outer })
    }
}

fn survival_table(points: &[Particle], experiments: &[ExperimentConfig]) -> Vec<Vec<f64>> {
    points.par_iter().map(|x| survival_probabilities(&spin_of(x), experiments)).collect()
}

fn column(table: &[Vec<f64>], c: usize) -> Vec<f64> {
    table.iter().map(|row| row[c]).collect()
}

pub fn mis_risk<R: Rng + ?Sized>(
    cloud: &ParticleCloud,
    experiment: &ExperimentConfig,
    q: &WeightMatrix,
    sizes: RiskSizes,
    rng: &mut R,
) -> Result<RiskEstimate> {
    experiment.validate()?;
    let sample = RiskSample::draw(cloud, sizes, rng)?;
    let probs = column(&survival_table(&sample.points, std::slice::from_ref(experiment)), 0);
    let model = NvOutcomeModel::new(&sample.points, &probs, experiment.repetitions);
    Ok(mis_risk_with(&model, &sample.points, &sample.inner, &sample.inner_weights, &sample.outer, q, rng))
}

pub fn brute_force_risk<R: Rng + ?Sized>(
    cloud: &ParticleCloud,
    experiment: &ExperimentConfig,
    q: &WeightMatrix,
    outcomes: usize,
    rng: &mut R,
) -> Result<RiskEstimate> {
    experiment.validate()?;
    if outcomes < 2 {
        return Err(Error::InvalidArgument("brute-force risk needs at least 2 samples".into()));
    }
    let by_weight = WeightedIndex::new(&cloud.weights).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let points: Vec<Particle> = (0..outcomes).map(|_| cloud.locations[by_weight.sample(rng)]).collect();
    let probs = column(&survival_table(&points, std::slice::from_ref(experiment)), 0);
    let model = NvOutcomeModel::new(&points, &probs, experiment.repetitions);
    let sample: Vec<usize> = (0..outcomes).collect();
    Ok(brute_force_risk_with(&model, &points, &sample, q, rng))
}

/// MIS risk of every candidate against one particle sample, with common
/// random numbers for outcome sampling. With `normalize`, values are divided
/// by `Tr[Q·Cov(cloud)]`.
pub fn risk_profile<R: Rng + ?Sized>(
    cloud: &ParticleCloud,
    experiments: &[ExperimentConfig],
    q: &WeightMatrix,
    sizes: RiskSizes,
    normalize: bool,
    rng: &mut R,
) -> Result<Vec<(ExperimentConfig, RiskEstimate)>> {
    if experiments.is_empty() {
        return Err(Error::InvalidArgument("empty candidate list".into()));
    }
    for e in experiments {
        e.validate()?;
    }
    let sample = RiskSample::draw(cloud, sizes, rng)?;
    let table = survival_table(&sample.points, experiments);
    let outcome_seed: u64 = rng.random();
    let scale = if normalize {
        let sigma_q = q.trace_with(&cloud.covariance());
        if sigma_q > 0.0 {
            1.0 / sigma_q
        } else {
            1.0
        }
    } else {
        1.0
    };
    Ok(experiments
        .iter()
        .enumerate()
        .map(|(c, e)| {
            let model = NvOutcomeModel::new(&sample.points, &column(&table, c), e.repetitions);
            let mut crn = ChaCha8Rng::seed_from_u64(outcome_seed);
            let est =
                mis_risk_with(&model, &sample.points, &sample.inner, &sample.inner_weights, &sample.outer, q, &mut crn);
            (*e, est.scaled(scale))
        })
        .collect())
}

/// Posterior standard deviations of the per-shot references.
pub fn reference_sds(cloud: &ParticleCloud) -> (f64, f64) {
    let var = cloud.variance();
    (var[BRIGHT].sqrt(), var[DARK].sqrt())
}
