use nalgebra::{SVector, SymmetricEigen};
use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ParticleCloud, MAX_REDRAWS};
use crate::error::{Error, Result};
use crate::model::{is_valid, DIM};

/// Liu–West kernel resampling.
///
/// Each new particle is `a·x_anc + (1 − a)·x̄ + ε` with `ε ~ N(0, (1 − a²)·Cov)`,
/// so the first two moments are preserved in expectation. Invalid proposals
/// get fresh noise around the same ancestor; the shrunk centre itself is
/// always valid because the constraint region is convex.
pub fn liu_west_resample<R: Rng + ?Sized>(cloud: &mut ParticleCloud, a: f64, rng: &mut R) -> Result<()> {
    if !(a > 0.0 && a <= 1.0) {
        return Err(Error::InvalidArgument(format!("Liu–West parameter a = {a} outside (0, 1]")));
    }
    let k = cloud.len();
    let mean = SVector::<f64, DIM>::from_column_slice(&cloud.mean());
    let cov = cloud.covariance();
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("cloud covariance is not finite".into()));
    }
    let h2 = 1.0 - a * a;
    let sqrt_cov = if h2 > 0.0 {
        let eig = SymmetricEigen::new(cov * h2);
        let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        Some(eig.eigenvectors * nalgebra::SMatrix::<f64, DIM, DIM>::from_diagonal(&root) * eig.eigenvectors.transpose())
    } else {
        None
    };

    let ancestors = WeightedIndex::new(&cloud.weights).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut locations = Vec::with_capacity(k);
    for _ in 0..k {
        let anc = &cloud.locations[ancestors.sample(rng)];
        let Some(root) = &sqrt_cov else {
            locations.push(*anc);
            continue;
        };
        let centre = SVector::<f64, DIM>::from_column_slice(anc) * a + mean * (1.0 - a);
        let mut accepted = None;
        for _ in 0..MAX_REDRAWS {
            let z = SVector::<f64, DIM>::from_fn(|_, _| rng.sample(StandardNormal));
            let proposal: [f64; DIM] = (centre + root * z).into();
            if is_valid(&proposal) {
                accepted = Some(proposal);
                break;
            }
        }
        locations.push(accepted.ok_or(Error::RedrawExhausted { what: "resampled particle", attempts: MAX_REDRAWS })?);
    }
    cloud.locations = locations;
    cloud.weights = vec![1.0 / k as f64; k];
    Ok(())
}
