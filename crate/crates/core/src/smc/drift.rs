use rand::Rng;
use rand_distr::StandardNormal;

use super::{ParticleCloud, MAX_REDRAWS};
use crate::error::{Error, Result};
use crate::model::{drift_of, BRIGHT, DARK};

/// Advance each particle's references by its own Gaussian random walk over
/// `dt_hours`, redrawing proposals outside `0 < β < α`.
pub fn drift_step<R: Rng + ?Sized>(cloud: &mut ParticleCloud, dt_hours: f64, rng: &mut R) -> Result<()> {
    if !(dt_hours >= 0.0 && dt_hours.is_finite()) {
        return Err(Error::InvalidArgument(format!("drift interval {dt_hours} h must be finite and nonnegative")));
    }
    if dt_hours == 0.0 {
        return Ok(());
    }
    for x in &mut cloud.locations {
        let [[s11, s12], [_, s22]] = drift_of(x).hourly_covariance();
        let l11 = (dt_hours * s11).sqrt();
        let l21 = if l11 > 0.0 { dt_hours * s12 / l11 } else { 0.0 };
        let l22 = (dt_hours * s22 - l21 * l21).max(0.0).sqrt();
        let mut moved = false;
        for _ in 0..MAX_REDRAWS {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let alpha = x[BRIGHT] + l11 * z1;
            let beta = x[DARK] + l21 * z1 + l22 * z2;
            if 0.0 < beta && beta < alpha {
                x[BRIGHT] = alpha;
                x[DARK] = beta;
                moved = true;
                break;
            }
        }
        if !moved {
            return Err(Error::RedrawExhausted { what: "drifted reference pair", attempts: MAX_REDRAWS });
        }
    }
    cloud.last_update_time += dt_hours;
    Ok(())
}
