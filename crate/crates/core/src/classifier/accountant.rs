//! zCDP accounting for the Gaussian mechanism without subsampling amplification.
//!
//! T releases with noise multiplier sigma compose to `rho = T / (2 sigma^2)`,
//! which converts to `(rho + 2 sqrt(rho ln(1/delta)), delta)`-DP.

use super::ClassifierError;

pub const SIGMA_CAP: f64 = 1e6;

pub fn rho(sigma: f64, steps: usize) -> f64 {
    steps as f64 / (2.0 * sigma * sigma)
}

pub fn zcdp_to_epsilon(rho: f64, delta: f64) -> f64 {
    rho + 2.0 * (rho * (1.0 / delta).ln()).sqrt()
}

pub fn epsilon_for(sigma: f64, steps: usize, delta: f64) -> f64 {
    zcdp_to_epsilon(rho(sigma, steps), delta)
}

/// Smallest noise multiplier (to 1e-6 in epsilon) whose `steps`-fold
/// composition stays within `(epsilon, delta)`. Found by bisection.
pub fn calibrate_sigma(epsilon: f64, delta: f64, steps: usize) -> Result<f64, ClassifierError> {
    if !(epsilon > 0.0) || !(delta > 0.0 && delta < 1.0) || steps == 0 {
        return Err(ClassifierError::InvalidBudget(format!(
            "need epsilon > 0, 0 < delta < 1, steps >= 1 (got {epsilon}, {delta}, {steps})"
        )));
    }
    if epsilon_for(SIGMA_CAP, steps, delta) > epsilon {
        return Err(ClassifierError::InvalidBudget(format!(
            "no noise multiplier below {SIGMA_CAP} reaches epsilon {epsilon}"
        )));
    }
    let (mut lo, mut hi) = (1e-6, SIGMA_CAP);
    for _ in 0..500 {
        let mid = 0.5 * (lo + hi);
        let eps = epsilon_for(mid, steps, delta);
        if eps > epsilon {
            lo = mid;
        } else {
            hi = mid;
            if epsilon - eps <= 1e-6 {
                break;
            }
        }
    }
    Ok(hi)
}
