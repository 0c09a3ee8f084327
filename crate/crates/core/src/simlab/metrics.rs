//! Scoring rules for recovered boundary directions.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Angle in radians between two unit directions, `arccos` of the clamped dot
/// product. Both inputs must be unit vectors of the same length.
pub fn angular_error(estimate: &DVector<f64>, truth: &DVector<f64>) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::invalid_argument(format!(
            "direction lengths differ: {} vs {}",
            estimate.len(),
            truth.len()
        )));
    }
    if estimate.is_empty() {
        return Err(Error::invalid_argument("directions must be non-empty"));
    }
    for (name, v) in [("estimate", estimate), ("truth", truth)] {
        let norm = v.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-6 {
            return Err(Error::invalid_argument(format!(
                "{name} direction is not unit length (norm {norm})"
            )));
        }
    }
    let dot = estimate.dot(truth).clamp(-1.0, 1.0);
    Ok(dot.acos())
}

/// Monte Carlo estimate of the disagreement rate between two boundary rules.
///
/// Draws gate covariate vectors with a leading intercept of one followed by
/// independent standard normals, and reports the fraction on which the two
/// half-space rules (nonnegative score, boundary included) disagree.
pub fn misclassification(
    estimate: &DVector<f64>,
    truth: &DVector<f64>,
    mc_draws: usize,
    seed: u64,
) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::invalid_argument(format!(
            "direction lengths differ: {} vs {}",
            estimate.len(),
            truth.len()
        )));
    }
    if estimate.is_empty() {
        return Err(Error::invalid_argument("directions must be non-empty"));
    }
    if mc_draws == 0 {
        return Err(Error::invalid_argument("misclassification needs at least one draw"));
    }
    let q = estimate.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut disagreements = 0usize;
    for _ in 0..mc_draws {
        let mut s_est = estimate[0];
        let mut s_true = truth[0];
        for j in 1..q {
            let u: f64 = rng.sample(StandardNormal);
            s_est += estimate[j] * u;
            s_true += truth[j] * u;
        }
        if (s_est >= 0.0) != (s_true >= 0.0) {
            disagreements += 1;
        }
    }
    Ok(disagreements as f64 / mc_draws as f64)
}
