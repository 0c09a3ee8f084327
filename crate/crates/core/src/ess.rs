//! Elliptical slice updates.
//!
//! Two variants share the shrinking-bracket core:
//!
//! * [`hemisphere_great_circle_update`] moves a unit vector along a random
//!   great circle under a uniform hemisphere prior (first coordinate
//!   nonnegative); off-hemisphere proposals count as likelihood zero.
//! * [`elliptical_slice_update`] is the untransformed sampler for a
//!   centered Gaussian prior (Murray, Adams and MacKay, 2010).
//!
//! Both always accept eventually: the current point sits at angle zero,
//! which every shrink step keeps inside the bracket. The retry cap exists
//! to convert likelihood-evaluation bugs into diagnosable errors instead
//! of infinite loops.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Telemetry from one slice update.
#[derive(Debug, Clone, Copy, Default)]
pub struct SliceOutcome {
    /// Number of rejected proposals before acceptance (bracket shrinks).
    pub rejections: u32,
}

/// Default cap on bracket shrinks before the update aborts.
pub const MAX_SLICE_SHRINK: u32 = 1000;

/// One great-circle slice move of a unit vector restricted to the
/// hemisphere `theta[0] >= 0`.
///
/// `log_lik` is evaluated on unit vectors only. The accepted point is
/// re-normalized before it replaces `theta`, so norm drift cannot
/// accumulate over sweeps.
pub fn hemisphere_great_circle_update(
    theta: &mut DVector<f64>,
    mut log_lik: impl FnMut(&DVector<f64>) -> f64,
    rng: &mut impl Rng,
    max_shrink: u32,
) -> Result<SliceOutcome> {
    let q = theta.len();
    debug_assert!((theta.norm() - 1.0).abs() < 1e-9, "theta must be unit");

    // Random tangent direction: project a standard normal draw off theta.
    let mut tangent = DVector::zeros(q);
    let mut ok = false;
    for _ in 0..100 {
        let nu = DVector::from_fn(q, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut t = &nu - &*theta * theta.dot(&nu);
        let norm = t.norm();
        if norm > 1e-12 {
            t /= norm;
            tangent = t;
            ok = true;
            break;
        }
    }
    if !ok {
        return Err(Error::numerical(
            "could not find a tangent direction for the great-circle move",
        ));
    }

    // Slice level under the current point; (0,1] uniform keeps the log finite.
    let u: f64 = 1.0 - rng.random::<f64>();
    let log_y = log_lik(theta) + u.ln();

    let mut lo = -std::f64::consts::PI;
    let mut hi = std::f64::consts::PI;
    let mut angle = rng.random_range(lo..hi);
    let mut rejections = 0u32;
    loop {
        let proposal = &*theta * angle.cos() + &tangent * angle.sin();
        // The hemisphere constraint acts as a zero-likelihood region.
        if proposal[0] >= 0.0 && log_lik(&proposal) >= log_y {
            let mut accepted = proposal;
            let norm = accepted.norm();
            accepted /= norm;
            *theta = accepted;
            return Ok(SliceOutcome { rejections });
        }
        rejections += 1;
        if rejections > max_shrink {
            return Err(Error::numerical(format!(
                "great-circle slice exceeded {max_shrink} shrinks \
                 (bracket [{lo:.3e}, {hi:.3e}], slice level {log_y:.6e})"
            )));
        }
        if angle < 0.0 {
            lo = angle;
        } else {
            hi = angle;
        }
        angle = rng.random_range(lo..hi);
    }
}

/// One elliptical slice move under a centered Gaussian prior.
///
/// `prior_draw` must be an independent draw from that prior; the caller
/// owns the prior's covariance structure.
pub fn elliptical_slice_update(
    x: &mut DVector<f64>,
    prior_draw: DVector<f64>,
    mut log_lik: impl FnMut(&DVector<f64>) -> f64,
    rng: &mut impl Rng,
    max_shrink: u32,
) -> Result<SliceOutcome> {
    debug_assert_eq!(x.len(), prior_draw.len());
    let u: f64 = 1.0 - rng.random::<f64>();
    let log_y = log_lik(x) + u.ln();

    let mut angle = rng.random_range(0.0..std::f64::consts::TAU);
    let mut lo = angle - std::f64::consts::TAU;
    let mut hi = angle;
    let mut rejections = 0u32;
    loop {
        let proposal = &*x * angle.cos() + &prior_draw * angle.sin();
        if log_lik(&proposal) >= log_y {
            *x = proposal;
            return Ok(SliceOutcome { rejections });
        }
        rejections += 1;
        if rejections > max_shrink {
            return Err(Error::numerical(format!(
                "elliptical slice exceeded {max_shrink} shrinks \
                 (bracket [{lo:.3e}, {hi:.3e}], slice level {log_y:.6e})"
            )));
        }
        if angle < 0.0 {
            lo = angle;
        } else {
            hi = angle;
        }
        angle = rng.random_range(lo..hi);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hemisphere_update_preserves_unit_norm_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut theta = DVector::from_column_slice(&[1.0, 0.0, 0.0]);
        for _ in 0..5_000 {
            hemisphere_great_circle_update(&mut theta, |_| 0.0, &mut rng, MAX_SLICE_SHRINK)
                .unwrap();
            assert!((theta.norm() - 1.0).abs() < 1e-12);
            assert!(theta[0] >= 0.0);
        }
    }

    #[test]
    fn flat_likelihood_gives_uniform_hemisphere() {
        // With log_lik = const the stationary law is uniform on the
        // hemisphere: E[theta_1] = 1/2 for q = 3 (first coordinate of a
        // uniform sphere draw is U(-1,1), folded to |U|), off-axis means 0,
        // second moments I/3.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut theta = DVector::from_column_slice(&[1.0, 0.0, 0.0]);
        let sweeps = 100_000;
        let mut mean = DVector::zeros(3);
        let mut sq = DVector::zeros(3);
        for _ in 0..sweeps {
            hemisphere_great_circle_update(&mut theta, |_| 0.0, &mut rng, MAX_SLICE_SHRINK)
                .unwrap();
            mean += &theta;
            for k in 0..3 {
                sq[k] += theta[k] * theta[k];
            }
        }
        mean /= sweeps as f64;
        sq /= sweeps as f64;
        assert!((mean[0] - 0.5).abs() < 0.02, "E[theta_1] = {}", mean[0]);
        assert!(mean[1].abs() < 0.02 && mean[2].abs() < 0.02);
        for k in 0..3 {
            assert!((sq[k] - 1.0 / 3.0).abs() < 0.02, "E[theta_{k}^2] = {}", sq[k]);
        }
    }

    #[test]
    fn hemisphere_constraint_is_respected_under_pressure() {
        // A likelihood that pulls toward theta_1 < 0; every kept state must
        // still sit on the constraint hemisphere.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let target = DVector::from_column_slice(&[-0.9701425001453319, 0.24253562503633297]);
        let mut theta = DVector::from_column_slice(&[1.0, 0.0]);
        for _ in 0..20_000 {
            hemisphere_great_circle_update(
                &mut theta,
                |v: &DVector<f64>| 8.0 * v.dot(&target),
                &mut rng,
                MAX_SLICE_SHRINK,
            )
            .unwrap();
            assert!(theta[0] >= 0.0);
        }
    }

    #[test]
    fn shrink_cap_surfaces_as_an_error_with_telemetry() {
        // Likelihood -inf everywhere except the exact current point: the
        // bracket shrinks forever, so the cap must fire.
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let start = DVector::from_column_slice(&[1.0, 0.0]);
        let mut theta = start.clone();
        let err = hemisphere_great_circle_update(
            &mut theta,
            |v: &DVector<f64>| {
                if (v - &start).norm() == 0.0 {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            },
            &mut rng,
            50,
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("exceeded 50 shrinks"), "{msg}");
        assert!(msg.contains("bracket"), "{msg}");
    }

    #[test]
    fn elliptical_update_targets_a_known_gaussian_posterior() {
        // Prior N(0, 1) per coordinate, likelihood N(y | x, s2) => posterior
        // N(y/(1+s2), s2/(1+s2)) per coordinate.
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let y = DVector::from_column_slice(&[1.5, -0.7]);
        let s2 = 0.5;
        let mut x = DVector::zeros(2);
        let sweeps = 200_000;
        let burn = 2_000;
        let mut mean = DVector::zeros(2);
        let mut sq = DVector::zeros(2);
        for it in 0..sweeps {
            let prior = DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal));
            elliptical_slice_update(
                &mut x,
                prior,
                |v: &DVector<f64>| -0.5 * (&y - v).norm_squared() / s2,
                &mut rng,
                MAX_SLICE_SHRINK,
            )
            .unwrap();
            if it >= burn {
                mean += &x;
                for k in 0..2 {
                    sq[k] += x[k] * x[k];
                }
            }
        }
        let kept = (sweeps - burn) as f64;
        mean /= kept;
        sq /= kept;
        let post_var = s2 / (1.0 + s2);
        for k in 0..2 {
            let post_mean = y[k] / (1.0 + s2);
            assert!(
                (mean[k] - post_mean).abs() < 0.01,
                "coordinate {k}: {} vs {post_mean}",
                mean[k]
            );
            let var = sq[k] - mean[k] * mean[k];
            assert!((var - post_var).abs() < 0.02, "var {k}: {var} vs {post_var}");
        }
    }
}
