//! Horseshoe shrinkage prior for the boundary direction.
//!
//! The likelihood depends on an unconstrained coefficient vector `nu` only
//! through the unit direction `theta = sign(nu_1) * nu / |nu|`, so sparsity
//! can be expressed on `nu`: independent `N(0, lambda_glob^2 lambda_loc_j^2)`
//! coordinates with half-Cauchy local and global scales. Each half-Cauchy is
//! represented by the inverse-gamma mixture
//!
//! ```text
//! lambda^2 | xi ~ InvGamma(1/2, 1/xi),    xi ~ InvGamma(1/2, 1)
//! ```
//!
//! which makes every scale update a conjugate inverse-gamma draw, while `nu`
//! itself moves by elliptical slice sampling against the latent-threshold
//! likelihood. The sign map is deterministic, so no hemisphere rejection is
//! needed here (unlike the uniform-prior great-circle update).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::ess::{elliptical_slice_update, SliceOutcome};
use crate::math::sample_inverse_gamma;

/// Hard floor/ceiling applied to scale and auxiliary draws. The clamp sits
/// ~200 orders of magnitude outside any statistically visited region and
/// exists only so that a deep shrinkage funnel cannot underflow a local
/// scale to zero and poison later reciprocals.
const SCALE_FLOOR: f64 = 1e-100;
const SCALE_CEIL: f64 = 1e100;

/// Sampler state for the horseshoe prior on the boundary direction.
#[derive(Debug, Clone)]
pub struct HorseshoeState {
    /// Unconstrained direction coefficients.
    pub nu: DVector<f64>,
    /// Squared local scales, one per boundary covariate.
    pub lambda_loc2: DVector<f64>,
    /// Squared global scale.
    pub lambda_glob2: f64,
    /// Auxiliary inverse-gamma variables paired with the local scales.
    pub xi_loc: DVector<f64>,
    /// Auxiliary variable paired with the global scale.
    pub xi_glob: f64,
}

impl HorseshoeState {
    /// Fresh state: `nu` standard normal (a draw from the scale-mixture
    /// prior with every scale at 1), scales and auxiliaries at 1.
    pub fn init(q: usize, rng: &mut impl Rng) -> Result<Self> {
        if q == 0 {
            return Err(Error::invalid_argument(
                "horseshoe state needs at least one coordinate",
            ));
        }
        let mut nu = DVector::from_fn(q, |_, _| rng.sample::<f64, _>(StandardNormal));
        while nu.norm() == 0.0 {
            nu = DVector::from_fn(q, |_, _| rng.sample::<f64, _>(StandardNormal));
        }
        Ok(HorseshoeState {
            nu,
            lambda_loc2: DVector::from_element(q, 1.0),
            lambda_glob2: 1.0,
            xi_loc: DVector::from_element(q, 1.0),
            xi_glob: 1.0,
        })
    }

    pub fn q(&self) -> usize {
        self.nu.len()
    }

    /// Induced unit direction on the hemisphere.
    pub fn theta(&self) -> Result<DVector<f64>> {
        theta_of_nu(&self.nu)
    }

    /// Check structural invariants: finite nonzero `nu`, strictly positive
    /// finite scales and auxiliaries.
    pub fn validate(&self) -> Result<()> {
        if self.nu.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_state("nu has a non-finite entry"));
        }
        if self.nu.norm() == 0.0 {
            return Err(Error::invalid_state("nu is the zero vector"));
        }
        if self.lambda_loc2.len() != self.nu.len() || self.xi_loc.len() != self.nu.len() {
            return Err(Error::invalid_state(
                "scale vectors do not match the nu dimension",
            ));
        }
        for (name, v) in [("lambda_loc2", &self.lambda_loc2), ("xi_loc", &self.xi_loc)] {
            if v.iter().any(|&s| !s.is_finite() || s <= 0.0) {
                return Err(Error::invalid_state(format!(
                    "{name} has a non-positive or non-finite entry"
                )));
            }
        }
        for (name, s) in [("lambda_glob2", self.lambda_glob2), ("xi_glob", self.xi_glob)] {
            if !s.is_finite() || s <= 0.0 {
                return Err(Error::invalid_state(format!(
                    "{name} must be positive and finite, got {s}"
                )));
            }
        }
        Ok(())
    }
}

/// Map unconstrained coefficients to the hemisphere:
/// `sign(nu_1) * nu / |nu|` with `sign(0) = +1`. The result is unit-norm
/// with a nonnegative first coordinate; positive rescalings of `nu` map to
/// the same point.
pub fn theta_of_nu(nu: &DVector<f64>) -> Result<DVector<f64>> {
    let norm = nu.norm();
    if !norm.is_finite() || norm == 0.0 {
        return Err(Error::invalid_argument(format!(
            "cannot map a coefficient vector with norm {norm} to the sphere"
        )));
    }
    let sign = if nu[0] < 0.0 { -1.0 } else { 1.0 };
    Ok(nu * (sign / norm))
}

/// One elliptical slice move of `nu` against the latent-threshold target
/// `-|t - Z theta(nu)|^2 / (2 tau^2)` with prior
/// `N(0, lambda_glob^2 diag(lambda_loc^2))`.
pub fn update_nu_ess(
    hs: &mut HorseshoeState,
    t: &DVector<f64>,
    z: &DMatrix<f64>,
    tau: f64,
    max_shrink: u32,
    rng: &mut impl Rng,
) -> Result<SliceOutcome> {
    if z.ncols() != hs.nu.len() || z.nrows() != t.len() {
        return Err(Error::invalid_argument(format!(
            "boundary matrix is {}x{} but |t| = {} and |nu| = {}",
            z.nrows(),
            z.ncols(),
            t.len(),
            hs.nu.len()
        )));
    }
    if hs.nu.norm() == 0.0 {
        return Err(Error::invalid_state("nu is the zero vector"));
    }
    let glob = hs.lambda_glob2.sqrt();
    let prior_draw = DVector::from_fn(hs.nu.len(), |j, _| {
        glob * hs.lambda_loc2[j].sqrt() * rng.sample::<f64, _>(StandardNormal)
    });
    let inv_two_tau2 = 1.0 / (2.0 * tau * tau);
    let log_lik = |nu: &DVector<f64>| match theta_of_nu(nu) {
        // A zero proposal (probability zero) acts as likelihood zero and is
        // rejected by the slice; the accepted point always has finite target.
        Err(_) => f64::NEG_INFINITY,
        Ok(theta) => {
            let resid = t - z * theta;
            -resid.norm_squared() * inv_two_tau2
        }
    };
    elliptical_slice_update(&mut hs.nu, prior_draw, log_lik, rng, max_shrink)
}

/// One systematic scan of the conjugate scale updates: local scales, local
/// auxiliaries, global scale, global auxiliary, each from its full
/// conditional given the current values of everything else.
pub fn update_scales(hs: &mut HorseshoeState, rng: &mut impl Rng) {
    let q = hs.nu.len();
    for j in 0..q {
        hs.lambda_loc2[j] =
            draw_local_scale2(hs.nu[j], hs.lambda_glob2, hs.xi_loc[j], rng);
    }
    for j in 0..q {
        hs.xi_loc[j] = draw_local_aux(hs.lambda_loc2[j], rng);
    }
    hs.lambda_glob2 = draw_global_scale2(&hs.nu, &hs.lambda_loc2, hs.xi_glob, rng);
    hs.xi_glob = draw_global_aux(hs.lambda_glob2, rng);
}

fn clamp_scale(s: f64) -> f64 {
    s.clamp(SCALE_FLOOR, SCALE_CEIL)
}

/// lambda_loc_j^2 | rest ~ InvGamma(1, 1/xi_j + nu_j^2 / (2 lambda_glob^2)).
fn draw_local_scale2(nu_j: f64, lambda_glob2: f64, xi_j: f64, rng: &mut impl Rng) -> f64 {
    let scale = 1.0 / xi_j + nu_j * nu_j / (2.0 * lambda_glob2);
    clamp_scale(sample_inverse_gamma(1.0, scale, rng))
}

/// xi_j | rest ~ InvGamma(1, 1 + 1/lambda_loc_j^2).
fn draw_local_aux(lambda_loc2_j: f64, rng: &mut impl Rng) -> f64 {
    clamp_scale(sample_inverse_gamma(1.0, 1.0 + 1.0 / lambda_loc2_j, rng))
}

/// lambda_glob^2 | rest ~
/// InvGamma((q+1)/2, 1/xi_glob + (1/2) sum_j nu_j^2 / lambda_loc_j^2).
fn draw_global_scale2(
    nu: &DVector<f64>,
    lambda_loc2: &DVector<f64>,
    xi_glob: f64,
    rng: &mut impl Rng,
) -> f64 {
    let q = nu.len() as f64;
    let quad: f64 = nu
        .iter()
        .zip(lambda_loc2.iter())
        .map(|(&v, &l2)| v * v / l2)
        .sum();
    let scale = 1.0 / xi_glob + 0.5 * quad;
    clamp_scale(sample_inverse_gamma((q + 1.0) / 2.0, scale, rng))
}

/// xi_glob | rest ~ InvGamma(1, 1 + 1/lambda_glob^2).
fn draw_global_aux(lambda_glob2: f64, rng: &mut impl Rng) -> f64 {
    clamp_scale(sample_inverse_gamma(1.0, 1.0 + 1.0 / lambda_glob2, rng))
}
