//! The probit-smoothed working model for change-plane regression.
//!
//! The hard model splits the population at a hyperplane through the origin
//! of the boundary covariates: rows with `z' theta >= 0` receive the extra
//! regression term `x' gamma`. The working model replaces the indicator
//! with a probit gate of scale `tau`, giving the observed-data mixture
//!
//! ```text
//! pi(z)     = Phi(z' theta / tau)
//! p(y|w,x,z) = (1 - pi) N(y; w'beta,            sigma2)
//!            +      pi  N(y; w'beta + x'gamma,  sigma2)
//! E[y|w,x,z] = w'beta + (x'gamma) pi(z)
//! ```
//!
//! `theta` lives on the unit hemisphere (`|theta| = 1`, first coordinate
//! nonnegative), which pins the scale and sign left free by the indicator.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{log_sum_exp, norm_cdf, norm_log_cdf, norm_log_pdf, LN_2PI};

/// Largest double strictly below 1; gate probabilities saturate here.
const ONE_MINUS_ULP: f64 = 1.0 - f64::EPSILON / 2.0;

/// Validated smoothing scale `tau > 0` for the probit gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SmoothingScale(f64);

impl SmoothingScale {
    pub fn new(tau: f64) -> Result<Self> {
        if tau.is_finite() && tau > 0.0 {
            Ok(SmoothingScale(tau))
        } else {
            Err(Error::invalid_argument(format!(
                "smoothing scale must be a positive finite number, got {tau}"
            )))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// Width of the gray zone where the gate moves from 0.05 to 0.95:
    /// `2 * 1.645 * tau` on the score scale.
    pub fn gray_zone_width(self) -> f64 {
        2.0 * 1.645 * self.0
    }
}

impl TryFrom<f64> for SmoothingScale {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        SmoothingScale::new(v)
    }
}

impl From<SmoothingScale> for f64 {
    fn from(s: SmoothingScale) -> f64 {
        s.0
    }
}

/// Membership probability `Phi(z' theta / tau)`.
///
/// Strictly inside (0, 1): the tails saturate at the nearest representable
/// neighbors of 0 and 1 rather than rounding onto the endpoints. Samplers
/// that need exact tail mass work with [`norm_log_cdf`] instead.
pub fn probit_gate(z: &DVector<f64>, theta: &DVector<f64>, tau: SmoothingScale) -> Result<f64> {
    let score = boundary_score(z, theta)?;
    Ok(norm_cdf(score / tau.value())
        .max(f64::MIN_POSITIVE)
        .min(ONE_MINUS_ULP))
}

/// Hard-threshold membership: `z' theta >= 0`, inclusive at the boundary.
pub fn hard_indicator(z: &DVector<f64>, theta: &DVector<f64>) -> Result<bool> {
    Ok(boundary_score(z, theta)? >= 0.0)
}

/// Log of the working mixture density of one observation.
#[allow(clippy::too_many_arguments)]
pub fn working_log_density(
    y: f64,
    w: &DVector<f64>,
    x: &DVector<f64>,
    z: &DVector<f64>,
    beta: &DVector<f64>,
    gamma: &DVector<f64>,
    theta: &DVector<f64>,
    sigma2: f64,
    tau: SmoothingScale,
) -> Result<f64> {
    check_finite_scalar("y", y)?;
    check_positive("sigma2", sigma2)?;
    let score = boundary_score(z, theta)?;
    let m0 = dot_checked("w/beta", w, beta)?;
    let shift = dot_checked("x/gamma", x, gamma)?;
    let s = score / tau.value();
    Ok(log_mixture_density(
        norm_log_cdf(-s),
        norm_log_cdf(s),
        y - m0,
        y - m0 - shift,
        sigma2,
    ))
}

/// Working conditional mean `w'beta + (x'gamma) Phi(z' theta / tau)`.
pub fn working_conditional_mean(
    w: &DVector<f64>,
    x: &DVector<f64>,
    z: &DVector<f64>,
    beta: &DVector<f64>,
    gamma: &DVector<f64>,
    theta: &DVector<f64>,
    tau: SmoothingScale,
) -> Result<f64> {
    let score = boundary_score(z, theta)?;
    let m0 = dot_checked("w/beta", w, beta)?;
    let shift = dot_checked("x/gamma", x, gamma)?;
    Ok(m0 + shift * norm_cdf(score / tau.value()))
}

/// Two-component Gaussian mixture log density over residuals, assembled in
/// log space so that one vanishing gate weight cannot zero the total.
#[inline]
pub(crate) fn log_mixture_density(
    log_weight0: f64,
    log_weight1: f64,
    resid0: f64,
    resid1: f64,
    sigma2: f64,
) -> f64 {
    let half_log_s2 = 0.5 * sigma2.ln();
    let a = log_weight0 + norm_log_pdf(resid0 / sigma2.sqrt()) - half_log_s2;
    let b = log_weight1 + norm_log_pdf(resid1 / sigma2.sqrt()) - half_log_s2;
    log_sum_exp(a, b)
}

/// Normalize `theta` to unit length and flip it onto the hemisphere with a
/// nonnegative first coordinate. Errors when the input has zero norm.
pub fn hemisphere_normalize(theta: &mut DVector<f64>) -> Result<()> {
    let norm = theta.norm();
    if !norm.is_finite() || norm == 0.0 {
        return Err(Error::invalid_state(format!(
            "cannot normalize direction with norm {norm}"
        )));
    }
    *theta /= norm;
    if theta[0] < 0.0 {
        theta.neg_mut();
    }
    Ok(())
}

/// Full parameter state of one Gibbs sweep.
///
/// `d` holds the per-row membership labels, `t` the Gaussian latents that
/// produce them (`d[i] == (t[i] >= 0)` always).
#[derive(Debug, Clone)]
pub struct ParamState {
    pub beta: DVector<f64>,
    pub gamma: DVector<f64>,
    pub theta: DVector<f64>,
    pub sigma2: f64,
    pub d: Vec<bool>,
    pub t: DVector<f64>,
}

impl ParamState {
    /// Check every structural invariant against the expected dimensions.
    pub fn validate(&self, n: usize, p: usize, r: usize, q: usize) -> Result<()> {
        if self.beta.len() != p || self.gamma.len() != r || self.theta.len() != q {
            return Err(Error::invalid_state(format!(
                "parameter dims (beta {}, gamma {}, theta {}) do not match (p {p}, r {r}, q {q})",
                self.beta.len(),
                self.gamma.len(),
                self.theta.len()
            )));
        }
        if self.d.len() != n || self.t.len() != n {
            return Err(Error::invalid_state(format!(
                "latent dims (d {}, t {}) do not match n {n}",
                self.d.len(),
                self.t.len()
            )));
        }
        for (name, v) in [("beta", &self.beta), ("gamma", &self.gamma), ("theta", &self.theta)] {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid_state(format!("{name} has a non-finite entry")));
            }
        }
        if !self.sigma2.is_finite() || self.sigma2 <= 0.0 {
            return Err(Error::invalid_state(format!(
                "sigma2 must be positive and finite, got {}",
                self.sigma2
            )));
        }
        if (self.theta.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid_state(format!(
                "theta norm {} departs from 1 by more than 1e-12",
                self.theta.norm()
            )));
        }
        if self.theta[0] < 0.0 {
            return Err(Error::invalid_state(
                "theta is off the nonnegative-first-coordinate hemisphere",
            ));
        }
        for i in 0..n {
            if self.d[i] != (self.t[i] >= 0.0) {
                return Err(Error::invalid_state(format!(
                    "latent sign mismatch at row {i}: d = {}, t = {}",
                    self.d[i], self.t[i]
                )));
            }
        }
        Ok(())
    }
}

fn boundary_score(z: &DVector<f64>, theta: &DVector<f64>) -> Result<f64> {
    dot_checked("z/theta", z, theta)
}

fn dot_checked(what: &str, a: &DVector<f64>, b: &DVector<f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid_argument(format!(
            "dimension mismatch in {what}: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let v = a.dot(b);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::invalid_argument(format!(
            "non-finite inner product in {what}"
        )))
    }
}

fn check_finite_scalar(what: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid_argument(format!("{what} must be finite, got {v}")))
    }
}

fn check_positive(what: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid_argument(format!(
            "{what} must be positive and finite, got {v}"
        )))
    }
}

/// Log-density of N(mean, variance) at `x`; shared by samplers and tests.
#[inline]
pub(crate) fn gaussian_log_density(x: f64, mean: f64, variance: f64) -> f64 {
    let r = x - mean;
    -0.5 * r * r / variance - 0.5 * (LN_2PI + variance.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn vec1(v: f64) -> DVector<f64> {
        DVector::from_column_slice(&[v])
    }

    fn tau(v: f64) -> SmoothingScale {
        SmoothingScale::new(v).unwrap()
    }

    // Phi(-2), 40-digit arbitrary-precision reference.
    const PHI_M2: f64 = 0.022750131948179207;
    // log(0.5 phi(-1) + 0.5 phi(-3)), same source.
    const LOG_MIX_HALF: f64 = -2.0939357858468083;
    // log(0.97725 phi(0.25)/2 + 0.02275 phi(-0.75)/2) with pi = Phi(-2),
    // sigma = 2: mixture with unequal weights and non-unit variance.
    const LOG_MIX_TILTED: f64 = -1.6483807298561084;

    #[test]
    fn gate_matches_reference_probit_values() {
        let z = vec1(1.0);
        let th = vec1(1.0);
        assert_eq!(probit_gate(&vec1(0.0), &th, tau(1.0)).unwrap(), 0.5);
        assert_relative_eq!(
            probit_gate(&vec1(-2.0), &th, tau(1.0)).unwrap(),
            PHI_M2,
            max_relative = 1e-14
        );
        // Scale enters only through score/tau.
        assert_relative_eq!(
            probit_gate(&vec1(-1.0), &th, tau(0.5)).unwrap(),
            PHI_M2,
            max_relative = 1e-14
        );
        // Deep saturation stays strictly inside (0, 1).
        let hi = probit_gate(&z, &th, tau(0.01)).unwrap();
        assert!(hi < 1.0 && hi > 0.999);
        let lo = probit_gate(&vec1(-1.0), &th, tau(0.01)).unwrap();
        assert!(lo > 0.0 && lo < 1e-6);
    }

    #[test]
    fn hard_indicator_is_inclusive_at_zero() {
        let th = DVector::from_column_slice(&[1.0, 0.0]);
        assert!(hard_indicator(&DVector::from_column_slice(&[0.0, 3.0]), &th).unwrap());
        assert!(hard_indicator(&DVector::from_column_slice(&[1e-300, 0.0]), &th).unwrap());
        assert!(!hard_indicator(&DVector::from_column_slice(&[-1e-300, 0.0]), &th).unwrap());
    }

    #[test]
    fn log_density_matches_reference_mixtures() {
        // Equal weights: score 0, m0 = 1, shift = 2, y = 0, sigma2 = 1.
        let v = working_log_density(
            0.0,
            &vec1(1.0),
            &vec1(1.0),
            &vec1(0.0),
            &vec1(1.0),
            &vec1(2.0),
            &vec1(1.0),
            1.0,
            tau(1.0),
        )
        .unwrap();
        assert_relative_eq!(v, LOG_MIX_HALF, max_relative = 1e-13);

        // Tilted weights pi = Phi(-2), sigma2 = 4, y = 0.5, m0 = 0, shift = 2.
        let v = working_log_density(
            0.5,
            &vec1(0.0),
            &vec1(1.0),
            &vec1(-2.0),
            &vec1(1.0),
            &vec1(2.0),
            &vec1(1.0),
            4.0,
            tau(1.0),
        )
        .unwrap();
        assert_relative_eq!(v, LOG_MIX_TILTED, max_relative = 1e-13);
    }

    #[test]
    fn log_density_survives_saturated_gates() {
        // score/tau = 100: the gate weight underflows as a probability but
        // the log-space mixture must stay finite and close to the dominant
        // component.
        let v = working_log_density(
            3.0,
            &vec1(0.0),
            &vec1(1.0),
            &vec1(1.0),
            &vec1(1.0),
            &vec1(3.0),
            &vec1(1.0),
            1.0,
            tau(0.01),
        )
        .unwrap();
        assert!(v.is_finite());
        assert_relative_eq!(v, gaussian_log_density(3.0, 3.0, 1.0), max_relative = 1e-12);
    }

    #[test]
    fn conditional_mean_matches_numeric_integration() {
        // Simpson integration of y * exp(working_log_density) over a range
        // wide enough to hold all mixture mass.
        let (w, x, z) = (vec1(1.0), vec1(1.0), vec1(0.8));
        let (beta, gamma, th) = (vec1(0.4), vec1(1.7), vec1(1.0));
        let (sigma2, t) = (1.3, tau(0.9));
        let integrate = |f: &dyn Fn(f64) -> f64| {
            let (lo, hi, m) = (-12.0f64, 14.0f64, 20_000usize);
            let h = (hi - lo) / m as f64;
            let mut acc = f(lo) + f(hi);
            for k in 1..m {
                let y = lo + k as f64 * h;
                acc += f(y) * if k % 2 == 1 { 4.0 } else { 2.0 };
            }
            acc * h / 3.0
        };
        let dens = |y: f64| {
            working_log_density(y, &w, &x, &z, &beta, &gamma, &th, sigma2, t)
                .unwrap()
                .exp()
        };
        let mass = integrate(&|y| dens(y));
        assert_relative_eq!(mass, 1.0, epsilon = 1e-10);
        let mean_numeric = integrate(&|y| y * dens(y));
        let mean = working_conditional_mean(&w, &x, &z, &beta, &gamma, &th, t).unwrap();
        assert_relative_eq!(mean, mean_numeric, epsilon = 1e-9);
    }

    #[test]
    fn conditional_mean_converges_to_the_hard_model() {
        let (w, x) = (vec1(0.5), vec1(1.0));
        let (beta, gamma, th) = (vec1(1.0), vec1(2.0), vec1(1.0));
        let sharp = tau(1e-4);
        // Score +0.5: gate fully open.
        let m = working_conditional_mean(&w, &x, &vec1(0.5), &beta, &gamma, &th, sharp).unwrap();
        assert!((m - 2.5).abs() < 1e-8);
        // Score -0.5: gate fully closed.
        let m = working_conditional_mean(&w, &x, &vec1(-0.5), &beta, &gamma, &th, sharp).unwrap();
        assert!((m - 0.5).abs() < 1e-8);
    }

    #[test]
    fn hemisphere_normalize_fixes_norm_and_sign() {
        let mut v = DVector::from_column_slice(&[-3.0, 4.0]);
        hemisphere_normalize(&mut v).unwrap();
        assert_relative_eq!(v.norm(), 1.0, epsilon = 1e-15);
        assert!(v[0] > 0.0);
        assert_relative_eq!(v[0], 0.6, epsilon = 1e-15);
        assert_relative_eq!(v[1], -0.8, epsilon = 1e-15);

        let mut zero = DVector::from_column_slice(&[0.0, 0.0]);
        assert!(hemisphere_normalize(&mut zero).is_err());
    }

    #[test]
    fn state_validation_catches_each_invariant() {
        let good = ParamState {
            beta: vec1(0.0),
            gamma: vec1(0.0),
            theta: DVector::from_column_slice(&[1.0, 0.0]),
            sigma2: 1.0,
            d: vec![true, false],
            t: DVector::from_column_slice(&[0.3, -0.2]),
        };
        good.validate(2, 1, 1, 2).unwrap();

        let mut bad = good.clone();
        bad.theta = DVector::from_column_slice(&[0.9, 0.0]);
        assert!(bad.validate(2, 1, 1, 2).is_err());

        let mut bad = good.clone();
        bad.theta = DVector::from_column_slice(&[-1.0, 0.0]);
        assert!(bad.validate(2, 1, 1, 2).is_err());

        let mut bad = good.clone();
        bad.sigma2 = 0.0;
        assert!(bad.validate(2, 1, 1, 2).is_err());

        let mut bad = good.clone();
        bad.t[0] = -0.5; // d says member
        assert!(bad.validate(2, 1, 1, 2).is_err());
    }

    proptest! {
        #[test]
        fn gate_is_monotone_in_the_score(
            s1 in -30.0f64..30.0,
            s2 in -30.0f64..30.0,
            t in 0.05f64..5.0,
        ) {
            let th = vec1(1.0);
            let g1 = probit_gate(&vec1(s1), &th, tau(t)).unwrap();
            let g2 = probit_gate(&vec1(s2), &th, tau(t)).unwrap();
            if s1 < s2 {
                prop_assert!(g1 <= g2);
            }
        }

        #[test]
        fn gate_complement_symmetry(s in -8.0f64..8.0, t in 0.1f64..4.0) {
            let th = vec1(1.0);
            let g = probit_gate(&vec1(s), &th, tau(t)).unwrap();
            let gc = probit_gate(&vec1(-s), &th, tau(t)).unwrap();
            prop_assert!((g + gc - 1.0).abs() < 1e-12);
        }

        #[test]
        fn zero_gamma_makes_the_density_flat_in_theta(
            y in -5.0f64..5.0,
            z1 in -3.0f64..3.0,
            z2 in -3.0f64..3.0,
            angle in -1.5f64..1.5,
        ) {
            // With gamma = 0 both mixture components coincide, so the
            // boundary direction cannot move the likelihood.
            let w = vec1(1.0);
            let x = vec1(1.0);
            let z = DVector::from_column_slice(&[z1, z2]);
            let beta = vec1(0.3);
            let gamma = vec1(0.0);
            let th_a = DVector::from_column_slice(&[1.0, 0.0]);
            let th_b = DVector::from_column_slice(&[angle.cos(), angle.sin()]);
            let la = working_log_density(y, &w, &x, &z, &beta, &gamma, &th_a, 1.0, tau(0.5)).unwrap();
            let lb = working_log_density(y, &w, &x, &z, &beta, &gamma, &th_b, 1.0, tau(0.5)).unwrap();
            prop_assert!((la - lb).abs() < 1e-12);
        }

        #[test]
        fn mixture_density_is_symmetric_under_component_swap(
            lw in -3.0f64..0.0,
            r0 in -4.0f64..4.0,
            r1 in -4.0f64..4.0,
            s2 in 0.2f64..5.0,
        ) {
            let lw1 = (1.0 - lw.exp()).ln();
            let a = log_mixture_density(lw, lw1, r0, r1, s2);
            let b = log_mixture_density(lw1, lw, r1, r0, s2);
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
