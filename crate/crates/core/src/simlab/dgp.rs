//! Synthetic data-generating processes for benchmarking the regression engine.
//!
//! Five scenarios cover the crossings of baseline shape (linear or nonlinear),
//! gate-covariate dimension (none or 50 extra noise columns), and whether the
//! gated effect actually exists. All designs share one subgroup geometry: a
//! hyperplane through the origin in the first five covariates, so that recovery
//! of the boundary direction can be scored against a known unit vector.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::hemisphere_normalize;

/// Number of pure-noise gate covariates appended in the high-dimensional designs.
pub const NOISE_COLUMNS: usize = 50;

/// Shape of the baseline regression surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    /// Baseline is the linear form `w' beta0`.
    Linear,
    /// Baseline is a smooth nonlinear surface in the four non-constant
    /// covariates (products, exponentials, logs, and a sine term).
    Nonlinear,
}

/// Full description of one synthetic scenario.
#[derive(Debug, Clone)]
pub struct DgpSpec {
    /// Scenario number, 1 through 5.
    pub id: u8,
    /// Sample size per replicate.
    pub n: usize,
    /// Baseline surface shape.
    pub baseline: BaselineKind,
    /// Number of inert covariates appended to the gate design `Z`.
    pub noise_covariates: usize,
    /// True gated-effect size (zero in the null scenario).
    pub gamma0: f64,
}

impl DgpSpec {
    /// The five standard scenarios:
    ///
    /// 1. linear baseline, no noise columns, effect present
    /// 2. nonlinear baseline, no noise columns, effect present
    /// 3. linear baseline, 50 noise columns, effect present
    /// 4. nonlinear baseline, 50 noise columns, effect present
    /// 5. linear baseline, no noise columns, no effect (null)
    pub fn standard(id: u8, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid_argument("scenario sample size must be positive"));
        }
        let (baseline, noise_covariates, gamma0) = match id {
            1 => (BaselineKind::Linear, 0, 2.0),
            2 => (BaselineKind::Nonlinear, 0, 2.0),
            3 => (BaselineKind::Linear, NOISE_COLUMNS, 2.0),
            4 => (BaselineKind::Nonlinear, NOISE_COLUMNS, 2.0),
            5 => (BaselineKind::Linear, 0, 0.0),
            other => {
                return Err(Error::invalid_argument(format!(
                    "unknown scenario id {other}; expected 1 through 5"
                )))
            }
        };
        Ok(Self { id, n, baseline, noise_covariates, gamma0 })
    }

    /// Dimension of the gate design `Z` (five base covariates plus noise).
    pub fn q(&self) -> usize {
        5 + self.noise_covariates
    }
}

/// Unnormalized boundary direction over the five base covariates.
fn raw_direction() -> DVector<f64> {
    DVector::from_vec(vec![1.0, -0.8, 0.7, 1.2, -1.5])
}

/// True boundary direction on the five base covariates, unit length with a
/// nonnegative first coordinate.
pub fn base_direction() -> DVector<f64> {
    let mut v = raw_direction();
    hemisphere_normalize(&mut v).expect("fixed direction is nonzero and finite");
    v
}

/// True boundary direction embedded in a `q`-dimensional gate design: the five
/// base loadings followed by zeros on every noise column.
pub fn true_direction(q: usize) -> Result<DVector<f64>> {
    if q < 5 {
        return Err(Error::invalid_argument(
            "gate dimension must be at least 5 to hold the base direction",
        ));
    }
    let base = base_direction();
    let mut theta = DVector::zeros(q);
    theta.rows_mut(0, 5).copy_from(&base);
    Ok(theta)
}

/// True baseline coefficients for the linear scenarios.
pub fn true_baseline_coefficients() -> DVector<f64> {
    DVector::from_vec(vec![1.0, -0.3, -0.4, -0.65, 0.4])
}

/// Ground truth attached to one generated dataset.
#[derive(Debug, Clone)]
pub struct DgpTruth {
    /// True gated-effect size.
    pub gamma0: f64,
    /// True boundary direction, length `q` (zeros on noise columns).
    pub theta0: DVector<f64>,
    /// True linear baseline coefficients, present only for linear scenarios.
    pub beta0: Option<DVector<f64>>,
    /// Which gate coordinates carry signal (first five true, noise false).
    pub active: Vec<bool>,
    /// Realized subgroup membership per row (strict positive score).
    pub subgroup: Vec<bool>,
}

/// Nonlinear baseline surface evaluated on one row's four non-constant
/// covariates `(w2, w3, w4, w5)`.
fn nonlinear_baseline(w2: f64, w3: f64, w4: f64, w5: f64) -> f64 {
    1.0 - 0.3 * w2 * w3 - 0.4 * (-w4.abs()).exp() - 0.65 * (w5 * w5).ln()
        + 0.4 * (std::f64::consts::PI * w2).sin()
}

/// Generate one dataset from the given scenario.
///
/// The per-row draw order is fixed (four covariate normals, then any noise
/// normals, then the treatment flip, then the outcome noise), so a seed pins
/// the dataset exactly. Rows of nonlinear scenarios are redrawn whenever the
/// fifth covariate is within `1e-12` of zero, because the surface takes its
/// logarithm.
pub fn generate_dgp(spec: &DgpSpec, seed: u64) -> Result<(Dataset, DgpTruth)> {
    if spec.n == 0 {
        return Err(Error::invalid_argument("scenario sample size must be positive"));
    }
    let n = spec.n;
    let q = spec.q();
    let theta0 = true_direction(q)?;
    let beta0 = true_baseline_coefficients();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut w = DMatrix::zeros(n, 5);
    let mut z = DMatrix::zeros(n, q);
    let mut x = DMatrix::zeros(n, 1);
    let mut y = DVector::zeros(n);
    let mut subgroup = vec![false; n];

    for i in 0..n {
        let (w2, w3, w4, w5) = loop {
            let w2: f64 = rng.sample(StandardNormal);
            let w3: f64 = rng.sample(StandardNormal);
            let w4: f64 = rng.sample(StandardNormal);
            let w5: f64 = rng.sample(StandardNormal);
            if spec.baseline == BaselineKind::Nonlinear && w5.abs() < 1e-12 {
                continue;
            }
            break (w2, w3, w4, w5);
        };
        w[(i, 0)] = 1.0;
        w[(i, 1)] = w2;
        w[(i, 2)] = w3;
        w[(i, 3)] = w4;
        w[(i, 4)] = w5;
        for j in 0..5 {
            z[(i, j)] = w[(i, j)];
        }
        for j in 5..q {
            z[(i, j)] = rng.sample(StandardNormal);
        }
        let treated = if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 };
        x[(i, 0)] = treated;
        let eps: f64 = rng.sample(StandardNormal);

        let mu = match spec.baseline {
            BaselineKind::Linear => w.row(i).transpose().dot(&beta0),
            BaselineKind::Nonlinear => nonlinear_baseline(w2, w3, w4, w5),
        };
        let score = z.row(i).transpose().dot(&theta0);
        let member = score > 0.0;
        subgroup[i] = member;
        let effect = if member { spec.gamma0 } else { 0.0 };
        y[i] = mu + effect * treated + eps;
    }

    let dataset = Dataset::new(y, w, x, z)?;
    let mut active = vec![true; 5];
    active.extend(std::iter::repeat(false).take(q - 5));
    let truth = DgpTruth {
        gamma0: spec.gamma0,
        theta0,
        beta0: match spec.baseline {
            BaselineKind::Linear => Some(beta0),
            BaselineKind::Nonlinear => None,
        },
        active,
        subgroup,
    };
    Ok((dataset, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::norm_cdf;
    use approx::assert_relative_eq;

    #[test]
    fn standard_scenarios_have_the_advertised_shapes() {
        let cases = [
            (1, BaselineKind::Linear, 0, 2.0),
            (2, BaselineKind::Nonlinear, 0, 2.0),
            (3, BaselineKind::Linear, NOISE_COLUMNS, 2.0),
            (4, BaselineKind::Nonlinear, NOISE_COLUMNS, 2.0),
            (5, BaselineKind::Linear, 0, 0.0),
        ];
        for (id, baseline, noise, gamma0) in cases {
            let spec = DgpSpec::standard(id, 100).unwrap();
            assert_eq!(spec.baseline, baseline);
            assert_eq!(spec.noise_covariates, noise);
            assert_eq!(spec.gamma0, gamma0);
            assert_eq!(spec.q(), 5 + noise);
        }
        assert!(DgpSpec::standard(0, 100).is_err());
        assert!(DgpSpec::standard(6, 100).is_err());
        assert!(DgpSpec::standard(1, 0).is_err());
    }

    #[test]
    fn true_direction_is_unit_with_zero_noise_loadings() {
        let theta = true_direction(55).unwrap();
        assert_relative_eq!(theta.norm(), 1.0, epsilon = 1e-12);
        assert!(theta[0] > 0.0);
        for j in 5..55 {
            assert_eq!(theta[j], 0.0);
        }
        let base = base_direction();
        let raw = raw_direction();
        let scale = base[0] / raw[0];
        for j in 0..5 {
            assert_relative_eq!(base[j], raw[j] * scale, epsilon = 1e-12);
        }
        assert!(true_direction(4).is_err());
    }

    #[test]
    fn generation_is_deterministic_in_the_seed() {
        let spec = DgpSpec::standard(3, 40).unwrap();
        let (a, ta) = generate_dgp(&spec, 99).unwrap();
        let (b, tb) = generate_dgp(&spec, 99).unwrap();
        let (c, _) = generate_dgp(&spec, 100).unwrap();
        assert_eq!(a.y(), b.y());
        assert_eq!(a.w(), b.w());
        assert_eq!(a.x(), b.x());
        assert_eq!(a.z(), b.z());
        assert_eq!(ta.subgroup, tb.subgroup);
        assert_ne!(a.y(), c.y());
    }

    #[test]
    fn dataset_dimensions_and_columns_line_up() {
        let spec = DgpSpec::standard(4, 60).unwrap();
        let (data, truth) = generate_dgp(&spec, 7).unwrap();
        assert_eq!(data.n(), 60);
        assert_eq!(data.p(), 5);
        assert_eq!(data.r(), 1);
        assert_eq!(data.q(), 55);
        for i in 0..data.n() {
            assert_eq!(data.w()[(i, 0)], 1.0);
            for j in 0..5 {
                assert_eq!(data.z()[(i, j)], data.w()[(i, j)]);
            }
            let xv = data.x()[(i, 0)];
            assert!(xv == 0.0 || xv == 1.0);
            assert!(data.w()[(i, 4)].abs() >= 1e-12);
        }
        assert_eq!(truth.active.len(), 55);
        assert!(truth.active[..5].iter().all(|&a| a));
        assert!(!truth.active[5..].iter().any(|&a| a));
        assert!(truth.beta0.is_none());
    }

    #[test]
    fn membership_uses_a_strict_positive_score() {
        let spec = DgpSpec::standard(1, 500).unwrap();
        let (data, truth) = generate_dgp(&spec, 11).unwrap();
        for i in 0..data.n() {
            let score = data.z().row(i).transpose().dot(&truth.theta0);
            assert_eq!(truth.subgroup[i], score > 0.0);
        }
    }

    #[test]
    fn null_scenario_outcome_carries_no_treatment_effect() {
        // Scenario 5 still records membership, but the outcome is unchanged by
        // treatment: regenerating with gamma0 forced to 2 must differ, while
        // the generated y under the null matches mu + eps exactly by linearity.
        let spec = DgpSpec::standard(5, 200).unwrap();
        let (data, truth) = generate_dgp(&spec, 21).unwrap();
        assert_eq!(truth.gamma0, 0.0);
        let beta0 = truth.beta0.as_ref().unwrap();
        // Treated in-subgroup rows should not be shifted: compare residual
        // moments between treated and untreated members.
        let mut treated = Vec::new();
        let mut untreated = Vec::new();
        for i in 0..data.n() {
            if !truth.subgroup[i] {
                continue;
            }
            let resid = data.y()[i] - data.w().row(i).transpose().dot(beta0);
            if data.x()[(i, 0)] == 1.0 {
                treated.push(resid);
            } else {
                untreated.push(resid);
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let diff = mean(&treated) - mean(&untreated);
        let se = (1.0 / treated.len() as f64 + 1.0 / untreated.len() as f64).sqrt();
        assert!(
            diff.abs() < 4.0 * se,
            "null scenario shows a treatment shift: diff = {diff:.3}, se = {se:.3}"
        );
    }

    #[test]
    fn effect_scenario_shifts_treated_members_by_two() {
        let spec = DgpSpec::standard(1, 4000).unwrap();
        let (data, truth) = generate_dgp(&spec, 31).unwrap();
        let beta0 = truth.beta0.as_ref().unwrap();
        let mut treated = Vec::new();
        let mut untreated = Vec::new();
        for i in 0..data.n() {
            if !truth.subgroup[i] {
                continue;
            }
            let resid = data.y()[i] - data.w().row(i).transpose().dot(beta0);
            if data.x()[(i, 0)] == 1.0 {
                treated.push(resid);
            } else {
                untreated.push(resid);
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let diff = mean(&treated) - mean(&untreated);
        let se = (1.0 / treated.len() as f64 + 1.0 / untreated.len() as f64).sqrt();
        assert!(
            (diff - 2.0).abs() < 4.0 * se,
            "gated shift off: diff = {diff:.3}, se = {se:.3}"
        );
    }

    #[test]
    fn subgroup_fraction_matches_the_gaussian_orthant_probability() {
        // The score is theta0_1 + sum_{j>=2} theta0_j W_j with standard normal
        // W_j, so membership probability is Phi(theta0_1 / ||theta0_{2:}||).
        // Check the closed form against an independent Monte Carlo estimate,
        // then check a generated sample against both.
        let theta = base_direction();
        let rest = theta.rows(1, 4).norm();
        let closed = norm_cdf(theta[0] / rest);

        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let mc_n = 1_000_000usize;
        let mut hits = 0usize;
        for _ in 0..mc_n {
            let mut score = theta[0];
            for j in 1..5 {
                let u: f64 = rng.sample(StandardNormal);
                score += theta[j] * u;
            }
            if score > 0.0 {
                hits += 1;
            }
        }
        let mc = hits as f64 / mc_n as f64;
        let mc_se = (mc * (1.0 - mc) / mc_n as f64).sqrt();
        assert!(
            (mc - closed).abs() < 3.0 * mc_se,
            "orthant closed form and Monte Carlo disagree: {closed:.5} vs {mc:.5}"
        );

        let spec = DgpSpec::standard(1, 20_000).unwrap();
        let (_, truth) = generate_dgp(&spec, 45).unwrap();
        let frac =
            truth.subgroup.iter().filter(|&&m| m).count() as f64 / truth.subgroup.len() as f64;
        let se = (closed * (1.0 - closed) / 20_000.0).sqrt();
        assert!(
            (frac - closed).abs() < 3.0 * se,
            "generated membership fraction {frac:.4} far from {closed:.4}"
        );
    }

    #[test]
    fn nonlinear_baseline_matches_a_hand_evaluation() {
        // w2 = 1, w3 = -1, w4 = 0, w5 = 2:
        // 1 - 0.3*(-1) - 0.4*exp(0) - 0.65*ln(4) + 0.4*sin(pi) = 0.9 - 1.3*ln(2)
        let got = nonlinear_baseline(1.0, -1.0, 0.0, 2.0);
        let want = 0.9 - 1.3 * std::f64::consts::LN_2;
        assert_relative_eq!(got, want, epsilon = 1e-12);
    }
}
