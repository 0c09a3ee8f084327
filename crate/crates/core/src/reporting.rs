//! Decision-theoretic reporting: evidence for a clinically meaningful
//! gated effect, the report/no-report Bayes action, the principal
//! direction summary of the boundary with its concentration diagnostic,
//! and per-profile hard-membership probabilities.
//!
//! The protocol separates two questions: whether the posterior supports a
//! heterogeneity effect of at least `delta` (an evidence statement about
//! the gated contrast), and only then what boundary to report. When the
//! evidence falls short, direction summaries are withheld, because a
//! diffuse direction posterior reflects the prior rather than the data.

use crate::data::Dataset;
use crate::draws::PosteriorDraws;
use crate::error::{Error, Result};
use crate::math::leading_eigenpair;
use crate::model::hemisphere_normalize;
use nalgebra::{DMatrix, DVector};

/// Scalar functional of the gated-effect coefficients whose magnitude
/// defines the heterogeneity event.
#[derive(Debug, Clone, PartialEq)]
pub enum Contrast {
    /// One coordinate of gamma.
    Coordinate(usize),
    /// A fixed linear combination (a clinical effect-modifier profile).
    Fixed(DVector<f64>),
    /// The Euclidean norm of gamma.
    L2Norm,
}

/// Evaluate the contrast on one coefficient draw.
pub fn contrast_value(contrast: &Contrast, gamma: &DVector<f64>) -> Result<f64> {
    match contrast {
        Contrast::Coordinate(j) => {
            if *j >= gamma.len() {
                return Err(Error::invalid_argument(format!(
                    "contrast coordinate {j} out of range for r = {}",
                    gamma.len()
                )));
            }
            Ok(gamma[*j])
        }
        Contrast::Fixed(v) => {
            if v.len() != gamma.len() {
                return Err(Error::invalid_argument(format!(
                    "contrast vector has {} entries but r = {}",
                    v.len(),
                    gamma.len()
                )));
            }
            Ok(v.dot(gamma))
        }
        Contrast::L2Norm => Ok(gamma.norm()),
    }
}

/// Threshold, losses, and contrast defining the reporting decision.
#[derive(Debug, Clone)]
pub struct DecisionConfig {
    pub delta: f64,
    pub cost_fp: f64,
    pub cost_fn: f64,
    pub contrast: Contrast,
}

impl DecisionConfig {
    pub fn new(delta: f64, cost_fp: f64, cost_fn: f64, contrast: Contrast) -> Result<Self> {
        for (name, v) in [("delta", delta), ("cost_fp", cost_fp), ("cost_fn", cost_fn)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::invalid_argument(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(DecisionConfig { delta, cost_fp, cost_fn, contrast })
    }

    /// Loss-ratio evidence threshold; always interior to (0, 1) because
    /// both costs are positive.
    pub fn p_report(&self) -> f64 {
        self.cost_fp / (self.cost_fp + self.cost_fn)
    }
}

/// Report (`A1`) or withhold (`A0`) the subgroup boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    A0,
    A1,
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Action::A0 => write!(f, "a0"),
            Action::A1 => write!(f, "a1"),
        }
    }
}

/// One dataset profile with its posterior hard-membership probability.
#[derive(Debug, Clone)]
pub struct MembershipRow {
    pub z: DVector<f64>,
    pub q: f64,
}

/// Fixed wording attached to a withheld report: the direction summary is
/// prior-driven in this regime and must not be read as a data-supported
/// boundary.
pub const WEAK_IDENTIFICATION_STATEMENT: &str = "The boundary direction is weakly identified: \
the posterior does not support the requested heterogeneity threshold, so any numerical summary \
of the direction reflects prior regularization rather than empirical evidence and should not \
be interpreted as a data-supported subgroup boundary rule.";

/// Full output of the reporting protocol.
#[derive(Debug, Clone)]
pub struct DecisionReport {
    pub prob_h_delta: f64,
    pub p_report: f64,
    pub delta: f64,
    pub action: Action,
    /// Principal-direction summary; withheld when the action is A0.
    pub theta_hat: Option<DVector<f64>>,
    /// Concentration of the direction posterior, in [1/q, 1]. Reported
    /// under both actions: near 1/q it is itself the evidence of a
    /// dispersed, weakly identified boundary.
    pub lambda_max: f64,
    /// Mean hard-membership probability over the dataset rows; withheld
    /// under A0.
    pub q_bar: Option<f64>,
    pub gamma_mean: DVector<f64>,
    pub gamma_lower: DVector<f64>,
    pub gamma_upper: DVector<f64>,
    pub contrast_mean: f64,
    pub contrast_lower: f64,
    pub contrast_upper: f64,
    /// Per-row membership probabilities; withheld under A0.
    pub membership_table: Option<Vec<MembershipRow>>,
    /// Present exactly when the action is A0.
    pub weak_identification_note: Option<&'static str>,
}

/// Monte Carlo posterior probability of the heterogeneity event
/// {|contrast(gamma)| >= delta}.
pub fn prob_heterogeneity(draws: &PosteriorDraws, cfg: &DecisionConfig) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::invalid_state("no draws to evaluate"));
    }
    let mut hits = 0usize;
    for d in draws.iter() {
        if contrast_value(&cfg.contrast, &d.gamma)?.abs() >= cfg.delta {
            hits += 1;
        }
    }
    Ok(hits as f64 / draws.len() as f64)
}

/// The Bayes action: report the boundary exactly when the posterior
/// probability strictly exceeds the loss-ratio threshold (ties withhold).
pub fn bayes_action(prob: f64, cfg: &DecisionConfig) -> Action {
    if prob > cfg.p_report() {
        Action::A1
    } else {
        Action::A0
    }
}

/// Posterior second-moment matrix of the boundary direction, the draw
/// average of theta theta'.
pub fn posterior_direction_matrix(draws: &PosteriorDraws) -> Result<DMatrix<f64>> {
    if draws.is_empty() {
        return Err(Error::invalid_state("no draws to average"));
    }
    let q = draws.q();
    let mut m = DMatrix::zeros(q, q);
    for d in draws.iter() {
        for i in 0..q {
            for j in 0..q {
                m[(i, j)] += d.theta[i] * d.theta[j];
            }
        }
    }
    m /= draws.len() as f64;
    Ok(m)
}

/// Leading eigenpair of the direction second-moment matrix: the
/// Frobenius-loss point summary of the boundary and its concentration
/// index. The eigenvalue is pinned into [1/q, 1] (a floating-point hair
/// outside is rounding; a real departure is an error).
pub fn posterior_principal_direction(draws: &PosteriorDraws) -> Result<(DVector<f64>, f64)> {
    if draws.len() < 2 {
        return Err(Error::invalid_state(format!(
            "principal direction needs at least 2 draws, got {}",
            draws.len()
        )));
    }
    let m = posterior_direction_matrix(draws)?;
    let (lambda, mut v) = leading_eigenpair(&m)?;
    hemisphere_normalize(&mut v)?;
    let q = draws.q() as f64;
    let (lo, hi) = (1.0 / q, 1.0);
    if lambda < lo - 1e-9 || lambda > hi + 1e-9 {
        return Err(Error::numerical(format!(
            "leading eigenvalue {lambda} is outside [{lo}, 1] beyond rounding"
        )));
    }
    Ok((v, lambda.clamp(lo, hi)))
}

/// Posterior probability that the profile `z` lies in the gated region,
/// with the boundary itself counted as inside.
pub fn membership_probability(draws: &PosteriorDraws, z: &DVector<f64>) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::invalid_state("no draws to evaluate"));
    }
    if z.len() != draws.q() {
        return Err(Error::invalid_argument(format!(
            "profile has {} entries but q = {}",
            z.len(),
            draws.q()
        )));
    }
    let hits = draws
        .iter()
        .filter(|d| z.dot(&d.theta) >= 0.0)
        .count();
    Ok(hits as f64 / draws.len() as f64)
}

/// Equal-tailed interpolated percentile (the common linear convention:
/// rank h = (n-1) p, interpolate between the bracketing order statistics).
pub(crate) fn percentile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    debug_assert!((0.0..=1.0).contains(&p));
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if frac == 0.0 || lo + 1 >= n {
        sorted[lo.min(n - 1)]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

fn summarize(values: &mut Vec<f64>) -> (f64, f64, f64) {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.sort_by(f64::total_cmp);
    (mean, percentile(values, 0.025), percentile(values, 0.975))
}

/// Assemble the full report: evidence, action, coefficient summaries, and
/// (when the action reports a boundary) the direction point summary with
/// its concentration index and the per-row membership table.
pub fn build_report(
    draws: &PosteriorDraws,
    data: &Dataset,
    cfg: &DecisionConfig,
) -> Result<DecisionReport> {
    if data.q() != draws.q() {
        return Err(Error::invalid_argument(format!(
            "dataset has q = {} but draws have q = {}",
            data.q(),
            draws.q()
        )));
    }
    let prob = prob_heterogeneity(draws, cfg)?;
    let action = bayes_action(prob, cfg);

    let r = draws.r();
    let mut gamma_mean = DVector::zeros(r);
    let mut gamma_lower = DVector::zeros(r);
    let mut gamma_upper = DVector::zeros(r);
    for j in 0..r {
        let mut col: Vec<f64> = draws.iter().map(|d| d.gamma[j]).collect();
        let (m, lo, hi) = summarize(&mut col);
        gamma_mean[j] = m;
        gamma_lower[j] = lo;
        gamma_upper[j] = hi;
    }
    let mut contrast_draws: Vec<f64> = draws
        .iter()
        .map(|d| contrast_value(&cfg.contrast, &d.gamma))
        .collect::<Result<_>>()?;
    let (contrast_mean, contrast_lower, contrast_upper) = summarize(&mut contrast_draws);

    let (theta_hat, lambda_max) = posterior_principal_direction(draws)?;

    let (theta_hat, q_bar, membership_table, note) = match action {
        Action::A0 => (None, None, None, Some(WEAK_IDENTIFICATION_STATEMENT)),
        Action::A1 => {
            let mut rows = Vec::with_capacity(data.n());
            let mut total = 0.0;
            for i in 0..data.n() {
                let z = data.z().row(i).transpose();
                let q = membership_probability(draws, &z)?;
                total += q;
                rows.push(MembershipRow { z, q });
            }
            let q_bar = total / data.n() as f64;
            (Some(theta_hat), Some(q_bar), Some(rows), None)
        }
    };

    Ok(DecisionReport {
        prob_h_delta: prob,
        p_report: cfg.p_report(),
        delta: cfg.delta,
        action,
        theta_hat,
        lambda_max,
        q_bar,
        gamma_mean,
        gamma_lower,
        gamma_upper,
        contrast_mean,
        contrast_lower,
        contrast_upper,
        membership_table,
        weak_identification_note: note,
    })
}
