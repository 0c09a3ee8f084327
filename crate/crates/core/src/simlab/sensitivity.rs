//! Sensitivity grids: how the reported decision moves with the smoothing
//! scale and with the decision thresholds.

use rayon::prelude::*;

use crate::data::Dataset;
use crate::draws::PosteriorDraws;
use crate::error::{Error, Result};
use crate::gibbs::{run_gibbs, SamplerConfig};
use crate::math::derive_seed;
use crate::model::SmoothingScale;
use crate::reporting::{
    bayes_action, build_report, prob_heterogeneity, Action, Contrast, DecisionConfig,
    DecisionReport,
};

const DOMAIN_TAU_GRID: u64 = 4;

/// One row of the smoothing-scale sensitivity table: the scale, the width of
/// the score window over which the gate transitions, and the full decision
/// report from a chain run at that scale.
#[derive(Debug, Clone)]
pub struct TauSensitivityRow {
    pub tau: f64,
    pub gray_zone_width: f64,
    pub report: DecisionReport,
}

/// Refit the model at each smoothing scale in the grid and build the decision
/// report from each fit. Grid points run in parallel with chain seeds derived
/// from the base configuration's seed and the grid index.
pub fn tau_sensitivity(
    data: &Dataset,
    base: &SamplerConfig,
    taus: &[f64],
    decision: &DecisionConfig,
) -> Result<Vec<TauSensitivityRow>> {
    if taus.is_empty() {
        return Err(Error::invalid_argument("scale grid must be non-empty"));
    }
    for &tau in taus {
        SmoothingScale::new(tau)?;
    }
    let outcomes: Vec<Result<TauSensitivityRow>> = taus
        .par_iter()
        .enumerate()
        .map(|(idx, &tau)| {
            let mut cfg = base.clone();
            cfg.tau = tau;
            cfg.seed = derive_seed(base.seed, DOMAIN_TAU_GRID, idx as u64);
            let output = run_gibbs(data, &cfg)?;
            let report = build_report(&output.draws, data, decision)?;
            Ok(TauSensitivityRow {
                tau,
                gray_zone_width: SmoothingScale::new(tau)?.gray_zone_width(),
                report,
            })
        })
        .collect();
    outcomes.into_iter().collect()
}

/// One cell of the decision-threshold sensitivity grid.
#[derive(Debug, Clone)]
pub struct ActionGridCell {
    pub delta: f64,
    pub p_report: f64,
    /// Posterior probability that the effect contrast clears `delta`.
    pub prob: f64,
    pub action: Action,
}

/// Cross a grid of effect thresholds with a grid of reporting thresholds and
/// record the posterior tail probability and the implied action in each cell.
/// Cells are emitted row-major: for each `delta`, every `p_report` in order.
pub fn action_sensitivity(
    draws: &PosteriorDraws,
    contrast: &Contrast,
    deltas: &[f64],
    p_reports: &[f64],
) -> Result<Vec<ActionGridCell>> {
    if deltas.is_empty() || p_reports.is_empty() {
        return Err(Error::invalid_argument("sensitivity grids must be non-empty"));
    }
    for &p in p_reports {
        if !p.is_finite() || p <= 0.0 || p >= 1.0 {
            return Err(Error::invalid_argument(format!(
                "reporting threshold must lie strictly inside (0, 1), got {p}"
            )));
        }
    }
    let mut cells = Vec::with_capacity(deltas.len() * p_reports.len());
    for &delta in deltas {
        // The tail probability depends only on delta; the costs below are a
        // placeholder pair with threshold 1/2.
        let probe = DecisionConfig::new(delta, 1.0, 1.0, contrast.clone())?;
        let prob = prob_heterogeneity(draws, &probe)?;
        for &p in p_reports {
            // Costs (p, 1 - p) put the reporting threshold exactly at p.
            let cfg = DecisionConfig::new(delta, p, 1.0 - p, contrast.clone())?;
            let action = bayes_action(prob, &cfg);
            cells.push(ActionGridCell { delta, p_report: cfg.p_report(), prob, action });
        }
    }
    Ok(cells)
}
