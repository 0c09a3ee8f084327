//! Replicated simulation studies: generate a dataset, fit the sampler, score
//! the fit against the known truth, and aggregate across replicates.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gibbs::{run_gibbs, SamplerConfig};
use crate::math::derive_seed;
use crate::reporting::{
    bayes_action, percentile, posterior_principal_direction, prob_heterogeneity, Action,
    DecisionConfig,
};
use crate::simlab::dgp::{generate_dgp, DgpSpec, DgpTruth};
use crate::simlab::metrics::{angular_error, misclassification};

const DOMAIN_DATA: u64 = 1;
const DOMAIN_CHAIN: u64 = 2;
const DOMAIN_MISCLASS: u64 = 3;

/// A full study: scenario, sampler settings, replicate count, and scoring
/// options. The sampler's own `seed` field is ignored; every replicate gets
/// data and chain seeds derived from `base_seed` and the replicate index.
#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub spec: DgpSpec,
    pub sampler: SamplerConfig,
    pub n_replicates: usize,
    pub base_seed: u64,
    /// When present, each replicate also records the posterior probability of
    /// a material effect and the implied report/withhold action.
    pub decision: Option<DecisionConfig>,
    /// Monte Carlo draws used to score boundary misclassification.
    pub misclass_draws: usize,
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_replicates == 0 {
            return Err(Error::invalid_argument("a study needs at least one replicate"));
        }
        if self.misclass_draws == 0 {
            return Err(Error::invalid_argument(
                "misclassification scoring needs at least one draw",
            ));
        }
        Ok(())
    }
}

/// Per-replicate posterior summaries and scores.
#[derive(Debug, Clone)]
pub struct ReplicateRecord {
    pub rep: usize,
    pub gamma_mean: DVector<f64>,
    pub gamma_lower: DVector<f64>,
    pub gamma_upper: DVector<f64>,
    pub theta_mean: DVector<f64>,
    pub theta_lower: DVector<f64>,
    pub theta_upper: DVector<f64>,
    pub sigma2_mean: f64,
    /// Principal posterior direction (unit, nonnegative first coordinate).
    pub theta_hat: DVector<f64>,
    /// Leading eigenvalue of the posterior direction second-moment matrix.
    pub lambda_max: f64,
    pub angular_error: f64,
    pub misclassification: f64,
    pub prob_heterogeneity: Option<f64>,
    pub action: Option<Action>,
}

/// A replicate that failed, with the index and the error text.
#[derive(Debug, Clone)]
pub struct ReplicateFailure {
    pub rep: usize,
    pub message: String,
}

/// Frequentist summary for one scalar parameter across replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSummary {
    pub truth: f64,
    pub bias: f64,
    pub rmse: f64,
    /// Fraction of replicates whose central 95% interval covers the truth.
    pub coverage: f64,
    /// Wald standard error of the coverage estimate.
    pub coverage_se: f64,
    /// Average length of the 95% interval.
    pub interval_length: f64,
}

/// Study-level aggregates over the successful replicates.
#[derive(Debug, Clone)]
pub struct StudyAggregates {
    pub gamma: Vec<ParamSummary>,
    pub theta: Vec<ParamSummary>,
    pub mean_angular_error: f64,
    pub mean_misclassification: f64,
    pub mean_lambda_max: f64,
    pub mean_prob_heterogeneity: Option<f64>,
    /// Fraction of replicates where the decision rule withheld the boundary.
    pub a0_fraction: Option<f64>,
}

/// Everything a study produces: per-replicate records in replicate order,
/// the failures that were skipped, and the aggregates.
#[derive(Debug, Clone)]
pub struct StudyResult {
    pub records: Vec<ReplicateRecord>,
    pub failures: Vec<ReplicateFailure>,
    pub aggregates: StudyAggregates,
    pub n_requested: usize,
}

/// One tidy output row: a study scalar keyed by scenario, method, parameter,
/// and metric name.
#[derive(Debug, Clone)]
pub struct LongRow {
    pub dgp: String,
    pub method: String,
    pub parameter: String,
    pub metric: String,
    pub value: f64,
}

fn sorted_column(values: &mut Vec<f64>) -> (f64, f64, f64) {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let lower = percentile(values, 0.025);
    let upper = percentile(values, 0.975);
    (mean, lower, upper)
}

/// Generate, fit, and score a single replicate of the study.
pub fn run_replicate(cfg: &StudyConfig, rep: usize) -> Result<ReplicateRecord> {
    cfg.validate()?;
    let data_seed = derive_seed(cfg.base_seed, DOMAIN_DATA, rep as u64);
    let chain_seed = derive_seed(cfg.base_seed, DOMAIN_CHAIN, rep as u64);
    let misclass_seed = derive_seed(cfg.base_seed, DOMAIN_MISCLASS, rep as u64);

    let (data, truth) = generate_dgp(&cfg.spec, data_seed)?;
    let mut sampler = cfg.sampler.clone();
    sampler.seed = chain_seed;
    let output = run_gibbs(&data, &sampler)?;
    let draws = &output.draws;

    let r = draws.r();
    let q = draws.q();
    let n_kept = draws.len();
    if n_kept < 2 {
        return Err(Error::invalid_state(format!(
            "replicate {rep} kept {n_kept} draws; need at least 2 to summarize"
        )));
    }

    let mut gamma_mean = DVector::zeros(r);
    let mut gamma_lower = DVector::zeros(r);
    let mut gamma_upper = DVector::zeros(r);
    for j in 0..r {
        let mut col: Vec<f64> = draws.iter().map(|d| d.gamma[j]).collect();
        let (m, lo, hi) = sorted_column(&mut col);
        gamma_mean[j] = m;
        gamma_lower[j] = lo;
        gamma_upper[j] = hi;
    }

    let mut theta_mean = DVector::zeros(q);
    let mut theta_lower = DVector::zeros(q);
    let mut theta_upper = DVector::zeros(q);
    for j in 0..q {
        let mut col: Vec<f64> = draws.iter().map(|d| d.theta[j]).collect();
        let (m, lo, hi) = sorted_column(&mut col);
        theta_mean[j] = m;
        theta_lower[j] = lo;
        theta_upper[j] = hi;
    }

    let sigma2_mean = draws.iter().map(|d| d.sigma2).sum::<f64>() / n_kept as f64;

    let (theta_hat, lambda_max) = posterior_principal_direction(draws)?;
    let ang = angular_error(&theta_hat, &truth.theta0)?;
    let mis = misclassification(&theta_hat, &truth.theta0, cfg.misclass_draws, misclass_seed)?;

    let (prob, action) = match &cfg.decision {
        Some(dec) => {
            let p = prob_heterogeneity(draws, dec)?;
            (Some(p), Some(bayes_action(p, dec)))
        }
        None => (None, None),
    };

    Ok(ReplicateRecord {
        rep,
        gamma_mean,
        gamma_lower,
        gamma_upper,
        theta_mean,
        theta_lower,
        theta_upper,
        sigma2_mean,
        theta_hat,
        lambda_max,
        angular_error: ang,
        misclassification: mis,
        prob_heterogeneity: prob,
        action,
    })
}

fn summarize_coordinate(
    truth: f64,
    means: &[f64],
    lowers: &[f64],
    uppers: &[f64],
) -> ParamSummary {
    let n = means.len() as f64;
    let bias = means.iter().map(|m| m - truth).sum::<f64>() / n;
    let rmse = (means.iter().map(|m| (m - truth).powi(2)).sum::<f64>() / n).sqrt();
    let covered = lowers
        .iter()
        .zip(uppers)
        .filter(|(lo, hi)| **lo <= truth && truth <= **hi)
        .count() as f64;
    let coverage = covered / n;
    let coverage_se = (coverage * (1.0 - coverage) / n).sqrt();
    let interval_length =
        lowers.iter().zip(uppers).map(|(lo, hi)| hi - lo).sum::<f64>() / n;
    ParamSummary { truth, bias, rmse, coverage, coverage_se, interval_length }
}

fn aggregate(records: &[ReplicateRecord], truth: &DgpTruth) -> Result<StudyAggregates> {
    if records.is_empty() {
        return Err(Error::invalid_state("no successful replicates to aggregate"));
    }
    let n = records.len() as f64;
    let r = records[0].gamma_mean.len();
    let q = records[0].theta_mean.len();
    if truth.theta0.len() != q {
        return Err(Error::invalid_argument(format!(
            "truth direction has {} entries but records carry q = {q}",
            truth.theta0.len()
        )));
    }

    let mut gamma = Vec::with_capacity(r);
    for j in 0..r {
        let means: Vec<f64> = records.iter().map(|rec| rec.gamma_mean[j]).collect();
        let lowers: Vec<f64> = records.iter().map(|rec| rec.gamma_lower[j]).collect();
        let uppers: Vec<f64> = records.iter().map(|rec| rec.gamma_upper[j]).collect();
        gamma.push(summarize_coordinate(truth.gamma0, &means, &lowers, &uppers));
    }

    let mut theta = Vec::with_capacity(q);
    for j in 0..q {
        let means: Vec<f64> = records.iter().map(|rec| rec.theta_mean[j]).collect();
        let lowers: Vec<f64> = records.iter().map(|rec| rec.theta_lower[j]).collect();
        let uppers: Vec<f64> = records.iter().map(|rec| rec.theta_upper[j]).collect();
        theta.push(summarize_coordinate(truth.theta0[j], &means, &lowers, &uppers));
    }

    let mean_angular_error = records.iter().map(|rec| rec.angular_error).sum::<f64>() / n;
    let mean_misclassification =
        records.iter().map(|rec| rec.misclassification).sum::<f64>() / n;
    let mean_lambda_max = records.iter().map(|rec| rec.lambda_max).sum::<f64>() / n;

    let with_decision = records.iter().filter(|rec| rec.action.is_some()).count();
    let (mean_prob_heterogeneity, a0_fraction) = if with_decision == records.len() {
        let mean_p = records
            .iter()
            .map(|rec| rec.prob_heterogeneity.unwrap_or(f64::NAN))
            .sum::<f64>()
            / n;
        let a0 = records
            .iter()
            .filter(|rec| rec.action == Some(Action::A0))
            .count() as f64
            / n;
        (Some(mean_p), Some(a0))
    } else {
        (None, None)
    };

    Ok(StudyAggregates {
        gamma,
        theta,
        mean_angular_error,
        mean_misclassification,
        mean_lambda_max,
        mean_prob_heterogeneity,
        a0_fraction,
    })
}

/// Run every replicate (in parallel when threads are available), collect the
/// failures without aborting the study, and aggregate the successes. Fails
/// only when no replicate succeeds.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyResult> {
    cfg.validate()?;
    let outcomes: Vec<(usize, Result<ReplicateRecord>)> = (0..cfg.n_replicates)
        .into_par_iter()
        .map(|rep| (rep, run_replicate(cfg, rep)))
        .collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (rep, outcome) in outcomes {
        match outcome {
            Ok(record) => records.push(record),
            Err(err) => failures.push(ReplicateFailure { rep, message: err.to_string() }),
        }
    }
    records.sort_by_key(|rec| rec.rep);
    failures.sort_by_key(|f| f.rep);

    if records.is_empty() {
        let detail = failures
            .first()
            .map(|f| format!("replicate {}: {}", f.rep, f.message))
            .unwrap_or_else(|| "no replicates were requested".to_string());
        return Err(Error::invalid_state(format!(
            "every replicate failed; first failure: {detail}"
        )));
    }

    // Aggregation needs the truth metadata; regenerate it from the first
    // replicate's seed (generation is deterministic and cheap).
    let (_, truth) = generate_dgp(&cfg.spec, derive_seed(cfg.base_seed, DOMAIN_DATA, 0))?;
    let aggregates = aggregate(&records, &truth)?;

    Ok(StudyResult { records, failures, aggregates, n_requested: cfg.n_replicates })
}

impl StudyResult {
    /// Flatten the aggregates into tidy rows for tabular export.
    pub fn long_rows(&self, dgp: &str, method: &str) -> Vec<LongRow> {
        let mut rows = Vec::new();
        let mut push = |parameter: &str, metric: &str, value: f64| {
            rows.push(LongRow {
                dgp: dgp.to_string(),
                method: method.to_string(),
                parameter: parameter.to_string(),
                metric: metric.to_string(),
                value,
            });
        };
        for (j, s) in self.aggregates.gamma.iter().enumerate() {
            let name = format!("gamma{}", j + 1);
            push(&name, "truth", s.truth);
            push(&name, "bias", s.bias);
            push(&name, "rmse", s.rmse);
            push(&name, "coverage", s.coverage);
            push(&name, "coverage_se", s.coverage_se);
            push(&name, "interval_length", s.interval_length);
        }
        for (j, s) in self.aggregates.theta.iter().enumerate() {
            let name = format!("theta{}", j + 1);
            push(&name, "truth", s.truth);
            push(&name, "bias", s.bias);
            push(&name, "rmse", s.rmse);
            push(&name, "coverage", s.coverage);
            push(&name, "coverage_se", s.coverage_se);
            push(&name, "interval_length", s.interval_length);
        }
        push("direction", "mean_angular_error", self.aggregates.mean_angular_error);
        push("direction", "mean_misclassification", self.aggregates.mean_misclassification);
        push("direction", "mean_lambda_max", self.aggregates.mean_lambda_max);
        if let Some(p) = self.aggregates.mean_prob_heterogeneity {
            push("decision", "mean_prob_heterogeneity", p);
        }
        if let Some(a0) = self.aggregates.a0_fraction {
            push("decision", "a0_fraction", a0);
        }
        push("study", "n_succeeded", self.records.len() as f64);
        push("study", "n_failed", self.failures.len() as f64);
        rows
    }
}
