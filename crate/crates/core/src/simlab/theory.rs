//! Numerical checks of the smoothing-scale asymptotics.
//!
//! Three experiments, each with an analytic reference:
//!
//! * the probability that the soft gate disagrees with the hard indicator,
//!   traced over a grid of smoothing scales (linear decay in the scale when
//!   the score has a bounded density near zero);
//! * the drift of the population-optimal working parameter away from the
//!   generating parameter as the scale shrinks (again linear in the scale);
//! * a feasibility map for scale schedules of the form n^(-rho): which decay
//!   rates keep the posterior approximation accurate while still removing
//!   the first-order smoothing shift for a given moment order alpha.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::math::{log_sum_exp, norm_cdf, norm_log_cdf};
use crate::simlab::dgp::{generate_dgp, true_baseline_coefficients, true_direction, DgpSpec};

/// Smoothing scales for the gate-error decay experiment.
pub const MARGIN_TAU_GRID: [f64; 4] = [0.2, 0.1, 0.05, 0.025];

/// Smoothing scales for the pseudo-true parameter path.
pub const PSEUDO_TRUE_TAU_GRID: [f64; 3] = [0.2, 0.1, 0.05];

/// Default Monte Carlo sample size for the pseudo-true path.
pub const PSEUDO_TRUE_MC_SIZE: usize = 100_000;

/// Default objective-evaluation budget per scale for the pseudo-true path.
pub const PSEUDO_TRUE_BUDGET: usize = 2_000;

/// Monte Carlo estimate of a gate disagreement probability.
#[derive(Debug, Clone, Copy)]
pub struct GateErrorEstimate {
    pub tau: f64,
    pub value: f64,
    pub std_error: f64,
}

/// Exact gate disagreement probability for a standard normal score.
///
/// The soft gate misleads exactly when an independent standard normal V has
/// tau * V on the far side of the score U: P(tau V <= -|U|). In polar
/// coordinates the event is the double wedge of half-angle arctan(tau)
/// around the negative V axis, so the probability is arctan(tau) / pi.
pub fn gate_error_exact(tau: f64) -> f64 {
    tau.atan() / std::f64::consts::PI
}

/// Monte Carlo estimate of E[Phi(-|U|/tau)] for a standard normal score U:
/// the average probability that the soft gate draws the wrong side.
pub fn gate_error_gaussian(tau: f64, mc_draws: usize, seed: u64) -> Result<GateErrorEstimate> {
    let decay = margin_decay_gaussian(&[tau], mc_draws, seed)?;
    Ok(GateErrorEstimate {
        tau,
        value: decay.errors[0],
        std_error: decay.std_errors[0],
    })
}

/// Gate disagreement probabilities over a scale grid, with the fitted
/// log-log slope. All scales share the same score draws, so the slope
/// estimate is far tighter than the individual values.
#[derive(Debug, Clone)]
pub struct MarginDecay {
    pub taus: Vec<f64>,
    pub errors: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Slope of ln(error) on ln(tau); near one when the score density is
    /// bounded and positive around zero.
    pub slope: f64,
}

/// Estimate the gate disagreement probability on each scale with common
/// random numbers and fit the decay exponent.
pub fn margin_decay_gaussian(taus: &[f64], mc_draws: usize, seed: u64) -> Result<MarginDecay> {
    if taus.is_empty() {
        return Err(Error::invalid_argument("scale grid must be non-empty"));
    }
    for &tau in taus {
        if !tau.is_finite() || tau <= 0.0 {
            return Err(Error::invalid_argument(format!(
                "smoothing scale must be positive and finite, got {tau}"
            )));
        }
    }
    if mc_draws < 2 {
        return Err(Error::invalid_argument("need at least 2 Monte Carlo draws"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = taus.len();
    let mut sums = vec![0.0f64; k];
    let mut sq_sums = vec![0.0f64; k];
    for _ in 0..mc_draws {
        let u: f64 = rng.sample(StandardNormal);
        let a = u.abs();
        for (j, &tau) in taus.iter().enumerate() {
            let v = norm_cdf(-a / tau);
            sums[j] += v;
            sq_sums[j] += v * v;
        }
    }
    let n = mc_draws as f64;
    let mut errors = Vec::with_capacity(k);
    let mut std_errors = Vec::with_capacity(k);
    for j in 0..k {
        let mean = sums[j] / n;
        let var = (sq_sums[j] / n - mean * mean).max(0.0) * n / (n - 1.0);
        errors.push(mean);
        std_errors.push((var / n).sqrt());
    }
    let slope = if k >= 2 { fit_log_slope(taus, &errors)? } else { f64::NAN };
    Ok(MarginDecay { taus: taus.to_vec(), errors, std_errors, slope })
}

/// Least-squares slope of ln(y) on ln(x). Requires at least two points,
/// positive finite coordinates, and a non-degenerate x grid.
pub fn fit_log_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::invalid_argument(format!(
            "grid and value counts differ: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::invalid_argument("log-log fit needs at least two points"));
    }
    for (&x, &y) in xs.iter().zip(ys) {
        if !x.is_finite() || x <= 0.0 || !y.is_finite() || y <= 0.0 {
            return Err(Error::invalid_argument(format!(
                "log-log fit needs positive finite points, got ({x}, {y})"
            )));
        }
    }
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in lx.iter().zip(&ly) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx < 1e-12 {
        return Err(Error::invalid_argument(
            "log-log fit needs at least two distinct grid points",
        ));
    }
    Ok(sxy / sxx)
}

/// Which guarantees a schedule tau_n = n^(-rho) satisfies, for outcomes with
/// a finite moment of order alpha.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleFlags {
    /// The smoothed posterior stays within vanishing total-variation distance
    /// of its hard-threshold limit: requires rho < 1/8 (strict).
    pub tv_bvm_ok: bool,
    /// The first-order smoothing shift is asymptotically negligible at the
    /// root-n scale: requires rho > 1/(2 alpha) (strict).
    pub shift_removed: bool,
}

impl ScheduleFlags {
    /// Both guarantees hold simultaneously.
    pub fn both(&self) -> bool {
        self.tv_bvm_ok && self.shift_removed
    }
}

/// Evaluate the schedule feasibility map at one (alpha, rho) point. Both
/// inequalities are strict, so boundary rates satisfy neither requirement.
pub fn schedule_feasibility(alpha: f64, rho: f64) -> Result<ScheduleFlags> {
    if !alpha.is_finite() || alpha < 1.0 {
        return Err(Error::invalid_argument(format!(
            "moment order alpha must be at least 1 and finite, got {alpha}"
        )));
    }
    if !rho.is_finite() || rho <= 0.0 {
        return Err(Error::invalid_argument(format!(
            "schedule rate rho must be positive and finite, got {rho}"
        )));
    }
    Ok(ScheduleFlags {
        tv_bvm_ok: rho < 0.125,
        shift_removed: rho > 1.0 / (2.0 * alpha),
    })
}

/// The empirical population-optimal working parameter at one smoothing scale:
/// the minimizer of the average negative log working density over a large
/// common-random-numbers sample from the first standard scenario.
#[derive(Debug, Clone)]
pub struct PseudoTruePoint {
    pub tau: f64,
    pub beta: DVector<f64>,
    pub gamma: f64,
    pub theta: DVector<f64>,
    pub sigma2: f64,
    /// Minimized average negative log working density.
    pub objective: f64,
    /// Euclidean distance of (beta, gamma, theta, sigma2) from the
    /// generating values.
    pub bias_norm: f64,
    pub evals: usize,
    pub converged: bool,
}

struct NmOutcome {
    x: Vec<f64>,
    fx: f64,
    evals: usize,
    converged: bool,
}

/// Nelder-Mead downhill simplex with standard coefficients (reflection 1,
/// expansion 2, contraction 0.5, shrink 0.5). Non-finite objective values are
/// treated as +infinity. Stops when the budget is spent or the simplex has
/// collapsed in both objective spread and parameter spread.
fn nelder_mead(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    step: f64,
    budget: usize,
) -> NmOutcome {
    let dim = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    let fx0 = eval(x0, &mut evals);
    simplex.push((x0.to_vec(), fx0));
    for i in 0..dim {
        let mut x = x0.to_vec();
        x[i] += step;
        let fx = eval(&x, &mut evals);
        simplex.push((x, fx));
    }

    let f_tol = 1e-10;
    let x_tol = 1e-7;
    let mut converged = false;

    while evals < budget {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let f_best = simplex[0].1;
        let f_worst = simplex[dim].1;
        let x_spread = (0..dim)
            .map(|j| {
                let lo = simplex.iter().map(|(x, _)| x[j]).fold(f64::INFINITY, f64::min);
                let hi = simplex.iter().map(|(x, _)| x[j]).fold(f64::NEG_INFINITY, f64::max);
                hi - lo
            })
            .fold(0.0f64, f64::max);
        if f_worst - f_best < f_tol && x_spread < x_tol {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..dim)
            .map(|j| simplex[..dim].iter().map(|(x, _)| x[j]).sum::<f64>() / dim as f64)
            .collect();
        let reflect: Vec<f64> = (0..dim)
            .map(|j| centroid[j] + (centroid[j] - simplex[dim].0[j]))
            .collect();
        let f_reflect = eval(&reflect, &mut evals);

        if f_reflect < simplex[0].1 {
            let expand: Vec<f64> = (0..dim)
                .map(|j| centroid[j] + 2.0 * (centroid[j] - simplex[dim].0[j]))
                .collect();
            let f_expand = eval(&expand, &mut evals);
            simplex[dim] = if f_expand < f_reflect {
                (expand, f_expand)
            } else {
                (reflect, f_reflect)
            };
        } else if f_reflect < simplex[dim - 1].1 {
            simplex[dim] = (reflect, f_reflect);
        } else {
            let contract: Vec<f64> = (0..dim)
                .map(|j| centroid[j] + 0.5 * (simplex[dim].0[j] - centroid[j]))
                .collect();
            let f_contract = eval(&contract, &mut evals);
            if f_contract < simplex[dim].1 {
                simplex[dim] = (contract, f_contract);
            } else {
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    for j in 0..dim {
                        entry.0[j] = best[j] + 0.5 * (entry.0[j] - best[j]);
                    }
                    entry.1 = eval(&entry.0, &mut evals);
                }
            }
        }
    }

    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    NmOutcome { x: simplex[0].0.clone(), fx: simplex[0].1, evals, converged }
}

/// Orthonormal basis of the tangent space at `theta0` (columns orthogonal to
/// `theta0` and to each other), built by Gram-Schmidt over coordinate axes.
fn tangent_basis(theta0: &DVector<f64>) -> Result<DMatrix<f64>> {
    let q = theta0.len();
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(q - 1);
    for i in 0..q {
        let mut v = DVector::zeros(q);
        v[i] = 1.0;
        v -= theta0 * theta0[i];
        for c in &cols {
            let proj = c.dot(&v);
            v -= c * proj;
        }
        let norm = v.norm();
        if norm > 1e-8 {
            cols.push(v / norm);
        }
        if cols.len() == q - 1 {
            break;
        }
    }
    if cols.len() != q - 1 {
        return Err(Error::numerical("tangent basis construction lost rank"));
    }
    Ok(DMatrix::from_columns(&cols))
}

/// Trace the empirical pseudo-true parameter over a grid of smoothing scales.
///
/// One common-random-numbers sample of `mc_size` rows is drawn from the first
/// standard scenario and reused for every scale and every objective
/// evaluation, so differences along the path reflect the scale alone. The
/// search runs over an 11-coordinate chart (five baseline coefficients, the
/// gated effect, four tangent coordinates for the unit direction, and the log
/// noise variance) with a downhill simplex, warm-starting each scale from the
/// previous minimizer. Scales should therefore be listed from largest to
/// smallest.
pub fn pseudo_true_path(
    taus: &[f64],
    mc_size: usize,
    budget_per_tau: usize,
    seed: u64,
) -> Result<Vec<PseudoTruePoint>> {
    if taus.is_empty() {
        return Err(Error::invalid_argument("scale grid must be non-empty"));
    }
    for &tau in taus {
        if !tau.is_finite() || tau <= 0.0 {
            return Err(Error::invalid_argument(format!(
                "smoothing scale must be positive and finite, got {tau}"
            )));
        }
    }
    if mc_size < 100 {
        return Err(Error::invalid_argument(
            "pseudo-true path needs at least 100 Monte Carlo rows",
        ));
    }
    if budget_per_tau < 50 {
        return Err(Error::invalid_argument(
            "pseudo-true path needs a budget of at least 50 evaluations per scale",
        ));
    }

    let spec = DgpSpec::standard(1, mc_size)?;
    let (data, truth) = generate_dgp(&spec, seed)?;
    let beta0 = true_baseline_coefficients();
    let theta0 = true_direction(5)?;
    let gamma0 = truth.gamma0;
    let basis = tangent_basis(&theta0)?;
    let n = data.n() as f64;

    // Flatten the columns the inner loop touches.
    let y: Vec<f64> = data.y().iter().copied().collect();
    let x: Vec<f64> = (0..data.n()).map(|i| data.x()[(i, 0)]).collect();

    let dim = 11usize;
    let mut start = vec![0.0f64; dim];
    for j in 0..5 {
        start[j] = beta0[j];
    }
    start[5] = gamma0;
    // Tangent coordinates 6..10 start at zero (the true direction), and the
    // log variance starts at zero (unit variance).

    let mut points = Vec::with_capacity(taus.len());
    for &tau in taus {
        let mut objective = |u: &[f64]| -> f64 {
            let beta = DVector::from_column_slice(&u[0..5]);
            let gamma = u[5];
            let t = DVector::from_column_slice(&u[6..10]);
            let sigma2 = u[10].exp();
            if !sigma2.is_finite() || sigma2 <= 0.0 {
                return f64::INFINITY;
            }
            // theta0 is orthogonal to the basis columns, so the chart image
            // has squared norm 1 + |t|^2 and never degenerates.
            let theta_raw = &theta0 + &basis * &t;
            let theta = &theta_raw / theta_raw.norm();

            let mu = data.w() * &beta;
            let score = data.z() * &theta;
            let inv2s2 = 0.5 / sigma2;
            let log_c = -0.5 * (2.0 * std::f64::consts::PI * sigma2).ln();
            let mut acc = 0.0f64;
            for i in 0..y.len() {
                let s = score[i] / tau;
                let shifted = y[i] - mu[i] - x[i] * gamma;
                let plain = y[i] - mu[i];
                let lp1 = norm_log_cdf(s) - shifted * shifted * inv2s2;
                let lp0 = norm_log_cdf(-s) - plain * plain * inv2s2;
                acc += log_sum_exp(lp0, lp1);
            }
            -(acc / n + log_c)
        };

        let outcome = nelder_mead(&mut objective, &start, 0.05, budget_per_tau);
        let u = &outcome.x;
        let beta = DVector::from_column_slice(&u[0..5]);
        let gamma = u[5];
        let t = DVector::from_column_slice(&u[6..10]);
        let theta_raw = &theta0 + &basis * &t;
        let theta = &theta_raw / theta_raw.norm();
        let sigma2 = u[10].exp();
        let bias_norm = ((&beta - &beta0).norm_squared()
            + (gamma - gamma0).powi(2)
            + (&theta - &theta0).norm_squared()
            + (sigma2 - 1.0).powi(2))
        .sqrt();
        points.push(PseudoTruePoint {
            tau,
            beta,
            gamma,
            theta,
            sigma2,
            objective: outcome.fx,
            bias_norm,
            evals: outcome.evals,
            converged: outcome.converged,
        });
        start = outcome.x;
    }
    Ok(points)
}

/// Fitted exponent of the bias-norm decay: slope of ln(bias) on ln(tau).
pub fn pseudo_true_exponent(points: &[PseudoTruePoint]) -> Result<f64> {
    let taus: Vec<f64> = points.iter().map(|p| p.tau).collect();
    let norms: Vec<f64> = points.iter().map(|p| p.bias_norm).collect();
    fit_log_slope(&taus, &norms)
}
