//! Small tabulation helpers shared by the subcommands: posterior column
//! summaries and CSV assembly. Floats are written with Rust's shortest
//! round-trip formatting, so files parse back to the exact same values.

use changeplane::PosteriorDraws;

/// Mean and central 95% interval of a sample, matching the interval
/// convention used by the reporting module (linear interpolation between
/// order statistics).
pub fn mean_and_interval(values: &mut [f64]) -> (f64, f64, f64) {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite draws"));
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (mean, percentile(values, 0.025), percentile(values, 0.975))
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
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
        sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
    }
}

/// One `param,mean,lower,upper` row per scalar parameter in the draw set.
/// Baseline coefficient rows are absent when the fit used the tree baseline
/// (the ensemble replaces them).
pub fn posterior_summary_csv(draws: &PosteriorDraws, param_names: &[String]) -> String {
    let mut out = String::from("param,mean,lower,upper\n");
    let total = draws.p() + draws.r() + draws.q() + 1;
    assert_eq!(param_names.len(), total, "one name per stored parameter");
    for (k, name) in param_names.iter().enumerate() {
        let mut col: Vec<f64> = draws
            .iter()
            .map(|d| {
                if k < draws.p() {
                    d.beta[k]
                } else if k < draws.p() + draws.r() {
                    d.gamma[k - draws.p()]
                } else if k < total - 1 {
                    d.theta[k - draws.p() - draws.r()]
                } else {
                    d.sigma2
                }
            })
            .collect();
        let (mean, lo, hi) = mean_and_interval(&mut col);
        out.push_str(&format!("{name},{mean},{lo},{hi}\n"));
    }
    out
}

/// Names for every stored parameter: baseline coefficients (when present),
/// treatment coefficients, boundary coordinates, and the noise variance.
pub fn param_names(
    draws: &PosteriorDraws,
    w_names: &[String],
    x_names: &[String],
    z_names: &[String],
) -> Vec<String> {
    let mut names = Vec::with_capacity(draws.p() + draws.r() + draws.q() + 1);
    if draws.p() == w_names.len() {
        for w in w_names {
            names.push(format!("beta.{w}"));
        }
    } else {
        // Tree baseline: no linear coefficients are stored.
        debug_assert_eq!(draws.p(), 0);
    }
    for x in x_names {
        names.push(format!("gamma.{x}"));
    }
    for z in z_names {
        names.push(format!("theta.{z}"));
    }
    names.push("sigma2".to_string());
    names
}
