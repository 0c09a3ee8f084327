//! JSON serialization of decision reports and run metadata.

use std::path::Path;

use changeplane::{
    Action, Baseline, Contrast, DecisionConfig, DecisionReport, SamplerConfig, ThetaPrior,
};
use nalgebra::DVector;
use serde_json::{json, Value};

use crate::csvio::LoadedData;
use crate::errors::{CliResult, Stage, StageExt};

pub fn vec_json(v: &DVector<f64>) -> Value {
    Value::from(v.iter().copied().collect::<Vec<f64>>())
}

fn action_str(a: Action) -> &'static str {
    match a {
        Action::A0 => "a0",
        Action::A1 => "a1",
    }
}

pub fn contrast_json(c: &Contrast) -> Value {
    match c {
        Contrast::Coordinate(j) => json!({ "kind": "coordinate", "index": j + 1 }),
        Contrast::Fixed(v) => json!({ "kind": "vector", "weights": vec_json(v) }),
        Contrast::L2Norm => json!({ "kind": "norm" }),
    }
}

pub fn decision_json(cfg: &DecisionConfig) -> Value {
    json!({
        "delta": cfg.delta,
        "cost_fp": cfg.cost_fp,
        "cost_fn": cfg.cost_fn,
        "p_report": cfg.p_report(),
        "contrast": contrast_json(&cfg.contrast),
    })
}

pub fn sampler_json(cfg: &SamplerConfig) -> Value {
    json!({
        "sweeps": cfg.n_iter,
        "burn": cfg.n_burn,
        "thin": cfg.thin,
        "tau": cfg.tau,
        "seed": cfg.seed,
        "baseline": match cfg.baseline {
            Baseline::Parametric => json!("parametric"),
            Baseline::Trees { n_trees } => json!({ "trees": n_trees }),
        },
        "theta_prior": match cfg.theta_prior {
            ThetaPrior::UniformHemisphere => "flat",
            ThetaPrior::Horseshoe => "horseshoe",
        },
        "theta_moves_per_sweep": cfg.theta_updates_per_sweep,
    })
}

pub fn data_json(path: &Path, loaded: &LoadedData) -> Value {
    json!({
        "path": path.display().to_string(),
        "rows": loaded.data.n(),
        "baseline_columns": loaded.w_names,
        "treatment_columns": loaded.x_names,
        "boundary_columns": loaded.z_names,
        "baseline_treatment_overlap": loaded.overlap,
        "standardized_boundary": loaded
            .standardized
            .iter()
            .map(|s| json!({ "column": s.name, "mean": s.mean, "sd": s.sd }))
            .collect::<Vec<_>>(),
    })
}

/// The decision report itself: probabilities, the action, effect intervals,
/// and the direction summary (withheld fields serialize as null).
pub fn report_json(rep: &DecisionReport) -> Value {
    json!({
        "prob_heterogeneity": rep.prob_h_delta,
        "p_report": rep.p_report,
        "delta": rep.delta,
        "action": action_str(rep.action),
        "lambda_max": rep.lambda_max,
        "theta_hat": rep.theta_hat.as_ref().map(vec_json),
        "mean_membership": rep.q_bar,
        "gamma_mean": vec_json(&rep.gamma_mean),
        "gamma_lower": vec_json(&rep.gamma_lower),
        "gamma_upper": vec_json(&rep.gamma_upper),
        "contrast_mean": rep.contrast_mean,
        "contrast_lower": rep.contrast_lower,
        "contrast_upper": rep.contrast_upper,
        "membership": rep.membership_table.as_ref().map(|rows| {
            rows.iter()
                .map(|r| json!({ "z": vec_json(&r.z), "prob": r.q }))
                .collect::<Vec<_>>()
        }),
        "weak_identification_note": rep.weak_identification_note,
    })
}

pub fn write_pretty(path: &Path, value: &Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable value");
    std::fs::write(path, text + "\n").stage(Stage::Data)
}
