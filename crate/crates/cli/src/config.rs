//! Run configuration: a flat key-value text file with sectioned keys
//! (`section.key = value`), full-line `#` comments, and no other structure.
//! One file pins the data roles, the sampler settings, and the decision
//! rule, so a run is fully determined by the file plus the binary version.

use std::collections::BTreeMap;
use std::path::PathBuf;

use changeplane::{Baseline, Contrast, DecisionConfig, SamplerConfig, ThetaPrior};
use nalgebra::DVector;

use crate::errors::{CliError, CliResult};

/// Every key the parser accepts. Unknown keys are rejected rather than
/// ignored so a typo cannot silently fall back to a default.
const KNOWN_KEYS: &[&str] = &[
    "data.path",
    "data.outcome",
    "data.baseline",
    "data.treatment",
    "data.boundary",
    "data.intercept",
    "data.boundary_intercept",
    "data.standardize",
    "data.interactions",
    "sampler.sweeps",
    "sampler.burn",
    "sampler.thin",
    "sampler.tau",
    "sampler.seed",
    "sampler.baseline",
    "sampler.trees",
    "sampler.theta_prior",
    "sampler.theta_moves",
    "sampler.max_shrink",
    "decision.delta",
    "decision.cost_fp",
    "decision.cost_fn",
    "decision.contrast",
    "out.dir",
];

/// Which CSV columns play which role in the model design.
#[derive(Debug, Clone)]
pub struct RoleMap {
    pub outcome: String,
    pub baseline: Vec<String>,
    pub treatment: Vec<String>,
    pub boundary: Vec<String>,
    /// Prepend a constant column to the baseline design.
    pub intercept: bool,
    /// Prepend a constant column to the boundary design.
    pub boundary_intercept: bool,
    /// Center and scale non-constant boundary columns.
    pub standardize: bool,
    /// Append all two-way products of the baseline columns.
    pub interactions: bool,
}

/// A fully parsed run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data_path: PathBuf,
    pub roles: RoleMap,
    pub sampler: SamplerConfig,
    pub decision: DecisionConfig,
    pub out_dir: Option<PathBuf>,
    /// Verbatim file content, echoed into the output directory for
    /// provenance.
    pub raw: String,
}

impl RunConfig {
    pub fn from_file(path: &std::path::Path) -> CliResult<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| {
            CliError::config(format!("cannot read config file {}: {e}", path.display()))
        })?;
        Self::parse(&raw)
    }

    pub fn parse(raw: &str) -> CliResult<Self> {
        let map = key_value_map(raw)?;
        let get = |key: &str| map.get(key).map(|(_, v)| v.as_str());

        let req = |key: &str| -> CliResult<&str> {
            get(key).ok_or_else(|| CliError::config(format!("missing required key '{key}'")))
        };

        // Data section.
        let data_path = PathBuf::from(req("data.path")?);
        let outcome = req("data.outcome")?.to_string();
        let baseline = name_list(get("data.baseline").unwrap_or(""), "data.baseline")?;
        let treatment = name_list(req("data.treatment")?, "data.treatment")?;
        let boundary = name_list(req("data.boundary")?, "data.boundary")?;
        let intercept = bool_value(get("data.intercept").unwrap_or("true"), "data.intercept")?;
        let boundary_intercept = bool_value(
            get("data.boundary_intercept").unwrap_or("true"),
            "data.boundary_intercept",
        )?;
        let standardize =
            bool_value(get("data.standardize").unwrap_or("true"), "data.standardize")?;
        let interactions =
            bool_value(get("data.interactions").unwrap_or("false"), "data.interactions")?;

        if treatment.is_empty() {
            return Err(CliError::config("data.treatment must name at least one column"));
        }
        if boundary.is_empty() {
            return Err(CliError::config("data.boundary must name at least one column"));
        }
        if baseline.is_empty() && !intercept {
            return Err(CliError::config(
                "baseline design is empty: list data.baseline columns or set data.intercept = true",
            ));
        }
        if boundary.len() + usize::from(boundary_intercept) < 2 {
            return Err(CliError::config(
                "the boundary design needs at least two columns (including the constant); \
                 a one-dimensional direction is a fixed sign, not an estimable boundary",
            ));
        }
        for (role, list) in [
            ("data.baseline", &baseline),
            ("data.treatment", &treatment),
            ("data.boundary", &boundary),
        ] {
            if list.iter().any(|c| *c == outcome) {
                return Err(CliError::config(format!(
                    "outcome column '{outcome}' also appears in {role}"
                )));
            }
        }

        let roles = RoleMap {
            outcome,
            baseline,
            treatment,
            boundary,
            intercept,
            boundary_intercept,
            standardize,
            interactions,
        };

        // Sampler section.
        let tau = f64_value(get("sampler.tau").unwrap_or("0.1"), "sampler.tau")?;
        let seed = u64_value(req("sampler.seed")?, "sampler.seed")?;
        let mut sampler = SamplerConfig::desk_scale(tau, seed);
        if let Some(v) = get("sampler.sweeps") {
            sampler.n_iter = usize_value(v, "sampler.sweeps")?;
        }
        if let Some(v) = get("sampler.burn") {
            sampler.n_burn = usize_value(v, "sampler.burn")?;
        }
        if let Some(v) = get("sampler.thin") {
            sampler.thin = usize_value(v, "sampler.thin")?;
        }
        if let Some(v) = get("sampler.theta_moves") {
            sampler.theta_updates_per_sweep = usize_value(v, "sampler.theta_moves")?;
        }
        if let Some(v) = get("sampler.max_shrink") {
            sampler.max_slice_shrink =
                usize_value(v, "sampler.max_shrink")? as u32;
        }
        sampler.theta_prior = match get("sampler.theta_prior").unwrap_or("flat") {
            "flat" => ThetaPrior::UniformHemisphere,
            "horseshoe" => ThetaPrior::Horseshoe,
            other => {
                return Err(CliError::config(format!(
                    "sampler.theta_prior must be 'flat' or 'horseshoe', got '{other}'"
                )))
            }
        };
        sampler.baseline = match get("sampler.baseline").unwrap_or("parametric") {
            "parametric" => {
                if map.contains_key("sampler.trees") {
                    return Err(CliError::config(
                        "sampler.trees is only meaningful with sampler.baseline = trees",
                    ));
                }
                Baseline::Parametric
            }
            "trees" => {
                let n_trees = match get("sampler.trees") {
                    Some(v) => usize_value(v, "sampler.trees")?,
                    None => 200,
                };
                Baseline::Trees { n_trees }
            }
            other => {
                return Err(CliError::config(format!(
                    "sampler.baseline must be 'parametric' or 'trees', got '{other}'"
                )))
            }
        };

        // Decision section.
        let delta = f64_value(req("decision.delta")?, "decision.delta")?;
        let cost_fp = f64_value(get("decision.cost_fp").unwrap_or("1"), "decision.cost_fp")?;
        let cost_fn = f64_value(get("decision.cost_fn").unwrap_or("1"), "decision.cost_fn")?;
        let contrast = parse_contrast(req("decision.contrast")?, roles.treatment.len())?;
        let decision = DecisionConfig::new(delta, cost_fp, cost_fn, contrast)
            .map_err(|e| CliError::config(e.to_string()))?;

        let out_dir = get("out.dir").map(PathBuf::from);

        Ok(RunConfig {
            data_path,
            roles,
            sampler,
            decision,
            out_dir,
            raw: raw.to_string(),
        })
    }
}

/// Parse `key = value` lines into a map, recording the line of each key.
fn key_value_map(raw: &str) -> CliResult<BTreeMap<String, (usize, String)>> {
    let mut map: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (idx, line) in raw.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::config(format!(
                "line {line_no}: expected 'key = value', got '{line}'"
            )));
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(CliError::config(format!(
                "line {line_no}: unknown key '{key}'"
            )));
        }
        if let Some((first, _)) = map.get(&key) {
            return Err(CliError::config(format!(
                "line {line_no}: key '{key}' already set at line {first}"
            )));
        }
        map.insert(key, (line_no, value));
    }
    Ok(map)
}

fn name_list(value: &str, key: &str) -> CliResult<Vec<String>> {
    let names: Vec<String> = value
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    for (i, a) in names.iter().enumerate() {
        if names[..i].contains(a) {
            return Err(CliError::config(format!("duplicate column '{a}' in {key}")));
        }
    }
    Ok(names)
}

fn bool_value(value: &str, key: &str) -> CliResult<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(CliError::config(format!(
            "{key} must be 'true' or 'false', got '{other}'"
        ))),
    }
}

fn f64_value(value: &str, key: &str) -> CliResult<f64> {
    value
        .parse::<f64>()
        .map_err(|_| CliError::config(format!("{key} must be a number, got '{value}'")))
}

fn u64_value(value: &str, key: &str) -> CliResult<u64> {
    value
        .parse::<u64>()
        .map_err(|_| CliError::config(format!("{key} must be a non-negative integer, got '{value}'")))
}

fn usize_value(value: &str, key: &str) -> CliResult<usize> {
    value
        .parse::<usize>()
        .map_err(|_| CliError::config(format!("{key} must be a non-negative integer, got '{value}'")))
}

/// Contrast syntax: `norm`, `coordinate:J` (1-based treatment coordinate), or
/// `vector:a,b,...` (one weight per treatment column).
pub fn parse_contrast(value: &str, r: usize) -> CliResult<Contrast> {
    if value == "norm" {
        return Ok(Contrast::L2Norm);
    }
    if let Some(rest) = value.strip_prefix("coordinate:") {
        let j: usize = rest.trim().parse().map_err(|_| {
            CliError::config(format!("contrast coordinate must be an integer, got '{rest}'"))
        })?;
        if j == 0 || j > r {
            return Err(CliError::config(format!(
                "contrast coordinate {j} out of range: treatment design has {r} column(s)"
            )));
        }
        return Ok(Contrast::Coordinate(j - 1));
    }
    if let Some(rest) = value.strip_prefix("vector:") {
        let mut weights = Vec::new();
        for cell in rest.split(',') {
            let v: f64 = cell.trim().parse().map_err(|_| {
                CliError::config(format!("contrast vector entry is not a number: '{cell}'"))
            })?;
            if !v.is_finite() {
                return Err(CliError::config("contrast vector entries must be finite"));
            }
            weights.push(v);
        }
        if weights.len() != r {
            return Err(CliError::config(format!(
                "contrast vector has {} entries but the treatment design has {r} column(s)",
                weights.len()
            )));
        }
        return Ok(Contrast::Fixed(DVector::from_vec(weights)));
    }
    Err(CliError::config(format!(
        "unrecognized contrast '{value}'; use 'norm', 'coordinate:J', or 'vector:a,b,...'"
    )))
}
