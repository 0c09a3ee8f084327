//! CSV ingestion with explicit column roles, optional centering and scaling
//! of the boundary design, and optional two-way interaction expansion of the
//! baseline design.

use std::path::Path;

use changeplane::Dataset;
use nalgebra::{DMatrix, DVector};

use crate::config::RoleMap;
use crate::errors::{CliError, CliResult, Stage, StageExt};

/// Center and scale applied to one boundary column.
#[derive(Debug, Clone)]
pub struct ColumnStat {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
}

/// A dataset bound to its column names plus the bookkeeping a report needs.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub data: Dataset,
    pub w_names: Vec<String>,
    pub x_names: Vec<String>,
    pub z_names: Vec<String>,
    /// Columns serving as both baseline and treatment covariates. Permitted,
    /// but surfaced in the report because the two roles answer different
    /// questions about the same measurement.
    pub overlap: Vec<String>,
    /// Boundary columns that were centered and scaled, with the statistics
    /// used, so boundary coordinates can be mapped back to raw units.
    pub standardized: Vec<ColumnStat>,
}

/// Load a headered numeric CSV and bind columns to model roles.
pub fn load_csv(path: &Path, roles: &RoleMap) -> CliResult<LoadedData> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = raw.lines().enumerate();

    let header = loop {
        match lines.next() {
            Some((_, line)) if line.trim().is_empty() => continue,
            Some((_, line)) => break line,
            None => {
                return Err(CliError::data(format!(
                    "{}: empty file, expected a header row",
                    path.display()
                )))
            }
        }
    };
    let names: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
    for (i, a) in names.iter().enumerate() {
        if a.is_empty() {
            return Err(CliError::data(format!(
                "{}: header cell {} is empty",
                path.display(),
                i + 1
            )));
        }
        if names[..i].contains(a) {
            return Err(CliError::data(format!(
                "{}: duplicate header column '{a}'",
                path.display()
            )));
        }
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != names.len() {
            return Err(CliError::data(format!(
                "line {line_no}: expected {} cells, found {}",
                names.len(),
                cells.len()
            )));
        }
        let mut row = Vec::with_capacity(cells.len());
        for (cell, name) in cells.iter().zip(&names) {
            let v: f64 = cell.trim().parse().map_err(|_| {
                CliError::data(format!(
                    "line {line_no}, column '{name}': non-numeric cell '{}'",
                    cell.trim()
                ))
            })?;
            if !v.is_finite() {
                return Err(CliError::data(format!(
                    "line {line_no}, column '{name}': non-finite value '{}'",
                    cell.trim()
                )));
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::data(format!("{}: no data rows", path.display())));
    }
    let n = rows.len();

    let col = |name: &String| -> CliResult<usize> {
        names.iter().position(|c| c == name).ok_or_else(|| {
            CliError::data(format!("column '{name}' not found in {}", path.display()))
        })
    };
    let outcome_idx = col(&roles.outcome)?;
    let baseline_idx: Vec<usize> = roles.baseline.iter().map(col).collect::<CliResult<_>>()?;
    let treatment_idx: Vec<usize> = roles.treatment.iter().map(col).collect::<CliResult<_>>()?;
    let boundary_idx: Vec<usize> = roles.boundary.iter().map(col).collect::<CliResult<_>>()?;

    let y = DVector::from_fn(n, |i, _| rows[i][outcome_idx]);

    // Baseline design: optional constant, the named columns, then all
    // two-way products of the named columns when interaction expansion is on.
    let mut w_cols: Vec<(String, Vec<f64>)> = Vec::new();
    if roles.intercept {
        w_cols.push(("(intercept)".to_string(), vec![1.0; n]));
    }
    for (name, &j) in roles.baseline.iter().zip(&baseline_idx) {
        w_cols.push((name.clone(), rows.iter().map(|r| r[j]).collect()));
    }
    if roles.interactions {
        for a in 0..baseline_idx.len() {
            for b in (a + 1)..baseline_idx.len() {
                let (ja, jb) = (baseline_idx[a], baseline_idx[b]);
                w_cols.push((
                    format!("{}*{}", roles.baseline[a], roles.baseline[b]),
                    rows.iter().map(|r| r[ja] * r[jb]).collect(),
                ));
            }
        }
    }
    let w_names: Vec<String> = w_cols.iter().map(|(name, _)| name.clone()).collect();
    let w = DMatrix::from_fn(n, w_cols.len(), |i, j| w_cols[j].1[i]);

    let x_names = roles.treatment.clone();
    let x = DMatrix::from_fn(n, treatment_idx.len(), |i, j| rows[i][treatment_idx[j]]);

    // Boundary design: optional constant plus the named columns; non-constant
    // columns centered and scaled when standardization is on.
    let mut z_cols: Vec<(String, Vec<f64>)> = Vec::new();
    if roles.boundary_intercept {
        z_cols.push(("(intercept)".to_string(), vec![1.0; n]));
    }
    for (name, &j) in roles.boundary.iter().zip(&boundary_idx) {
        z_cols.push((name.clone(), rows.iter().map(|r| r[j]).collect()));
    }
    let mut standardized = Vec::new();
    if roles.standardize {
        for (name, vals) in z_cols.iter_mut() {
            let mean = vals.iter().sum::<f64>() / n as f64;
            let sd = if n > 1 {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            if sd == 0.0 {
                continue;
            }
            for v in vals.iter_mut() {
                *v = (*v - mean) / sd;
            }
            standardized.push(ColumnStat { name: name.clone(), mean, sd });
        }
    }
    let z_names: Vec<String> = z_cols.iter().map(|(name, _)| name.clone()).collect();
    let z = DMatrix::from_fn(n, z_cols.len(), |i, j| z_cols[j].1[i]);

    let mut overlap: Vec<String> = roles
        .treatment
        .iter()
        .filter(|t| roles.baseline.contains(t))
        .cloned()
        .collect();
    overlap.sort();

    let data = Dataset::new(y, w, x, z).stage(Stage::Data)?;
    Ok(LoadedData { data, w_names, x_names, z_names, overlap, standardized })
}
