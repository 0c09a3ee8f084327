//! Observed-data container with the column roles fixed at construction.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A regression dataset with three covariate blocks:
///
/// * `w` (n x p): baseline covariates, first column conventionally an
///   intercept;
/// * `x` (n x r): covariates whose effect is gated by subgroup membership;
/// * `z` (n x q): boundary covariates that drive membership through the
///   score `z' theta`.
///
/// Blocks may share columns; no disjointness is imposed.
#[derive(Debug, Clone)]
pub struct Dataset {
    y: DVector<f64>,
    w: DMatrix<f64>,
    x: DMatrix<f64>,
    z: DMatrix<f64>,
}

impl Dataset {
    pub fn new(y: DVector<f64>, w: DMatrix<f64>, x: DMatrix<f64>, z: DMatrix<f64>) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::invalid_argument("dataset needs at least one row"));
        }
        for (name, mat) in [("w", &w), ("x", &x), ("z", &z)] {
            if mat.nrows() != n {
                return Err(Error::invalid_argument(format!(
                    "{name} has {} rows but y has {n}",
                    mat.nrows()
                )));
            }
            if mat.ncols() == 0 {
                return Err(Error::invalid_argument(format!("{name} has no columns")));
            }
            if mat.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid_argument(format!(
                    "{name} contains a non-finite value"
                )));
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_argument("y contains a non-finite value"));
        }
        Ok(Dataset { y, w, x, z })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Baseline block width.
    pub fn p(&self) -> usize {
        self.w.ncols()
    }

    /// Gated block width.
    pub fn r(&self) -> usize {
        self.x.ncols()
    }

    /// Boundary block width.
    pub fn q(&self) -> usize {
        self.z.ncols()
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }
}
