//! Kept posterior draws and their on-disk text format.
//!
//! The format is a plain columnar text file: one comment header carrying
//! the dimensions and thinning metadata, one name row, one row per kept
//! draw. Values are written with Rust's shortest-round-trip float
//! formatting, so save followed by load reproduces every draw bit for bit.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};

/// One kept sweep: regression blocks, boundary direction, noise variance.
/// `beta` is empty when the baseline is a tree ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamDraw {
    pub beta: DVector<f64>,
    pub gamma: DVector<f64>,
    pub theta: DVector<f64>,
    pub sigma2: f64,
}

/// Post-burn-in, thinned draws with the schedule that produced them.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    draws: Vec<ParamDraw>,
    p: usize,
    r: usize,
    q: usize,
    n_total: usize,
    n_burn: usize,
    thin: usize,
}

impl PosteriorDraws {
    /// `p` may be zero (tree baseline keeps no regression coefficients);
    /// `r` and `q` must be positive; `n_burn < n_total`, `thin >= 1`.
    pub fn new(
        p: usize,
        r: usize,
        q: usize,
        n_total: usize,
        n_burn: usize,
        thin: usize,
    ) -> Result<Self> {
        if r == 0 || q == 0 {
            return Err(Error::invalid_argument(
                "draw container needs r >= 1 and q >= 1",
            ));
        }
        if thin == 0 {
            return Err(Error::invalid_argument("thin must be >= 1"));
        }
        if n_burn >= n_total {
            return Err(Error::invalid_argument(format!(
                "burn-in {n_burn} must be smaller than the total sweep count {n_total}"
            )));
        }
        Ok(PosteriorDraws {
            draws: Vec::with_capacity((n_total - n_burn) / thin),
            p,
            r,
            q,
            n_total,
            n_burn,
            thin,
        })
    }

    /// Number of draws the schedule keeps: floor((total - burn) / thin).
    pub fn expected_len(&self) -> usize {
        (self.n_total - self.n_burn) / self.thin
    }

    pub fn push(&mut self, draw: ParamDraw) -> Result<()> {
        if draw.beta.len() != self.p || draw.gamma.len() != self.r || draw.theta.len() != self.q {
            return Err(Error::invalid_argument(format!(
                "draw dims (beta {}, gamma {}, theta {}) do not match container ({}, {}, {})",
                draw.beta.len(),
                draw.gamma.len(),
                draw.theta.len(),
                self.p,
                self.r,
                self.q
            )));
        }
        if self.draws.len() == self.expected_len() {
            return Err(Error::invalid_state(format!(
                "container already holds its full schedule of {} draws",
                self.expected_len()
            )));
        }
        self.draws.push(draw);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ParamDraw> {
        self.draws.iter()
    }

    pub fn get(&self, i: usize) -> Option<&ParamDraw> {
        self.draws.get(i)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn n_burn(&self) -> usize {
        self.n_burn
    }

    pub fn thin(&self) -> usize {
        self.thin
    }

    /// Write the self-describing columnar text format.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        writeln!(
            out,
            "# changeplane-draws v1 p={} r={} q={} total={} burn={} thin={} kept={}",
            self.p,
            self.r,
            self.q,
            self.n_total,
            self.n_burn,
            self.thin,
            self.draws.len()
        )
        .expect("string write");
        let mut names = Vec::with_capacity(self.p + self.r + self.q + 1);
        for j in 1..=self.p {
            names.push(format!("beta.{j}"));
        }
        for j in 1..=self.r {
            names.push(format!("gamma.{j}"));
        }
        for j in 1..=self.q {
            names.push(format!("theta.{j}"));
        }
        names.push("sigma2".to_string());
        writeln!(out, "{}", names.join(",")).expect("string write");
        for d in &self.draws {
            let mut row = Vec::with_capacity(names.len());
            row.extend(d.beta.iter().map(|v| format!("{v}")));
            row.extend(d.gamma.iter().map(|v| format!("{v}")));
            row.extend(d.theta.iter().map(|v| format!("{v}")));
            row.push(format!("{}", d.sigma2));
            writeln!(out, "{}", row.join(",")).expect("string write");
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Load a file produced by [`PosteriorDraws::save`].
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut lines = BufReader::new(file).lines().enumerate();

        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Parse { line: 1, message: "empty draws file".into() })?;
        let header = header?;
        let meta = parse_header(&header)?;
        let [p, r, q, total, burn, thin, kept] = meta;

        let mut out = PosteriorDraws::new(p, r, q, total, burn, thin)?;
        if kept > out.expected_len() {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "header claims {kept} kept draws but the schedule allows {}",
                    out.expected_len()
                ),
            });
        }

        let (_, name_row) = lines.next().ok_or_else(|| Error::Parse {
            line: 2,
            message: "missing column-name row".into(),
        })?;
        let name_row = name_row?;
        let expected_cols = p + r + q + 1;
        let n_names = name_row.split(',').count();
        if n_names != expected_cols {
            return Err(Error::Parse {
                line: 2,
                message: format!("expected {expected_cols} column names, found {n_names}"),
            });
        }

        for (idx, line) in lines {
            let line_no = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != expected_cols {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected {expected_cols} cells, found {}", cells.len()),
                });
            }
            let mut vals = Vec::with_capacity(expected_cols);
            for (c, cell) in cells.iter().enumerate() {
                let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("column {} is not a number: {cell:?}", c + 1),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("column {} is not finite: {cell:?}", c + 1),
                    });
                }
                vals.push(v);
            }
            let draw = ParamDraw {
                beta: DVector::from_column_slice(&vals[0..p]),
                gamma: DVector::from_column_slice(&vals[p..p + r]),
                theta: DVector::from_column_slice(&vals[p + r..p + r + q]),
                sigma2: vals[expected_cols - 1],
            };
            out.push(draw)
                .map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        }
        if out.len() != kept {
            return Err(Error::Parse {
                line: 1,
                message: format!("header claims {kept} kept draws, file holds {}", out.len()),
            });
        }
        Ok(out)
    }
}

fn parse_header(header: &str) -> Result<[usize; 7]> {
    let bad = |msg: &str| Error::Parse { line: 1, message: msg.to_string() };
    let rest = header
        .strip_prefix("# changeplane-draws v1 ")
        .ok_or_else(|| bad("missing 'changeplane-draws v1' header"))?;
    let mut vals = [None; 7];
    let keys = ["p", "r", "q", "total", "burn", "thin", "kept"];
    for part in rest.split_whitespace() {
        let (key, val) = part
            .split_once('=')
            .ok_or_else(|| bad(&format!("malformed header field {part:?}")))?;
        let slot = keys
            .iter()
            .position(|k| *k == key)
            .ok_or_else(|| bad(&format!("unknown header field {key:?}")))?;
        let v: usize = val
            .parse()
            .map_err(|_| bad(&format!("header field {key} is not an integer: {val:?}")))?;
        vals[slot] = Some(v);
    }
    let mut out = [0usize; 7];
    for (i, v) in vals.iter().enumerate() {
        out[i] = v.ok_or_else(|| bad(&format!("header is missing field {}", keys[i])))?;
    }
    Ok(out)
}
