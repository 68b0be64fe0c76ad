//! Truncated Gaussian copula layer: count ingestion, the scaled empirical CDF
//! transform to latent Gaussian scores, and the Gibbs updates for truncated
//! latent values and per-column thresholds.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io;
use crate::normal;

/// Width of the threshold interval used when a column has no truncated entries.
pub const THRESHOLD_FLOOR_WIDTH: f64 = 10.0;

/// n×p nonnegative abundance matrix with sample and taxon identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct CountMatrix {
    values: DMatrix<f64>,
    row_ids: Vec<String>,
    col_ids: Vec<String>,
}

impl CountMatrix {
    pub fn new(values: DMatrix<f64>, row_ids: Vec<String>, col_ids: Vec<String>) -> Result<Self> {
        if values.nrows() != row_ids.len() || values.ncols() != col_ids.len() {
            return Err(Error::invalid(format!(
                "count matrix is {}x{} but has {} row ids and {} column ids",
                values.nrows(),
                values.ncols(),
                row_ids.len(),
                col_ids.len()
            )));
        }
        let mut seen = HashSet::new();
        for c in &col_ids {
            if !seen.insert(c) {
                return Err(Error::DuplicateLabel(c.clone()));
            }
        }
        if let Some((k, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            let (i, j) = (k % values.nrows(), k / values.nrows());
            return Err(Error::invalid(format!(
                "entry ({}, {}) = {v} is not a finite nonnegative number",
                row_ids[i], col_ids[j]
            )));
        }
        Ok(Self { values, row_ids, col_ids })
    }

    /// Generic ids `s1..sn`, `x1..xp`.
    pub fn from_values(values: DMatrix<f64>) -> Result<Self> {
        let rows = (1..=values.nrows()).map(|i| format!("s{i}")).collect();
        let cols = (1..=values.ncols()).map(|j| format!("x{j}")).collect();
        Self::new(values, rows, cols)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn col_ids(&self) -> &[String] {
        &self.col_ids
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    /// Fraction of zero entries in each column.
    pub fn zero_fractions(&self) -> Vec<f64> {
        let n = self.nrows() as f64;
        self.values
            .column_iter()
            .map(|c| c.iter().filter(|&&v| v == 0.0).count() as f64 / n)
            .collect()
    }

    /// Columns reordered (and possibly restricted) to `labels`.
    pub fn select_columns(&self, labels: &[String]) -> Result<CountMatrix> {
        let idx: Vec<usize> = labels
            .iter()
            .map(|l| {
                self.col_ids
                    .iter()
                    .position(|c| c == l)
                    .ok_or_else(|| Error::invalid(format!("taxon `{l}` missing from count matrix")))
            })
            .collect::<Result<_>>()?;
        let values = DMatrix::from_fn(self.nrows(), idx.len(), |i, j| self.values[(i, idx[j])]);
        CountMatrix::new(values, self.row_ids.clone(), labels.to_vec())
    }

    /// Strict CSV reader: header row of taxon names (first cell is a corner
    /// label), first column sample ids, nonnegative numbers everywhere else.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file).map_err(|e| match e {
            Error::InvalidInput(m) => Error::invalid(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let col_ids: Vec<String> = r.headers()?.iter().skip(1).map(|s| s.trim().to_string()).collect();
        if col_ids.is_empty() {
            return Err(Error::invalid("no taxon columns in header"));
        }
        let mut row_ids = Vec::new();
        let mut data = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.len() != col_ids.len() + 1 {
                return Err(Error::invalid(format!(
                    "row {} has {} fields, expected {}",
                    line + 2,
                    rec.len(),
                    col_ids.len() + 1
                )));
            }
            row_ids.push(rec[0].trim().to_string());
            for (j, field) in rec.iter().skip(1).enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::invalid(format!(
                        "row {}, column `{}`: `{field}` is not a number",
                        line + 2,
                        col_ids[j]
                    ))
                })?;
                data.push(v);
            }
        }
        if row_ids.is_empty() {
            return Err(Error::invalid("no sample rows"));
        }
        let values = DMatrix::from_row_slice(row_ids.len(), col_ids.len(), &data);
        CountMatrix::new(values, row_ids, col_ids)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(io::create(path)?);
        let mut header = vec!["sample".to_string()];
        header.extend(self.col_ids.iter().cloned());
        w.write_record(&header)?;
        for (i, id) in self.row_ids.iter().enumerate() {
            let mut row = vec![id.clone()];
            row.extend((0..self.ncols()).map(|j| io::fmt_sig(self.values[(i, j)], 12)));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Scaled empirical CDF per column, `F(c) = #{x_ij <= c} / (n + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EcdfTransform {
    n: usize,
    sorted: Vec<Vec<f64>>,
}

pub fn fit_ecdf(x: &CountMatrix) -> Result<EcdfTransform> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 samples, found {n}")));
    }
    let sorted = x
        .values()
        .column_iter()
        .map(|c| {
            let mut v: Vec<f64> = c.iter().copied().collect();
            v.sort_by(f64::total_cmp);
            v
        })
        .collect();
    Ok(EcdfTransform { n, sorted })
}

impl EcdfTransform {
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        if n < 2 || columns.iter().any(|c| c.len() != n) {
            return Err(Error::invalid("ecdf columns must share a length of at least 2"));
        }
        let sorted = columns
            .into_iter()
            .map(|mut v| {
                v.sort_by(f64::total_cmp);
                v
            })
            .collect();
        Ok(Self { n, sorted })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.sorted.len()
    }

    /// Largest attainable value, `n / (n + 1)`.
    pub fn max_value(&self) -> f64 {
        self.n as f64 / (self.n + 1) as f64
    }

    pub fn evaluate(&self, col: usize, c: f64) -> f64 {
        let count = self.sorted[col].partition_point(|&v| v <= c);
        count as f64 / (self.n + 1) as f64
    }

    /// Generalized inverse `min{c : F(c) >= u}` over the column's support;
    /// values of `u` above the maximum map to the column maximum.
    pub fn inverse(&self, col: usize, u: f64) -> f64 {
        let col = &self.sorted[col];
        let k = col.partition_point(|&v| self.evaluate_sorted(col, v) < u);
        col[k.min(self.n - 1)]
    }

    fn evaluate_sorted(&self, col: &[f64], c: f64) -> f64 {
        col.partition_point(|&v| v <= c) as f64 / (self.n + 1) as f64
    }

    /// True when every entry of the column is identical.
    pub fn is_constant(&self, col: usize) -> bool {
        let c = &self.sorted[col];
        c.first() == c.last()
    }
}

/// Latent scores on observed entries plus the truncation mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedLatent {
    /// Row-major n×p; entries under the mask are `NaN`.
    pub zhat: Vec<f64>,
    /// Row-major n×p; `true` where the count is zero.
    pub mask: Vec<bool>,
    pub n: usize,
    pub p: usize,
}

pub fn latent_observed(x: &CountMatrix, ecdf: &EcdfTransform) -> Result<ObservedLatent> {
    let (n, p) = (x.nrows(), x.ncols());
    if ecdf.ncols() != p || ecdf.n() != n {
        return Err(Error::invalid("ecdf was fitted on a matrix of different shape"));
    }
    let mut zhat = vec![f64::NAN; n * p];
    let mut mask = vec![false; n * p];
    for j in 0..p {
        let mut any_observed = false;
        for i in 0..n {
            let v = x.values()[(i, j)];
            if v == 0.0 {
                mask[i * p + j] = true;
            } else {
                any_observed = true;
                zhat[i * p + j] = normal::quantile(ecdf.evaluate(j, v));
            }
        }
        if !any_observed {
            return Err(Error::invalid(format!(
                "column `{}` is entirely zero; drop it before fitting",
                x.col_ids()[j]
            )));
        }
    }
    Ok(ObservedLatent { zhat, mask, n, p })
}

/// Latent Gaussian matrix with truncation bookkeeping and thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    n: usize,
    p: usize,
    /// Row-major n×p.
    z: Vec<f64>,
    mask: Vec<bool>,
    delta: Vec<f64>,
}

impl LatentState {
    /// Assemble a state directly. Observed entries of `z` are taken as fixed.
    pub fn new(n: usize, p: usize, z: Vec<f64>, mask: Vec<bool>, delta: Vec<f64>) -> Result<Self> {
        if z.len() != n * p || mask.len() != n * p || delta.len() != p {
            return Err(Error::invalid("latent state dimensions do not agree"));
        }
        Ok(Self { n, p, z, mask, delta })
    }

    /// Starting state: thresholds at `Phi^-1(F(0))` for columns with zeros
    /// (0.5 below the smallest observed score otherwise) and truncated entries
    /// 0.5 below their threshold.
    pub fn initialize(obs: &ObservedLatent, ecdf: &EcdfTransform) -> Result<Self> {
        let (n, p) = (obs.n, obs.p);
        let mut delta = vec![0.0; p];
        for (j, d) in delta.iter_mut().enumerate() {
            let zmin = (0..n)
                .filter(|&i| !obs.mask[i * p + j])
                .map(|i| obs.zhat[i * p + j])
                .fold(f64::INFINITY, f64::min);
            let has_zero = (0..n).any(|i| obs.mask[i * p + j]);
            *d = if has_zero {
                normal::quantile(ecdf.evaluate(j, 0.0))
            } else {
                zmin - 0.5
            };
            if !(*d < zmin) {
                return Err(Error::InvariantViolation(format!(
                    "initial threshold of column {j} is not below its observed scores"
                )));
            }
        }
        let z = (0..n * p)
            .map(|k| {
                if obs.mask[k] {
                    delta[k % p] - 0.5
                } else {
                    obs.zhat[k]
                }
            })
            .collect();
        Self::new(n, p, z, obs.mask.clone(), delta)
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.p
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn z_at(&self, i: usize, j: usize) -> f64 {
        self.z[i * self.p + j]
    }

    pub fn is_truncated(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.p + j]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.delta
    }

    pub fn set_thresholds(&mut self, delta: Vec<f64>) {
        assert_eq!(delta.len(), self.p);
        self.delta = delta;
    }

    /// Scatter matrix `Z^T Z`.
    pub fn scatter(&self) -> DMatrix<f64> {
        let z = DMatrix::from_row_slice(self.n, self.p, &self.z);
        z.transpose() * &z
    }

    /// `(max truncated, min observed)` per column; `None` where a set is empty.
    pub fn column_bounds(&self) -> Vec<(Option<f64>, Option<f64>)> {
        (0..self.p)
            .map(|j| {
                let mut lo: Option<f64> = None;
                let mut hi: Option<f64> = None;
                for i in 0..self.n {
                    let v = self.z_at(i, j);
                    if self.is_truncated(i, j) {
                        lo = Some(lo.map_or(v, |x| x.max(v)));
                    } else {
                        hi = Some(hi.map_or(v, |x| x.min(v)));
                    }
                }
                (lo, hi)
            })
            .collect()
    }

    /// Truncated entries lie below, observed entries above, each threshold.
    pub fn check_invariants(&self) -> Result<()> {
        for (j, (lo, hi)) in self.column_bounds().into_iter().enumerate() {
            let d = self.delta[j];
            if lo.is_some_and(|l| !(l < d)) || hi.is_some_and(|h| !(d < h)) {
                return Err(Error::InvariantViolation(format!(
                    "column {j}: truncated max {lo:?}, threshold {d}, observed min {hi:?}"
                )));
            }
        }
        Ok(())
    }

    /// Redraw every truncated coordinate from its Gaussian full conditional
    /// given the rest of its row, truncated above at the column threshold.
    ///
    /// Rows are updated in parallel; each row draws from its own ChaCha
    /// stream keyed by a per-sweep seed taken from `rng`, so results do not
    /// depend on scheduling.
    pub fn sample_truncated_z<R: Rng + ?Sized>(&mut self, omega: &DMatrix<f64>, rng: &mut R) -> Result<()> {
        let p = self.p;
        if omega.nrows() != p || omega.ncols() != p {
            return Err(Error::invalid("concentration matrix dimension mismatch"));
        }
        if let Some(j) = (0..p).find(|&j| !(omega[(j, j)] > 0.0)) {
            return Err(Error::not_pd(format!("omega[{j},{j}] = {}", omega[(j, j)])));
        }
        let sweep_seed: u64 = rng.random();
        let delta = &self.delta;
        self.z
            .par_chunks_mut(p)
            .zip(self.mask.par_chunks(p))
            .enumerate()
            .for_each(|(i, (row, mask))| {
                if !mask.iter().any(|&m| m) {
                    return;
                }
                let mut row_rng = ChaCha8Rng::seed_from_u64(sweep_seed);
                row_rng.set_stream(i as u64);
                gibbs_row(row, mask, omega, delta, &mut row_rng);
            });
        Ok(())
    }

    /// `delta_j ~ Uniform(max truncated z_j, min observed z_j)` per column.
    pub fn sample_thresholds<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        for (j, (lo, hi)) in self.column_bounds().into_iter().enumerate() {
            let (a, b) = match (lo, hi) {
                (Some(l), Some(h)) => (l, h),
                (None, Some(h)) => (h - THRESHOLD_FLOOR_WIDTH, h),
                (Some(l), None) => (l, l + THRESHOLD_FLOOR_WIDTH),
                (None, None) => unreachable!("column with no entries"),
            };
            if !(a < b) {
                return Err(Error::InvariantViolation(format!(
                    "column {j}: empty threshold interval ({a}, {b})"
                )));
            }
            let d = loop {
                let d = a + rng.random::<f64>() * (b - a);
                if d > a && d < b {
                    break d;
                }
            };
            self.delta[j] = d;
        }
        Ok(())
    }
}

/// One coordinate-wise Gibbs pass over the truncated entries of a row using
/// `z_j | z_-j ~ N(-sum_{k!=j} w_jk z_k / w_jj, 1 / w_jj)`.
fn gibbs_row<R: Rng + ?Sized>(row: &mut [f64], mask: &[bool], omega: &DMatrix<f64>, delta: &[f64], rng: &mut R) {
    let p = row.len();
    for j in 0..p {
        if !mask[j] {
            continue;
        }
        let wjj = omega[(j, j)];
        let mut acc = 0.0;
        for k in 0..p {
            if k != j {
                acc += omega[(j, k)] * row[k];
            }
        }
        let mean = -acc / wjj;
        let sd = (1.0 / wjj).sqrt();
        let x = mean + sd * normal::std_below((delta[j] - mean) / sd, rng);
        row[j] = x;
    }
}

/// Modified centered log-ratio: logs of positive entries centered per row
/// over the positive entries, then shifted globally by `|min| + 1` so every
/// transformed positive value exceeds 0. Zeros stay zero.
pub fn mclr_transform(x: &CountMatrix) -> Result<CountMatrix> {
    let (n, p) = (x.nrows(), x.ncols());
    let mut out = DMatrix::zeros(n, p);
    let mut min_centered = f64::INFINITY;
    for i in 0..n {
        let logs: Vec<(usize, f64)> = (0..p)
            .filter(|&j| x.values()[(i, j)] > 0.0)
            .map(|j| (j, x.values()[(i, j)].ln()))
            .collect();
        if logs.is_empty() {
            return Err(Error::invalid(format!("row `{}` is entirely zero", x.row_ids()[i])));
        }
        let mean = logs.iter().map(|&(_, l)| l).sum::<f64>() / logs.len() as f64;
        for (j, l) in logs {
            let c = l - mean;
            out[(i, j)] = c;
            min_centered = min_centered.min(c);
        }
    }
    let shift = min_centered.abs() + 1.0;
    for i in 0..n {
        for j in 0..p {
            if x.values()[(i, j)] > 0.0 {
                out[(i, j)] += shift;
            }
        }
    }
    CountMatrix::new(out, x.row_ids().to_vec(), x.col_ids().to_vec())
}
