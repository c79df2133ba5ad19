//! Count, composition and log-contrast containers.
//!
//! Component indices are zero-based throughout the library. The reference
//! (denominator) component defaults to the last column.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

pub const ROW_SUM_TOL: f64 = 1e-12;
pub const MEAN_TOL: f64 = 1e-10;

/// Strictly positive n×p abundance table (true `X` or contaminated `W`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountMatrix {
    values: DMatrix<f64>,
}

impl CountMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.ncols() < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 components, got {}",
                values.ncols()
            )));
        }
        if values.nrows() == 0 {
            return Err(Error::invalid("count matrix has no rows"));
        }
        check_positive(&values)?;
        Ok(Self { values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(matrix_from_rows(rows)?)
    }

    pub(crate) fn from_unchecked(values: DMatrix<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    /// Entrywise natural log.
    pub fn log(&self) -> DMatrix<f64> {
        self.values.map(f64::ln)
    }
}

/// Row-closed composition: positive entries, every row summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionMatrix {
    values: DMatrix<f64>,
}

impl CompositionMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        check_positive(&values)?;
        for (i, row) in values.row_iter().enumerate() {
            let s = row.sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::invalid(format!("row {i} sums to {s}, expected 1")));
            }
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }
}

/// n×(p−1) log-ratio design `log(z_ij / z_i,ref)`, columns ordered by the
/// non-reference components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogContrastMatrix {
    values: DMatrix<f64>,
    reference: usize,
    centered: bool,
}

impl LogContrastMatrix {
    pub fn new(values: DMatrix<f64>, reference: usize, centered: bool) -> Self {
        Self {
            values,
            reference,
            centered,
        }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn reference(&self) -> usize {
        self.reference
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// Number of log-ratio columns, p − 1.
    pub fn q(&self) -> usize {
        self.values.ncols()
    }

    /// Inverts the log-ratio map back to a closed composition.
    pub fn to_composition(&self) -> CompositionMatrix {
        let n = self.n();
        let p = self.q() + 1;
        let mut out = DMatrix::zeros(n, p);
        for i in 0..n {
            let mut k = 0;
            for j in 0..p {
                out[(i, j)] = if j == self.reference {
                    1.0
                } else {
                    let v = self.values[(i, k)].exp();
                    k += 1;
                    v
                };
            }
            let s: f64 = out.row(i).sum();
            out.row_mut(i).scale_mut(1.0 / s);
        }
        CompositionMatrix { values: out }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseVector {
    values: DVector<f64>,
    centered: bool,
}

impl ResponseVector {
    pub fn new(values: DVector<f64>) -> Self {
        Self {
            values,
            centered: false,
        }
    }

    pub fn from_slice(values: &[f64]) -> Self {
        Self::new(DVector::from_column_slice(values))
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Normalizes each row of `counts` by its sum.
pub fn close(counts: &CountMatrix) -> CompositionMatrix {
    let mut v = counts.values.clone();
    for mut row in v.row_iter_mut() {
        let s = row.sum();
        row.scale_mut(1.0 / s);
    }
    CompositionMatrix { values: v }
}

fn log_ratio_columns(values: &DMatrix<f64>, reference: usize) -> DMatrix<f64> {
    let n = values.nrows();
    let p = values.ncols();
    let mut out = DMatrix::zeros(n, p - 1);
    for i in 0..n {
        let denom = values[(i, reference)].ln();
        for (k, j) in (0..p).filter(|&j| j != reference).enumerate() {
            out[(i, k)] = values[(i, j)].ln() - denom;
        }
    }
    out
}

fn check_reference(p: usize, reference: usize) -> Result<()> {
    if reference >= p {
        return Err(Error::invalid(format!(
            "reference component {reference} out of range for {p} components"
        )));
    }
    Ok(())
}

/// Log-ratios of every component against `reference`.
pub fn log_contrast(comp: &CompositionMatrix, reference: usize) -> Result<LogContrastMatrix> {
    check_reference(comp.p(), reference)?;
    Ok(LogContrastMatrix::new(
        log_ratio_columns(&comp.values, reference),
        reference,
        false,
    ))
}

/// Log-ratios straight from unnormalized counts. Equal to
/// `log_contrast(close(counts))` since the row total cancels.
pub fn log_contrast_counts(counts: &CountMatrix, reference: usize) -> Result<LogContrastMatrix> {
    check_reference(counts.p(), reference)?;
    Ok(LogContrastMatrix::new(
        log_ratio_columns(&counts.values, reference),
        reference,
        false,
    ))
}

/// Mean-centers every design column and the response.
pub fn center(design: &LogContrastMatrix, response: &ResponseVector) -> (LogContrastMatrix, ResponseVector) {
    let mut x = design.values.clone();
    linalg::center_columns(&mut x);
    let mean = response.values.mean();
    let y = response.values.add_scalar(-mean);
    (
        LogContrastMatrix::new(x, design.reference, true),
        ResponseVector {
            values: y,
            centered: true,
        },
    )
}

fn check_positive(values: &DMatrix<f64>) -> Result<()> {
    for i in 0..values.nrows() {
        for j in 0..values.ncols() {
            let v = values[(i, j)];
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!(
                    "entry at row {i}, column {j} is {v}; must be finite and > 0"
                )));
            }
        }
    }
    Ok(())
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != p) {
        return Err(Error::invalid(format!("row {i} has {} entries, expected {p}", r.len())));
    }
    Ok(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
}
