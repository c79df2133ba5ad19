//! Multiplicative lognormal measurement error `w = x·u`, with
//! `log u ~ N(-σ²ᵤ/2, σ²ᵤ)` so that `E(u) = 1`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::composition::CountMatrix;
use crate::error::{Error, Result};

/// Error variance plus the latent Gaussian law of `log X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorModelParams {
    pub sigma_u_sq: f64,
    pub mu_x: DVector<f64>,
    pub sigma_x: DMatrix<f64>,
}

impl ErrorModelParams {
    pub fn new(sigma_u_sq: f64, mu_x: DVector<f64>, sigma_x: DMatrix<f64>) -> Result<Self> {
        if !(sigma_u_sq >= 0.0) {
            return Err(Error::invalid(format!("sigma_u_sq = {sigma_u_sq} must be >= 0")));
        }
        let p = mu_x.len();
        if sigma_x.nrows() != p || sigma_x.ncols() != p {
            return Err(Error::invalid(format!(
                "sigma_x is {}x{}, expected {p}x{p}",
                sigma_x.nrows(),
                sigma_x.ncols()
            )));
        }
        if !crate::linalg::is_symmetric(&sigma_x, 1e-10) {
            return Err(Error::invalid("sigma_x is not symmetric"));
        }
        Ok(Self {
            sigma_u_sq,
            mu_x,
            sigma_x,
        })
    }

    /// Mean of `log W`: `μₓ − σ²ᵤ/2`.
    pub fn mu_w(&self) -> DVector<f64> {
        self.mu_x.add_scalar(-0.5 * self.sigma_u_sq)
    }

    /// Covariance of `log W`: `Σₓ + σ²ᵤI`.
    pub fn sigma_w(&self) -> DMatrix<f64> {
        let p = self.mu_x.len();
        &self.sigma_x + DMatrix::identity(p, p) * self.sigma_u_sq
    }
}

/// R ≥ 2 aligned observations of the same subjects and components.
#[derive(Debug, Clone)]
pub struct ReplicateSet {
    replicates: Vec<CountMatrix>,
}

impl ReplicateSet {
    pub fn new(replicates: Vec<CountMatrix>) -> Result<Self> {
        if replicates.len() < 2 {
            return Err(Error::InsufficientReplicates(replicates.len()));
        }
        let (n, p) = (replicates[0].n(), replicates[0].p());
        for (r, m) in replicates.iter().enumerate() {
            if m.n() != n || m.p() != p {
                return Err(Error::invalid(format!(
                    "replicate {r} is {}x{}, expected {n}x{p}",
                    m.n(),
                    m.p()
                )));
            }
        }
        Ok(Self { replicates })
    }

    pub fn replicates(&self) -> &[CountMatrix] {
        &self.replicates
    }

    pub fn len(&self) -> usize {
        self.replicates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replicates.is_empty()
    }

    pub fn n(&self) -> usize {
        self.replicates[0].n()
    }

    pub fn p(&self) -> usize {
        self.replicates[0].p()
    }
}

/// Random generator for row `row` of a stochastic operation keyed by `seed`.
pub(crate) fn row_stream(seed: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row as u64);
    rng
}

/// Multiplies every entry by an independent unit-mean lognormal factor.
///
/// Row `i` draws from its own substream of `seed`, so the result does not
/// depend on evaluation order.
pub fn simulate_contamination(truth: &CountMatrix, sigma_u_sq: f64, seed: u64) -> Result<CountMatrix> {
    if !(sigma_u_sq >= 0.0) {
        return Err(Error::invalid(format!("sigma_u_sq = {sigma_u_sq} must be >= 0")));
    }
    if sigma_u_sq == 0.0 {
        return Ok(truth.clone());
    }
    let normal = Normal::new(-0.5 * sigma_u_sq, sigma_u_sq.sqrt()).map_err(|e| Error::invalid(e.to_string()))?;
    let mut w = truth.values().clone();
    for i in 0..w.nrows() {
        let mut rng = row_stream(seed, i);
        for j in 0..w.ncols() {
            w[(i, j)] *= normal.sample(&mut rng).exp();
        }
    }
    Ok(CountMatrix::from_unchecked(w))
}

/// Solves the replicate estimating equation for σ²ᵤ: the grand mean over
/// cells of the per-cell sample variance (divisor R − 1) of `log w⁽ʳ⁾`.
pub fn estimate_sigma_u(reps: &ReplicateSet) -> Result<f64> {
    let cols: Vec<usize> = (0..reps.p()).collect();
    estimate_sigma_u_masked(reps, &cols)
}

/// As [`estimate_sigma_u`], restricted to the listed component columns.
pub fn estimate_sigma_u_masked(reps: &ReplicateSet, columns: &[usize]) -> Result<f64> {
    let r = reps.len();
    if r < 2 {
        return Err(Error::InsufficientReplicates(r));
    }
    if columns.is_empty() {
        return Err(Error::invalid("empty column mask"));
    }
    if let Some(&bad) = columns.iter().find(|&&j| j >= reps.p()) {
        return Err(Error::invalid(format!("mask column {bad} out of range")));
    }
    let logs: Vec<DMatrix<f64>> = reps.replicates.iter().map(CountMatrix::log).collect();
    let rf = r as f64;
    let mut total = 0.0;
    for i in 0..reps.n() {
        for &j in columns {
            // deviations from the first replicate keep identical cells exactly 0
            let base = logs[0][(i, j)];
            let (mut s, mut ss) = (0.0, 0.0);
            for m in &logs[1..] {
                let d = m[(i, j)] - base;
                s += d;
                ss += d * d;
            }
            total += ((ss - s * s / rf) / (rf - 1.0)).max(0.0);
        }
    }
    Ok(total / (reps.n() * columns.len()) as f64)
}

/// `μ̂ₓ = mean(log W) + σ²ᵤ/2` column-wise.
pub fn estimate_mu_x(observed: &CountMatrix, sigma_u_sq: f64) -> DVector<f64> {
    let logs = observed.log();
    crate::linalg::column_means(&logs).add_scalar(0.5 * sigma_u_sq)
}
