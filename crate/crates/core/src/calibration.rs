//! Regression calibration: replace each observed log-contrast row by the
//! conditional mean of the true log-contrasts given it.
//!
//! Under the Gaussian log-contrast model with error covariance `Σ_ũ`,
//!
//! ```text
//! μ(v) = μ_z̃ + Σ_z̃ (Σ_z̃ + Σ_ũ)⁻¹ (v − μ_z̃)
//! Σ    = Σ_z̃ (Σ_z̃ + Σ_ũ)⁻¹ Σ_z̃            (covariance of μ(V))
//! ```
//!
//! `Σ_ũ` is `σ²ᵤ(I + 11ᵀ)` by default and `2σ²ᵤI` under
//! [`ErrorStructure::Isotropic`](crate::covariance::ErrorStructure).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::covariance::{psd_repair, LogContrastNuisance};
use crate::error::{Error, Result};
use crate::linalg;
use crate::sparse::DEFAULT_PSD_FLOOR;

/// Whether the nuisances behind a design were known or estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NuisanceMode {
    Oracle,
    Estimated,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibratedDesign {
    /// n×(p−1) calibrated covariates, column-centered.
    pub m_matrix: DMatrix<f64>,
    /// Population covariance of the calibrated rows.
    pub sigma: DMatrix<f64>,
    /// Nuisances the design was calibrated with; `None` for an uncalibrated
    /// design.
    pub nuisance: Option<LogContrastNuisance>,
    pub centered: bool,
    pub mode: NuisanceMode,
}

impl CalibratedDesign {
    /// Builds a design from an arbitrary covariate matrix and its
    /// population covariance. Used by the uncalibrated comparator and tests.
    pub fn from_parts(
        m_matrix: DMatrix<f64>,
        sigma: DMatrix<f64>,
        nuisance: Option<LogContrastNuisance>,
        mode: NuisanceMode,
    ) -> Result<Self> {
        if m_matrix.ncols() != sigma.nrows() || !sigma.is_square() {
            return Err(Error::invalid("design and covariance dimensions disagree"));
        }
        let means = linalg::column_means(&m_matrix);
        Ok(Self {
            centered: means.amax() < crate::composition::MEAN_TOL,
            m_matrix,
            sigma,
            nuisance,
            mode,
        })
    }

    pub fn n(&self) -> usize {
        self.m_matrix.nrows()
    }

    pub fn q(&self) -> usize {
        self.m_matrix.ncols()
    }

    /// `Ω̂ = MᵀM / n`.
    pub fn omega_hat(&self) -> DMatrix<f64> {
        linalg::gram(&self.m_matrix)
    }
}

/// `K = (Σ_z̃ + Σ_ũ)⁻¹ Σ_z̃`, so that `μ(v) − μ_z̃ = Kᵀ(v − μ_z̃)`.
/// `None` when σ²ᵤ = 0 (K is the identity).
fn shrink_matrix(nuisance: &LogContrastNuisance) -> Result<Option<DMatrix<f64>>> {
    if nuisance.sigma_u_sq == 0.0 {
        return Ok(None);
    }
    let a = &nuisance.sigma_ztilde + nuisance.error_covariance();
    let chol = linalg::cholesky_with_jitter(&a)?;
    Ok(Some(chol.solve(&nuisance.sigma_ztilde)))
}

/// Conditional mean `E(Z̃ | Ṽ = v)`.
pub fn conditional_mean(v_logcontrast: &DVector<f64>, nuisance: &LogContrastNuisance) -> Result<DVector<f64>> {
    if v_logcontrast.len() != nuisance.q() {
        return Err(Error::invalid(format!(
            "vector has {} entries, nuisance has {}",
            v_logcontrast.len(),
            nuisance.q()
        )));
    }
    match shrink_matrix(nuisance)? {
        None => Ok(v_logcontrast.clone()),
        Some(k) => {
            let dev = v_logcontrast - &nuisance.mu_ztilde;
            Ok(&nuisance.mu_ztilde + k.tr_mul(&dev))
        }
    }
}

/// Covariance `Σ_z̃ (Σ_z̃ + Σ_ũ)⁻¹ Σ_z̃` of the conditional mean.
pub fn calibrated_covariance(nuisance: &LogContrastNuisance) -> Result<DMatrix<f64>> {
    match shrink_matrix(nuisance)? {
        None => Ok(nuisance.sigma_ztilde.clone()),
        Some(k) => {
            let mut s = &nuisance.sigma_ztilde * k;
            linalg::symmetrize(&mut s);
            Ok(s)
        }
    }
}

/// Calibrates every row of `v_logcontrasts`, centers the columns, and
/// attaches the population covariance, with eigenvalues floored at
/// [`DEFAULT_PSD_FLOOR`].
pub fn build_design(
    v_logcontrasts: &DMatrix<f64>,
    nuisance: &LogContrastNuisance,
    mode: NuisanceMode,
) -> Result<CalibratedDesign> {
    if v_logcontrasts.ncols() != nuisance.q() {
        return Err(Error::invalid(format!(
            "design has {} columns, nuisance has {}",
            v_logcontrasts.ncols(),
            nuisance.q()
        )));
    }
    let k = shrink_matrix(nuisance)?;
    let mut m = match &k {
        None => v_logcontrasts.clone(),
        Some(k) => {
            let mut dev = v_logcontrasts.clone();
            for (j, mut col) in dev.column_iter_mut().enumerate() {
                col.add_scalar_mut(-nuisance.mu_ztilde[j]);
            }
            let mut m = dev * k;
            for (j, mut col) in m.column_iter_mut().enumerate() {
                col.add_scalar_mut(nuisance.mu_ztilde[j]);
            }
            m
        }
    };
    linalg::center_columns(&mut m);
    // plug-in nuisances can be rank-deficient; keep Σ factorizable
    let sigma = psd_repair(
        &match &k {
            None => nuisance.sigma_ztilde.clone(),
            Some(k) => &nuisance.sigma_ztilde * k,
        },
        DEFAULT_PSD_FLOOR,
    );
    Ok(CalibratedDesign {
        m_matrix: m,
        sigma,
        nuisance: Some(nuisance.clone()),
        centered: true,
        mode,
    })
}
