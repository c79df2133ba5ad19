//! Debiased estimation, standard errors, confidence intervals and tests.
//!
//! Given a column-centered design `M` with population covariance `Σ`, a
//! Lasso fit `α̃` and centered response `y`, the one-step correction is
//!
//! ```text
//! α̂ = α̃ + (1/n) Σ⁻¹ Mᵀ (y − M α̃)
//! ```
//!
//! and `se_j = σ̂ · √[Σ^{-1/2} Ω̂ Σ^{-1/2}]_jj / √n` with `Ω̂ = MᵀM/n`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::calibration::{build_design, CalibratedDesign, NuisanceMode};
use crate::covariance::{nodewise_covariance, psd_repair, LogContrastNuisance};
use crate::error::{Error, Result};
use crate::linalg;
use crate::normal;
use crate::sparse::{
    cross_validate_lambda, default_scaled_lambda, lasso_fit, scaled_lasso, universal_scaled_lambda, CvConfig,
    LassoProblem, DEFAULT_MAX_ITER, DEFAULT_PSD_FLOOR, DEFAULT_TOL,
};

/// Eigenvalue floor for `Σ^{-1/2}`.
pub const SIGMA_EIGEN_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Lasso,
    CocoLasso,
    DebiasedLasso,
    Proposed,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Lasso,
        Method::CocoLasso,
        Method::DebiasedLasso,
        Method::Proposed,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::Lasso => "lasso",
            Method::CocoLasso => "cocolasso",
            Method::DebiasedLasso => "debiased_lasso",
            Method::Proposed => "proposed",
        }
    }

    /// Whether the method comes with standard errors.
    pub fn has_inference(self) -> bool {
        matches!(self, Method::DebiasedLasso | Method::Proposed)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| Error::Parse(format!("unknown method '{s}'")))
    }
}

/// How the Lasso-stage penalty is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRule {
    #[default]
    CrossValidation,
    /// `8σ̂√(log(p−1)/n)` with σ̂ from the scaled Lasso.
    Theoretical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub cv: CvConfig,
    pub lambda_rule: LambdaRule,
    /// Scaled-Lasso penalty; `None` uses `10√(2 log(p−1)/n)`.
    pub scaled_lambda: Option<f64>,
}

impl FitOptions {
    pub fn new(cv: CvConfig) -> Self {
        Self {
            cv,
            lambda_rule: LambdaRule::CrossValidation,
            scaled_lambda: None,
        }
    }
}

impl Default for FitOptions {
    fn default() -> Self {
        Self::new(CvConfig::default())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DebiasedEstimate {
    pub alpha_hat: DVector<f64>,
    pub alpha_tilde: DVector<f64>,
    pub se: DVector<f64>,
    pub sigma_hat: f64,
    pub lambda: f64,
    pub omega_hat: DMatrix<f64>,
    pub method: Method,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientInference {
    pub index: usize,
    pub estimate: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
    pub level: f64,
}

fn check_response(design: &CalibratedDesign, response: &DVector<f64>) -> Result<()> {
    if design.n() != response.len() {
        return Err(Error::invalid(format!(
            "design has {} rows, response has {}",
            design.n(),
            response.len()
        )));
    }
    Ok(())
}

/// One-step correction `α̃ + Σ⁻¹Mᵀ(y − Mα̃)/n`, by a Cholesky solve
/// against `Σ`.
pub fn debias(design: &CalibratedDesign, response: &DVector<f64>, alpha_tilde: &DVector<f64>) -> Result<DVector<f64>> {
    check_response(design, response)?;
    if alpha_tilde.len() != design.q() {
        return Err(Error::invalid("coefficient length does not match design"));
    }
    let n = design.n() as f64;
    let resid = response - &design.m_matrix * alpha_tilde;
    let score = design.m_matrix.tr_mul(&resid) / n;
    let chol = linalg::cholesky_with_jitter(&design.sigma)?;
    Ok(alpha_tilde + chol.solve(&score))
}

/// `σ̂ · √diag(Σ^{-1/2} Ω̂ Σ^{-1/2}) / √n`.
pub fn standard_errors(design: &CalibratedDesign, sigma_hat: f64) -> Result<DVector<f64>> {
    if !(sigma_hat >= 0.0) {
        return Err(Error::invalid(format!("sigma_hat = {sigma_hat} must be >= 0")));
    }
    let root = linalg::inv_sqrt_psd(&design.sigma, SIGMA_EIGEN_FLOOR)?;
    let n = design.n() as f64;
    // diag(R Ω̂ R) = column norms² of M R, over n
    let mr = &design.m_matrix * root;
    Ok(DVector::from_iterator(
        design.q(),
        mr.column_iter()
            .map(|c| sigma_hat * (c.norm_squared() / n).sqrt() / n.sqrt()),
    ))
}

/// `σ̂ · √diag(Σ⁻¹ Ω̂ Σ⁻¹) / √n`, the usual debiased-Lasso standard error
/// with `Σ⁻¹` as the decorrelating matrix.
pub fn sandwich_standard_errors(design: &CalibratedDesign, sigma_hat: f64) -> Result<DVector<f64>> {
    if !(sigma_hat >= 0.0) {
        return Err(Error::invalid(format!("sigma_hat = {sigma_hat} must be >= 0")));
    }
    let q = design.q();
    let theta = linalg::cholesky_with_jitter(&design.sigma)?.solve(&DMatrix::identity(q, q));
    let n = design.n() as f64;
    let mt = &design.m_matrix * theta;
    Ok(DVector::from_iterator(
        q,
        mt.column_iter()
            .map(|c| sigma_hat * (c.norm_squared() / n).sqrt() / n.sqrt()),
    ))
}

/// Wald intervals `α̂_j ± Φ⁻¹(1 − a/2)·se_j` and two-sided p-values
/// `2 − 2Φ(|α̂_j|/se_j)`, with `a = 1 − level`.
pub fn coefficient_inference(est: &DebiasedEstimate, level: f64) -> Result<Vec<CoefficientInference>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("level = {level} must lie in (0, 1)")));
    }
    let crit = normal::quantile(1.0 - (1.0 - level) / 2.0);
    Ok(est
        .alpha_hat
        .iter()
        .zip(est.se.iter())
        .enumerate()
        .map(|(index, (&estimate, &se))| {
            let z = if estimate == 0.0 { 0.0 } else { estimate / se };
            CoefficientInference {
                index,
                estimate,
                se,
                ci_low: estimate - crit * se,
                ci_high: estimate + crit * se,
                p_value: normal::two_sided_p(z),
                level,
            }
        })
        .collect())
}

/// Lasso + scaled Lasso + one-step correction on a prepared design.
fn debiased_fit(
    design: &CalibratedDesign,
    y: &DVector<f64>,
    opts: &FitOptions,
    method: Method,
) -> Result<DebiasedEstimate> {
    let n = design.n();
    let q = design.q();
    let omega_hat = design.omega_hat();

    if y.iter().all(|&v| v == 0.0) {
        // nothing to explain: every stage is identically zero
        let zeros = DVector::zeros(q);
        return Ok(DebiasedEstimate {
            alpha_hat: zeros.clone(),
            alpha_tilde: zeros.clone(),
            se: zeros,
            sigma_hat: 0.0,
            lambda: 0.0,
            omega_hat,
            method,
            n,
        });
    }

    let lambda_tilde = opts.scaled_lambda.unwrap_or_else(|| match method {
        Method::DebiasedLasso => universal_scaled_lambda(n, q),
        _ => default_scaled_lambda(n, q),
    });
    let scaled = scaled_lasso(&design.m_matrix, y, lambda_tilde)?;
    let lambda = match opts.lambda_rule {
        LambdaRule::CrossValidation => cross_validate_lambda(&design.m_matrix, y, &opts.cv)?.lambda_star,
        LambdaRule::Theoretical => 8.0 * scaled.sigma_hat * ((q.max(2) as f64).ln() / n as f64).sqrt(),
    };
    let lasso = lasso_fit(
        &LassoProblem::new(design.m_matrix.clone(), y.clone(), lambda)?,
        DEFAULT_TOL,
        DEFAULT_MAX_ITER,
    )?;
    if !lasso.converged {
        return Err(Error::NotConverged {
            what: "lasso",
            iterations: lasso.iterations,
        });
    }
    let alpha_hat = debias(design, y, &lasso.coefficients)?;
    let se = match method {
        Method::DebiasedLasso => sandwich_standard_errors(design, scaled.sigma_hat)?,
        _ => standard_errors(design, scaled.sigma_hat)?,
    };
    Ok(DebiasedEstimate {
        alpha_hat,
        alpha_tilde: lasso.coefficients,
        se,
        sigma_hat: scaled.sigma_hat,
        lambda,
        omega_hat,
        method,
        n,
    })
}

fn centered_response(response: &DVector<f64>) -> DVector<f64> {
    response.add_scalar(-response.mean())
}

/// The calibrated debiased estimator: calibrate the observed
/// log-contrasts, pick λ, fit the Lasso, estimate σ by the scaled Lasso,
/// then apply the one-step correction against the calibrated covariance.
pub fn fit_proposed(
    v_logcontrasts: &DMatrix<f64>,
    response: &DVector<f64>,
    nuisance: &LogContrastNuisance,
    mode: NuisanceMode,
    opts: &FitOptions,
) -> Result<DebiasedEstimate> {
    if v_logcontrasts.nrows() != response.len() {
        return Err(Error::invalid("design and response row counts differ"));
    }
    let design = build_design(v_logcontrasts, nuisance, mode)?;
    debiased_fit(&design, &centered_response(response), opts, Method::Proposed)
}

/// Uncalibrated comparator: the same pipeline on the centered observed
/// log-contrasts, decorrelating with a node-wise covariance estimate, with
/// σ̂ from the scaled Lasso at the universal penalty and sandwich standard
/// errors.
pub fn fit_debiased_lasso(
    v_logcontrasts: &DMatrix<f64>,
    response: &DVector<f64>,
    opts: &FitOptions,
) -> Result<DebiasedEstimate> {
    if v_logcontrasts.nrows() != response.len() {
        return Err(Error::invalid("design and response row counts differ"));
    }
    let design = uncalibrated_design(v_logcontrasts)?;
    debiased_fit(&design, &centered_response(response), opts, Method::DebiasedLasso)
}

/// Centered observed design paired with its PSD-repaired node-wise
/// covariance (the sample covariance is singular once q ≥ n).
pub fn uncalibrated_design(v_logcontrasts: &DMatrix<f64>) -> Result<CalibratedDesign> {
    let mut v = v_logcontrasts.clone();
    linalg::center_columns(&mut v);
    let sigma = psd_repair(&nodewise_covariance(&v, 0.0, None)?.matrix, DEFAULT_PSD_FLOOR);
    CalibratedDesign::from_parts(v, sigma, None, NuisanceMode::Estimated)
}
