//! Estimators of the latent covariance `Σₓ` of `log X` from contaminated
//! `log W`, the map to log-contrast nuisances, and PSD repair.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::sparse::{logcontrast_error_covariance, solve_quadratic, DEFAULT_MAX_ITER, DEFAULT_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceMethod {
    Nodewise,
    Shrinkage,
    Oracle,
}

impl std::fmt::Display for CovarianceMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CovarianceMethod::Nodewise => "nodewise",
            CovarianceMethod::Shrinkage => "shrinkage",
            CovarianceMethod::Oracle => "oracle",
        })
    }
}

/// Data-driven estimator of `Σₓ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovEstimator {
    Nodewise,
    #[default]
    Shrinkage,
}

impl CovEstimator {
    pub fn estimate(self, log_w: &DMatrix<f64>, sigma_u_sq: f64) -> Result<CovarianceEstimate> {
        match self {
            CovEstimator::Nodewise => nodewise_covariance(log_w, sigma_u_sq, None),
            CovEstimator::Shrinkage => shrinkage_covariance(log_w, sigma_u_sq),
        }
    }
}

impl std::str::FromStr for CovEstimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nodewise" => Ok(CovEstimator::Nodewise),
            "shrinkage" => Ok(CovEstimator::Shrinkage),
            other => Err(Error::Parse(format!("unknown covariance estimator '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub matrix: DMatrix<f64>,
    pub method: CovarianceMethod,
    pub psd_repaired: bool,
    /// Correlation shrinkage intensity, for the shrinkage estimator.
    pub shrinkage_intensity: Option<f64>,
}

impl CovarianceEstimate {
    pub fn oracle(matrix: DMatrix<f64>) -> Self {
        Self {
            matrix,
            method: CovarianceMethod::Oracle,
            psd_repaired: false,
            shrinkage_intensity: None,
        }
    }

    /// Copy with eigenvalues clipped at `floor`.
    pub fn repaired(&self, floor: f64) -> Self {
        Self {
            matrix: psd_repair(&self.matrix, floor),
            psd_repaired: true,
            ..self.clone()
        }
    }
}

/// Covariance assumed for the log-contrast errors `log(u_ij/u_i,ref)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorStructure {
    /// `σ²ᵤ(I + 11ᵀ)`: every contrast shares the reference's error.
    #[default]
    SharedReference,
    /// `2σ²ᵤI`: correct marginal variances, cross-covariances dropped.
    Isotropic,
}

impl FromStr for ErrorStructure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared_reference" => Ok(Self::SharedReference),
            "isotropic" => Ok(Self::Isotropic),
            other => Err(Error::invalid(format!(
                "unknown error structure '{other}' (expected shared_reference or isotropic)"
            ))),
        }
    }
}

/// Mean and covariance of the (p−1)-dimensional true log-contrasts, plus
/// the error variance that ties them to the observed ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogContrastNuisance {
    pub mu_ztilde: DVector<f64>,
    pub sigma_ztilde: DMatrix<f64>,
    pub sigma_u_sq: f64,
    pub reference: usize,
    #[serde(default)]
    pub error_structure: ErrorStructure,
}

impl LogContrastNuisance {
    pub fn new(mu_ztilde: DVector<f64>, sigma_ztilde: DMatrix<f64>, sigma_u_sq: f64, reference: usize) -> Result<Self> {
        let q = mu_ztilde.len();
        if sigma_ztilde.nrows() != q || sigma_ztilde.ncols() != q {
            return Err(Error::invalid(format!(
                "sigma_ztilde is {}x{}, expected {q}x{q}",
                sigma_ztilde.nrows(),
                sigma_ztilde.ncols()
            )));
        }
        if !linalg::is_symmetric(&sigma_ztilde, 1e-8) {
            return Err(Error::invalid("sigma_ztilde is not symmetric"));
        }
        if !(sigma_u_sq >= 0.0) {
            return Err(Error::invalid(format!("sigma_u_sq = {sigma_u_sq} must be >= 0")));
        }
        Ok(Self {
            mu_ztilde,
            sigma_ztilde,
            sigma_u_sq,
            reference,
            error_structure: ErrorStructure::default(),
        })
    }

    pub fn with_error_structure(mut self, structure: ErrorStructure) -> Self {
        self.error_structure = structure;
        self
    }

    pub fn q(&self) -> usize {
        self.mu_ztilde.len()
    }

    /// Covariance of the observed-minus-true log-contrasts.
    pub fn error_covariance(&self) -> DMatrix<f64> {
        let q = self.q();
        match self.error_structure {
            ErrorStructure::SharedReference => logcontrast_error_covariance(q, self.sigma_u_sq),
            ErrorStructure::Isotropic => DMatrix::identity(q, q) * (2.0 * self.sigma_u_sq),
        }
    }
}

/// Frobenius-nearest matrix with every eigenvalue at least `floor`.
pub fn psd_repair(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let eig = linalg::sym_eigen(m);
    if eig.eigenvalues.min() >= floor {
        let mut out = m.clone();
        linalg::symmetrize(&mut out);
        return out;
    }
    linalg::spectral_map(&eig, |lam| lam.max(floor))
}

/// Default node-wise penalty for column `j`: `√(2 log p / n)·sd(col j)`.
pub fn default_nodewise_lambda(n: usize, p: usize, column_sd: f64) -> f64 {
    (2.0 * (p as f64).ln() / n as f64).sqrt() * column_sd
}

/// Node-wise estimate `Ĉ⁻¹T̂² − σ²ᵤI`, symmetrized.
///
/// Each column of the (internally centered) `log_w` is Lasso-regressed on
/// the others; `Ĉ` carries `−γ̂` off the diagonal and `T̂²` the residual
/// variances `τ̂²_j = (1/n)(x_j − X_{−j}γ̂_j)ᵀx_j`. With `lambda_tilde =
/// None` every column uses [`default_nodewise_lambda`].
pub fn nodewise_covariance(
    log_w: &DMatrix<f64>,
    sigma_u_sq: f64,
    lambda_tilde: Option<f64>,
) -> Result<CovarianceEstimate> {
    if let Some(l) = lambda_tilde {
        if !(l > 0.0) {
            return Err(Error::invalid(format!("lambda_tilde = {l} must be > 0")));
        }
    }
    let (n, p) = log_w.shape();
    if n < 2 || p < 2 {
        return Err(Error::invalid(format!("need n, p >= 2, got {n}x{p}")));
    }
    let mut x = log_w.clone();
    linalg::center_columns(&mut x);
    let gram = linalg::gram(&x);

    let mut c_hat = DMatrix::<f64>::identity(p, p);
    let mut tau_sq = DVector::<f64>::zeros(p);
    for j in 0..p {
        let others: Vec<usize> = (0..p).filter(|&k| k != j).collect();
        let sub = DMatrix::from_fn(p - 1, p - 1, |a, b| gram[(others[a], others[b])]);
        let lin = DVector::from_fn(p - 1, |a, _| gram[(others[a], j)]);
        let lam = lambda_tilde.unwrap_or_else(|| default_nodewise_lambda(n, p, gram[(j, j)].sqrt()));
        let gamma = if lam > 0.0 {
            solve_quadratic(&sub, &lin, lam, None, DEFAULT_TOL, DEFAULT_MAX_ITER).coef
        } else {
            // constant column: nothing to regress
            DVector::zeros(p - 1)
        };
        let tau = gram[(j, j)] - gamma.dot(&lin);
        if !(tau > 0.0) {
            return Err(Error::DegenerateResidual { index: j, value: tau });
        }
        tau_sq[j] = tau;
        for (a, &k) in others.iter().enumerate() {
            c_hat[(j, k)] = -gamma[a];
        }
    }

    let lu = c_hat.lu();
    let t2 = DMatrix::from_diagonal(&tau_sq);
    let mut sigma = lu
        .solve(&t2)
        .ok_or_else(|| Error::singular("node-wise coefficient matrix C is singular"))?;
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(Error::singular("node-wise coefficient matrix C is singular"));
    }
    for i in 0..p {
        sigma[(i, i)] -= sigma_u_sq;
    }
    linalg::symmetrize(&mut sigma);
    Ok(CovarianceEstimate {
        matrix: sigma,
        method: CovarianceMethod::Nodewise,
        psd_repaired: false,
        shrinkage_intensity: None,
    })
}

/// Correlation-shrinkage covariance of `log_w` minus `σ²ᵤI`.
///
/// Sample correlations are shrunk toward the identity with the analytic
/// intensity `λ* = clamp(Σ var̂(r_kl) / Σ r_kl², 0, 1)` over off-diagonal
/// pairs; variances stay at their unbiased sample values.
pub fn shrinkage_covariance(log_w: &DMatrix<f64>, sigma_u_sq: f64) -> Result<CovarianceEstimate> {
    let (n, p) = log_w.shape();
    if n < 3 {
        return Err(Error::invalid(format!("shrinkage estimator needs n >= 3, got {n}")));
    }
    let nf = n as f64;
    let mut xs = log_w.clone();
    linalg::center_columns(&mut xs);
    let sd: Vec<f64> = xs
        .column_iter()
        .map(|c| (c.norm_squared() / (nf - 1.0)).sqrt())
        .collect();
    let live: Vec<bool> = sd.iter().map(|&s| s > 0.0).collect();
    for (j, mut col) in xs.column_iter_mut().enumerate() {
        if live[j] {
            col.scale_mut(1.0 / sd[j]);
        } else {
            col.fill(0.0);
        }
    }

    // r_kl = mean-of-products scaled to n−1; var̂(r_kl) = n/(n−1)³ Σᵢ (w_ikl − w̄_kl)²
    let cross = xs.tr_mul(&xs);
    let sq = xs.map(|v| v * v);
    let cross_sq = sq.tr_mul(&sq);
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..p {
        for l in (k + 1)..p {
            if !(live[k] && live[l]) {
                continue;
            }
            let w_bar = cross[(k, l)] / nf;
            let r = cross[(k, l)] / (nf - 1.0);
            let ss = (cross_sq[(k, l)] - nf * w_bar * w_bar).max(0.0);
            num += nf / (nf - 1.0).powi(3) * ss;
            den += r * r;
        }
    }
    let intensity = if den > 0.0 { (num / den).clamp(0.0, 1.0) } else { 1.0 };

    let mut sigma = DMatrix::zeros(p, p);
    for k in 0..p {
        sigma[(k, k)] = sd[k] * sd[k] - sigma_u_sq;
        for l in (k + 1)..p {
            if !(live[k] && live[l]) {
                continue;
            }
            let r = (1.0 - intensity) * cross[(k, l)] / (nf - 1.0);
            let v = r * sd[k] * sd[l];
            sigma[(k, l)] = v;
            sigma[(l, k)] = v;
        }
    }
    Ok(CovarianceEstimate {
        matrix: sigma,
        method: CovarianceMethod::Shrinkage,
        psd_repaired: false,
        shrinkage_intensity: Some(intensity),
    })
}

/// Maps `(μₓ, Σₓ)` to the law of the log-contrasts against `reference`:
/// `μ_z̃[j] = μₓ[j] − μₓ[r]` and
/// `Σ_z̃[j,k] = Σₓ[j,k] − Σₓ[j,r] − Σₓ[r,k] + Σₓ[r,r]`.
pub fn to_logcontrast_nuisance(
    mu_x: &DVector<f64>,
    sigma_x: &DMatrix<f64>,
    sigma_u_sq: f64,
    reference: usize,
) -> Result<LogContrastNuisance> {
    let p = mu_x.len();
    if sigma_x.shape() != (p, p) {
        return Err(Error::invalid(format!(
            "sigma_x is {}x{}, mu_x has {p} entries",
            sigma_x.nrows(),
            sigma_x.ncols()
        )));
    }
    if reference >= p {
        return Err(Error::invalid(format!(
            "reference {reference} out of range for {p} components"
        )));
    }
    let idx: Vec<usize> = (0..p).filter(|&j| j != reference).collect();
    let r = reference;
    let mu = DVector::from_iterator(p - 1, idx.iter().map(|&j| mu_x[j] - mu_x[r]));
    let mut sigma = DMatrix::from_fn(p - 1, p - 1, |a, b| {
        let (j, k) = (idx[a], idx[b]);
        sigma_x[(j, k)] - sigma_x[(j, r)] - sigma_x[(r, k)] + sigma_x[(r, r)]
    });
    linalg::symmetrize(&mut sigma);
    LogContrastNuisance::new(mu, sigma, sigma_u_sq, reference)
}

/// AR(1) correlation matrix `ρ^{|i−j|}`.
pub fn ar1_covariance(p: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| rho.powi((i as i32 - j as i32).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::Cholesky;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian_sample(n: usize, cov: &DMatrix<f64>, seed: u64) -> DMatrix<f64> {
        let p = cov.nrows();
        let l = Cholesky::new(cov.clone()).unwrap().l();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        z * l.transpose()
    }

    #[test]
    fn psd_input_unchanged() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        assert!((psd_repair(&a, 0.0) - &a).amax() < 1e-10);
    }

    #[test]
    fn eigenvalue_clip_on_diagonal() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        let r = psd_repair(&a, 0.0);
        assert!((r - DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).amax() < 1e-12);
    }

    #[test]
    fn repair_is_frobenius_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = DMatrix::from_fn(10, 10, |_, _| rng.random_range(-1.0..1.0));
        let a = (&b + b.transpose()) * 0.5;
        let r = psd_repair(&a, 0.0);
        assert!(linalg::min_eigenvalue(&r) >= -1e-10);
        // no random PSD matrix is closer
        let d = (&r - &a).norm();
        for s in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + s);
            let g = DMatrix::from_fn(10, 10, |_, _| rng.random_range(-0.2..0.2));
            let cand = &r + &g * g.transpose();
            assert!((&cand - &a).norm() >= d - 1e-12);
        }
    }

    #[test]
    fn nodewise_identity_truth() {
        let x = gaussian_sample(2000, &DMatrix::identity(5, 5), 1);
        let est = nodewise_covariance(&x, 0.0, None).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (est.matrix[(i, j)] - target).abs() < 0.1,
                    "({i},{j}) = {}",
                    est.matrix[(i, j)]
                );
            }
        }
        assert!(linalg::is_symmetric(&est.matrix, 0.0));
    }

    #[test]
    fn nodewise_uncorrelated_reduces_to_variances() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, -1.0, 1.0, 2.0, -1.0, -2.0, -1.0]);
        let est = nodewise_covariance(&x, 0.25, Some(100.0)).unwrap();
        assert!((est.matrix[(0, 0)] - (2.5 - 0.25)).abs() < 1e-12);
        assert!((est.matrix[(1, 1)] - (1.0 - 0.25)).abs() < 1e-12);
        assert_eq!(est.matrix[(0, 1)], 0.0);
    }

    #[test]
    fn nodewise_ar1_truth() {
        let truth = ar1_covariance(20, 0.5);
        let x = gaussian_sample(2000, &truth, 2);
        let est = nodewise_covariance(&x, 0.0, Some(1e-4)).unwrap();
        let err = (&est.matrix - &truth).amax();
        assert!(err < 0.15, "max error {err}");
        let est = nodewise_covariance(&x, 0.0, None).unwrap();
        // the default penalty shrinks partial correlations, so only coarse agreement
        let err = (&est.matrix - &truth).amax();
        assert!(err < 0.25, "max error {err}");
    }

    #[test]
    fn nodewise_reports_degenerate_column() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 5.0, 2.0, 5.0, 3.0, 5.0]);
        assert!(matches!(
            nodewise_covariance(&x, 0.0, None),
            Err(Error::DegenerateResidual { index: 1, .. })
        ));
    }

    #[test]
    fn shrinkage_identity_truth() {
        let su = 0.3;
        let sigma_w = DMatrix::<f64>::identity(6, 6);
        let x = gaussian_sample(3000, &sigma_w, 3);
        let est = shrinkage_covariance(&x, su).unwrap();
        let target = DMatrix::<f64>::identity(6, 6) * (1.0 - su);
        assert!((&est.matrix - target).amax() < 0.1);
        // with no real correlation the data-driven intensity is large
        assert!(est.shrinkage_intensity.unwrap() > 0.5);
    }

    #[test]
    fn shrinkage_constant_column() {
        let x = DMatrix::from_row_slice(4, 3, &[1.0, 2.0, 7.0, 2.0, 1.0, 7.0, 3.0, 5.0, 7.0, 0.0, 4.0, 7.0]);
        let est = shrinkage_covariance(&x, 0.0).unwrap();
        assert_eq!(est.matrix[(2, 2)], 0.0);
        assert_eq!(est.matrix[(0, 2)], 0.0);
        assert!(linalg::is_symmetric(&est.matrix, 0.0));
    }

    #[test]
    fn shrinkage_is_scaled_sample_covariance() {
        let truth = ar1_covariance(40, 0.2);
        let x = gaussian_sample(60, &truth, 4);
        let su = 0.1;
        let est = shrinkage_covariance(&x, su).unwrap();
        let lam = est.shrinkage_intensity.unwrap();
        assert!(lam > 0.0 && lam < 1.0, "{lam}");
        let s = linalg::covariance(&x, 1);
        for i in 0..40 {
            for j in 0..40 {
                let expected = if i == j {
                    s[(i, i)] - su
                } else {
                    (1.0 - lam) * s[(i, j)]
                };
                assert_abs_diff_eq!(est.matrix[(i, j)], expected, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn strong_correlation_needs_little_shrinkage() {
        let truth = ar1_covariance(3, 0.95);
        let x = gaussian_sample(2000, &truth, 8);
        let est = shrinkage_covariance(&x, 0.0).unwrap();
        assert!(est.shrinkage_intensity.unwrap() < 0.01);
        assert!((est.matrix - truth).amax() < 0.1);
    }

    #[test]
    fn logcontrast_map_examples() {
        let nuis = to_logcontrast_nuisance(&DVector::from_element(3, 2.5), &DMatrix::identity(3, 3), 0.0, 2).unwrap();
        assert_eq!(nuis.sigma_ztilde, DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]));
        assert!(nuis.mu_ztilde.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn logcontrast_map_matches_simulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        let sigma_x = &g * g.transpose() + DMatrix::identity(4, 4) * 0.2;
        let mu_x = DVector::from_column_slice(&[0.5, -1.0, 2.0, 0.0]);
        let nuis = to_logcontrast_nuisance(&mu_x, &sigma_x, 0.0, 1).unwrap();
        let logx = gaussian_sample(100_000, &sigma_x, 7);
        let idx = [0usize, 2, 3];
        let z = DMatrix::from_fn(100_000, 3, |i, a| logx[(i, idx[a])] - logx[(i, 1)]);
        let s = linalg::covariance(&z, 1);
        let scale = sigma_x.amax();
        assert!((s - &nuis.sigma_ztilde).amax() < 0.03 * scale.max(1.0));
        assert!(linalg::min_eigenvalue(&nuis.sigma_ztilde) >= -1e-8);
        assert_eq!(nuis.mu_ztilde.as_slice(), &[1.5, 3.0, 1.0]);
    }
}
