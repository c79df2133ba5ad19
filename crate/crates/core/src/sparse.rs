//! L1-penalized least squares.
//!
//! Every solver here reduces to the penalized quadratic
//!
//! ```text
//! minimize  ½ αᵀ G α − cᵀ α + λ ‖α‖₁
//! ```
//!
//! solved by cyclic coordinate descent with exact soft-threshold updates.
//! For the Lasso `G = XᵀX/n`, `c = Xᵀy/n`; CoCoLasso swaps in an
//! error-corrected, PSD-projected `G`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::covariance::psd_repair;
use crate::error::{Error, Result};
use crate::linalg;

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITER: usize = 100_000;
pub const DEFAULT_PSD_FLOOR: f64 = 1e-8;

/// Per-λ sweep budget inside CoCoLasso cross-validation. The repaired Gram
/// has near-null directions outside the range of `Ṽᵀy`, where small-λ
/// minimizers run off to very large norms.
pub const COCO_CV_SWEEPS: usize = 1000;

/// Held-out error, relative to predicting zero, beyond which a CV path is
/// treated as having run off.
pub const DIVERGENCE_RATIO: f64 = 1e6;

/// Outer-iteration cap for the scaled Lasso alternation.
const SCALED_LASSO_MAX_OUTER: usize = 500;
const SCALED_LASSO_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct LassoProblem {
    pub design: DMatrix<f64>,
    pub response: DVector<f64>,
    pub lambda: f64,
}

impl LassoProblem {
    pub fn new(design: DMatrix<f64>, response: DVector<f64>, lambda: f64) -> Result<Self> {
        if design.nrows() != response.len() {
            return Err(Error::invalid(format!(
                "design has {} rows but response has {} entries",
                design.nrows(),
                response.len()
            )));
        }
        if !(lambda > 0.0) {
            return Err(Error::invalid(format!("lambda = {lambda} must be > 0")));
        }
        Ok(Self {
            design,
            response,
            lambda,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoSolution {
    pub coefficients: DVector<f64>,
    pub lambda: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Largest violation of the subgradient optimality conditions.
    pub kkt_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledLassoSolution {
    pub coefficients: DVector<f64>,
    pub sigma_hat: f64,
    pub lambda_tilde: f64,
    pub outer_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LambdaGrid {
    /// `len` log-spaced points from the null-model threshold λ_max down to
    /// `min_ratio · λ_max`.
    Auto {
        len: usize,
        min_ratio: f64,
    },
    Explicit(Vec<f64>),
}

impl Default for LambdaGrid {
    fn default() -> Self {
        LambdaGrid::Auto {
            len: 50,
            min_ratio: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub lambda_grid: LambdaGrid,
    pub seed: u64,
}

impl CvConfig {
    pub fn new(folds: usize, seed: u64) -> Self {
        Self {
            folds,
            lambda_grid: LambdaGrid::default(),
            seed,
        }
    }

    pub fn with_grid(mut self, grid: Vec<f64>) -> Self {
        self.lambda_grid = LambdaGrid::Explicit(grid);
        self
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::invalid(format!("folds = {} must be >= 2", self.folds)));
        }
        if n < self.folds {
            return Err(Error::invalid(format!(
                "{n} observations cannot fill {} folds",
                self.folds
            )));
        }
        match &self.lambda_grid {
            LambdaGrid::Auto { len, min_ratio } => {
                if *len == 0 || !(*min_ratio > 0.0 && *min_ratio <= 1.0) {
                    return Err(Error::invalid("auto lambda grid needs len > 0 and ratio in (0, 1]"));
                }
            }
            LambdaGrid::Explicit(g) => {
                if g.is_empty() {
                    return Err(Error::invalid("lambda grid is empty"));
                }
                if g.iter().any(|&l| !(l > 0.0)) {
                    return Err(Error::invalid("lambda grid entries must be > 0"));
                }
                if g.windows(2).any(|w| w[1] > w[0]) {
                    return Err(Error::invalid("lambda grid must be descending"));
                }
            }
        }
        Ok(())
    }
}

impl Default for CvConfig {
    fn default() -> Self {
        Self::new(5, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub lambda: f64,
    pub mean_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambda_star: f64,
    pub curve: Vec<CvPoint>,
}

/// Soft-threshold operator `sign(z)·max(|z| − t, 0)`.
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Result of the raw quadratic solver.
#[derive(Debug, Clone)]
pub(crate) struct QuadraticFit {
    pub coef: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_violation: f64,
}

/// Subgradient optimality gap for `½αᵀGα − cᵀα + λ‖α‖₁`.
pub(crate) fn quadratic_kkt(gram: &DMatrix<f64>, c: &DVector<f64>, lambda: f64, coef: &DVector<f64>) -> f64 {
    let grad = gram * coef - c;
    grad.iter()
        .zip(coef.iter())
        .map(|(&g, &a)| {
            if a != 0.0 {
                (g + lambda * a.signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

pub(crate) fn quadratic_objective(gram: &DMatrix<f64>, c: &DVector<f64>, lambda: f64, coef: &DVector<f64>) -> f64 {
    0.5 * coef.dot(&(gram * coef)) - c.dot(coef) + lambda * coef.lp_norm(1)
}

/// Cyclic coordinate descent on the penalized quadratic.
///
/// Stops once a full sweep moves no coefficient by more than `tol` and the
/// KKT gap is at most `10·tol`.
pub(crate) fn solve_quadratic(
    gram: &DMatrix<f64>,
    c: &DVector<f64>,
    lambda: f64,
    init: Option<&DVector<f64>>,
    tol: f64,
    max_iter: usize,
) -> QuadraticFit {
    let q = c.len();
    let mut coef = init.cloned().unwrap_or_else(|| DVector::zeros(q));
    let mut g_alpha = gram * &coef;
    let mut iterations = 0;
    let mut converged = false;
    let mut kkt = f64::INFINITY;
    let mut next_round = 0;
    let mut gap = ACTIVE_ROUND_GAP;

    while iterations < max_iter {
        iterations += 1;
        let mut max_change: f64 = 0.0;
        let mut support_changed = false;
        for j in 0..q {
            let gjj = gram[(j, j)];
            let old = coef[j];
            let new = if gjj > 0.0 {
                let z = c[j] - (g_alpha[j] - gjj * old);
                soft_threshold(z, lambda) / gjj
            } else {
                0.0
            };
            let delta = new - old;
            if delta != 0.0 {
                support_changed |= (old == 0.0) != (new == 0.0);
                coef[j] = new;
                g_alpha.axpy(delta, &gram.column(j), 1.0);
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change >= tol && !support_changed && iterations >= next_round {
            let mut reached = false;
            for _ in 0..ACTIVE_STEPS {
                match active_set_step(gram, c, lambda, &coef) {
                    Some((next, blocked)) => {
                        coef = next;
                        if !blocked {
                            reached = true;
                            break;
                        }
                    }
                    None => break,
                }
            }
            // back off while the sign pattern is still far from settled
            gap = if reached {
                ACTIVE_ROUND_GAP
            } else {
                (gap * 2).min(MAX_ROUND_GAP)
            };
            next_round = iterations + gap;
            g_alpha = gram * &coef;
        }
        if max_change < tol {
            // refresh to shed accumulated roundoff before certifying
            g_alpha = gram * &coef;
            kkt = quadratic_kkt(gram, c, lambda, &coef);
            if kkt <= 10.0 * tol {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        kkt = quadratic_kkt(gram, c, lambda, &coef);
    }
    QuadraticFit {
        coef,
        iterations,
        converged,
        kkt_violation: kkt,
    }
}

/// Minimum sweeps between rounds of active-set steps. A round only runs
/// after a sweep that left the support unchanged.
const ACTIVE_ROUND_GAP: usize = 3;
/// Active-set steps per round; a round ends early once a step is unblocked.
const ACTIVE_STEPS: usize = 3;
const MAX_ROUND_GAP: usize = 96;

/// Solves `A x = b` for symmetric positive definite `A`, given column-major
/// in `a` (overwritten by its Cholesky factor). `None` if `A` is not
/// numerically positive definite.
fn spd_solve(a: &mut [f64], mut b: Vec<f64>) -> Option<Vec<f64>> {
    let k = b.len();
    debug_assert_eq!(a.len(), k * k);
    for j in 0..k {
        let (done, rest) = a.split_at_mut(j * k);
        let col_j = &mut rest[..k];
        for p in 0..j {
            let col_p = &done[p * k..(p + 1) * k];
            let l = col_p[j];
            if l != 0.0 {
                for (x, &y) in col_j[j..].iter_mut().zip(&col_p[j..]) {
                    *x -= l * y;
                }
            }
        }
        let d = col_j[j];
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        col_j[j] = d;
        for x in &mut col_j[j + 1..] {
            *x /= d;
        }
    }
    // L z = b
    for j in 0..k {
        let col = &a[j * k..(j + 1) * k];
        b[j] /= col[j];
        let bj = b[j];
        for i in j + 1..k {
            b[i] -= col[i] * bj;
        }
    }
    // Lᵀ x = z
    for j in (0..k).rev() {
        let col = &a[j * k..(j + 1) * k];
        let dot: f64 = col[j + 1..].iter().zip(&b[j + 1..]).map(|(l, x)| l * x).sum();
        b[j] = (b[j] - dot) / col[j];
    }
    Some(b)
}

/// One primal active-set step. Solves `G_AA x = c_A − λ s_A` on the current
/// support and sign pattern, then moves from `coef` toward `x`, stopping
/// where the first coefficient would change sign (that one is set to 0,
/// and the step is reported as blocked).
/// Inside the orthant the objective is a convex quadratic minimized at
/// `x`, so the step never increases it.
fn active_set_step(
    gram: &DMatrix<f64>,
    c: &DVector<f64>,
    lambda: f64,
    coef: &DVector<f64>,
) -> Option<(DVector<f64>, bool)> {
    let active: Vec<usize> = (0..coef.len()).filter(|&j| coef[j] != 0.0).collect();
    if active.is_empty() {
        return None;
    }
    let k = active.len();
    let mut g_aa = Vec::with_capacity(k * k);
    for &b in &active {
        let col = gram.column(b);
        g_aa.extend(active.iter().map(|&a| col[a]));
    }
    let rhs: Vec<f64> = active.iter().map(|&j| c[j] - lambda * coef[j].signum()).collect();
    let sol = spd_solve(&mut g_aa, rhs)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut t = 1.0;
    let mut blocking = None;
    for (a, &j) in active.iter().enumerate() {
        if sol[a].signum() != coef[j].signum() || sol[a] == 0.0 {
            let cross = coef[j] / (coef[j] - sol[a]);
            if cross < t {
                t = cross;
                blocking = Some(j);
            }
        }
    }
    let mut out = coef.clone();
    for (a, &j) in active.iter().enumerate() {
        out[j] = coef[j] + t * (sol[a] - coef[j]);
        if out[j].signum() != coef[j].signum() {
            out[j] = 0.0;
        }
    }
    if let Some(j) = blocking {
        out[j] = 0.0;
    }
    Some((out, blocking.is_some()))
}

fn gram_and_linear(design: &DMatrix<f64>, response: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let n = design.nrows() as f64;
    (linalg::gram(design), design.tr_mul(response) / n)
}

fn lasso_objective(design: &DMatrix<f64>, response: &DVector<f64>, lambda: f64, coef: &DVector<f64>) -> f64 {
    let r = response - design * coef;
    r.norm_squared() / (2.0 * design.nrows() as f64) + lambda * coef.lp_norm(1)
}

/// Lasso `(1/2n)‖y − Xα‖² + λ‖α‖₁` by cyclic coordinate descent.
///
/// Hitting `max_iter` is reported through `converged = false`, not an error.
pub fn lasso_fit(problem: &LassoProblem, tol: f64, max_iter: usize) -> Result<LassoSolution> {
    lasso_fit_warm(problem, tol, max_iter, None)
}

pub fn lasso_fit_warm(
    problem: &LassoProblem,
    tol: f64,
    max_iter: usize,
    init: Option<&DVector<f64>>,
) -> Result<LassoSolution> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tol = {tol} must be > 0")));
    }
    let (gram, c) = gram_and_linear(&problem.design, &problem.response);
    let fit = solve_quadratic(&gram, &c, problem.lambda, init, tol, max_iter);
    Ok(LassoSolution {
        objective: lasso_objective(&problem.design, &problem.response, problem.lambda, &fit.coef),
        coefficients: fit.coef,
        lambda: problem.lambda,
        iterations: fit.iterations,
        converged: fit.converged,
        kkt_violation: fit.kkt_violation,
    })
}

/// Smallest λ at which the all-zero vector is optimal: `max_j |X_jᵀy|/n`.
pub fn lambda_max(design: &DMatrix<f64>, response: &DVector<f64>) -> f64 {
    (design.tr_mul(response) / design.nrows() as f64).amax()
}

fn log_grid(top: f64, len: usize, min_ratio: f64) -> Vec<f64> {
    if len == 1 {
        return vec![top];
    }
    let lo = top * min_ratio;
    (0..len)
        .map(|k| {
            let t = k as f64 / (len - 1) as f64;
            (top.ln() * (1.0 - t) + lo.ln() * t).exp()
        })
        .collect()
}

pub(crate) fn resolve_grid(grid: &LambdaGrid, top: f64) -> Vec<f64> {
    match grid {
        LambdaGrid::Explicit(g) => g.clone(),
        LambdaGrid::Auto { len, min_ratio } => {
            // an all-zero response still needs a positive grid
            let top = if top > 0.0 { top } else { 1.0 };
            log_grid(top, *len, *min_ratio)
        }
    }
}

/// Deterministic fold labels: a seeded shuffle dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut label = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        label[i] = pos % folds;
    }
    label
}

fn select_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)])
}

fn select_entries(y: &DVector<f64>, rows: &[usize]) -> DVector<f64> {
    DVector::from_iterator(rows.len(), rows.iter().map(|&i| y[i]))
}

/// Builds the penalized quadratic `(G, c)` from a centered training fold.
pub(crate) type QuadraticBuilder<'a> =
    dyn Fn(&DMatrix<f64>, &DVector<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> + Sync + 'a;

/// K-fold CV over a descending λ grid. Training folds are re-centered and
/// the held-out rows use the training means. Returns the λ with the lowest
/// mean held-out squared error, preferring the larger λ on ties.
///
/// Each grid point gets at most `sweep_budget` sweeps. Once a fit exhausts
/// it, or its held-out error exceeds the null model's by a factor of
/// [`DIVERGENCE_RATIO`], that fold scores every smaller λ as infinitely bad.
pub(crate) fn cross_validate_quadratic(
    design: &DMatrix<f64>,
    response: &DVector<f64>,
    cfg: &CvConfig,
    grid: &[f64],
    builder: &QuadraticBuilder<'_>,
    sweep_budget: usize,
) -> Result<CvResult> {
    let n = design.nrows();
    let labels = fold_assignment(n, cfg.folds, cfg.seed);
    let mut sq_err = vec![0.0; grid.len()];

    for fold in 0..cfg.folds {
        let train: Vec<usize> = (0..n).filter(|&i| labels[i] != fold).collect();
        let test: Vec<usize> = (0..n).filter(|&i| labels[i] == fold).collect();
        let mut xt = select_rows(design, &train);
        let x_means = linalg::center_columns(&mut xt);
        let yt_raw = select_entries(response, &train);
        let y_mean = yt_raw.mean();
        let yt = yt_raw.add_scalar(-y_mean);
        let (gram, c) = builder(&xt, &yt)?;

        let mut xv = select_rows(design, &test);
        for (j, mut col) in xv.column_iter_mut().enumerate() {
            col.add_scalar_mut(-x_means[j]);
        }
        let yv = select_entries(response, &test).add_scalar(-y_mean);
        let null_err = yv.norm_squared().max(f64::MIN_POSITIVE);

        let mut warm: Option<DVector<f64>> = None;
        for (k, &lam) in grid.iter().enumerate() {
            let fit = solve_quadratic(&gram, &c, lam, warm.as_ref(), DEFAULT_TOL, sweep_budget);
            if !fit.converged {
                log::debug!("cv fold {fold} stalled at lambda {lam:e}; truncating path");
                for e in &mut sq_err[k..] {
                    *e = f64::INFINITY;
                }
                break;
            }
            let resid = &yv - &xv * &fit.coef;
            let err = resid.norm_squared();
            if err > DIVERGENCE_RATIO * null_err {
                log::debug!("cv fold {fold} diverged at lambda {lam:e}; truncating path");
                for e in &mut sq_err[k..] {
                    *e = f64::INFINITY;
                }
                break;
            }
            sq_err[k] += err;
            warm = Some(fit.coef);
        }
    }

    let curve: Vec<CvPoint> = grid
        .iter()
        .zip(&sq_err)
        .map(|(&lambda, &e)| CvPoint {
            lambda,
            mean_error: e / n as f64,
        })
        .collect();
    let mut best = 0;
    for k in 1..curve.len() {
        if curve[k].mean_error < curve[best].mean_error {
            best = k;
        }
    }
    Ok(CvResult {
        lambda_star: curve[best].lambda,
        curve,
    })
}

/// K-fold cross-validation of the Lasso penalty.
pub fn cross_validate_lambda(design: &DMatrix<f64>, response: &DVector<f64>, cfg: &CvConfig) -> Result<CvResult> {
    if design.nrows() != response.len() {
        return Err(Error::invalid("design and response row counts differ"));
    }
    cfg.validate(design.nrows())?;
    let grid = resolve_grid(&cfg.lambda_grid, lambda_max(design, response));
    let builder = |x: &DMatrix<f64>, y: &DVector<f64>| Ok(gram_and_linear(x, y));
    cross_validate_quadratic(design, response, cfg, &grid, &builder, DEFAULT_MAX_ITER)
}

/// Scaled Lasso: jointly minimizes
/// `(1/2nσ)‖y − Xα‖² + σ/2 + λ̃‖α‖₁` by alternating a Lasso at penalty
/// `σλ̃` with the update `σ² = ‖y − Xα‖²/n`.
pub fn scaled_lasso(design: &DMatrix<f64>, response: &DVector<f64>, lambda_tilde: f64) -> Result<ScaledLassoSolution> {
    if !(lambda_tilde > 0.0) {
        return Err(Error::invalid(format!("lambda_tilde = {lambda_tilde} must be > 0")));
    }
    if design.nrows() != response.len() {
        return Err(Error::invalid("design and response row counts differ"));
    }
    let n = design.nrows() as f64;
    let (gram, c) = gram_and_linear(design, response);
    let mut sigma = response.norm() / n.sqrt();
    if !(sigma > 0.0) {
        return Err(Error::invalid("response is identically zero; noise level undefined"));
    }
    let mut coef = DVector::zeros(design.ncols());
    for outer in 1..=SCALED_LASSO_MAX_OUTER {
        let fit = solve_quadratic(
            &gram,
            &c,
            sigma * lambda_tilde,
            Some(&coef),
            DEFAULT_TOL * 0.1,
            DEFAULT_MAX_ITER,
        );
        coef = fit.coef;
        let next = (response - design * &coef).norm() / n.sqrt();
        if !(next > 0.0) {
            return Err(Error::invalid(
                "scaled Lasso interpolated the response; sigma collapsed to 0",
            ));
        }
        let done = (next - sigma).abs() < SCALED_LASSO_TOL;
        sigma = next;
        if done {
            return Ok(ScaledLassoSolution {
                coefficients: coef,
                sigma_hat: sigma,
                lambda_tilde,
                outer_iterations: outer,
            });
        }
    }
    Err(Error::NotConverged {
        what: "scaled lasso",
        iterations: SCALED_LASSO_MAX_OUTER,
    })
}

/// The scaled-Lasso penalty `10·√(2 log q / n)` for q predictors.
pub fn default_scaled_lambda(n: usize, q: usize) -> f64 {
    10.0 * (2.0 * (q.max(2) as f64).ln() / n as f64).sqrt()
}

/// The universal scaled-Lasso penalty `√(2 log q / n)`.
pub fn universal_scaled_lambda(n: usize, q: usize) -> f64 {
    (2.0 * (q.max(2) as f64).ln() / n as f64).sqrt()
}

/// Covariance of the log-contrast errors `log(u_ij/u_i,ref)`: variance
/// `2σ²ᵤ`, covariance `σ²ᵤ` through the shared reference factor.
pub fn logcontrast_error_covariance(q: usize, sigma_u_sq: f64) -> DMatrix<f64> {
    DMatrix::from_fn(q, q, |i, j| if i == j { 2.0 * sigma_u_sq } else { sigma_u_sq })
}

/// Error-corrected Gram `cov(Ṽ) − Σ_ũ` projected to the PSD cone, and the
/// linear term `Ṽᵀy/n`, both on centered data.
pub(crate) fn cocolasso_quadratic(
    v_centered: &DMatrix<f64>,
    y_centered: &DVector<f64>,
    sigma_u_sq: f64,
) -> (DMatrix<f64>, DVector<f64>) {
    let (mut gram, c) = gram_and_linear(v_centered, y_centered);
    if sigma_u_sq > 0.0 {
        gram -= logcontrast_error_covariance(gram.nrows(), sigma_u_sq);
        gram = psd_repair(&gram, DEFAULT_PSD_FLOOR);
    }
    (gram, c)
}

/// CoCoLasso on observed log-contrasts.
///
/// Inputs are centered internally. With `sigma_u_sq = 0` no correction is
/// applied and the fit coincides with the Lasso on the centered data.
pub fn cocolasso_fit(
    v_logcontrasts: &DMatrix<f64>,
    response: &DVector<f64>,
    sigma_u_sq: f64,
    lambda_star: f64,
) -> Result<LassoSolution> {
    if !(lambda_star > 0.0) {
        return Err(Error::invalid(format!("lambda = {lambda_star} must be > 0")));
    }
    if !(sigma_u_sq >= 0.0) {
        return Err(Error::invalid(format!("sigma_u_sq = {sigma_u_sq} must be >= 0")));
    }
    if v_logcontrasts.nrows() != response.len() {
        return Err(Error::invalid("design and response row counts differ"));
    }
    let mut v = v_logcontrasts.clone();
    linalg::center_columns(&mut v);
    let y = response.add_scalar(-response.mean());
    let (gram, c) = cocolasso_quadratic(&v, &y, sigma_u_sq);
    let fit = solve_quadratic(&gram, &c, lambda_star, None, DEFAULT_TOL, DEFAULT_MAX_ITER);
    Ok(LassoSolution {
        objective: quadratic_objective(&gram, &c, lambda_star, &fit.coef),
        coefficients: fit.coef,
        lambda: lambda_star,
        iterations: fit.iterations,
        converged: fit.converged,
        kkt_violation: fit.kkt_violation,
    })
}

/// Cross-validated CoCoLasso penalty, scoring held-out squared error on the
/// observed log-contrasts.
pub fn cross_validate_cocolasso(
    v_logcontrasts: &DMatrix<f64>,
    response: &DVector<f64>,
    sigma_u_sq: f64,
    cfg: &CvConfig,
) -> Result<CvResult> {
    cfg.validate(v_logcontrasts.nrows())?;
    let mut v = v_logcontrasts.clone();
    linalg::center_columns(&mut v);
    let y = response.add_scalar(-response.mean());
    let grid = resolve_grid(&cfg.lambda_grid, lambda_max(&v, &y));
    let builder = move |x: &DMatrix<f64>, yt: &DVector<f64>| Ok(cocolasso_quadratic(x, yt, sigma_u_sq));
    cross_validate_quadratic(&v, &y, cfg, &grid, &builder, COCO_CV_SWEEPS)
}
