//! Simulation harness: generate log-contrast data with contaminated
//! compositions, run every method over many replicates and summarize bias,
//! RMSE, standard errors and interval coverage.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::NuisanceMode;
use crate::composition::{close, log_contrast, log_contrast_counts, CountMatrix};
use crate::covariance::{ar1_covariance, to_logcontrast_nuisance, CovEstimator, LogContrastNuisance};
use crate::error::{Error, Result};
use crate::error_model::{estimate_mu_x, estimate_sigma_u, simulate_contamination, ReplicateSet};
use crate::inference::{fit_debiased_lasso, fit_proposed, FitOptions, Method};
use crate::normal;
use crate::sparse::{cocolasso_fit, cross_validate_cocolasso, CvConfig, DEFAULT_PSD_FLOOR};

/// Leading nonzero coefficients of the default design; the rest are zero.
pub const DEFAULT_ALPHA: [f64; 7] = [1.0, -0.8, 1.5, 0.6, -0.9, 1.2, 0.4];

/// Largest tolerated fraction of failed replicates.
pub const MAX_FAILURE_RATE: f64 = 0.05;

/// How the latent log-abundance means are set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuRule {
    /// `μⱼ = log(p/2)` for the first five components, 0 otherwise.
    #[default]
    FirstFiveLogHalfP,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationScenario {
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub sigma_u_sq: f64,
    pub sigma_eps: f64,
    /// Leading log-contrast coefficients, zero-padded to length p−1.
    pub alpha_true: Vec<f64>,
    pub mu_x_rule: MuRule,
    /// Contaminated copies of W beyond the first.
    pub n_replicate_obs: usize,
    pub nuisance_mode: NuisanceMode,
    pub cov_estimator: CovEstimator,
    pub n_mc: usize,
    pub seed: u64,
    pub cv_folds: usize,
    pub level: f64,
}

impl Default for SimulationScenario {
    fn default() -> Self {
        Self {
            n: 200,
            p: 300,
            rho: 0.2,
            sigma_u_sq: 1.0,
            sigma_eps: 0.5,
            alpha_true: DEFAULT_ALPHA.to_vec(),
            mu_x_rule: MuRule::default(),
            n_replicate_obs: 3,
            nuisance_mode: NuisanceMode::Oracle,
            cov_estimator: CovEstimator::default(),
            n_mc: 200,
            seed: 0,
            cv_folds: 5,
            level: 0.95,
        }
    }
}

/// Ground truth implied by a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub alpha: DVector<f64>,
    pub mu_x: DVector<f64>,
    pub sigma_x: DMatrix<f64>,
    pub sigma_u_sq: f64,
    pub reference: usize,
}

impl SimulationScenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(Error::invalid(format!("{field}: {why}")));
        if self.p < 2 {
            return bad("p", format!("{} must be >= 2", self.p));
        }
        if self.cv_folds < 2 {
            return bad("cv_folds", format!("{} must be >= 2", self.cv_folds));
        }
        if self.n < self.cv_folds.max(3) {
            return bad("n", format!("{} must be >= max(cv_folds, 3)", self.n));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return bad("rho", format!("{} must lie in (-1, 1)", self.rho));
        }
        if !(self.sigma_u_sq >= 0.0) {
            return bad("sigma_u_sq", format!("{} must be >= 0", self.sigma_u_sq));
        }
        if !(self.sigma_eps >= 0.0) {
            return bad("sigma_eps", format!("{} must be >= 0", self.sigma_eps));
        }
        if self.alpha_true.len() > self.p - 1 {
            return bad(
                "alpha_true",
                format!("{} entries exceed p - 1 = {}", self.alpha_true.len(), self.p - 1),
            );
        }
        if self.alpha_true.iter().any(|a| !a.is_finite()) {
            return bad("alpha_true", "entries must be finite".into());
        }
        if self.n_mc == 0 {
            return bad("n_mc", "must be >= 1".into());
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad("level", format!("{} must lie in (0, 1)", self.level));
        }
        if self.nuisance_mode == NuisanceMode::Estimated && self.n_replicate_obs == 0 {
            return bad(
                "n_replicate_obs",
                "estimated nuisances need at least one extra replicate".into(),
            );
        }
        Ok(())
    }

    pub fn q(&self) -> usize {
        self.p - 1
    }

    pub fn truth(&self) -> Truth {
        let q = self.q();
        let mut alpha = DVector::zeros(q);
        for (j, &a) in self.alpha_true.iter().enumerate().take(q) {
            alpha[j] = a;
        }
        let mu_x = match self.mu_x_rule {
            MuRule::FirstFiveLogHalfP => {
                let m = (self.p as f64 / 2.0).ln();
                DVector::from_fn(self.p, |j, _| if j < 5 { m } else { 0.0 })
            }
            MuRule::Zero => DVector::zeros(self.p),
        };
        Truth {
            alpha,
            mu_x,
            sigma_x: ar1_covariance(self.p, self.rho),
            sigma_u_sq: self.sigma_u_sq,
            reference: self.p - 1,
        }
    }
}

/// One simulated data set.
#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    pub y: DVector<f64>,
    /// Error-free abundances.
    pub x: CountMatrix,
    /// Primary contaminated observation.
    pub w: CountMatrix,
    /// Additional contaminated copies of the same subjects.
    pub extra_w: Vec<CountMatrix>,
    /// True log-contrasts against the last component.
    pub z_tilde: DMatrix<f64>,
    /// Observed log-contrasts against the last component.
    pub v_tilde: DMatrix<f64>,
}

/// SplitMix64 finalizer over (seed, replicate, stream).
fn derive_seed(seed: u64, replicate: usize, stream: u64) -> u64 {
    let mut z =
        seed ^ (replicate as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_LATENT: u64 = 0;
const STREAM_CV: u64 = 1;
const STREAM_CONTAMINATION: u64 = 2;

struct Context {
    truth: Truth,
    chol_l: DMatrix<f64>,
}

impl Context {
    fn new(scenario: &SimulationScenario) -> Result<Self> {
        scenario.validate()?;
        let truth = scenario.truth();
        let chol_l = truth
            .sigma_x
            .clone()
            .cholesky()
            .ok_or_else(|| Error::singular("latent covariance is not positive definite"))?
            .l();
        Ok(Self { truth, chol_l })
    }
}

fn generate_with(scenario: &SimulationScenario, ctx: &Context, replicate: usize) -> Result<SimulatedDataset> {
    let (n, p) = (scenario.n, scenario.p);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(scenario.seed, replicate, STREAM_LATENT));
    let e = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut log_x = e * ctx.chol_l.transpose();
    for (j, mut col) in log_x.column_iter_mut().enumerate() {
        col.add_scalar_mut(ctx.truth.mu_x[j]);
    }
    let x = CountMatrix::new(log_x.map(f64::exp))?;
    let z_tilde = log_contrast(&close(&x), ctx.truth.reference)?.into_values();
    let eps = DVector::from_fn(n, |_, _| scenario.sigma_eps * rng.sample::<f64, _>(StandardNormal));
    let y = &z_tilde * &ctx.truth.alpha + eps;

    let mut copies = (0..=scenario.n_replicate_obs)
        .map(|r| {
            simulate_contamination(
                &x,
                scenario.sigma_u_sq,
                derive_seed(scenario.seed, replicate, STREAM_CONTAMINATION + r as u64),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let w = copies.remove(0);
    let v_tilde = log_contrast_counts(&w, ctx.truth.reference)?.into_values();
    Ok(SimulatedDataset {
        y,
        x,
        w,
        extra_w: copies,
        z_tilde,
        v_tilde,
    })
}

/// Draws replicate `replicate` of `scenario`; a pure function of the
/// scenario (including its seed) and the index.
pub fn generate_dataset(scenario: &SimulationScenario, replicate: usize) -> Result<SimulatedDataset> {
    generate_with(scenario, &Context::new(scenario)?, replicate)
}

/// Plug-in nuisances from the primary and extra contaminated copies.
pub fn estimate_nuisance(
    w: &CountMatrix,
    extra_w: &[CountMatrix],
    estimator: CovEstimator,
    reference: usize,
) -> Result<LogContrastNuisance> {
    let mut all = Vec::with_capacity(extra_w.len() + 1);
    all.push(w.clone());
    all.extend_from_slice(extra_w);
    let s2 = estimate_sigma_u(&ReplicateSet::new(all)?)?;
    let mu_x = estimate_mu_x(w, s2);
    let sigma_x = estimator.estimate(&w.log(), s2)?.repaired(DEFAULT_PSD_FLOOR);
    to_logcontrast_nuisance(&mu_x, &sigma_x.matrix, s2, reference)
}

/// Per-method estimates (and standard errors where defined) from one
/// replicate, indexed in [`Method::ALL`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub estimates: Vec<DVector<f64>>,
    pub se: Vec<Option<DVector<f64>>>,
}

fn method_slot(m: Method) -> usize {
    Method::ALL.iter().position(|&x| x == m).expect("method listed in ALL")
}

fn fit_replicate(scenario: &SimulationScenario, ctx: &Context, replicate: usize) -> Result<ReplicateOutcome> {
    let data = generate_with(scenario, ctx, replicate)?;
    let nuisance = match scenario.nuisance_mode {
        NuisanceMode::Oracle => to_logcontrast_nuisance(
            &ctx.truth.mu_x,
            &ctx.truth.sigma_x,
            ctx.truth.sigma_u_sq,
            ctx.truth.reference,
        )?,
        NuisanceMode::Estimated => {
            estimate_nuisance(&data.w, &data.extra_w, scenario.cov_estimator, ctx.truth.reference)?
        }
    };
    let cv = CvConfig::new(scenario.cv_folds, derive_seed(scenario.seed, replicate, STREAM_CV));
    let opts = FitOptions::new(cv.clone());

    let delasso = fit_debiased_lasso(&data.v_tilde, &data.y, &opts)?;
    let proposed = fit_proposed(&data.v_tilde, &data.y, &nuisance, scenario.nuisance_mode, &opts)?;
    let coco_lambda = cross_validate_cocolasso(&data.v_tilde, &data.y, nuisance.sigma_u_sq, &cv)?.lambda_star;
    let coco = cocolasso_fit(&data.v_tilde, &data.y, nuisance.sigma_u_sq, coco_lambda)?;

    let mut estimates = vec![DVector::zeros(0); Method::ALL.len()];
    let mut se = vec![None; Method::ALL.len()];
    estimates[method_slot(Method::Lasso)] = delasso.alpha_tilde.clone();
    estimates[method_slot(Method::CocoLasso)] = coco.coefficients;
    estimates[method_slot(Method::DebiasedLasso)] = delasso.alpha_hat;
    se[method_slot(Method::DebiasedLasso)] = Some(delasso.se);
    estimates[method_slot(Method::Proposed)] = proposed.alpha_hat;
    se[method_slot(Method::Proposed)] = Some(proposed.se);
    Ok(ReplicateOutcome { estimates, se })
}

/// Runs every replicate, in parallel over the current rayon pool. The
/// result is in replicate order and independent of scheduling.
pub fn run_replicates(scenario: &SimulationScenario) -> Result<Vec<Result<ReplicateOutcome>>> {
    let ctx = Context::new(scenario)?;
    Ok((0..scenario.n_mc)
        .into_par_iter()
        .map(|r| {
            let out = fit_replicate(scenario, &ctx, r);
            if let Err(e) = &out {
                log::warn!("replicate {r} failed: {e}");
            }
            out
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSummary {
    pub method: Method,
    pub index: usize,
    pub truth: f64,
    pub bias: f64,
    pub rmse: f64,
    /// Mean model-based SE; the "SE" column.
    pub mean_model_se: Option<f64>,
    pub empirical_sd: f64,
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub rows: Vec<CoefficientSummary>,
    pub n_mc_completed: usize,
    pub n_failed: usize,
    pub level: f64,
}

impl SummaryTable {
    pub fn get(&self, method: Method, index: usize) -> Option<&CoefficientSummary> {
        self.rows.iter().find(|r| r.method == method && r.index == index)
    }
}

/// Reduces completed replicates in index order. Failed replicates are
/// counted and excluded; more than [`MAX_FAILURE_RATE`] of them is an
/// error.
pub fn summarize(outcomes: &[Result<ReplicateOutcome>], alpha: &DVector<f64>, level: f64) -> Result<SummaryTable> {
    let total = outcomes.len();
    let done: Vec<&ReplicateOutcome> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    let failed = total - done.len();
    if failed as f64 > MAX_FAILURE_RATE * total as f64 || done.is_empty() {
        return Err(Error::ScenarioUnstable { failed, total });
    }
    let crit = normal::quantile(1.0 - (1.0 - level) / 2.0);
    let nf = done.len() as f64;
    let q = alpha.len();
    let mut rows = Vec::with_capacity(Method::ALL.len() * q);
    for (slot, &method) in Method::ALL.iter().enumerate() {
        for j in 0..q {
            let truth = alpha[j];
            let (mut sum, mut sum_sq_err) = (0.0, 0.0);
            for o in &done {
                let a = o.estimates[slot][j];
                sum += a;
                sum_sq_err += (a - truth).powi(2);
            }
            let mean = sum / nf;
            let ss: f64 = done.iter().map(|o| (o.estimates[slot][j] - mean).powi(2)).sum();
            let empirical_sd = if done.len() > 1 { (ss / (nf - 1.0)).sqrt() } else { 0.0 };
            let (mean_model_se, coverage) = if method.has_inference() {
                let mut se_sum = 0.0;
                let mut hits = 0usize;
                for o in &done {
                    let se = o.se[slot].as_ref().map_or(f64::NAN, |s| s[j]);
                    se_sum += se;
                    if (o.estimates[slot][j] - truth).abs() <= crit * se {
                        hits += 1;
                    }
                }
                (Some(se_sum / nf), Some(hits as f64 / nf))
            } else {
                (None, None)
            };
            rows.push(CoefficientSummary {
                method,
                index: j,
                truth,
                bias: mean - truth,
                rmse: (sum_sq_err / nf).sqrt(),
                mean_model_se,
                empirical_sd,
                coverage,
            });
        }
    }
    Ok(SummaryTable {
        rows,
        n_mc_completed: done.len(),
        n_failed: failed,
        level,
    })
}

/// Runs and summarizes a whole scenario.
pub fn run_scenario(scenario: &SimulationScenario) -> Result<SummaryTable> {
    let outcomes = run_replicates(scenario)?;
    summarize(&outcomes, &scenario.truth().alpha, scenario.level)
}
