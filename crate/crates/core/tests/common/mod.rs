//! Invariant checks shared by the property suite and the acceptance run.
//! Each takes its randomness from `seed` and reports the first violation.

#![allow(dead_code)]

use hdcal::calibration::NuisanceMode;
use hdcal::composition::{center, close, log_contrast, log_contrast_counts, CountMatrix, ResponseVector};
use hdcal::covariance::{psd_repair, LogContrastNuisance};
use hdcal::inference::{coefficient_inference, fit_debiased_lasso, fit_proposed, DebiasedEstimate, FitOptions, Method};
use hdcal::linalg;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Check = Result<(), String>;
pub type Invariant = (&'static str, fn(u64) -> Check);

const FLOOR: f64 = 1e-8;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if $cond {
        } else {
            return Err(format!($($fmt)+));
        }
    };
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn symmetric(rng: &mut ChaCha8Rng, p: usize) -> DMatrix<f64> {
    let g = gaussian(rng, p, p);
    (&g + g.transpose()) * 0.5
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-12)
}

pub fn log_contrast_scale_invariance(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..8);
    let p = rng.random_range(2..8);
    let reference = rng.random_range(0..p);
    let x = gaussian(&mut rng, n, p).map(f64::exp);
    let scale: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..100.0)).collect();
    let scaled = DMatrix::from_fn(n, p, |i, j| x[(i, j)] * scale[i]);
    let base = log_contrast_counts(&CountMatrix::new(x.clone()).unwrap(), reference).unwrap();
    let other = log_contrast_counts(&CountMatrix::new(scaled).unwrap(), reference).unwrap();
    let via_closure = log_contrast(&close(&CountMatrix::new(x).unwrap()), reference).unwrap();
    ensure!(
        (base.values() - other.values()).amax() < 1e-10,
        "row scaling changed log-contrasts"
    );
    ensure!(
        (base.values() - via_closure.values()).amax() < 1e-10,
        "closure changed log-contrasts"
    );
    Ok(())
}

pub fn centering_idempotence(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..12);
    let p = rng.random_range(2..6);
    let counts = CountMatrix::new(gaussian(&mut rng, n, p).map(f64::exp)).unwrap();
    let lc = log_contrast_counts(&counts, p - 1).unwrap();
    let y = ResponseVector::new(DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0)));
    let (x1, y1) = center(&lc, &y);
    let (x2, y2) = center(&x1, &y1);
    ensure!(
        x1.is_centered() && y1.is_centered(),
        "centered output has nonzero means"
    );
    ensure!(
        (x1.values() - x2.values()).amax() < 1e-12,
        "design moved on second centering"
    );
    ensure!(
        (y1.values() - y2.values()).amax() < 1e-12,
        "response moved on second centering"
    );
    Ok(())
}

pub fn psd_repair_idempotence(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = rng.random_range(1..8);
    let a = symmetric(&mut rng, p);
    let once = psd_repair(&a, FLOOR);
    let twice = psd_repair(&once, FLOOR);
    ensure!(linalg::min_eigenvalue(&once) >= FLOOR * (1.0 - 1e-6), "floor not met");
    ensure!((&once - &twice).amax() < 1e-10, "second repair moved the matrix");
    Ok(())
}

pub fn psd_repair_optimality(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = rng.random_range(1..8);
    let a = symmetric(&mut rng, p);
    let repaired = psd_repair(&a, FLOOR);
    let best = linalg::frobenius_distance(&a, &repaired);
    for _ in 0..5 {
        // a random member of the feasible set {B : λ_min(B) ≥ floor}
        let g = gaussian(&mut rng, p, p);
        let b = &g * g.transpose() + DMatrix::identity(p, p) * FLOOR;
        ensure!(
            best <= linalg::frobenius_distance(&a, &b) + 1e-10,
            "random PSD matrix is closer"
        );
        let mixed = &repaired * 0.9 + &b * 0.1;
        ensure!(
            best <= linalg::frobenius_distance(&a, &mixed) + 1e-10,
            "nearby PSD matrix is closer"
        );
    }
    Ok(())
}

pub fn interval_test_duality(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let estimate = rng.random_range(-10.0..10.0);
    let se = rng.random_range(0.001..5.0);
    let level = rng.random_range(0.5..0.999);
    let est = DebiasedEstimate {
        alpha_hat: DVector::from_element(1, estimate),
        alpha_tilde: DVector::from_element(1, estimate),
        se: DVector::from_element(1, se),
        sigma_hat: 1.0,
        lambda: 0.0,
        omega_hat: DMatrix::identity(1, 1),
        method: Method::Proposed,
        n: 10,
    };
    let c = &coefficient_inference(&est, level).map_err(|e| e.to_string())?[0];
    let rejects = c.p_value < 1.0 - level;
    let excludes_zero = c.ci_low > 0.0 || c.ci_high < 0.0;
    ensure!(
        rejects == excludes_zero,
        "p = {}, ci = ({}, {}) at level {level}",
        c.p_value,
        c.ci_low,
        c.ci_high
    );
    ensure!(
        c.ci_low <= c.estimate && c.estimate <= c.ci_high,
        "estimate outside its interval"
    );
    Ok(())
}

/// Fits on `y` and `c·y`; `proposed` selects the calibrated estimator.
pub fn rescaling_equivariance(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = rng.random_range(0.2..5.0);
    let proposed = rng.random_bool(0.5);
    let (n, q) = (40, 6);
    let v = gaussian(&mut rng, n, q);
    let beta = DVector::from_fn(q, |j, _| if j < 2 { 1.0 - j as f64 * 1.5 } else { 0.0 });
    let y = &v * &beta + DVector::from_fn(n, |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal));
    let opts = FitOptions::default();
    let fit = |y: &DVector<f64>| -> Result<DebiasedEstimate, String> {
        if proposed {
            let sigma = DMatrix::from_fn(q, q, |i, j| 0.3f64.powi((i as i32 - j as i32).abs()));
            let nuis = LogContrastNuisance::new(DVector::zeros(q), sigma, 0.2, q).map_err(|e| e.to_string())?;
            fit_proposed(&v, y, &nuis, NuisanceMode::Oracle, &opts).map_err(|e| e.to_string())
        } else {
            fit_debiased_lasso(&v, y, &opts).map_err(|e| e.to_string())
        }
    };
    let base = fit(&y)?;
    let scaled = fit(&(&y * c))?;
    let tol = 1e-5;
    ensure!(
        rel_close(scaled.sigma_hat, c * base.sigma_hat, tol),
        "sigma_hat not equivariant"
    );
    let scale = c * base.alpha_hat.amax().max(base.se.amax());
    for j in 0..q {
        ensure!(
            (scaled.alpha_tilde[j] - c * base.alpha_tilde[j]).abs() <= tol * scale,
            "alpha_tilde[{j}]"
        );
        ensure!(
            (scaled.alpha_hat[j] - c * base.alpha_hat[j]).abs() <= tol * scale,
            "alpha_hat[{j}]"
        );
        ensure!(rel_close(scaled.se[j], c * base.se[j], tol), "se[{j}]");
    }
    let p0 = coefficient_inference(&base, 0.95).map_err(|e| e.to_string())?;
    let p1 = coefficient_inference(&scaled, 0.95).map_err(|e| e.to_string())?;
    for (a, b) in p0.iter().zip(&p1) {
        ensure!(
            (a.p_value - b.p_value).abs() < 1e-6,
            "p-value {} vs {}",
            a.p_value,
            b.p_value
        );
    }
    Ok(())
}

pub const INVARIANTS: [Invariant; 6] = [
    ("log-contrast scale invariance", log_contrast_scale_invariance),
    ("centering idempotence", centering_idempotence),
    ("psd_repair idempotence", psd_repair_idempotence),
    ("psd_repair Frobenius optimality", psd_repair_optimality),
    ("interval/test duality", interval_test_duality),
    ("response rescaling equivariance", rescaling_equivariance),
];
