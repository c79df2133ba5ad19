//! The subcommand implementations, callable without a process boundary.

use std::path::Path;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::config::{load_scenario, AnalysisConfig, ReferenceSpec, SCHEMA_VERSION};
use super::io;
use crate::calibration::NuisanceMode;
use crate::composition::{log_contrast_counts, CountMatrix};
use crate::covariance::{to_logcontrast_nuisance, CovEstimator, ErrorStructure, LogContrastNuisance};
use crate::error::{Error, Result};
use crate::error_model::{estimate_mu_x, estimate_sigma_u_masked, ReplicateSet};
use crate::inference::{coefficient_inference, fit_debiased_lasso, fit_proposed, DebiasedEstimate, FitOptions, Method};
use crate::linalg;
use crate::montecarlo::{generate_dataset, run_scenario, SimulationScenario, SummaryTable};
use crate::sparse::{CvConfig, DEFAULT_PSD_FLOOR};

/// Rows shown in the printed simulation table.
const TABLE_ROWS: usize = 10;

fn version() -> String {
    env!("CARGO_PKG_VERSION").to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationMetadata {
    pub schema_version: u32,
    pub version: String,
    pub scenario: SimulationScenario,
    pub n_mc_completed: usize,
    pub n_failed: usize,
    pub level: f64,
}

/// Runs a scenario file and writes `summary.csv`, `metadata.json` and
/// `table.txt` under `out`. Returns the table text.
pub fn simulate(config: &Path, n_mc: Option<usize>, seed: Option<u64>, out: &Path) -> Result<String> {
    let mut scenario = load_scenario(config)?;
    if let Some(n) = n_mc {
        scenario.n_mc = n;
    }
    if let Some(s) = seed {
        scenario.seed = s;
    }
    scenario.validate()?;
    let table = run_scenario(&scenario)?;
    write_simulation(out, &scenario, &table)
}

pub fn write_simulation(out: &Path, scenario: &SimulationScenario, table: &SummaryTable) -> Result<String> {
    std::fs::create_dir_all(out)?;
    io::write_summary_csv(&out.join("summary.csv"), table)?;
    io::write_json(
        &out.join("metadata.json"),
        &SimulationMetadata {
            schema_version: SCHEMA_VERSION,
            version: version(),
            scenario: scenario.clone(),
            n_mc_completed: table.n_mc_completed,
            n_failed: table.n_failed,
            level: table.level,
        },
    )?;
    let text = io::format_summary_table(table, TABLE_ROWS);
    io::write_text(&out.join("table.txt"), &text)?;
    Ok(text)
}

/// Component names `c001, c002, …` wide enough for `p`.
pub fn component_names(p: usize) -> Vec<String> {
    let width = p.to_string().len().max(3);
    (1..=p).map(|j| format!("c{j:0width$}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedTruth {
    pub schema_version: u32,
    pub scenario: SimulationScenario,
    pub replicate_index: usize,
    pub components: Vec<String>,
    pub reference: String,
    pub alpha: Vec<f64>,
}

/// Writes one simulated data set in the `analyze` input layout:
/// `counts.csv` (the primary observation), `replicate_1.csv …
/// replicate_R.csv` (all contaminated copies, the first equal to
/// `counts.csv`), `response.csv` and `truth.json`.
pub fn generate(config: &Path, seed: Option<u64>, replicate: usize, out: &Path) -> Result<()> {
    let mut scenario = load_scenario(config)?;
    if let Some(s) = seed {
        scenario.seed = s;
    }
    scenario.validate()?;
    let data = generate_dataset(&scenario, replicate)?;
    let names = component_names(scenario.p);
    std::fs::create_dir_all(out)?;
    io::write_matrix(&out.join("counts.csv"), &names, data.w.values())?;
    for (r, m) in std::iter::once(&data.w).chain(&data.extra_w).enumerate() {
        io::write_matrix(&out.join(format!("replicate_{}.csv", r + 1)), &names, m.values())?;
    }
    io::write_response(&out.join("response.csv"), "y", &data.y)?;
    io::write_json(
        &out.join("truth.json"),
        &GeneratedTruth {
            schema_version: SCHEMA_VERSION,
            alpha: scenario.truth().alpha.iter().copied().collect(),
            reference: names[scenario.p - 1].clone(),
            components: names,
            replicate_index: replicate,
            scenario,
        },
    )
}

/// Count data after zero imputation, with the notes it produced.
#[derive(Debug, Clone)]
pub struct PreparedInputs {
    pub names: Vec<String>,
    pub counts: CountMatrix,
    pub replicates: Vec<CountMatrix>,
    pub reference: usize,
    pub warnings: Vec<String>,
}

/// Replaces zero cells by `value`; returns the affected column indices
/// and the number of cells changed.
fn impute_zeros(m: &mut DMatrix<f64>, value: f64) -> (Vec<usize>, usize) {
    let mut cols = Vec::new();
    let mut cells = 0;
    for (j, mut col) in m.column_iter_mut().enumerate() {
        let mut hit = false;
        for v in col.iter_mut() {
            if *v == 0.0 {
                *v = value;
                hit = true;
                cells += 1;
            }
        }
        if hit {
            cols.push(j);
        }
    }
    (cols, cells)
}

fn load_counts(path: &Path, impute: f64, warnings: &mut Vec<String>) -> Result<io::LabeledMatrix> {
    let mut m = io::read_matrix(path)?;
    if let Some(v) = m.values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::invalid(format!(
            "{}: counts must be finite and non-negative, found {v}",
            path.display()
        )));
    }
    let (cols, cells) = impute_zeros(&mut m.values, impute);
    if cells > 0 {
        let named: Vec<&str> = cols.iter().map(|&j| m.names[j].as_str()).collect();
        let msg = format!(
            "{}: {cells} zero cells in {} columns ({}) replaced by {impute}",
            path.display(),
            cols.len(),
            named.join(", ")
        );
        warn!("{msg}");
        warnings.push(msg);
    }
    Ok(m)
}

/// Reads counts and replicates, imputes zeros and checks alignment.
pub fn prepare_inputs(cfg: &AnalysisConfig) -> Result<PreparedInputs> {
    cfg.validate()?;
    let mut warnings = Vec::new();
    let counts = load_counts(&cfg.counts_path, cfg.zero_impute_value, &mut warnings)?;
    let mut replicates = Vec::with_capacity(cfg.replicate_paths.len());
    for path in &cfg.replicate_paths {
        let r = load_counts(path, cfg.zero_impute_value, &mut warnings)?;
        if r.names != counts.names {
            return Err(Error::invalid(format!(
                "{}: component names differ from the counts file",
                path.display()
            )));
        }
        if r.values.nrows() != counts.values.nrows() {
            return Err(Error::invalid(format!(
                "{}: {} rows, counts file has {}",
                path.display(),
                r.values.nrows(),
                counts.values.nrows()
            )));
        }
        replicates.push(CountMatrix::new(r.values)?);
    }
    let reference = match &cfg.reference_component {
        Some(spec) => spec.resolve(&counts.names)?,
        None => counts.names.len() - 1,
    };
    Ok(PreparedInputs {
        counts: CountMatrix::new(counts.values)?,
        names: counts.names,
        replicates,
        reference,
        warnings,
    })
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::invalid(format!("{what}: matrix must be square")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Estimated nuisances in a form `analyze --nuisance-file` reads back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceBundle {
    pub schema_version: u32,
    pub version: String,
    pub components: Vec<String>,
    pub reference: String,
    pub cov_estimator: CovEstimator,
    pub error_structure: ErrorStructure,
    pub zero_impute_value: f64,
    pub n_subjects: usize,
    pub n_replicates: usize,
    pub sigma_u_sq: f64,
    pub mu_x: Vec<f64>,
    /// Row-major, after eigenvalue repair.
    pub sigma_x: Vec<Vec<f64>>,
    /// Smallest eigenvalue of the raw estimate.
    pub sigma_x_min_eigenvalue: f64,
    /// Whether the raw estimate needed eigenvalue repair.
    pub sigma_x_psd_repaired: bool,
    pub mu_ztilde: Vec<f64>,
    pub sigma_ztilde: Vec<Vec<f64>>,
}

impl NuisanceBundle {
    /// Log-contrast nuisances against `reference`, which need not be the
    /// reference the bundle was written with.
    pub fn to_nuisance(&self, names: &[String], reference: usize) -> Result<LogContrastNuisance> {
        if names != self.components.as_slice() {
            return Err(Error::invalid("nuisance file: components differ from the counts file"));
        }
        if self.mu_x.len() != names.len() {
            return Err(Error::invalid("nuisance file: mu_x length does not match components"));
        }
        let sigma_x = from_rows(&self.sigma_x, "nuisance file: sigma_x")?;
        Ok(to_logcontrast_nuisance(
            &DVector::from_vec(self.mu_x.clone()),
            &sigma_x,
            self.sigma_u_sq,
            reference,
        )?
        .with_error_structure(self.error_structure))
    }
}

/// σ²ᵤ from the replicates, then μₓ and Σₓ from the counts.
pub fn estimate_bundle(cfg: &AnalysisConfig, data: &PreparedInputs) -> Result<NuisanceBundle> {
    let mask: Vec<usize> = match &cfg.sigma_u_columns {
        None => (0..data.names.len()).collect(),
        Some(cols) => cols
            .iter()
            .map(|c| ReferenceSpec::Name(c.clone()).resolve(&data.names))
            .collect::<Result<_>>()?,
    };
    let s2 = estimate_sigma_u_masked(&ReplicateSet::new(data.replicates.clone())?, &mask)?;
    let mu_x = estimate_mu_x(&data.counts, s2);
    let raw = cfg.cov_estimator.estimate(&data.counts.log(), s2)?;
    let min_eig = linalg::min_eigenvalue(&raw.matrix);
    let sigma_x = raw.repaired(DEFAULT_PSD_FLOOR).matrix;
    let nuisance = to_logcontrast_nuisance(&mu_x, &sigma_x, s2, data.reference)?;
    Ok(NuisanceBundle {
        schema_version: SCHEMA_VERSION,
        version: version(),
        components: data.names.clone(),
        reference: data.names[data.reference].clone(),
        cov_estimator: cfg.cov_estimator,
        error_structure: cfg.error_structure,
        zero_impute_value: cfg.zero_impute_value,
        n_subjects: data.counts.n(),
        n_replicates: data.replicates.len(),
        sigma_u_sq: s2,
        mu_x: mu_x.iter().copied().collect(),
        sigma_x: to_rows(&sigma_x),
        sigma_x_min_eigenvalue: min_eig,
        sigma_x_psd_repaired: min_eig < DEFAULT_PSD_FLOOR,
        mu_ztilde: nuisance.mu_ztilde.iter().copied().collect(),
        sigma_ztilde: to_rows(&nuisance.sigma_ztilde),
    })
}

pub fn estimate_nuisance(cfg: &AnalysisConfig, out: &Path) -> Result<NuisanceBundle> {
    let data = prepare_inputs(cfg)?;
    let bundle = estimate_bundle(cfg, &data)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    io::write_json(out, &bundle)?;
    Ok(bundle)
}

/// One coefficient of one method in an analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub component: String,
    pub method: Method,
    pub estimate: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
    /// `p < 0.05`.
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodFit {
    pub method: Method,
    pub sigma_hat: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema_version: u32,
    pub version: String,
    pub config: AnalysisConfig,
    pub reference: String,
    pub n_subjects: usize,
    pub sigma_u_sq: f64,
    pub fits: Vec<MethodFit>,
    /// Sorted by component name, then method.
    pub rows: Vec<ResultRow>,
    pub warnings: Vec<String>,
}

/// Significance threshold for the `significant` flag.
pub const FLAG_P: f64 = 0.05;

fn rows_for(est: &DebiasedEstimate, names: &[String], level: f64) -> Result<Vec<ResultRow>> {
    Ok(coefficient_inference(est, level)?
        .into_iter()
        .map(|c| ResultRow {
            component: names[c.index].clone(),
            method: est.method,
            estimate: c.estimate,
            se: c.se,
            ci_low: c.ci_low,
            ci_high: c.ci_high,
            p_value: c.p_value,
            significant: c.p_value < FLAG_P,
        })
        .collect())
}

/// The full analysis: impute, estimate or load nuisances, calibrate, fit
/// the calibrated and uncalibrated debiased estimators.
pub fn analyze_record(cfg: &AnalysisConfig) -> Result<ResultRecord> {
    let data = prepare_inputs(cfg)?;
    let response_path = cfg
        .response_path
        .as_ref()
        .ok_or_else(|| Error::invalid("response: path is required"))?;
    let y = io::read_response(response_path)?;
    if y.len() != data.counts.n() {
        return Err(Error::invalid(format!(
            "response: {} rows, counts file has {}",
            y.len(),
            data.counts.n()
        )));
    }
    let nuisance = match &cfg.nuisance_path {
        Some(path) => io::read_json::<NuisanceBundle>(path)?.to_nuisance(&data.names, data.reference)?,
        None => estimate_bundle(cfg, &data)?.to_nuisance(&data.names, data.reference)?,
    };
    let v = log_contrast_counts(&data.counts, data.reference)?.into_values();
    let contrast_names: Vec<String> = (0..data.names.len())
        .filter(|&j| j != data.reference)
        .map(|j| data.names[j].clone())
        .collect();
    let opts = FitOptions::new(CvConfig::new(cfg.cv_folds, cfg.seed));
    let proposed = fit_proposed(&v, &y, &nuisance, NuisanceMode::Estimated, &opts)?;
    let delasso = fit_debiased_lasso(&v, &y, &opts)?;

    let mut rows = rows_for(&proposed, &contrast_names, cfg.level)?;
    rows.extend(rows_for(&delasso, &contrast_names, cfg.level)?);
    rows.sort_by(|a, b| {
        a.component
            .cmp(&b.component)
            .then(a.method.label().cmp(b.method.label()))
    });
    Ok(ResultRecord {
        schema_version: SCHEMA_VERSION,
        version: version(),
        config: cfg.clone(),
        reference: data.names[data.reference].clone(),
        n_subjects: data.counts.n(),
        sigma_u_sq: nuisance.sigma_u_sq,
        fits: [&proposed, &delasso]
            .iter()
            .map(|e| MethodFit {
                method: e.method,
                sigma_hat: e.sigma_hat,
                lambda: e.lambda,
            })
            .collect(),
        rows,
        warnings: data.warnings,
    })
}

const RESULT_HEADER: [&str; 8] = [
    "component",
    "method",
    "estimate",
    "se",
    "ci_low",
    "ci_high",
    "p_value",
    "significant",
];

pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let err = |e: csv::Error| Error::Parse(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(RESULT_HEADER).map_err(err)?;
    for r in rows {
        w.write_record([
            r.component.clone(),
            r.method.label().to_string(),
            r.estimate.to_string(),
            r.se.to_string(),
            r.ci_low.to_string(),
            r.ci_high.to_string(),
            r.p_value.to_string(),
            if r.significant { "*".to_string() } else { String::new() },
        ])
        .map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let err = |e: csv::Error| Error::Parse(format!("{}: {e}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(err)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(err)?;
        let num = |k: usize| {
            rec[k]
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("{}: bad {} '{}'", path.display(), RESULT_HEADER[k], &rec[k])))
        };
        rows.push(ResultRow {
            component: rec[0].to_string(),
            method: rec[1].parse()?,
            estimate: num(2)?,
            se: num(3)?,
            ci_low: num(4)?,
            ci_high: num(5)?,
            p_value: num(6)?,
            significant: &rec[7] == "*",
        });
    }
    Ok(rows)
}

/// Runs [`analyze_record`] and writes `results.json` and `results.csv`.
pub fn analyze(cfg: &AnalysisConfig, out: &Path) -> Result<ResultRecord> {
    let record = analyze_record(cfg)?;
    std::fs::create_dir_all(out)?;
    io::write_json(&out.join("results.json"), &record)?;
    write_results_csv(&out.join("results.csv"), &record.rows)?;
    Ok(record)
}
