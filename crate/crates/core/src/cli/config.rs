//! Versioned scenario files (TOML or JSON) and analysis settings.

use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::covariance::{CovEstimator, ErrorStructure};
use crate::error::{Error, Result};
use crate::montecarlo::SimulationScenario;

/// Schema version written to and expected in every config and output file.
pub const SCHEMA_VERSION: u32 = 1;

/// Parses a TOML or JSON document into a JSON value. The format follows
/// the file extension; `.json` is JSON, anything else TOML.
fn parse_document(path: &Path, text: &str) -> Result<serde_json::Value> {
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    } else {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        serde_json::to_value(table).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Deserializes `value`, reporting failures as `field: reason`.
fn typed<T: DeserializeOwned>(value: serde_json::Value) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            Error::invalid(e.inner().to_string())
        } else {
            Error::invalid(format!("{path}: {}", e.inner()))
        }
    })
}

/// Removes and checks the `schema_version` key.
fn take_schema_version(value: &mut serde_json::Value) -> Result<()> {
    let obj = value
        .as_object_mut()
        .ok_or_else(|| Error::invalid("config must be a table of fields"))?;
    match obj.remove("schema_version") {
        None => Err(Error::invalid("schema_version: missing")),
        Some(v) if v.as_u64() == Some(SCHEMA_VERSION as u64) => Ok(()),
        Some(v) => Err(Error::invalid(format!(
            "schema_version: unsupported value {v} (expected {SCHEMA_VERSION})"
        ))),
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<SimulationScenario> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(path, &text)
}

pub fn parse_scenario(path: &Path, text: &str) -> Result<SimulationScenario> {
    let mut value = parse_document(path, text)?;
    take_schema_version(&mut value)?;
    let scenario: SimulationScenario = typed(value)?;
    scenario.validate()?;
    Ok(scenario)
}

/// Renders a scenario as a TOML config, schema version first.
pub fn scenario_to_toml(scenario: &SimulationScenario) -> Result<String> {
    let body = toml::to_string(scenario).map_err(|e| Error::Parse(e.to_string()))?;
    Ok(format!("schema_version = {SCHEMA_VERSION}\n{body}"))
}

/// How the reference component is named on the command line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReferenceSpec {
    Name(String),
    Index(usize),
}

impl ReferenceSpec {
    /// A component name wins over a numeric reading; otherwise a plain
    /// integer is a 1-based column index.
    pub fn parse(s: &str) -> Self {
        match s.parse::<usize>() {
            Ok(i) => Self::Index(i),
            Err(_) => Self::Name(s.to_string()),
        }
    }

    pub fn resolve(&self, names: &[String]) -> Result<usize> {
        match self {
            Self::Name(n) => names
                .iter()
                .position(|c| c == n)
                .ok_or_else(|| Error::invalid(format!("reference: no component named '{n}'"))),
            Self::Index(i) => {
                if let Some(pos) = names.iter().position(|c| c == &i.to_string()) {
                    return Ok(pos);
                }
                if (1..=names.len()).contains(i) {
                    Ok(i - 1)
                } else {
                    Err(Error::invalid(format!(
                        "reference: index {i} out of range for {} components",
                        names.len()
                    )))
                }
            }
        }
    }
}

/// Inputs and knobs shared by `analyze` and `estimate-nuisance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub counts_path: PathBuf,
    pub replicate_paths: Vec<PathBuf>,
    pub response_path: Option<PathBuf>,
    /// Defaults to the last component.
    pub reference_component: Option<ReferenceSpec>,
    pub zero_impute_value: f64,
    pub cov_estimator: CovEstimator,
    pub error_structure: ErrorStructure,
    /// Components used to estimate σ²ᵤ; all when `None`.
    pub sigma_u_columns: Option<Vec<String>>,
    pub level: f64,
    pub cv_folds: usize,
    pub seed: u64,
    pub nuisance_path: Option<PathBuf>,
}

impl AnalysisConfig {
    pub fn new(counts_path: PathBuf, replicate_paths: Vec<PathBuf>) -> Self {
        Self {
            counts_path,
            replicate_paths,
            response_path: None,
            reference_component: None,
            zero_impute_value: 0.1,
            cov_estimator: CovEstimator::default(),
            error_structure: ErrorStructure::default(),
            sigma_u_columns: None,
            level: 0.95,
            cv_folds: 10,
            seed: 0,
            nuisance_path: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.counts_path.as_os_str().is_empty() {
            return Err(Error::invalid("counts: path is empty"));
        }
        if self.replicate_paths.iter().any(|p| p.as_os_str().is_empty()) {
            return Err(Error::invalid("replicates: empty path"));
        }
        if self.nuisance_path.is_none() && self.replicate_paths.len() < 2 {
            return Err(Error::InsufficientReplicates(self.replicate_paths.len()));
        }
        if !(self.zero_impute_value > 0.0 && self.zero_impute_value.is_finite()) {
            return Err(Error::invalid(format!(
                "impute: {} must be a positive number",
                self.zero_impute_value
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::invalid(format!("level: {} must lie in (0, 1)", self.level)));
        }
        if self.cv_folds < 2 {
            return Err(Error::invalid(format!("cv_folds: {} must be >= 2", self.cv_folds)));
        }
        Ok(())
    }
}
