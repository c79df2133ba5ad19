//! CSV and JSON readers and writers for the command-line tools.
//!
//! CSV files are UTF-8, comma-separated, with a header row and `.` as the
//! decimal mark. Floats are written in shortest round-trip form.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::inference::Method;
use crate::montecarlo::{CoefficientSummary, SummaryTable};

/// A subjects × components table with component names from the header.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    pub names: Vec<String>,
    pub values: DMatrix<f64>,
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Parse(format!("{}: {e}", path.display()))
}

fn parse_cell(path: &Path, row: usize, col: &str, cell: &str) -> Result<f64> {
    cell.trim().parse::<f64>().map_err(|_| {
        Error::Parse(format!(
            "{}: row {row}, column '{col}': '{cell}' is not a number",
            path.display()
        ))
    })
}

pub fn read_matrix(path: &Path) -> Result<LabeledMatrix> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if names.is_empty() {
        return Err(Error::Parse(format!("{}: missing header", path.display())));
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        for (cell, name) in rec.iter().zip(&names) {
            data.push(parse_cell(path, i + 1, name, cell)?);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Parse(format!("{}: no data rows", path.display())));
    }
    Ok(LabeledMatrix {
        values: DMatrix::from_row_slice(rows, names.len(), &data),
        names,
    })
}

/// Reads a single-column response file.
pub fn read_response(path: &Path) -> Result<DVector<f64>> {
    let m = read_matrix(path)?;
    if m.names.len() != 1 {
        return Err(Error::Parse(format!(
            "{}: response file must have exactly one column, found {}",
            path.display(),
            m.names.len()
        )));
    }
    Ok(m.values.column(0).into_owned())
}

pub fn write_matrix(path: &Path, names: &[String], values: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(names).map_err(|e| csv_error(path, e))?;
    for row in values.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_response(path: &Path, name: &str, y: &DVector<f64>) -> Result<()> {
    write_matrix(
        path,
        &[name.to_string()],
        &DMatrix::from_column_slice(y.len(), 1, y.as_slice()),
    )
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_path_to_error::deserialize(&mut serde_json::Deserializer::from_str(&text))
        .map_err(|e| Error::Parse(format!("{}: {}: {}", path.display(), e.path(), e.inner())))
}

const SUMMARY_HEADER: [&str; 8] = [
    "method",
    "index",
    "truth",
    "bias",
    "rmse",
    "mean_model_se",
    "empirical_sd",
    "coverage",
];

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// One row per coefficient × method, methods in a fixed order.
pub fn write_summary_csv(path: &Path, table: &SummaryTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(SUMMARY_HEADER).map_err(|e| csv_error(path, e))?;
    for r in &table.rows {
        w.write_record([
            r.method.label().to_string(),
            r.index.to_string(),
            r.truth.to_string(),
            r.bias.to_string(),
            r.rmse.to_string(),
            opt(r.mean_model_se),
            r.empirical_sd.to_string(),
            opt(r.coverage),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<CoefficientSummary>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let cell = |k: usize| parse_cell(path, i + 1, SUMMARY_HEADER[k], &rec[k]);
        let opt_cell = |k: usize| if rec[k].is_empty() { Ok(None) } else { cell(k).map(Some) };
        rows.push(CoefficientSummary {
            method: rec[0].parse::<Method>()?,
            index: rec[1]
                .parse()
                .map_err(|_| Error::Parse(format!("{}: row {}: bad index", path.display(), i + 1)))?,
            truth: cell(2)?,
            bias: cell(3)?,
            rmse: cell(4)?,
            mean_model_se: opt_cell(5)?,
            empirical_sd: cell(6)?,
            coverage: opt_cell(7)?,
        });
    }
    Ok(rows)
}

fn cell2(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"))
}

/// Aligned text table over the first `rows` coefficients: bias of all
/// methods, then RMSE, SE and coverage of the two inferential ones.
pub fn format_summary_table(table: &SummaryTable, rows: usize) -> String {
    let inferential = [Method::DebiasedLasso, Method::Proposed];
    let mut header = vec!["alpha".to_string(), "true".to_string()];
    header.extend(Method::ALL.iter().map(|m| format!("bias:{}", m.label())));
    for metric in ["rmse", "se", "cr"] {
        header.extend(inferential.iter().map(|m| format!("{metric}:{}", m.label())));
    }
    let q = table.rows.iter().map(|r| r.index + 1).max().unwrap_or(0);
    let mut lines = vec![header];
    for j in 0..rows.min(q) {
        let get = |m: Method| table.get(m, j);
        let mut line = vec![
            format!("{}", j + 1),
            format!("{:.2}", get(Method::Proposed).map_or(f64::NAN, |r| r.truth)),
        ];
        line.extend(Method::ALL.iter().map(|&m| cell2(get(m).map(|r| r.bias))));
        line.extend(inferential.iter().map(|&m| cell2(get(m).map(|r| r.rmse))));
        line.extend(inferential.iter().map(|&m| cell2(get(m).and_then(|r| r.mean_model_se))));
        line.extend(inferential.iter().map(|&m| cell2(get(m).and_then(|r| r.coverage))));
        lines.push(line);
    }
    let widths: Vec<usize> = (0..lines[0].len())
        .map(|k| lines.iter().map(|l| l[k].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for l in &lines {
        let cells: Vec<String> = l.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out.push_str(&format!(
        "replicates: {} completed, {} failed; nominal level {}\n",
        table.n_mc_completed, table.n_failed, table.level
    ));
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let names = vec!["a".to_string(), "b".to_string()];
        let values = DMatrix::from_row_slice(2, 2, &[0.1, 1.0 / 3.0, 1e-300, 12345.678]);
        write_matrix(&path, &names, &values).unwrap();
        let back = read_matrix(&path).unwrap();
        assert_eq!(back.names, names);
        assert_eq!(back.values, values);
    }

    #[test]
    fn bad_cell_is_located() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        std::fs::write(&path, "a,b\n1,2\n3,x\n").unwrap();
        let msg = read_matrix(&path).unwrap_err().to_string();
        assert!(msg.contains("row 2") && msg.contains("'b'"), "{msg}");
    }

    #[test]
    fn response_needs_one_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("y.csv");
        std::fs::write(&path, "y,z\n1,2\n").unwrap();
        assert!(read_response(&path).is_err());
    }
}
