//! File input and output: JSON documents, CSV tables with a provenance line,
//! and raw time-series CSVs.

use std::fs;
use std::path::Path;

use ndss_core::DMatrix;
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const VERSION: &str = concat!("ndss ", env!("CARGO_PKG_VERSION"));

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Schema(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Hex SHA-256 of the canonical JSON form of `spec`.
pub fn spec_hash<T: Serialize>(spec: &T) -> String {
    let bytes = serde_json::to_vec(spec).expect("specs serialize");
    hex::encode(Sha256::digest(&bytes))
}

/// Compact seed list: `a-b` for a consecutive run, otherwise comma separated.
pub fn describe_seeds(seeds: &[u64]) -> String {
    let consecutive = seeds.windows(2).all(|w| w[1] == w[0].wrapping_add(1));
    match seeds {
        [] => String::new(),
        [one] => one.to_string(),
        [first, .., last] if consecutive => format!("{first}-{last}"),
        _ => seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(" "),
    }
}

/// Formats a value for CSV; `nan` marks an estimate that does not exist.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v}")
    }
}

/// A CSV table: header plus rows already in their final order.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(file: &str, header: &[&str]) -> Self {
        Table { file: file.to_string(), header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Writes `# provenance` then the header and rows into `dir/file`.
    pub fn write(&self, dir: &Path, provenance: &str) -> CliResult<()> {
        let path = dir.join(&self.file);
        let mut buf = format!("# {provenance}\n").into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            let csv_err = |e: csv::Error| CliError::Schema(e.to_string());
            w.write_record(&self.header).map_err(csv_err)?;
            for row in &self.rows {
                w.write_record(row).map_err(csv_err)?;
            }
            w.flush().map_err(|e| CliError::io(&path, e))?;
        }
        fs::write(&path, buf).map_err(|e| CliError::io(&path, e))
    }
}

/// Time series read from CSV: columns `u_*` become inputs, `y_*` outputs,
/// one row per step. Lines starting with `#` are skipped.
pub struct Series {
    pub inputs: Option<DMatrix<f64>>,
    pub outputs: DMatrix<f64>,
}

pub fn read_series(path: &Path) -> CliResult<Series> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let schema = |msg: String| CliError::Schema(format!("{}: {msg}", path.display()));
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| schema(e.to_string()))?.clone();
    let u_cols: Vec<usize> = header.iter().enumerate().filter(|(_, h)| h.starts_with('u')).map(|(i, _)| i).collect();
    let y_cols: Vec<usize> = header.iter().enumerate().filter(|(_, h)| h.starts_with('y')).map(|(i, _)| i).collect();
    if y_cols.is_empty() {
        return Err(schema("no y_* columns".into()));
    }
    let mut u_rows: Vec<Vec<f64>> = Vec::new();
    let mut y_rows: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| schema(e.to_string()))?;
        let parse = |i: usize| -> CliResult<f64> {
            rec.get(i)
                .unwrap_or("")
                .parse::<f64>()
                .map_err(|e| schema(format!("row {}, column {}: {e}", line + 1, &header[i])))
        };
        u_rows.push(u_cols.iter().map(|&i| parse(i)).collect::<CliResult<_>>()?);
        y_rows.push(y_cols.iter().map(|&i| parse(i)).collect::<CliResult<_>>()?);
    }
    if y_rows.is_empty() {
        return Err(schema("no data rows".into()));
    }
    let to_matrix = |rows: &[Vec<f64>], width: usize| DMatrix::from_fn(width, rows.len(), |i, k| rows[k][i]);
    Ok(Series {
        inputs: (!u_cols.is_empty()).then(|| to_matrix(&u_rows, u_cols.len())),
        outputs: to_matrix(&y_rows, y_cols.len()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_descriptions() {
        assert_eq!(describe_seeds(&[0, 1, 2, 3]), "0-3");
        assert_eq!(describe_seeds(&[7]), "7");
        assert_eq!(describe_seeds(&[1, 5, 9]), "1 5 9");
    }

    #[test]
    fn table_has_provenance_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new("t.csv", &["a", "b"]);
        t.push(vec!["1".into(), fmt_f64(f64::NAN)]);
        t.write(dir.path(), "spec-hash=x").unwrap();
        let text = fs::read_to_string(dir.path().join("t.csv")).unwrap();
        assert_eq!(text, "# spec-hash=x\na,b\n1,nan\n");
    }

    #[test]
    fn series_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        fs::write(&p, "# note\nk,u_1,y_1,y_2\n0,1,2,3\n1,4,5,6\n").unwrap();
        let s = read_series(&p).unwrap();
        assert_eq!(s.inputs.unwrap(), DMatrix::from_row_slice(1, 2, &[1.0, 4.0]));
        assert_eq!(s.outputs, DMatrix::from_row_slice(2, 2, &[2.0, 5.0, 3.0, 6.0]));
    }
}
