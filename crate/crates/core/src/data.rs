//! Regression datasets and their CSV form.
//!
//! The CSV layout is the usual benchmark one: a header row, numeric cells,
//! target in the last column.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::math::Mat;

/// Covariates `x` (one row per observation) and targets `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Mat,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: Mat, y: Vec<f64>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::shape(format!(
                "{} covariate rows but {} targets",
                x.rows(),
                y.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite target"));
        }
        Ok(Dataset { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
        }
    }

    /// Same covariates, new targets.
    pub fn with_targets(&self, y: Vec<f64>) -> Result<Dataset> {
        Dataset::new(self.x.clone(), y)
    }

    /// SHA-256 over the little-endian bytes of all cells, row by row.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.x.rows() as u64).to_le_bytes());
        h.update((self.x.cols() as u64).to_le_bytes());
        for (row, y) in self.x.iter_rows().zip(&self.y) {
            for v in row {
                h.update(v.to_le_bytes());
            }
            h.update(y.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// A dataset read from CSV, with its column names.
#[derive(Debug, Clone)]
pub struct CsvDataset {
    pub header: Vec<String>,
    pub data: Dataset,
}

/// Reads a numeric CSV with a header; the last column is the target.
///
/// Rejects empty files, ragged rows and non-numeric cells, naming the
/// offending line.
pub fn read_csv(path: impl AsRef<Path>) -> Result<CsvDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, path)
}

pub(crate) fn parse_csv(text: &str, path: &Path) -> Result<CsvDataset> {
    let parse_err = |line: usize, detail: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        detail,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.len() < 2 {
        return Err(parse_err(1, "need at least one feature and a target column".into()));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != header.len() {
            return Err(parse_err(
                line,
                format!("{} cells, header has {}", record.len(), header.len()),
            ));
        }
        let mut row = Vec::with_capacity(header.len() - 1);
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(line, format!("column `{}`: `{cell}` is not numeric", header[col])))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("column `{}`: non-finite value", header[col])));
            }
            if col + 1 == header.len() {
                ys.push(v);
            } else {
                row.push(v);
            }
        }
        xs.extend(row);
    }
    if ys.is_empty() {
        return Err(parse_err(2, "no data rows".into()));
    }
    let x = Mat::from_vec(ys.len(), header.len() - 1, xs)?;
    Ok(CsvDataset {
        header,
        data: Dataset::new(x, ys)?,
    })
}

/// Writes `data` as CSV with the given header (features then target).
pub fn write_csv(path: impl AsRef<Path>, header: &[String], data: &Dataset) -> Result<()> {
    let path = path.as_ref();
    if header.len() != data.dim() + 1 {
        return Err(Error::shape(format!(
            "header has {} names for {} columns",
            header.len(),
            data.dim() + 1
        )));
    }
    let mut out = Vec::new();
    writeln!(out, "{}", header.join(",")).expect("write to Vec");
    for (row, y) in data.x.iter_rows().zip(&data.y) {
        for v in row {
            write!(out, "{v},").expect("write to Vec");
        }
        writeln!(out, "{y}").expect("write to Vec");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<CsvDataset> {
        parse_csv(text, Path::new("mem.csv"))
    }

    #[test]
    fn last_column_is_target() {
        let d = parse("a,b,y\n1,2,3\n4,5,6\n").unwrap();
        assert_eq!(d.header, ["a", "b", "y"]);
        assert_eq!(d.data.y, [3.0, 6.0]);
        assert_eq!(d.data.x.row(1), &[4.0, 5.0]);
    }

    #[test]
    fn non_numeric_cell_names_the_line() {
        let err = parse("a,y\n1,2\n3,oops\n").unwrap_err();
        match err {
            Error::Parse { line, detail, .. } => {
                assert_eq!(line, 3);
                assert!(detail.contains("oops"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_and_empty_rejected() {
        assert!(parse("a,y\n1,2\n3\n").is_err());
        assert!(parse("a,y\n").is_err());
        assert!(parse("y\n1\n").is_err());
    }

    #[test]
    fn write_then_read_is_exact() {
        let x = Mat::from_rows(&[[0.1, 1.0 / 3.0], [-2.5e-8, 7.0]]).unwrap();
        let d = Dataset::new(x, vec![std::f64::consts::PI, -1.0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        write_csv(&p, &["u".into(), "v".into(), "y".into()], &d).unwrap();
        let back = read_csv(&p).unwrap();
        assert_eq!(back.data, d);
        assert_eq!(back.data.digest(), d.digest());
    }
}
