//! Observation matrices and column standardization.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{BincoError, Result};

/// An `n x p` matrix of observations (rows are samples, columns variables)
/// together with the variable names.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    names: Vec<String>,
}

impl DataMatrix {
    /// Wraps raw values without standardizing them. Names default to `V1..Vp`.
    pub fn new(values: DMatrix<f64>, names: Option<Vec<String>>) -> Result<Self> {
        let (n, p) = values.shape();
        if n < 2 || p < 2 {
            return Err(BincoError::TooSmall { rows: n, cols: p });
        }
        for col in 0..p {
            for row in 0..n {
                if !values[(row, col)].is_finite() {
                    return Err(BincoError::NonFiniteInput { row, col });
                }
            }
        }
        let names = match names {
            Some(names) if names.len() == p => names,
            Some(names) => {
                return Err(BincoError::DimensionMismatch(format!(
                    "{} names for {} columns",
                    names.len(),
                    p
                )))
            }
            None => (1..=p).map(|j| format!("V{j}")).collect(),
        };
        Ok(Self { values, names })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Keeps the rows listed in `rows` (duplicates allowed), in order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<DataMatrix> {
        let n = self.n();
        if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
            return Err(BincoError::IndexOutOfRange {
                index: bad + 1,
                count: n,
            });
        }
        let values = DMatrix::from_fn(rows.len(), self.p(), |r, c| self.values[(rows[r], c)]);
        DataMatrix::new(values, Some(self.names.clone()))
    }

    /// Cross-product `X^T X`.
    pub fn gram(&self) -> DMatrix<f64> {
        self.values.tr_mul(&self.values)
    }

    /// Reads a delimited text table whose first row holds variable names.
    /// Commas, tabs and runs of whitespace are all accepted as delimiters.
    pub fn read_delimited<R: Read>(mut reader: R) -> Result<Self> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| BincoError::Parse("empty input".into()))?;
        let split = |line: &str| -> Vec<String> {
            if line.contains(',') {
                line.split(',').map(|s| s.trim().to_string()).collect()
            } else if line.contains('\t') {
                line.split('\t').map(|s| s.trim().to_string()).collect()
            } else {
                line.split_whitespace().map(str::to_string).collect()
            }
        };
        let names: Vec<String> = split(header)
            .into_iter()
            .map(|s| s.trim_matches('"').to_string())
            .collect();
        let p = names.len();
        let mut flat = Vec::new();
        let mut n = 0;
        for (lineno, line) in lines.enumerate() {
            let fields = split(line);
            if fields.len() != p {
                return Err(BincoError::Parse(format!(
                    "row {} has {} fields, header has {}",
                    lineno + 2,
                    fields.len(),
                    p
                )));
            }
            for (col, field) in fields.iter().enumerate() {
                let v: f64 = field
                    .parse()
                    .map_err(|_| BincoError::Parse(format!("row {}, column {}: '{}'", lineno + 2, col + 1, field)))?;
                flat.push(v);
            }
            n += 1;
        }
        let values = DMatrix::from_row_slice(n, p, &flat);
        DataMatrix::new(values, Some(names))
    }

    pub fn read_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_delimited(std::io::BufReader::new(file))
    }

    /// Writes the matrix as CSV with a header row of names.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", self.names.join(","))?;
        for row in 0..self.n() {
            let line: Vec<String> = (0..self.p()).map(|c| format!("{}", self.values[(row, c)])).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Centers every column to mean zero and scales it to unit standard deviation
/// (denominator `n - 1`).
pub fn standardize(raw: &DataMatrix) -> Result<DataMatrix> {
    let (n, p) = raw.values.shape();
    let mut values = raw.values.clone();
    for col in 0..p {
        let mut column = values.column_mut(col);
        let mean = column.iter().sum::<f64>() / n as f64;
        column.iter_mut().for_each(|v| *v -= mean);
        // second pass removes the residual rounding in the mean
        let resid = column.iter().sum::<f64>() / n as f64;
        column.iter_mut().for_each(|v| *v -= resid);
        let ss: f64 = column.iter().map(|v| v * v).sum();
        let sd = (ss / (n - 1) as f64).sqrt();
        let scale = column.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if sd == 0.0 || !sd.is_finite() || scale == 0.0 || sd <= 1e-12 * scale.max(mean.abs()) {
            return Err(BincoError::ZeroVarianceColumn(col));
        }
        column.iter_mut().for_each(|v| *v /= sd);
    }
    DataMatrix::new(values, Some(raw.names.clone()))
}

/// Standardizes a raw matrix given as plain values.
pub fn standardize_values(raw: DMatrix<f64>) -> Result<DataMatrix> {
    standardize(&DataMatrix::new(raw, None)?)
}
