use log::warn;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Labelled `n x p` data: one row per environment, one column per feature.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    pub values: DMatrix<f64>,
}

impl DataMatrix {
    pub fn new(rows: Vec<String>, columns: Vec<String>, values: DMatrix<f64>) -> Result<DataMatrix> {
        if values.nrows() != rows.len() || values.ncols() != columns.len() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} values for {} rows and {} columns",
                values.nrows(),
                values.ncols(),
                rows.len(),
                columns.len()
            )));
        }
        if values.nrows() < 2 || values.ncols() < 1 {
            return Err(Error::DimensionMismatch("need at least 2 rows and 1 column".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite value in data matrix".into()));
        }
        Ok(DataMatrix { rows, columns, values })
    }

    /// Unlabelled matrix; rows and columns get their indices as names.
    pub fn from_values(values: DMatrix<f64>) -> Result<DataMatrix> {
        let rows = (0..values.nrows()).map(|i| i.to_string()).collect();
        let columns = (0..values.ncols()).map(|j| format!("f{:02}", j + 1)).collect();
        DataMatrix::new(rows, columns, values)
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    /// Whether every column has mean 0 and sample variance 1.
    pub fn is_standardized(&self, tol: f64) -> bool {
        let n = self.nrows() as f64;
        self.values.column_iter().all(|c| {
            let mean = c.sum() / n;
            let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            mean.abs() < tol && (var - 1.0).abs() < tol
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub matrix: DataMatrix,
    /// Constant columns removed before scaling.
    pub dropped: Vec<String>,
}

/// Centres every column and scales it to unit sample variance (divisor
/// `n - 1`). Constant columns are dropped with a warning.
pub fn standardize(m: &DataMatrix) -> Result<Standardized> {
    let n = m.nrows() as f64;
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    let mut stats = Vec::new();
    for (j, col) in m.values.column_iter().enumerate() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let scale = col.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
        if var.sqrt() <= 1e-12 * scale {
            warn!("dropping constant column `{}`", m.columns[j]);
            dropped.push(m.columns[j].clone());
        } else {
            keep.push(j);
            stats.push((mean, var.sqrt()));
        }
    }
    if keep.is_empty() {
        return Err(Error::AllConstant);
    }
    let values = DMatrix::from_fn(m.nrows(), keep.len(), |i, k| {
        let (mean, sd) = stats[k];
        (m.values[(i, keep[k])] - mean) / sd
    });
    let columns = keep.iter().map(|&j| m.columns[j].clone()).collect();
    Ok(Standardized { matrix: DataMatrix::new(m.rows.clone(), columns, values)?, dropped })
}

/// Sample correlation matrix of already standardized data.
pub fn correlation_matrix(z: &DMatrix<f64>) -> DMatrix<f64> {
    let r = z.transpose() * z / (z.nrows() as f64 - 1.0);
    (&r + r.transpose()) * 0.5
}
