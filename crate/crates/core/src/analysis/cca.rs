use nalgebra::DMatrix;

use super::matrix::DataMatrix;
use super::pca::sorted_eigen;
use crate::error::{Error, Result};

/// Ridge added to each within-set covariance, relative to its mean diagonal.
pub const DEFAULT_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct CcaResult {
    /// Canonical correlations, descending, each in `[0, 1]`.
    pub correlations: Vec<f64>,
    pub x_weights: DMatrix<f64>,
    pub y_weights: DMatrix<f64>,
    /// Row projections, `n x k`.
    pub x_projections: DMatrix<f64>,
    pub y_projections: DMatrix<f64>,
    /// Correlation of each feature with its own set's canonical variates.
    pub x_loadings: DMatrix<f64>,
    pub y_loadings: DMatrix<f64>,
}

fn covariance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.transpose() * b / (a.nrows() as f64 - 1.0)
}

fn ridged(s: DMatrix<f64>, ridge: f64) -> DMatrix<f64> {
    let p = s.nrows();
    let lambda = ridge * s.trace() / p as f64;
    s + DMatrix::identity(p, p) * lambda
}

fn inverse_sqrt(s: &DMatrix<f64>) -> DMatrix<f64> {
    let (values, vectors) = sorted_eigen(s);
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        values.len(),
        values.iter().map(|v| 1.0 / v.max(f64::MIN_POSITIVE).sqrt()),
    ));
    &vectors * d * vectors.transpose()
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

fn loadings(data: &DMatrix<f64>, proj: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(data.ncols(), proj.ncols(), |j, c| {
        let f: Vec<f64> = data.column(j).iter().copied().collect();
        let u: Vec<f64> = proj.column(c).iter().copied().collect();
        correlation(&f, &u)
    })
}

/// Canonical correlation analysis between two standardized sets measured on
/// the same rows, keeping `k` pairs of canonical variates.
pub fn cca(x: &DataMatrix, y: &DataMatrix, k: usize, ridge: f64) -> Result<CcaResult> {
    if x.nrows() != y.nrows() {
        return Err(Error::RowCountMismatch { left: x.nrows(), right: y.nrows() });
    }
    for m in [x, y] {
        if !m.is_standardized(1e-6) {
            return Err(Error::NotStandardized("CCA inputs must be standardized".into()));
        }
    }
    let max_k = x.ncols().min(y.ncols());
    if k == 0 || k > max_k {
        return Err(Error::InvalidArgument(format!("cannot keep {k} of {max_k} canonical pairs")));
    }
    let (xv, yv) = (&x.values, &y.values);
    let sxx = ridged(covariance(xv, xv), ridge);
    let syy = ridged(covariance(yv, yv), ridge);
    let sxy = covariance(xv, yv);
    let syy_inv = syy.try_inverse().ok_or_else(|| Error::InvalidArgument("singular Y covariance".into()))?;
    let sxx_is = inverse_sqrt(&sxx);
    let m = &sxx_is * &sxy * &syy_inv * sxy.transpose() * &sxx_is;
    let m = (&m + m.transpose()) * 0.5;
    let (_, e) = sorted_eigen(&m);
    let x_weights = &sxx_is * e.columns(0, k);
    let y_weights = &syy_inv * sxy.transpose() * &x_weights;
    let x_projections = xv * &x_weights;
    let y_projections = yv * &y_weights;
    let correlations = (0..k)
        .map(|c| {
            let u: Vec<f64> = x_projections.column(c).iter().copied().collect();
            let v: Vec<f64> = y_projections.column(c).iter().copied().collect();
            correlation(&u, &v).clamp(0.0, 1.0)
        })
        .collect();
    Ok(CcaResult {
        correlations,
        x_loadings: loadings(xv, &x_projections),
        y_loadings: loadings(yv, &y_projections),
        x_weights,
        y_weights,
        x_projections,
        y_projections,
    })
}
