use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::matrix::{correlation_matrix, standardize, DataMatrix};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Principal components of a standardized matrix.
#[derive(Debug, Clone)]
pub struct PcaResult {
    pub columns: Vec<String>,
    /// All `p` eigenvalues of the correlation matrix, descending.
    pub eigenvalues: Vec<f64>,
    /// Unit eigenvectors, `p x k`.
    pub eigenvectors: DMatrix<f64>,
    /// `eigenvector * sqrt(eigenvalue)`: the correlation of each feature
    /// with each component, `p x k`.
    pub loadings: DMatrix<f64>,
    /// Varimax-rotated loadings (equal to `loadings` when `k == 1`).
    pub rotated: DMatrix<f64>,
    /// Orthogonal `k x k` rotation with `rotated = loadings * rotation`.
    pub rotation: DMatrix<f64>,
    /// Projections of the rows onto the eigenvectors, `n x k`.
    pub scores: DMatrix<f64>,
    pub rotated_scores: DMatrix<f64>,
}

/// Descending eigenpairs of a symmetric matrix, eigenvalues clamped at 0 and
/// each eigenvector signed so its largest-magnitude entry is positive.
pub(crate) fn sorted_eigen(r: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(r.clone());
    let mut order: Vec<usize> = (0..r.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let mut vectors = DMatrix::zeros(r.nrows(), r.nrows());
    for (c, &i) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(i);
        let pivot = v.iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        vectors.set_column(c, &(v * sign));
    }
    (values, vectors)
}

/// PCA on the correlation matrix of `m`, keeping `k` components.
pub fn pca(m: &DataMatrix, k: usize) -> Result<PcaResult> {
    if !m.is_standardized(1e-6) {
        return Err(Error::NotStandardized("columns must have mean 0 and variance 1".into()));
    }
    let p = m.ncols();
    if k == 0 || k > p {
        return Err(Error::InvalidArgument(format!("cannot keep {k} of {p} components")));
    }
    let (eigenvalues, vectors) = sorted_eigen(&correlation_matrix(&m.values));
    let eigenvectors = vectors.columns(0, k).into_owned();
    let mut loadings = eigenvectors.clone();
    for c in 0..k {
        loadings.column_mut(c).scale_mut(eigenvalues[c].sqrt());
    }
    let (rotated, rotation) = if k >= 2 { varimax_rotate(&loadings) } else { (loadings.clone(), DMatrix::identity(k, k)) };
    let scores = &m.values * &eigenvectors;
    let rotated_scores = &scores * &rotation;
    Ok(PcaResult {
        columns: m.columns.clone(),
        eigenvalues,
        eigenvectors,
        loadings,
        rotated,
        rotation,
        scores,
        rotated_scores,
    })
}

/// Raw varimax criterion: summed per-column variance of squared loadings.
pub fn varimax_criterion(loadings: &DMatrix<f64>) -> f64 {
    let p = loadings.nrows() as f64;
    loadings
        .column_iter()
        .map(|c| {
            let sq: f64 = c.iter().map(|v| v * v).sum();
            let quad: f64 = c.iter().map(|v| v.powi(4)).sum();
            quad / p - (sq / p).powi(2)
        })
        .sum()
}

fn rotate_pair(m: &mut DMatrix<f64>, i: usize, j: usize, cos: f64, sin: f64) {
    for r in 0..m.nrows() {
        let (x, y) = (m[(r, i)], m[(r, j)]);
        m[(r, i)] = x * cos + y * sin;
        m[(r, j)] = -x * sin + y * cos;
    }
}

/// Orthogonal varimax rotation by pairwise planar sweeps. Each planar step
/// takes the optimal angle for its pair, so the criterion never decreases;
/// iteration stops once a full sweep gains less than 1e-8.
///
/// Returns the rotated loadings and the rotation `T` (`rotated = loadings * T`).
pub fn varimax_rotate(loadings: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let (p, k) = loadings.shape();
    let mut l = loadings.clone();
    let mut t = DMatrix::identity(k, k);
    if k < 2 {
        return (l, t);
    }
    let pf = p as f64;
    let mut criterion = varimax_criterion(&l);
    for _ in 0..1000 {
        for i in 0..k {
            for j in i + 1..k {
                let (mut a, mut b, mut c, mut d) = (0.0, 0.0, 0.0, 0.0);
                for r in 0..p {
                    let (x, y) = (l[(r, i)], l[(r, j)]);
                    let u = x * x - y * y;
                    let v = 2.0 * x * y;
                    a += u;
                    b += v;
                    c += u * u - v * v;
                    d += 2.0 * u * v;
                }
                let num = d - 2.0 * a * b / pf;
                let den = c - (a * a - b * b) / pf;
                let phi = num.atan2(den) / 4.0;
                if phi.abs() > 1e-15 {
                    let (sin, cos) = phi.sin_cos();
                    rotate_pair(&mut l, i, j, cos, sin);
                    rotate_pair(&mut t, i, j, cos, sin);
                }
            }
        }
        let next = varimax_criterion(&l);
        let gain = next - criterion;
        criterion = next;
        if gain < 1e-8 {
            break;
        }
    }
    // Make each rotated factor point towards its dominant loading.
    for c in 0..k {
        let pivot = l.column(c).iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
        if pivot < 0.0 {
            l.column_mut(c).neg_mut();
            t.column_mut(c).neg_mut();
        }
    }
    (l, t)
}

/// Orthogonal projector onto the column space of `a`.
pub fn projection_matrix(a: &DMatrix<f64>) -> DMatrix<f64> {
    let gram = a.transpose() * a;
    let inv = gram.try_inverse().expect("full column rank");
    a * inv * a.transpose()
}

/// Per-component threshold taken from the random eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Threshold {
    Mean,
    Quantile(f64),
}

impl Default for Threshold {
    fn default() -> Self {
        Threshold::Quantile(0.99)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParallelAnalysis {
    /// Eigenvalues of the data's correlation matrix, descending.
    pub real: Vec<f64>,
    /// Per-component threshold from the simulated data.
    pub random: Vec<f64>,
    /// Leading real eigenvalues strictly above their threshold.
    pub significant: usize,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Eigenvalues of the correlation matrix of `values` after standardization.
fn correlation_eigenvalues(values: DMatrix<f64>) -> Result<Vec<f64>> {
    let z = standardize(&DataMatrix::from_values(values)?)?.matrix;
    Ok(sorted_eigen(&correlation_matrix(&z.values)).0)
}

/// Parallel analysis: compares the data's eigenvalues with those of `reps`
/// standard-normal matrices of the same shape.
pub fn parallel_analysis(m: &DataMatrix, reps: usize, threshold: Threshold, rng: &mut Rng) -> Result<ParallelAnalysis> {
    use rand::Rng as _;
    if reps < 20 {
        return Err(Error::InvalidArgument(format!("parallel analysis needs at least 20 replicates, got {reps}")));
    }
    let z = standardize(m)?.matrix;
    let real = sorted_eigen(&correlation_matrix(&z.values)).0;
    let (n, p) = (z.nrows(), z.ncols());
    let base: u64 = rng.random();
    let sims: Vec<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut r = rng::stream(base, &[rep as u64]);
            let values = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut r));
            correlation_eigenvalues(values)
        })
        .collect::<Result<_>>()?;
    let random: Vec<f64> = (0..p)
        .map(|c| {
            let mut col: Vec<f64> = sims.iter().map(|s| s[c]).collect();
            match threshold {
                Threshold::Mean => col.iter().sum::<f64>() / col.len() as f64,
                Threshold::Quantile(q) => {
                    col.sort_by(f64::total_cmp);
                    quantile(&col, q)
                }
            }
        })
        .collect();
    let significant = real.iter().zip(&random).take_while(|(r, t)| r > t).count();
    Ok(ParallelAnalysis { real, random, significant })
}
