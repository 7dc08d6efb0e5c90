//! Standardization, PCA with varimax rotation, parallel analysis, CCA and the
//! non-parametric tests used to compare game embeddings.

mod cca;
mod matrix;
mod pca;
mod stats;

pub use cca::{cca, CcaResult, DEFAULT_RIDGE};
pub use matrix::{correlation_matrix, standardize, DataMatrix, Standardized};
pub use pca::{
    parallel_analysis, pca, projection_matrix, varimax_criterion, varimax_rotate, ParallelAnalysis, PcaResult,
    Threshold,
};
pub use stats::{
    bonferroni, fisher_exact_2x2, Bonferroni, homogeneity_test, mann_whitney_clustering, mann_whitney_u, pairwise_distances,
    ContingencyTable, TestResult,
};
