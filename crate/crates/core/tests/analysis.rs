use gamespace::analysis::{
    bonferroni, cca, correlation_matrix, fisher_exact_2x2, homogeneity_test, mann_whitney_clustering, mann_whitney_u,
    parallel_analysis, pca, projection_matrix, standardize, varimax_criterion, varimax_rotate, ContingencyTable,
    DataMatrix, TestResult, Threshold, DEFAULT_RIDGE,
};
use gamespace::rng::{stream, Rng};
use gamespace::Error;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

fn normal_matrix(n: usize, p: usize, rng: &mut Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(rng))
}

fn standardized(values: DMatrix<f64>) -> DataMatrix {
    standardize(&DataMatrix::from_values(values).unwrap()).unwrap().matrix
}

// ------------------------------------------------------------ eigen oracle

/// Number of eigenvalues of symmetric `a` below `x`, by Sylvester's law of
/// inertia: the negative pivots of an LDL^T factorization of `a - xI`.
fn count_below(a: &DMatrix<f64>, x: f64) -> usize {
    let n = a.nrows();
    let mut m = a.clone();
    for i in 0..n {
        m[(i, i)] -= x;
    }
    let mut negatives = 0;
    for k in 0..n {
        let mut pivot = m[(k, k)];
        if pivot == 0.0 {
            pivot = -1e-300;
        }
        if pivot < 0.0 {
            negatives += 1;
        }
        for i in k + 1..n {
            let f = m[(i, k)] / pivot;
            for j in k + 1..n {
                m[(i, j)] -= f * m[(k, j)];
            }
        }
    }
    negatives
}

/// Eigenvalues of `a` in descending order by bisection on the inertia count.
fn bisection_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let bound = (0..n).map(|i| (0..n).map(|j| a[(i, j)].abs()).sum::<f64>()).fold(0.0, f64::max) + 1.0;
    let mut out: Vec<f64> = (0..n)
        .map(|k| {
            // k-th smallest eigenvalue: smallest x with count_below(x) > k
            let (mut lo, mut hi) = (-bound, bound);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if count_below(a, mid) > k {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect();
    out.reverse();
    out
}

fn gram(z: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = z.shape();
    DMatrix::from_fn(p, p, |i, j| (0..n).map(|r| z[(r, i)] * z[(r, j)]).sum::<f64>() / (n - 1) as f64)
}

#[test]
fn eigenvalues_match_the_bisection_oracle() {
    let mut rng = stream(1, &[]);
    for trial in 0..100 {
        let p = 2 + trial % 5;
        let n = p + 3 + trial % 7;
        let z = standardized(normal_matrix(n, p, &mut rng));
        let r = pca(&z, p).unwrap();
        let oracle = bisection_eigenvalues(&gram(&z.values));
        for (got, want) in r.eigenvalues.iter().zip(&oracle) {
            assert!((got - want.max(0.0)).abs() < 1e-7, "trial {trial}: {got} vs {want}");
        }
    }
}

#[test]
fn full_pca_reconstructs_the_correlation_matrix() {
    let mut rng = stream(2, &[]);
    for _ in 0..20 {
        let z = standardized(normal_matrix(10, 5, &mut rng));
        let r = pca(&z, 5).unwrap();
        let rebuilt = &r.loadings * r.loadings.transpose();
        assert!((rebuilt - gram(&z.values)).abs().max() < 1e-8);
        assert!((r.eigenvalues.iter().sum::<f64>() - 5.0).abs() < 1e-9);
        assert!(r.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        assert!(r.eigenvalues.iter().all(|&v| v >= 0.0));
        assert!(r.loadings.iter().all(|v| v.abs() <= 1.0 + 1e-9));
        let vtv = r.eigenvectors.transpose() * &r.eigenvectors;
        assert!((vtv - DMatrix::<f64>::identity(5, 5)).abs().max() < 1e-9);
    }
}

#[test]
fn correlation_matrix_of_standardized_data_is_the_gram_matrix() {
    let mut rng = stream(3, &[]);
    let z = standardized(normal_matrix(30, 4, &mut rng));
    assert!((correlation_matrix(&z.values) - gram(&z.values)).abs().max() < 1e-12);
}

// --------------------------------------------------------------- rotation

#[test]
fn rotation_keeps_the_projection() {
    let mut rng = stream(4, &[]);
    for _ in 0..20 {
        let z = standardized(normal_matrix(72, 16, &mut rng));
        let r = pca(&z, 2).unwrap();
        let before = projection_matrix(&r.loadings);
        let after = projection_matrix(&r.rotated);
        assert!((before - after).abs().max() < 1e-8);
    }
}

#[test]
fn varimax_recovers_a_rotated_simple_structure() {
    let mut rng = stream(5, &[]);
    for _ in 0..20 {
        let p = 10;
        let sparse = DMatrix::from_fn(p, 2, |i, j| {
            if (i < p / 2) == (j == 0) {
                0.6 + 0.35 * rng.random::<f64>()
            } else {
                0.0
            }
        });
        let (s, c) = std::f64::consts::FRAC_PI_4.sin_cos();
        let mixed = &sparse * DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let (rotated, t) = varimax_rotate(&mixed);
        assert!((t.transpose() * &t - DMatrix::<f64>::identity(2, 2)).abs().max() < 1e-12);
        // Match columns up to order and sign.
        let direct = (rotated.column(0).abs() - sparse.column(0)).abs().max();
        let (off_a, off_b) = if direct < 0.1 { (0, 1) } else { (1, 0) };
        for i in 0..p {
            let true_col = if i < p / 2 { 0 } else { 1 };
            let off = if true_col == 0 { off_b } else { off_a };
            assert!(rotated[(i, off)].abs() < 0.05, "{rotated}");
        }
        let ss = |m: &DMatrix<f64>| m.iter().map(|v| v * v).sum::<f64>();
        assert!((ss(&mixed) - ss(&rotated)).abs() < 1e-9);
        assert!(varimax_criterion(&rotated) >= varimax_criterion(&mixed));
    }
}

#[test]
fn varimax_never_lowers_the_criterion() {
    let mut rng = stream(6, &[]);
    for k in 2..5 {
        let z = standardized(normal_matrix(50, 8, &mut rng));
        let r = pca(&z, k).unwrap();
        assert!(varimax_criterion(&r.rotated) >= varimax_criterion(&r.loadings) - 1e-12);
        let back = &r.loadings * &r.rotation;
        assert!((back - &r.rotated).abs().max() < 1e-12);
    }
}

// ------------------------------------------------------- parallel analysis

fn planted_two_factor(rng: &mut Rng) -> DataMatrix {
    let (n, p) = (72, 16);
    let f = normal_matrix(n, 2, rng);
    let noise = normal_matrix(n, p, rng);
    let values = DMatrix::from_fn(n, p, |i, j| 0.9 * f[(i, j % 2)] + 0.1 * noise[(i, j)]);
    standardized(values)
}

#[test]
fn parallel_analysis_on_noise_and_on_two_factors() {
    let (mut zero, mut two) = (0, 0);
    for trial in 0..100 {
        let mut rng = stream(trial, &[7]);
        let noise = standardized(normal_matrix(72, 16, &mut rng));
        let pa = parallel_analysis(&noise, 200, Threshold::default(), &mut rng).unwrap();
        zero += (pa.significant == 0) as usize;
        assert_eq!(pa.real.len(), 16);
        assert_eq!(pa.random.len(), 16);
        let planted = planted_two_factor(&mut rng);
        two += (parallel_analysis(&planted, 200, Threshold::default(), &mut rng).unwrap().significant == 2) as usize;
    }
    assert!(zero >= 95, "{zero}/100 noise trials found no component");
    assert!(two >= 95, "{two}/100 planted trials found two components");
}

#[test]
fn parallel_analysis_is_seeded() {
    let z = standardized(normal_matrix(40, 6, &mut stream(8, &[])));
    let a = parallel_analysis(&z, 30, Threshold::Mean, &mut stream(9, &[])).unwrap();
    let b = parallel_analysis(&z, 30, Threshold::Mean, &mut stream(9, &[])).unwrap();
    assert_eq!(a, b);
    assert!(parallel_analysis(&z, 19, Threshold::Mean, &mut stream(9, &[])).is_err());
}

// --------------------------------------------------------------------- CCA

#[test]
fn cca_of_identical_sets() {
    let mut rng = stream(10, &[]);
    let x = standardized(normal_matrix(72, 16, &mut rng));
    let r = cca(&x, &x, 16, DEFAULT_RIDGE).unwrap();
    for c in &r.correlations {
        assert!((c - 1.0).abs() < 1e-6, "{c}");
    }
}

#[test]
fn cca_identifies_a_column_permutation() {
    let mut rng = stream(11, &[]);
    let x = standardized(normal_matrix(60, 5, &mut rng));
    let perm = [3, 0, 4, 1, 2];
    let y_values = DMatrix::from_fn(60, 5, |i, j| x.values[(i, perm[j])]);
    let y = DataMatrix::from_values(y_values).unwrap();
    let r = cca(&x, &y, 5, DEFAULT_RIDGE).unwrap();
    assert!(r.correlations.iter().all(|c| (c - 1.0).abs() < 1e-6));
    for (j, &src) in perm.iter().enumerate() {
        let yj = r.y_loadings.row(j);
        let closest = (0..5)
            .min_by(|&a, &b| {
                let da = (r.x_loadings.row(a) - yj).norm();
                let db = (r.x_loadings.row(b) - yj).norm();
                da.total_cmp(&db)
            })
            .unwrap();
        assert_eq!(closest, src);
    }
}

#[test]
fn cca_of_independent_sets_stays_below_point_nine() {
    let mut below = 0;
    for seed in 0..100 {
        let mut rng = stream(seed, &[12]);
        let x = standardized(normal_matrix(72, 16, &mut rng));
        let y = standardized(normal_matrix(72, 16, &mut rng));
        let r = cca(&x, &y, 2, DEFAULT_RIDGE).unwrap();
        assert!(r.correlations[0] >= r.correlations[1]);
        below += (r.correlations[0] < 0.9) as usize;
    }
    assert!(below >= 95, "{below}/100");
}

#[test]
fn cca_rejects_mismatched_rows() {
    let mut rng = stream(13, &[]);
    let x = standardized(normal_matrix(6, 3, &mut rng));
    let y = standardized(normal_matrix(18, 3, &mut rng));
    assert_eq!(cca(&x, &y, 1, DEFAULT_RIDGE).unwrap_err(), Error::RowCountMismatch { left: 6, right: 18 });
}

// ----------------------------------------------------------- Mann-Whitney

/// Two-sided exact p by enumerating every bitmask that assigns `n1` of the
/// pooled values to the first sample.
fn exact_oracle(a: &[f64], b: &[f64]) -> (f64, f64) {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let u_of = |mask: u32| -> f64 {
        let mut u = 0.0;
        for i in 0..n {
            if mask & (1 << i) == 0 {
                continue;
            }
            for j in 0..n {
                if mask & (1 << j) != 0 {
                    continue;
                }
                u += if pooled[i] > pooled[j] {
                    1.0
                } else if pooled[i] == pooled[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
        u
    };
    let observed = u_of((1u32 << a.len()) - 1);
    let mu = (a.len() * b.len()) as f64 / 2.0;
    let (mut hit, mut total) = (0u32, 0u32);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != a.len() {
            continue;
        }
        total += 1;
        if (u_of(mask) - mu).abs() >= (observed - mu).abs() - 1e-9 {
            hit += 1;
        }
    }
    (observed, hit as f64 / total as f64)
}

#[test]
fn small_samples_match_the_exact_oracle() {
    let mut rng = stream(14, &[]);
    for _ in 0..200 {
        let n1 = rng.random_range(1..=8);
        let n2 = rng.random_range(1..=8);
        let a: Vec<f64> = (0..n1).map(|_| rng.random_range(0..6) as f64).collect();
        let b: Vec<f64> = (0..n2).map(|_| rng.random_range(0..6) as f64).collect();
        let r = mann_whitney_u(&a, &b).unwrap();
        let (u, p) = exact_oracle(&a, &b);
        assert_eq!(r.statistic, u);
        assert!((r.p_value - p).abs() < 1e-12, "{a:?} {b:?}: {} vs {p}", r.p_value);
    }
}

/// Normal approximation with tie and continuity corrections, written out
/// directly from the pooled sample.
fn normal_oracle(a: &[f64], b: &[f64]) -> f64 {
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let mut u = 0.0;
    for x in a {
        for y in b {
            u += if x > y { 1.0 } else if x == y { 0.5 } else { 0.0 };
        }
    }
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    pooled.sort_by(f64::total_cmp);
    let mut tie = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let j = pooled[i..].iter().take_while(|&&v| v == pooled[i]).count();
        tie += (j * j * j - j) as f64;
        i += j;
    }
    let n = n1 + n2;
    let sigma = (n1 * n2 / 12.0 * ((n + 1.0) - tie / (n * (n - 1.0)))).sqrt();
    let z = (((u - n1 * n2 / 2.0).abs() - 0.5).max(0.0)) / sigma;
    statrs::function::erf::erfc(z / std::f64::consts::SQRT_2)
}

#[test]
fn large_samples_use_the_corrected_normal_approximation() {
    let mut rng = stream(15, &[]);
    for _ in 0..50 {
        let a: Vec<f64> = (0..rng.random_range(9..40)).map(|_| rng.random_range(0..10) as f64).collect();
        let b: Vec<f64> = (0..rng.random_range(9..40)).map(|_| rng.random_range(0..12) as f64).collect();
        let r = mann_whitney_u(&a, &b).unwrap();
        assert!((r.p_value - normal_oracle(&a, &b)).abs() < 1e-12);
    }
    // scipy.stats.mannwhitneyu(range(10), range(5, 15), method="asymptotic")
    let a: Vec<f64> = (0..10).map(f64::from).collect();
    let b: Vec<f64> = (5..15).map(f64::from).collect();
    let r = mann_whitney_u(&a, &b).unwrap();
    assert_eq!(r.statistic, 12.5);
    assert!((r.p_value - 0.005_075_392_315_273_923).abs() < 1e-12, "{}", r.p_value);
}

proptest! {
    #[test]
    fn swapping_samples_mirrors_u(
        a in prop::collection::vec(0u8..8, 1..14),
        b in prop::collection::vec(0u8..8, 1..14),
    ) {
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = b.into_iter().map(f64::from).collect();
        let ab = mann_whitney_u(&a, &b).unwrap();
        let ba = mann_whitney_u(&b, &a).unwrap();
        prop_assert_eq!(ab.statistic, (a.len() * b.len()) as f64 - ba.statistic);
        prop_assert_eq!(ab.p_value, ba.p_value);
        prop_assert!((0.0..=1.0).contains(&ab.p_value));
    }

    #[test]
    fn fisher_is_invariant_under_exchange(a in 0u64..15, b in 0u64..15, c in 0u64..15, d in 0u64..15) {
        let p = fisher_exact_2x2(a, b, c, d);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&p));
        prop_assert!((p - fisher_exact_2x2(c, d, a, b)).abs() < 1e-12);
        prop_assert!((p - fisher_exact_2x2(b, a, d, c)).abs() < 1e-12);
        prop_assert!((p - fisher_exact_2x2(a, c, b, d)).abs() < 1e-12);
    }
}

// ------------------------------------------------------------- clustering

#[test]
fn random_labels_do_not_cluster() {
    let mut passed = 0;
    for seed in 0..100 {
        let mut rng = stream(seed, &[16]);
        let z = standardized(normal_matrix(18, 4, &mut rng));
        let labels: Vec<String> = (0..18).map(|_| ["a", "b", "c"][rng.random_range(0..3)].to_string()).collect();
        match mann_whitney_clustering(&z, &labels) {
            Ok(r) => passed += (r.p_value > 0.01) as usize,
            Err(Error::DegenerateGroups(_)) => passed += 1,
            Err(e) => panic!("{e}"),
        }
    }
    assert!(passed >= 95, "{passed}");
}

#[test]
fn separated_clusters_are_detected() {
    let mut rng = stream(17, &[]);
    let mut values = normal_matrix(18, 3, &mut rng) * 0.1;
    for i in 9..18 {
        values[(i, 0)] += 10.0;
    }
    let m = DataMatrix::from_values(values).unwrap();
    let labels: Vec<&str> = (0..18).map(|i| if i < 9 { "x" } else { "y" }).collect();
    let r = mann_whitney_clustering(&m, &labels).unwrap();
    assert!(r.p_value < 1e-4, "{r:?}");
    assert_eq!(r.groups, vec![2 * 36, 153]);
}

#[test]
fn clustering_needs_real_groups() {
    let m = DataMatrix::from_values(DMatrix::from_fn(4, 2, |i, j| (i + j) as f64)).unwrap();
    assert!(matches!(mann_whitney_clustering(&m, &["a", "a", "a", "a"]), Err(Error::DegenerateGroups(_))));
    assert!(matches!(mann_whitney_clustering(&m, &["a", "a", "a", "b"]), Err(Error::DegenerateGroups(_))));
}

// ------------------------------------------------------------ homogeneity

fn ln_fact(n: u64) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// Exact r x c test by brute force over every table with the same total,
/// keeping those whose margins match.
fn brute_force_fisher(cells: &[Vec<u64>]) -> f64 {
    let r = cells.len();
    let c = cells[0].len();
    let rows: Vec<u64> = cells.iter().map(|x| x.iter().sum()).collect();
    let cols: Vec<u64> = (0..c).map(|j| cells.iter().map(|x| x[j]).sum()).collect();
    let total: u64 = rows.iter().sum();
    let prob = |t: &[u64]| {
        let num: f64 = rows.iter().chain(&cols).map(|&m| ln_fact(m)).sum();
        (num - ln_fact(total) - t.iter().map(|&x| ln_fact(x)).sum::<f64>()).exp()
    };
    let flat: Vec<u64> = cells.iter().flatten().copied().collect();
    let observed = prob(&flat);
    let mut p = 0.0;
    let mut t = vec![0u64; r * c];
    loop {
        let ok = (0..r).all(|i| t[i * c..(i + 1) * c].iter().sum::<u64>() == rows[i])
            && (0..c).all(|j| (0..r).map(|i| t[i * c + j]).sum::<u64>() == cols[j]);
        if ok {
            let q = prob(&t);
            if q <= observed * (1.0 + 1e-7) {
                p += q;
            }
        }
        let mut k = 0;
        loop {
            if k == t.len() {
                return p.min(1.0);
            }
            t[k] += 1;
            if t[k] <= rows[k / c].min(cols[k % c]) {
                break;
            }
            t[k] = 0;
            k += 1;
        }
    }
}

#[test]
fn fisher_exact_perfect_association() {
    let want = 2.0 / 184_756.0;
    assert!((fisher_exact_2x2(10, 0, 0, 10) - want).abs() < 1e-12);
    let t = ContingencyTable::from_cells(vec![vec![10, 0], vec![0, 10]]);
    let r = homogeneity_test(&t).unwrap();
    assert_eq!(r.method, "fisher-exact");
    assert!((r.p_value - want).abs() < 1e-12);
}

#[test]
fn small_tables_match_brute_force() {
    let mut rng = stream(18, &[]);
    for _ in 0..30 {
        let rows = rng.random_range(2..=3);
        let cols = rng.random_range(2..=3);
        let cells: Vec<Vec<u64>> = (0..rows).map(|_| (0..cols).map(|_| rng.random_range(0..5)).collect()).collect();
        let t = ContingencyTable::from_cells(cells.clone());
        let Ok(r) = homogeneity_test(&t) else { continue };
        if r.method != "fisher-exact" {
            continue;
        }
        let nonzero_rows: Vec<Vec<u64>> = cells.iter().filter(|x| x.iter().any(|&v| v > 0)).cloned().collect();
        let keep: Vec<usize> = (0..cols).filter(|&j| nonzero_rows.iter().any(|x| x[j] > 0)).collect();
        let reduced: Vec<Vec<u64>> = nonzero_rows.iter().map(|x| keep.iter().map(|&j| x[j]).collect()).collect();
        let want = brute_force_fisher(&reduced);
        assert!((r.p_value - want).abs() < 1e-9, "{cells:?}: {} vs {want}", r.p_value);
    }
}

#[test]
fn large_tables_use_chi_squared() {
    let cells = vec![vec![20, 15, 5], vec![10, 20, 30]];
    let r = homogeneity_test(&ContingencyTable::from_cells(cells.clone())).unwrap();
    assert_eq!(r.method, "chi-squared");
    let rows = [40.0, 60.0];
    let cols = [30.0, 35.0, 35.0];
    let mut stat = 0.0;
    for i in 0..2 {
        for j in 0..3 {
            let e = rows[i] * cols[j] / 100.0;
            stat += (cells[i][j] as f64 - e).powi(2) / e;
        }
    }
    assert!((r.statistic - stat).abs() < 1e-9);
    // two degrees of freedom: p = exp(-x / 2)
    assert!((r.p_value - (-stat / 2.0).exp()).abs() < 1e-9);
}

#[test]
fn homogeneous_and_empty_tables() {
    let same = ContingencyTable::from_cells(vec![vec![2, 3, 1], vec![2, 3, 1], vec![2, 3, 1]]);
    assert!((homogeneity_test(&same).unwrap().p_value - 1.0).abs() < 1e-9);
    let empty = ContingencyTable::from_cells(vec![vec![0, 0, 0], vec![0, 0, 0]]);
    assert_eq!(homogeneity_test(&empty).unwrap_err(), Error::EmptyTable);
}

// -------------------------------------------------------------- Bonferroni

fn result(p: f64) -> TestResult {
    TestResult { method: "t".into(), statistic: 0.0, p_value: p, groups: vec![] }
}

#[test]
fn bonferroni_thresholds() {
    let b = bonferroni(&vec![result(1.0); 216], 0.05).unwrap();
    assert!((b.threshold - 2.3148e-4).abs() < 1e-8);
    assert!(b.significant.is_empty());
    assert_eq!(bonferroni(&[result(0.04)], 0.05).unwrap().threshold, 0.05);
    let mixed = [result(1e-5), result(0.2), result(0.02)];
    assert_eq!(bonferroni(&mixed, 0.05).unwrap().significant, vec![0]);
    assert!(bonferroni(&[], 0.05).is_err());
}
