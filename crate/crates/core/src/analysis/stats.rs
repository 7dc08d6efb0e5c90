use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;
use statrs::function::factorial::ln_factorial;

use super::matrix::DataMatrix;
use crate::error::{Error, Result};

/// Outcome of a significance test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub method: String,
    pub statistic: f64,
    pub p_value: f64,
    /// Sample sizes (Mann-Whitney) or table shape and total (homogeneity).
    pub groups: Vec<usize>,
}

impl TestResult {
    fn new(method: &str, statistic: f64, p_value: f64, groups: Vec<usize>) -> TestResult {
        TestResult { method: method.into(), statistic, p_value: p_value.clamp(0.0, 1.0), groups }
    }
}

/// Midranks (1-based) of `values`, plus the tie-group sizes.
fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = rank;
        }
        ties.push(j - i + 1);
        i = j + 1;
    }
    (ranks, ties)
}

/// Visits every `k`-subset of `ranks`, passing its rank sum.
fn subset_sums(ranks: &[f64], k: usize, start: usize, acc: f64, visit: &mut impl FnMut(f64)) {
    if k == 0 {
        visit(acc);
        return;
    }
    for i in start..=ranks.len() - k {
        subset_sums(ranks, k - 1, i + 1, acc + ranks[i], visit);
    }
}

/// Largest sample size for which both samples are small enough to enumerate.
const EXACT_LIMIT: usize = 8;

/// Two-sided Mann-Whitney U test. The statistic is `U` for sample `a`.
///
/// When both samples have at most 8 values the p-value is exact: the share of
/// all assignments of the pooled midranks to `a` whose `U` lies at least as
/// far from `n1 n2 / 2` as the observed one. Otherwise a normal approximation
/// with tie and continuity corrections is used.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<TestResult> {
    let (n1, n2) = (a.len(), b.len());
    if n1 == 0 || n2 == 0 {
        return Err(Error::DegenerateGroups("Mann-Whitney needs two non-empty samples".into()));
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    if pooled.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite sample value".into()));
    }
    let (ranks, ties) = midranks(&pooled);
    let offset = (n1 * (n1 + 1)) as f64 / 2.0;
    let u = ranks[..n1].iter().sum::<f64>() - offset;
    let mu = (n1 * n2) as f64 / 2.0;
    let observed = (u - mu).abs();
    let groups = vec![n1, n2];
    if n1 <= EXACT_LIMIT && n2 <= EXACT_LIMIT {
        let (mut extreme, mut total) = (0u64, 0u64);
        subset_sums(&ranks, n1, 0, 0.0, &mut |sum| {
            total += 1;
            if ((sum - offset) - mu).abs() >= observed - 1e-9 {
                extreme += 1;
            }
        });
        return Ok(TestResult::new("mann-whitney-exact", u, extreme as f64 / total as f64, groups));
    }
    let n = (n1 + n2) as f64;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1.0));
    let var = (n1 * n2) as f64 / 12.0 * ((n + 1.0) - tie_term);
    if var <= 0.0 {
        return Ok(TestResult::new("mann-whitney", u, 1.0, groups));
    }
    let z = ((observed - 0.5).max(0.0)) / var.sqrt();
    Ok(TestResult::new("mann-whitney", u, erfc(z / std::f64::consts::SQRT_2), groups))
}

/// Euclidean distances between all row pairs `i < j`, with the pairs.
pub fn pairwise_distances(points: &DataMatrix) -> Vec<((usize, usize), f64)> {
    let n = points.nrows();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let d = (points.values.row(i) - points.values.row(j)).norm();
            out.push(((i, j), d));
        }
    }
    out
}

/// Tests whether points sharing a label sit closer together (or further
/// apart) than points in general: same-label distances against all distances.
pub fn mann_whitney_clustering<S: AsRef<str>>(points: &DataMatrix, labels: &[S]) -> Result<TestResult> {
    if labels.len() != points.nrows() {
        return Err(Error::DimensionMismatch(format!("{} labels for {} points", labels.len(), points.nrows())));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l.as_ref()).or_default() += 1;
    }
    if counts.len() < 2 {
        return Err(Error::DegenerateGroups("need at least two labels".into()));
    }
    if let Some((l, _)) = counts.iter().find(|(_, &c)| c < 2) {
        return Err(Error::DegenerateGroups(format!("label `{l}` has fewer than two points")));
    }
    let all = pairwise_distances(points);
    let same: Vec<f64> =
        all.iter().filter(|((i, j), _)| labels[*i].as_ref() == labels[*j].as_ref()).map(|(_, d)| *d).collect();
    let every: Vec<f64> = all.iter().map(|(_, d)| *d).collect();
    mann_whitney_u(&same, &every)
}

/// Integer contingency table with labelled rows and columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    pub cells: Vec<Vec<u64>>,
}

impl ContingencyTable {
    pub fn from_cells(cells: Vec<Vec<u64>>) -> ContingencyTable {
        let rows = (0..cells.len()).map(|i| format!("r{i}")).collect();
        let columns = (0..cells.first().map_or(0, Vec::len)).map(|j| format!("c{j}")).collect();
        ContingencyTable { rows, columns, cells }
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().flatten().sum()
    }
}

fn ln_fact(n: u64) -> f64 {
    ln_factorial(n)
}

/// Two-sided Fisher exact test on `[[a, b], [c, d]]`, summing the
/// probabilities of all tables with the same margins that are no more likely
/// than the observed one.
pub fn fisher_exact_2x2(a: u64, b: u64, c: u64, d: u64) -> f64 {
    let (r1, r2, c1) = (a + b, c + d, a + c);
    let n = r1 + r2;
    if n == 0 {
        return 1.0;
    }
    let base = ln_fact(r1) + ln_fact(r2) + ln_fact(c1) + ln_fact(n - c1) - ln_fact(n);
    let prob = |x: u64| (base - ln_fact(x) - ln_fact(r1 - x) - ln_fact(c1 - x) - ln_fact(r2 + x - c1)).exp();
    let observed = prob(a);
    let lo = c1.saturating_sub(r2);
    let hi = r1.min(c1);
    let p: f64 = (lo..=hi).map(prob).filter(|&q| q <= observed * (1.0 + 1e-7)).sum();
    p.min(1.0)
}

/// Enumeration gives up after this many partial tables and falls back to
/// the chi-squared approximation.
const ENUMERATION_BUDGET: u64 = 20_000_000;

/// Largest total for which larger tables are tested exactly.
const EXACT_TOTAL: u64 = 40;

struct Enumerator<'a> {
    row_left: Vec<u64>,
    cols: &'a [u64],
    threshold: f64,
    p: f64,
    visited: u64,
}

impl Enumerator<'_> {
    /// Fills column `c` row by row; `ln_p` accumulates `-sum ln(cell!)`.
    fn fill(&mut self, c: usize, r: usize, col_left: u64, ln_p: f64) -> bool {
        self.visited += 1;
        if self.visited > ENUMERATION_BUDGET {
            return false;
        }
        let rows = self.row_left.len();
        if c == self.cols.len() {
            if ln_p <= self.threshold {
                self.p += ln_p.exp();
            }
            return true;
        }
        if r == rows - 1 {
            if col_left > self.row_left[r] {
                return true;
            }
            self.row_left[r] -= col_left;
            let next_left = if c + 1 < self.cols.len() { self.cols[c + 1] } else { 0 };
            let ok = self.fill(c + 1, 0, next_left, ln_p - ln_fact(col_left));
            self.row_left[r] += col_left;
            return ok;
        }
        let rest: u64 = self.row_left[r + 1..].iter().sum();
        let lo = col_left.saturating_sub(rest);
        let hi = col_left.min(self.row_left[r]);
        for x in lo..=hi {
            self.row_left[r] -= x;
            let ok = self.fill(c, r + 1, col_left - x, ln_p - ln_fact(x));
            self.row_left[r] += x;
            if !ok {
                return false;
            }
        }
        true
    }
}

/// Exact r x c Fisher p-value, or `None` if enumeration is too large.
fn fisher_exact_rxc(cells: &[Vec<u64>], rows: &[u64], cols: &[u64], total: u64) -> Option<f64> {
    let constant: f64 =
        rows.iter().map(|&r| ln_fact(r)).sum::<f64>() + cols.iter().map(|&c| ln_fact(c)).sum::<f64>() - ln_fact(total);
    let observed: f64 = -cells.iter().flatten().map(|&x| ln_fact(x)).sum::<f64>();
    let mut e = Enumerator {
        row_left: rows.to_vec(),
        cols,
        threshold: observed + 1e-7,
        p: 0.0,
        visited: 0,
    };
    e.fill(0, 0, cols[0], 0.0).then(|| (e.p * constant.exp()).min(1.0))
}

fn chi_squared(cells: &[Vec<u64>], rows: &[u64], cols: &[u64], total: u64) -> (f64, f64) {
    let n = total as f64;
    let mut stat = 0.0;
    for (i, row) in cells.iter().enumerate() {
        for (j, &o) in row.iter().enumerate() {
            let e = rows[i] as f64 * cols[j] as f64 / n;
            stat += (o as f64 - e).powi(2) / e;
        }
    }
    let dof = ((rows.len() - 1) * (cols.len() - 1)) as f64;
    let p = ChiSquared::new(dof).map(|d| d.sf(stat)).unwrap_or(1.0);
    (stat, p)
}

/// Test of homogeneity of the row distributions. Empty rows and columns are
/// removed first. 2x2 tables use Fisher's exact test, larger tables use exact
/// enumeration up to a total of 40 and chi-squared beyond.
pub fn homogeneity_test(table: &ContingencyTable) -> Result<TestResult> {
    if table.cells.len() < 2 {
        return Err(Error::InvalidArgument("homogeneity test needs at least two rows".into()));
    }
    let width = table.cells[0].len();
    if table.cells.iter().any(|r| r.len() != width) {
        return Err(Error::DimensionMismatch("ragged contingency table".into()));
    }
    let total = table.total();
    if total == 0 {
        return Err(Error::EmptyTable);
    }
    let keep_cols: Vec<usize> = (0..width).filter(|&j| table.cells.iter().any(|r| r[j] > 0)).collect();
    let cells: Vec<Vec<u64>> = table
        .cells
        .iter()
        .filter(|r| r.iter().any(|&x| x > 0))
        .map(|r| keep_cols.iter().map(|&j| r[j]).collect())
        .collect();
    let rows: Vec<u64> = cells.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<u64> = (0..keep_cols.len()).map(|j| cells.iter().map(|r| r[j]).sum()).collect();
    let shape = vec![rows.len(), cols.len(), total as usize];
    if rows.len() < 2 || cols.len() < 2 {
        return Ok(TestResult::new("degenerate", 0.0, 1.0, shape));
    }
    let (stat, chi_p) = chi_squared(&cells, &rows, &cols, total);
    if rows.len() == 2 && cols.len() == 2 {
        let p = fisher_exact_2x2(cells[0][0], cells[0][1], cells[1][0], cells[1][1]);
        return Ok(TestResult::new("fisher-exact", stat, p, shape));
    }
    if total <= EXACT_TOTAL {
        if let Some(p) = fisher_exact_rxc(&cells, &rows, &cols, total) {
            return Ok(TestResult::new("fisher-exact", stat, p, shape));
        }
    }
    Ok(TestResult::new("chi-squared", stat, chi_p, shape))
}

/// Results that survive a Bonferroni correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Bonferroni {
    pub threshold: f64,
    /// Indices into the input with `p < threshold`.
    pub significant: Vec<usize>,
}

pub fn bonferroni(results: &[TestResult], alpha: f64) -> Result<Bonferroni> {
    if results.is_empty() {
        return Err(Error::InvalidArgument("Bonferroni correction needs at least one result".into()));
    }
    let threshold = alpha / results.len() as f64;
    let significant = results.iter().enumerate().filter(|(_, r)| r.p_value < threshold).map(|(i, _)| i).collect();
    Ok(Bonferroni { threshold, significant })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midranks_average_ties() {
        let (r, t) = midranks(&[3.0, 1.0, 3.0, 2.0]);
        assert_eq!(r, vec![3.5, 1.0, 3.5, 2.0]);
        assert_eq!(t, vec![1, 1, 2]);
    }

    #[test]
    fn fisher_perfect_association() {
        // 2 / C(20, 10)
        let expected = 2.0 / 184_756.0;
        assert!((fisher_exact_2x2(10, 0, 0, 10) - expected).abs() < 1e-12);
    }

    #[test]
    fn identical_rows_are_homogeneous() {
        let t = ContingencyTable::from_cells(vec![vec![3, 4, 5], vec![3, 4, 5]]);
        let r = homogeneity_test(&t).unwrap();
        assert!((r.p_value - 1.0).abs() < 1e-9, "{r:?}");
        let big = ContingencyTable::from_cells(vec![vec![30, 40, 50], vec![30, 40, 50]]);
        assert!((homogeneity_test(&big).unwrap().p_value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_table_rejected() {
        let t = ContingencyTable::from_cells(vec![vec![0, 0], vec![0, 0]]);
        assert_eq!(homogeneity_test(&t).unwrap_err(), Error::EmptyTable);
    }

    #[test]
    fn bonferroni_threshold() {
        let r = TestResult::new("x", 0.0, 1.0, vec![]);
        let b = bonferroni(&vec![r.clone(); 216], 0.05).unwrap();
        assert!((b.threshold - 0.05 / 216.0).abs() < 1e-15);
        assert!(b.significant.is_empty());
        assert_eq!(bonferroni(&[r], 0.05).unwrap().threshold, 0.05);
    }
}
