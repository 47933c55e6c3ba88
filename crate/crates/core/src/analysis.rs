//! Feature post-processing: extreme-value skew detection, logarithmic
//! rescaling, a PCA variance audit, and correlation-based feature-subset
//! ranking (CFS).

use crate::features::{percentile_sorted, FeatureMatrix};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default extreme-value factor multiplying the IQR.
pub const DEFAULT_EVF: f64 = 6.0;

/// Fraction of extreme values at or above which a feature counts as skewed.
pub const SKEW_FRACTION_THRESHOLD: f64 = 0.01;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("empty series")]
    EmptySeries,
    #[error("negative input in column {feature}: log rescaling is for non-negative traffic features")]
    NegativeInput { feature: String },
    #[error("degenerate matrix: {0}")]
    DegenerateMatrix(String),
    #[error("labels ({labels}) do not align with rows ({rows})")]
    LabelMismatch { rows: usize, labels: usize },
    #[error("non-finite entry in input matrix")]
    NonFinite,
}

/// Which bound(s) the extreme values violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SkewSide {
    Left,
    Right,
    Both,
    None,
}

/// Extreme-value audit of one feature column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkewEntry {
    pub feature: String,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub evf: f64,
    pub extreme_fraction: f64,
    pub skewed: bool,
    pub side: SkewSide,
}

/// Flag a column as skewed when at least 1% of its values fall outside
/// [Q1 - evf*IQR, Q3 + evf*IQR].
pub fn detect_skew(feature: &str, column: &[f64], evf: f64) -> Result<SkewEntry, AnalysisError> {
    if column.is_empty() {
        return Err(AnalysisError::EmptySeries);
    }
    let mut sorted = column.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let q1 = percentile_sorted(&sorted, 0.25);
    let q3 = percentile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let lo = q1 - evf * iqr;
    let hi = q3 + evf * iqr;
    let left = column.iter().filter(|&&x| x < lo).count();
    let right = column.iter().filter(|&&x| x > hi).count();
    let extreme_fraction = (left + right) as f64 / column.len() as f64;
    let side = match (left > 0, right > 0) {
        (true, true) => SkewSide::Both,
        (true, false) => SkewSide::Left,
        (false, true) => SkewSide::Right,
        (false, false) => SkewSide::None,
    };
    Ok(SkewEntry {
        feature: feature.to_string(),
        q1,
        q3,
        iqr,
        evf,
        extreme_fraction,
        skewed: extreme_fraction >= SKEW_FRACTION_THRESHOLD,
        side,
    })
}

/// ln(1 + x) transform for non-negative traffic features.
pub fn log_rescale(feature: &str, column: &[f64]) -> Result<Vec<f64>, AnalysisError> {
    if column.iter().any(|&x| x < 0.0) {
        return Err(AnalysisError::NegativeInput {
            feature: feature.to_string(),
        });
    }
    Ok(column.iter().map(|&x| x.ln_1p()).collect())
}

/// Name of a rescaled feature: `session_l_min` becomes `session_l_min_ln`.
pub fn rescaled_name(name: &str) -> String {
    format!("{name}_ln")
}

/// RSSI-family features keep their Gaussian shape and are exempt from
/// rescaling; everything else in the schema is traffic-derived.
pub fn is_traffic_family(name: &str) -> bool {
    !name.starts_with("rssi")
}

/// Outcome of the skew audit plus rescaling pass over a feature matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RescaleOutcome {
    /// All-column audit, in schema order.
    pub skew: Vec<SkewEntry>,
    /// Names (pre-rename) of the columns that were rescaled.
    pub rescaled: Vec<String>,
}

/// Audit every column for skew and apply ln(1+x) in place to the skewed
/// traffic-family columns, renaming them with the `_ln` suffix.
pub fn detect_and_rescale(
    matrix: &mut FeatureMatrix,
    evf: f64,
) -> Result<RescaleOutcome, AnalysisError> {
    let mut skew = Vec::with_capacity(matrix.names.len());
    let mut rescaled = Vec::new();
    for idx in 0..matrix.names.len() {
        let name = matrix.names[idx].clone();
        let column = matrix.column(idx);
        let entry = detect_skew(&name, &column, evf)?;
        let apply = entry.skewed && is_traffic_family(&name);
        skew.push(entry);
        if apply {
            let transformed = log_rescale(&name, &column)?;
            for (row, v) in matrix.rows.iter_mut().zip(transformed) {
                row[idx] = v;
            }
            matrix.names[idx] = rescaled_name(&name);
            rescaled.push(name);
        }
    }
    Ok(RescaleOutcome { skew, rescaled })
}

/// Principal component audit of a feature matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcaResult {
    /// Orthonormal components (rows), over the kept columns.
    pub components: Vec<Vec<f64>>,
    /// Non-increasing, non-negative, sums to 1.
    pub explained_variance_ratio: Vec<f64>,
    /// Running sum of the ratios.
    pub cumulative: Vec<f64>,
    /// Per kept column: training mean.
    pub mean: Vec<f64>,
    /// Per kept column: divisor applied when standardizing (all 1 otherwise).
    pub scale: Vec<f64>,
    /// Original indices of the columns that were analyzed.
    pub kept: Vec<usize>,
    /// Original indices of constant columns dropped under standardization.
    pub dropped: Vec<usize>,
}

impl PcaResult {
    /// Smallest number of components whose cumulative ratio reaches `target`.
    pub fn components_for(&self, target: f64) -> usize {
        self.cumulative
            .iter()
            .position(|&c| c >= target)
            .map(|i| i + 1)
            .unwrap_or(self.cumulative.len())
    }

    /// Project rows (over the original column layout) onto the components.
    pub fn transform(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter()
            .map(|row| {
                let centered: Vec<f64> = self
                    .kept
                    .iter()
                    .enumerate()
                    .map(|(j, &orig)| (row[orig] - self.mean[j]) / self.scale[j])
                    .collect();
                self.components
                    .iter()
                    .map(|comp| comp.iter().zip(&centered).map(|(c, x)| c * x).sum())
                    .collect()
            })
            .collect()
    }

    /// Reconstruct rows (kept columns only) from component scores.
    pub fn inverse_transform(&self, scores: &[Vec<f64>]) -> Vec<Vec<f64>> {
        scores
            .iter()
            .map(|score| {
                (0..self.kept.len())
                    .map(|j| {
                        let centered: f64 = score
                            .iter()
                            .zip(&self.components)
                            .map(|(s, comp)| s * comp[j])
                            .sum();
                        centered * self.scale[j] + self.mean[j]
                    })
                    .collect()
            })
            .collect()
    }
}

/// Eigendecomposition of the correlation (standardize) or covariance matrix.
///
/// Constant columns are meaningless under standardization; they are dropped
/// (with a warning) and recorded in the result.
pub fn pca(rows: &[Vec<f64>], standardize: bool) -> Result<PcaResult, AnalysisError> {
    if rows.len() < 2 {
        return Err(AnalysisError::DegenerateMatrix(format!(
            "need at least 2 rows, got {}",
            rows.len()
        )));
    }
    let n = rows.len();
    let p = rows[0].len();
    if rows.iter().any(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(AnalysisError::NonFinite);
    }

    let mut mean = vec![0.0; p];
    for row in rows {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = vec![0.0; p];
    for row in rows {
        for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
            *v += (x - m).powi(2);
        }
    }
    for v in &mut var {
        *v /= (n - 1) as f64;
    }

    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (j, &v) in var.iter().enumerate() {
        if standardize && v == 0.0 {
            dropped.push(j);
        } else {
            kept.push(j);
        }
    }
    if !dropped.is_empty() {
        log::warn!("pca: dropping {} constant column(s)", dropped.len());
    }
    if kept.is_empty() {
        return Err(AnalysisError::DegenerateMatrix(
            "every column is constant".into(),
        ));
    }

    let kept_mean: Vec<f64> = kept.iter().map(|&j| mean[j]).collect();
    let kept_scale: Vec<f64> = kept
        .iter()
        .map(|&j| if standardize { var[j].sqrt() } else { 1.0 })
        .collect();

    let q = kept.len();
    let mut centered = DMatrix::zeros(n, q);
    for (i, row) in rows.iter().enumerate() {
        for (jj, &j) in kept.iter().enumerate() {
            centered[(i, jj)] = (row[j] - kept_mean[jj]) / kept_scale[jj];
        }
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let total: f64 = cov.diagonal().iter().sum();
    if total <= 0.0 {
        return Err(AnalysisError::DegenerateMatrix(
            "total variance is zero".into(),
        ));
    }

    let eigen = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]));

    let mut components = Vec::with_capacity(q);
    let mut lambdas = Vec::with_capacity(q);
    for &idx in &order {
        lambdas.push(eigen.eigenvalues[idx].max(0.0));
        let mut comp: Vec<f64> = eigen.eigenvectors.column(idx).iter().cloned().collect();
        // Canonical sign: the largest-magnitude coordinate is positive.
        let lead = comp
            .iter()
            .cloned()
            .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if lead < 0.0 {
            for v in &mut comp {
                *v = -*v;
            }
        }
        components.push(comp);
    }
    let lambda_total: f64 = lambdas.iter().sum();
    let ratios: Vec<f64> = lambdas.iter().map(|l| l / lambda_total).collect();
    let mut cumulative = Vec::with_capacity(q);
    let mut acc = 0.0;
    for r in &ratios {
        acc += r;
        cumulative.push(acc);
    }

    Ok(PcaResult {
        components,
        explained_variance_ratio: ratios,
        cumulative,
        mean: kept_mean,
        scale: kept_scale,
        kept,
        dropped,
    })
}

/// Feature ranking produced by greedy CFS forward selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfsRanking {
    /// Feature names in selection order.
    pub selected: Vec<String>,
    /// Subset merit after each selection.
    pub merit: Vec<f64>,
}

/// Discretize a column into (at most) 10 equal-frequency bins; labels stay as
/// given. Returns per-row bin ids.
fn discretize(column: &[f64]) -> Vec<usize> {
    let mut sorted = column.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let edges: Vec<f64> = (1..10)
        .map(|k| percentile_sorted(&sorted, k as f64 / 10.0))
        .collect();
    column
        .iter()
        .map(|&x| edges.iter().filter(|&&e| x > e).count())
        .collect()
}

fn entropy(counts: &[usize], n: usize) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.ln()
        })
        .sum()
}

/// Symmetric uncertainty between two discrete variables:
/// 2(H(a) + H(b) - H(a,b)) / (H(a) + H(b)); zero when either is constant.
fn symmetric_uncertainty(a: &[usize], a_card: usize, b: &[usize], b_card: usize) -> f64 {
    let n = a.len();
    let mut ca = vec![0usize; a_card];
    let mut cb = vec![0usize; b_card];
    let mut cab = vec![0usize; a_card * b_card];
    for (&x, &y) in a.iter().zip(b) {
        ca[x] += 1;
        cb[y] += 1;
        cab[x * b_card + y] += 1;
    }
    let ha = entropy(&ca, n);
    let hb = entropy(&cb, n);
    if ha + hb == 0.0 {
        return 0.0;
    }
    let hab = entropy(&cab, n);
    (2.0 * (ha + hb - hab) / (ha + hb)).clamp(0.0, 1.0)
}

/// CFS merit of a subset: k·r̄_cf / sqrt(k + k(k-1)·r̄_ff), expressed via the
/// raw sums (sum_cf over the subset, sum_ff over its unordered pairs).
fn cfs_merit(sum_cf: f64, sum_ff: f64, k: usize) -> f64 {
    sum_cf / (k as f64 + 2.0 * sum_ff).sqrt()
}

/// Greedy forward selection of the `k` features that are most correlated with
/// the class and least correlated with each other. Correlation is symmetric
/// uncertainty over 10-bin equal-frequency discretization.
pub fn cfs_select(
    matrix: &FeatureMatrix,
    labels: &[usize],
    k: usize,
) -> Result<CfsRanking, AnalysisError> {
    if labels.len() != matrix.rows.len() {
        return Err(AnalysisError::LabelMismatch {
            rows: matrix.rows.len(),
            labels: labels.len(),
        });
    }
    if matrix.rows.is_empty() {
        return Err(AnalysisError::EmptySeries);
    }
    let p = matrix.names.len();
    let k = k.min(p);

    let discretized: Vec<Vec<usize>> = (0..p).map(|j| discretize(&matrix.column(j))).collect();
    let label_card = labels.iter().max().map(|m| m + 1).unwrap_or(1);

    let r_cf: Vec<f64> = discretized
        .iter()
        .map(|col| symmetric_uncertainty(col, 10, labels, label_card))
        .collect();

    // Pairwise feature correlations, computed lazily.
    let mut r_ff: std::collections::BTreeMap<(usize, usize), f64> = Default::default();
    let mut pair = |a: usize, b: usize, disc: &[Vec<usize>]| -> f64 {
        let key = (a.min(b), a.max(b));
        *r_ff
            .entry(key)
            .or_insert_with(|| symmetric_uncertainty(&disc[key.0], 10, &disc[key.1], 10))
    };

    let mut selected: Vec<usize> = Vec::new();
    let mut merits: Vec<f64> = Vec::new();
    let mut sum_cf = 0.0;
    let mut sum_ff = 0.0;
    for _ in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for (cand, &cand_cf) in r_cf.iter().enumerate() {
            if selected.contains(&cand) {
                continue;
            }
            let cand_ff: f64 = selected.iter().map(|&s| pair(s, cand, &discretized)).sum();
            let merit = cfs_merit(sum_cf + cand_cf, sum_ff + cand_ff, selected.len() + 1);
            if best.map(|(_, m)| merit > m).unwrap_or(true) {
                best = Some((cand, merit));
            }
        }
        let (choice, merit) = best.expect("k capped at feature count");
        sum_cf += r_cf[choice];
        sum_ff += selected
            .iter()
            .map(|&s| pair(s, choice, &discretized))
            .sum::<f64>();
        selected.push(choice);
        merits.push(merit);
    }

    Ok(CfsRanking {
        selected: selected
            .into_iter()
            .map(|i| matrix.names[i].clone())
            .collect(),
        merit: merits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::MacAddress;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn detect_skew_constant_column() {
        let entry = detect_skew("c", &[4.0; 50], DEFAULT_EVF).unwrap();
        assert_eq!(entry.extreme_fraction, 0.0);
        assert!(!entry.skewed);
        assert_eq!(entry.side, SkewSide::None);
    }

    #[test]
    fn detect_skew_right_tail() {
        // 990 near-standard-normal values plus 10 enormous ones: exactly 1%
        // of the column lies beyond Q3 + 6*IQR.
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(11);
        let normal = Normal::<f64>::new(0.0, 1.0).unwrap();
        let mut column: Vec<f64> = (0..990).map(|_| normal.sample(&mut rng)).collect();
        column.extend(std::iter::repeat_n(1e12, 10));
        let entry = detect_skew("c", &column, DEFAULT_EVF).unwrap();

        // Direct-count oracle.
        let mut sorted = column.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let q1 = percentile_sorted(&sorted, 0.25);
        let q3 = percentile_sorted(&sorted, 0.75);
        let hi = q3 + DEFAULT_EVF * (q3 - q1);
        let lo = q1 - DEFAULT_EVF * (q3 - q1);
        let outside = column.iter().filter(|&&x| x < lo || x > hi).count();
        assert_eq!(outside, 10);
        assert_eq!(entry.extreme_fraction, 0.01);
        assert!(entry.skewed);
        assert_eq!(entry.side, SkewSide::Right);
    }

    #[test]
    fn log_rescale_clears_right_skew() {
        // A heavy-tailed non-negative column (traffic-like): skewed before
        // the transform, inside the fence after it.
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(19);
        let normal = Normal::<f64>::new(0.0, 1.5).unwrap();
        let column: Vec<f64> = (0..2000).map(|_| normal.sample(&mut rng).exp()).collect();
        let before = detect_skew("vol", &column, DEFAULT_EVF).unwrap();
        assert!(before.skewed);
        assert_eq!(before.side, SkewSide::Right);

        let rescaled = log_rescale("vol", &column).unwrap();
        let after = detect_skew("vol_ln", &rescaled, DEFAULT_EVF).unwrap();
        assert!(after.extreme_fraction < 0.01);
        assert!(!after.skewed);
    }

    #[test]
    fn log_rescale_examples() {
        assert_eq!(log_rescale("f", &[0.0]).unwrap(), vec![0.0]);
        let e_minus_1 = std::f64::consts::E - 1.0;
        assert!((log_rescale("f", &[e_minus_1]).unwrap()[0] - 1.0).abs() < 1e-12);
        assert!(matches!(
            log_rescale("f", &[-0.5]),
            Err(AnalysisError::NegativeInput { .. })
        ));
    }

    #[test]
    fn log_rescale_preserves_rank_order() {
        let column = vec![5.0, 0.0, 3.0, 100.0, 3.5];
        let rescaled = log_rescale("f", &column).unwrap();
        let rank = |v: &[f64]| {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
            idx
        };
        assert_eq!(rank(&column), rank(&rescaled));
    }

    #[test]
    fn rescaled_name_suffix() {
        assert_eq!(rescaled_name("session_l_min"), "session_l_min_ln");
    }

    #[test]
    fn pca_rank_one_data() {
        // Points exactly on a line: the first component explains everything.
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let result = pca(&rows, true).unwrap();
        assert!((result.explained_variance_ratio[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pca_isotropic_gaussian_ratios() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(3);
        let normal = Normal::<f64>::new(0.0, 1.0).unwrap();
        let rows: Vec<Vec<f64>> = (0..10_000)
            .map(|_| (0..3).map(|_| normal.sample(&mut rng)).collect())
            .collect();
        let result = pca(&rows, true).unwrap();
        for ratio in &result.explained_variance_ratio {
            assert!((ratio - 1.0 / 3.0).abs() < 0.02, "ratio {ratio}");
        }
    }

    #[test]
    fn pca_invariants_and_reconstruction() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(5);
        let normal = Normal::<f64>::new(0.0, 1.0).unwrap();
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| {
                let a = normal.sample(&mut rng);
                let b = normal.sample(&mut rng);
                vec![a, 3.0 * a + 0.1 * b, b * 50.0, normal.sample(&mut rng) - 7.0]
            })
            .collect();
        let result = pca(&rows, true).unwrap();

        // Ratios: non-negative, non-increasing, sum to one.
        let sum: f64 = result.explained_variance_ratio.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        for pair in result.explained_variance_ratio.windows(2) {
            assert!(pair[0] >= pair[1] - 1e-12);
        }
        assert!((result.cumulative.last().unwrap() - 1.0).abs() < 1e-9);

        // Components pairwise orthonormal.
        for (i, a) in result.components.iter().enumerate() {
            for (j, b) in result.components.iter().enumerate() {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-8, "({i},{j}) dot {dot}");
            }
        }

        // Full reconstruction within relative Frobenius 1e-6.
        let scores = result.transform(&rows);
        let recon = result.inverse_transform(&scores);
        let mut num = 0.0;
        let mut den = 0.0;
        for (row, rec) in rows.iter().zip(&recon) {
            for (j, &orig) in result.kept.iter().enumerate() {
                num += (row[orig] - rec[j]).powi(2);
                den += row[orig].powi(2);
            }
        }
        assert!((num / den).sqrt() < 1e-6, "relative error {}", (num / den).sqrt());
    }

    #[test]
    fn pca_drops_constant_columns() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![i as f64, 5.0, (i * i) as f64])
            .collect();
        let result = pca(&rows, true).unwrap();
        assert_eq!(result.dropped, vec![1]);
        assert_eq!(result.kept, vec![0, 2]);

        let constant_rows: Vec<Vec<f64>> = (0..10).map(|_| vec![1.0, 2.0]).collect();
        assert!(matches!(
            pca(&constant_rows, true),
            Err(AnalysisError::DegenerateMatrix(_))
        ));
    }

    fn matrix_from_columns(names: &[&str], columns: &[Vec<f64>]) -> FeatureMatrix {
        let n = columns[0].len();
        FeatureMatrix {
            macs: (0..n).map(|i| MacAddress([0, 0, 0, 0, 0, i as u8])).collect(),
            names: names.iter().map(|s| s.to_string()).collect(),
            rows: (0..n)
                .map(|i| columns.iter().map(|c| c[i]).collect())
                .collect(),
        }
    }

    // Independent oracle: entropy / SU / merit recomputed from scratch.
    fn oracle_su(a: &[usize], b: &[usize]) -> f64 {
        let h = |xs: &[usize]| {
            let mut counts = std::collections::BTreeMap::new();
            for &x in xs {
                *counts.entry(x).or_insert(0usize) += 1;
            }
            counts
                .values()
                .map(|&c| {
                    let p = c as f64 / xs.len() as f64;
                    -p * p.ln()
                })
                .sum::<f64>()
        };
        let joint: Vec<usize> = a.iter().zip(b).map(|(&x, &y)| x * 1000 + y).collect();
        let (ha, hb) = (h(a), h(b));
        if ha + hb == 0.0 {
            0.0
        } else {
            2.0 * (ha + hb - h(&joint)) / (ha + hb)
        }
    }

    fn oracle_merit(subset: &[usize], disc: &[Vec<usize>], labels: &[usize]) -> f64 {
        let k = subset.len() as f64;
        let sum_cf: f64 = subset.iter().map(|&i| oracle_su(&disc[i], labels)).sum();
        let mut sum_ff = 0.0;
        for (ai, &a) in subset.iter().enumerate() {
            for &b in &subset[ai + 1..] {
                sum_ff += oracle_su(&disc[a], &disc[b]);
            }
        }
        sum_cf / (k + 2.0 * sum_ff).sqrt()
    }

    #[test]
    fn cfs_k1_picks_max_class_correlation() {
        let n = 200;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(21);
        let normal = Normal::<f64>::new(0.0, 1.0).unwrap();
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let informative: Vec<f64> = labels
            .iter()
            .map(|&l| l as f64 * 10.0 + normal.sample(&mut rng) * 0.1)
            .collect();
        let noise: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
        let matrix = matrix_from_columns(&["noise", "informative"], &[noise, informative]);
        let ranking = cfs_select(&matrix, &labels, 1).unwrap();
        assert_eq!(ranking.selected, vec!["informative".to_string()]);
        // k = 1: merit is exactly the feature-class correlation.
        let disc: Vec<Vec<usize>> = (0..2).map(|j| discretize(&matrix.column(j))).collect();
        let expected = oracle_su(&disc[1], &labels);
        assert!((ranking.merit[0] - expected).abs() < 1e-12);
    }

    /// Four-class labels whose high bit drives `f` and low bit drives `g`:
    /// both features are informative, mutually independent, and `copy_of_f`
    /// is an exact duplicate.
    fn two_bit_matrix(n: usize) -> (FeatureMatrix, Vec<usize>) {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(23);
        let normal = Normal::<f64>::new(0.0, 1.0).unwrap();
        let labels: Vec<usize> = (0..n).map(|i| i % 4).collect();
        let f: Vec<f64> = labels
            .iter()
            .map(|&l| (l / 2) as f64 * 6.0 + normal.sample(&mut rng) * 0.2)
            .collect();
        let copy = f.clone();
        let g: Vec<f64> = labels
            .iter()
            .map(|&l| (l % 2) as f64 * 6.0 + normal.sample(&mut rng) * 0.2)
            .collect();
        (
            matrix_from_columns(&["f", "copy_of_f", "g"], &[f, copy, g]),
            labels,
        )
    }

    #[test]
    fn cfs_never_selects_duplicate_before_independent_feature() {
        let (matrix, labels) = two_bit_matrix(300);
        let ranking = cfs_select(&matrix, &labels, 2).unwrap();
        // The exact duplicate must lose to the independent informative
        // feature, whichever of f/g the noise ranks first.
        assert!(!ranking.selected.contains(&"copy_of_f".to_string()));
        let mut picked = ranking.selected.clone();
        picked.sort();
        assert_eq!(picked, vec!["f".to_string(), "g".to_string()]);

        // Exhaustive oracle over all 2-subsets confirms the greedy optimum.
        let disc: Vec<Vec<usize>> = (0..3).map(|j| discretize(&matrix.column(j))).collect();
        let mut best = ((0, 0), f64::MIN);
        for a in 0..3 {
            for b in (a + 1)..3 {
                let merit = oracle_merit(&[a, b], &disc, &labels);
                if merit > best.1 {
                    best = ((a, b), merit);
                }
            }
        }
        assert_eq!(best.0, (0, 2));
        assert!((ranking.merit[1] - best.1).abs() < 1e-12);
    }

    #[test]
    fn cfs_adding_perfect_duplicate_never_increases_merit() {
        let (matrix, labels) = two_bit_matrix(200);
        let disc: Vec<Vec<usize>> = (0..3).map(|j| discretize(&matrix.column(j))).collect();
        // Against the single selected feature.
        let base = oracle_merit(&[0], &disc, &labels);
        let with_dup = oracle_merit(&[0, 1], &disc, &labels);
        assert!(with_dup <= base + 1e-12);
        // Against the informative pair.
        let base2 = oracle_merit(&[0, 2], &disc, &labels);
        let with_dup2 = oracle_merit(&[0, 1, 2], &disc, &labels);
        assert!(with_dup2 <= base2 + 1e-12);
    }

    #[test]
    fn cfs_label_mismatch() {
        let matrix = matrix_from_columns(&["a"], &[vec![1.0, 2.0, 3.0]]);
        assert!(matches!(
            cfs_select(&matrix, &[0, 1], 1),
            Err(AnalysisError::LabelMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn detect_skew_scale_consistent(
            values in proptest::collection::vec(-1000i32..1000, 5..200),
            pow in -2i32..3,
        ) {
            // Powers of two keep quantile arithmetic exact.
            let k = (2.0f64).powi(pow);
            let column: Vec<f64> = values.iter().map(|&v| v as f64).collect();
            let scaled: Vec<f64> = column.iter().map(|&v| v * k).collect();
            let a = detect_skew("c", &column, DEFAULT_EVF).unwrap();
            let b = detect_skew("c", &scaled, DEFAULT_EVF).unwrap();
            prop_assert_eq!(a.extreme_fraction, b.extreme_fraction);
            prop_assert_eq!(a.skewed, b.skewed);
        }

        #[test]
        fn merit_increases_with_class_correlation_when_independent(
            r1 in 0.01f64..0.9, r2 in 0.01f64..0.9, k in 1usize..10
        ) {
            // With r̄_ff = 0 the merit is monotone in the class correlation.
            let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
            let m_lo = cfs_merit(lo * k as f64, 0.0, k);
            let m_hi = cfs_merit(hi * k as f64, 0.0, k);
            prop_assert!(m_hi >= m_lo);
        }
    }
}
