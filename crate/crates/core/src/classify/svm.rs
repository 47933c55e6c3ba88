//! Linear SVM trained by sequential minimal optimization, plus the
//! one-vs-one multiclass wrapper with z-score standardization.
//!
//! The solver is Platt's SMO specialised to the linear kernel: the weight
//! vector is maintained incrementally so errors cost O(d) to evaluate, and
//! all scan orders are pinned so training is deterministic.

use super::{ClassifyError, Dataset};
use serde::{Deserialize, Serialize};

/// KKT tolerance used when none is given.
pub const DEFAULT_SMO_TOL: f64 = 1e-3;

/// Alphas this close to a bound snap onto it.
const ALPHA_EPS: f64 = 1e-8;

/// A trained binary max-margin separator: decision value is `w·x + b`,
/// positive for the +1 class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmBinaryModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    /// Dual variables, aligned with the training rows.
    pub alphas: Vec<f64>,
}

impl SvmBinaryModel {
    pub fn decision(&self, row: &[f64]) -> f64 {
        dot(&self.weights, row) + self.bias
    }

    /// Dual objective Σα - ½‖w‖² for the stored alphas (linear kernel).
    pub fn dual_objective(&self) -> f64 {
        self.alphas.iter().sum::<f64>() - 0.5 * dot(&self.weights, &self.weights)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dual objective for an arbitrary alpha vector on the same training data;
/// used to certify near-optimality against random feasible points.
pub fn dual_objective_for(rows: &[Vec<f64>], y: &[f64], alphas: &[f64]) -> f64 {
    let d = rows[0].len();
    let mut w = vec![0.0; d];
    for ((row, &yi), &a) in rows.iter().zip(y).zip(alphas) {
        if a != 0.0 {
            for (wj, xj) in w.iter_mut().zip(row) {
                *wj += a * yi * xj;
            }
        }
    }
    alphas.iter().sum::<f64>() - 0.5 * dot(&w, &w)
}

struct Smo<'a> {
    rows: &'a [Vec<f64>],
    y: &'a [f64],
    c: f64,
    tol: f64,
    alphas: Vec<f64>,
    w: Vec<f64>,
    b: f64,
}

impl<'a> Smo<'a> {
    fn decision(&self, i: usize) -> f64 {
        dot(&self.w, &self.rows[i]) + self.b
    }

    fn error(&self, i: usize) -> f64 {
        self.decision(i) - self.y[i]
    }

    fn take_step(&mut self, i1: usize, i2: usize, e2: f64) -> bool {
        if i1 == i2 {
            return false;
        }
        let (a1_old, a2_old) = (self.alphas[i1], self.alphas[i2]);
        let (y1, y2) = (self.y[i1], self.y[i2]);
        let e1 = self.error(i1);
        let s = y1 * y2;

        let (lo, hi) = if s < 0.0 {
            let diff = a2_old - a1_old;
            (diff.max(0.0), (self.c + diff).min(self.c))
        } else {
            let sum = a1_old + a2_old;
            ((sum - self.c).max(0.0), sum.min(self.c))
        };
        if (hi - lo).abs() < ALPHA_EPS {
            return false;
        }

        let k11 = dot(&self.rows[i1], &self.rows[i1]);
        let k12 = dot(&self.rows[i1], &self.rows[i2]);
        let k22 = dot(&self.rows[i2], &self.rows[i2]);
        let eta = k11 + k22 - 2.0 * k12;

        let mut a2 = if eta > 0.0 {
            (a2_old + y2 * (e1 - e2) / eta).clamp(lo, hi)
        } else {
            // Degenerate curvature: evaluate the objective at both clip ends.
            let f1 = y1 * (e1 - self.b) - a1_old * k11 - s * a2_old * k12;
            let f2 = y2 * (e2 - self.b) - s * a1_old * k12 - a2_old * k22;
            let l1 = a1_old + s * (a2_old - lo);
            let h1 = a1_old + s * (a2_old - hi);
            let obj_lo = l1 * f1 + lo * f2 + 0.5 * l1 * l1 * k11 + 0.5 * lo * lo * k22
                + s * lo * l1 * k12;
            let obj_hi = h1 * f1 + hi * f2 + 0.5 * h1 * h1 * k11 + 0.5 * hi * hi * k22
                + s * hi * h1 * k12;
            if obj_lo < obj_hi - 1e-12 {
                lo
            } else if obj_hi < obj_lo - 1e-12 {
                hi
            } else {
                return false;
            }
        };
        if a2 < ALPHA_EPS {
            a2 = 0.0;
        } else if a2 > self.c - ALPHA_EPS {
            a2 = self.c;
        }
        if (a2 - a2_old).abs() < ALPHA_EPS * (a2 + a2_old + ALPHA_EPS) {
            return false;
        }
        let a1 = a1_old + s * (a2_old - a2);
        let a1 = if a1 < ALPHA_EPS {
            0.0
        } else if a1 > self.c - ALPHA_EPS {
            self.c
        } else {
            a1
        };

        let d1 = a1 - a1_old;
        let d2 = a2 - a2_old;
        let b1 = self.b - e1 - y1 * d1 * k11 - y2 * d2 * k12;
        let b2 = self.b - e2 - y1 * d1 * k12 - y2 * d2 * k22;
        self.b = if a1 > 0.0 && a1 < self.c {
            b1
        } else if a2 > 0.0 && a2 < self.c {
            b2
        } else {
            (b1 + b2) / 2.0
        };

        for ((wj, x1j), x2j) in self.w.iter_mut().zip(&self.rows[i1]).zip(&self.rows[i2]) {
            *wj += y1 * d1 * x1j + y2 * d2 * x2j;
        }
        self.alphas[i1] = a1;
        self.alphas[i2] = a2;
        true
    }

    fn is_non_bound(&self, i: usize) -> bool {
        self.alphas[i] > 0.0 && self.alphas[i] < self.c
    }

    fn examine(&mut self, i2: usize) -> bool {
        let y2 = self.y[i2];
        let a2 = self.alphas[i2];
        let e2 = self.error(i2);
        let r2 = e2 * y2;
        let violates = (r2 < -self.tol && a2 < self.c) || (r2 > self.tol && a2 > 0.0);
        if !violates {
            return false;
        }
        let n = self.rows.len();

        // Second-choice heuristic: the non-bound example with the largest
        // |E1 - E2|, first index on ties.
        let mut best: Option<(usize, f64)> = None;
        for i1 in 0..n {
            if self.is_non_bound(i1) {
                let gap = (self.error(i1) - e2).abs();
                if best.map(|(_, g)| gap > g).unwrap_or(true) {
                    best = Some((i1, gap));
                }
            }
        }
        if let Some((i1, _)) = best {
            if self.take_step(i1, i2, e2) {
                return true;
            }
        }
        // Fall back to scanning from a pinned offset: non-bound first, then all.
        for offset in 0..n {
            let i1 = (i2 + 1 + offset) % n;
            if self.is_non_bound(i1) && self.take_step(i1, i2, e2) {
                return true;
            }
        }
        for offset in 0..n {
            let i1 = (i2 + 1 + offset) % n;
            if self.take_step(i1, i2, e2) {
                return true;
            }
        }
        false
    }
}

/// Solve the binary soft-margin dual by SMO. Labels must be ±1 with both
/// classes present; rows are used as-is (standardize upstream).
///
/// On return every example satisfies its KKT condition within `tol`:
/// α=0 ⇒ y·f(x) ≥ 1-tol, 0<α<C ⇒ |y·f(x)-1| ≤ tol, α=C ⇒ y·f(x) ≤ 1+tol.
pub fn smo_train(
    rows: &[Vec<f64>],
    y: &[f64],
    c: f64,
    tol: f64,
) -> Result<SvmBinaryModel, ClassifyError> {
    if rows.is_empty() {
        return Err(ClassifyError::EmptyDataset);
    }
    assert_eq!(rows.len(), y.len());
    let has_pos = y.iter().any(|&v| v > 0.0);
    let has_neg = y.iter().any(|&v| v < 0.0);
    if !has_pos || !has_neg {
        return Err(ClassifyError::SingleClass);
    }

    let n = rows.len();
    let d = rows[0].len();
    let mut smo = Smo {
        rows,
        y,
        c,
        tol,
        alphas: vec![0.0; n],
        w: vec![0.0; d],
        b: 0.0,
    };

    let mut examine_all = true;
    let mut num_changed = 1usize;
    // The epoch cap is a safety net against float cycling; the acceptance
    // certification checks KKT on every trained model, so a premature exit
    // would be caught there.
    let mut epochs = 0usize;
    while (num_changed > 0 || examine_all) && epochs < 10_000 {
        epochs += 1;
        num_changed = 0;
        if examine_all {
            for i in 0..n {
                num_changed += smo.examine(i) as usize;
            }
        } else {
            for i in 0..n {
                if smo.is_non_bound(i) {
                    num_changed += smo.examine(i) as usize;
                }
            }
        }
        if examine_all {
            examine_all = false;
        } else if num_changed == 0 {
            examine_all = true;
        }
    }

    Ok(SvmBinaryModel {
        weights: smo.w,
        bias: smo.b,
        c,
        alphas: smo.alphas,
    })
}

/// Count KKT violations of a trained model at the given tolerance.
pub fn kkt_violations(
    model: &SvmBinaryModel,
    rows: &[Vec<f64>],
    y: &[f64],
    tol: f64,
) -> usize {
    let mut violations = 0;
    for ((row, &yi), &a) in rows.iter().zip(y).zip(&model.alphas) {
        let margin = yi * model.decision(row);
        let ok = if a <= 0.0 {
            margin >= 1.0 - tol
        } else if a >= model.c {
            margin <= 1.0 + tol
        } else {
            (margin - 1.0).abs() <= tol
        };
        violations += !ok as usize;
    }
    violations
}

/// Per-column z-score parameters learned from training rows. Constant
/// columns keep scale 1 so they map to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Standardizer {
        let n = rows.len().max(1);
        let d = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut mean = vec![0.0; d];
        for row in rows {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut sd = vec![0.0; d];
        for row in rows {
            for (s, (v, m)) in sd.iter_mut().zip(row.iter().zip(&mean)) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut sd {
            *s = (*s / n as f64).sqrt();
            if *s == 0.0 {
                *s = 1.0;
            }
        }
        Standardizer { mean, sd }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.sd))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

/// One pairwise separator: positive decision favors `pos` (the lower id).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairModel {
    pub pos: usize,
    pub neg: usize,
    pub model: SvmBinaryModel,
}

/// One-vs-one linear SVM ensemble over standardized features. Prediction is
/// by majority vote, ties broken by summed signed margins, then lowest id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub standardizer: Standardizer,
    pub n_classes: usize,
    pub pairs: Vec<PairModel>,
}

/// Train the pairwise ensemble. Classes absent from the training data simply
/// contribute no pairs.
pub fn svm_multiclass(train: &Dataset, c: f64) -> Result<SvmModel, ClassifyError> {
    if train.rows.is_empty() {
        return Err(ClassifyError::EmptyDataset);
    }
    let standardizer = Standardizer::fit(&train.rows);
    let rows: Vec<Vec<f64>> = train.rows.iter().map(|r| standardizer.apply(r)).collect();

    let n_classes = train.n_classes();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &label) in train.labels.iter().enumerate() {
        by_class[label].push(i);
    }
    let present: Vec<usize> = (0..n_classes).filter(|&c| !by_class[c].is_empty()).collect();
    if present.len() < 2 {
        return Err(ClassifyError::SingleClass);
    }

    let mut pairs = Vec::new();
    for (ai, &a) in present.iter().enumerate() {
        for &b in &present[ai + 1..] {
            let mut pair_rows = Vec::with_capacity(by_class[a].len() + by_class[b].len());
            let mut pair_y = Vec::with_capacity(pair_rows.capacity());
            for &i in &by_class[a] {
                pair_rows.push(rows[i].clone());
                pair_y.push(1.0);
            }
            for &i in &by_class[b] {
                pair_rows.push(rows[i].clone());
                pair_y.push(-1.0);
            }
            let model = smo_train(&pair_rows, &pair_y, c, DEFAULT_SMO_TOL)?;
            pairs.push(PairModel { pos: a, neg: b, model });
        }
    }

    Ok(SvmModel {
        standardizer,
        n_classes,
        pairs,
    })
}

impl SvmModel {
    pub fn predict(&self, row: &[f64]) -> usize {
        let x = self.standardizer.apply(row);
        let mut votes = vec![0usize; self.n_classes];
        let mut margins = vec![0.0f64; self.n_classes];
        for pair in &self.pairs {
            let f = pair.model.decision(&x);
            if f >= 0.0 {
                votes[pair.pos] += 1;
            } else {
                votes[pair.neg] += 1;
            }
            margins[pair.pos] += f;
            margins[pair.neg] -= f;
        }
        let mut best = 0usize;
        for c in 1..self.n_classes {
            let better = votes[c] > votes[best]
                || (votes[c] == votes[best] && margins[c] > margins[best]);
            if better {
                best = c;
            }
        }
        best
    }
}
