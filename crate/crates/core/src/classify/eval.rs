//! Stratified k-fold cross-validation, the evaluation report, exhaustive
//! grid search with nested inner CV, and the data-sufficiency sweep.

use super::{zero_r, ClassifyError, Dataset, ModelSpec};
use crate::analysis::detect_and_rescale;
use crate::features::extract_corpus;
use crate::ingest::filter_population;
use crate::telemetry::{DeviceTimeline, MacAddress};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Cross-validated performance of one classifier configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean test accuracy over the folds.
    pub accuracy: f64,
    /// Mean class-weighted F1 over the folds.
    pub f_measure: f64,
    /// Actual x predicted counts, summed over all folds.
    pub confusion: Vec<Vec<u64>>,
    /// Mean ZeroR accuracy over the same folds.
    pub baseline_accuracy: f64,
    /// accuracy - baseline_accuracy; may be negative.
    pub improvement: f64,
    pub class_names: Vec<String>,
    pub folds: usize,
    pub seed: u64,
}

impl EvalReport {
    /// Structural invariants of the confusion matrix and derived fields.
    pub fn validate(&self, expected_rows: u64) -> Result<(), String> {
        let total: u64 = self.confusion.iter().flatten().sum();
        if total != expected_rows {
            return Err(format!("confusion sums to {total}, expected {expected_rows}"));
        }
        if (self.improvement - (self.accuracy - self.baseline_accuracy)).abs() > 1e-12 {
            return Err("improvement != accuracy - baseline".into());
        }
        for m in [self.accuracy, self.f_measure, self.baseline_accuracy] {
            if !(0.0..=1.0).contains(&m) {
                return Err(format!("metric {m} outside [0,1]"));
            }
        }
        Ok(())
    }
}

/// Derive a child seed from a root seed and a stage tag (FNV-1a over the tag,
/// mixed with the seed). Keeps every stage's randomness independent while
/// remaining reproducible.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325 ^ seed.rotate_left(17);
    for byte in tag.as_bytes() {
        h ^= *byte as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Stratified fold assignment: shuffle each class's rows with the seeded RNG
/// and deal them round-robin. Returns `fold_of[row]`.
pub fn stratified_folds(labels: &[usize], n_classes: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &label) in labels.iter().enumerate() {
        by_class[label].push(i);
    }
    let mut fold_of = vec![0usize; labels.len()];
    for (class, mut indices) in by_class.into_iter().enumerate() {
        let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, &format!("fold-{class}")));
        indices.shuffle(&mut rng);
        for (pos, idx) in indices.into_iter().enumerate() {
            fold_of[idx] = pos % k;
        }
    }
    fold_of
}

struct FoldOutcome {
    correct: usize,
    total: usize,
    baseline_correct: usize,
    weighted_f1: f64,
    confusion: Vec<Vec<u64>>,
}

fn run_fold(
    dataset: &Dataset,
    spec: ModelSpec,
    fold_of: &[usize],
    fold: usize,
) -> Result<FoldOutcome, ClassifyError> {
    let train_idx: Vec<usize> = (0..dataset.rows.len())
        .filter(|&i| fold_of[i] != fold)
        .collect();
    let test_idx: Vec<usize> = (0..dataset.rows.len())
        .filter(|&i| fold_of[i] == fold)
        .collect();
    let train = dataset.subset(&train_idx);
    let model = spec.train(&train)?;
    let baseline = zero_r(&train)?;

    let n_classes = dataset.n_classes();
    let mut confusion = vec![vec![0u64; n_classes]; n_classes];
    let mut correct = 0usize;
    let mut baseline_correct = 0usize;
    for &i in &test_idx {
        let predicted = model.predict(&dataset.rows[i]);
        let actual = dataset.labels[i];
        confusion[actual][predicted] += 1;
        correct += (predicted == actual) as usize;
        baseline_correct += (baseline.modal_class == actual) as usize;
    }

    // Class-weighted F1 on this fold's test split.
    let mut weighted_f1 = 0.0;
    let n_test = test_idx.len() as f64;
    for (class, row) in confusion.iter().enumerate() {
        let tp = row[class] as f64;
        let support: u64 = row.iter().sum();
        if support == 0 {
            continue;
        }
        let fp: u64 = confusion.iter().map(|r| r[class]).sum::<u64>() - row[class];
        let f1 = {
            let precision = if tp + fp as f64 > 0.0 { tp / (tp + fp as f64) } else { 0.0 };
            let recall = tp / support as f64;
            if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            }
        };
        weighted_f1 += (support as f64 / n_test) * f1;
    }

    Ok(FoldOutcome {
        correct,
        total: test_idx.len(),
        baseline_correct,
        weighted_f1,
        confusion,
    })
}

/// Stratified k-fold cross-validation. Accuracy, F-measure and the ZeroR
/// baseline are averaged over folds; the confusion matrix is summed. The
/// result is bit-reproducible for a fixed seed.
pub fn cross_validate(
    dataset: &Dataset,
    spec: ModelSpec,
    k: usize,
    seed: u64,
) -> Result<EvalReport, ClassifyError> {
    if dataset.rows.is_empty() {
        return Err(ClassifyError::EmptyDataset);
    }
    let counts = dataset.class_counts();
    for (class, &count) in counts.iter().enumerate() {
        if count < k {
            return Err(ClassifyError::TooFewPerClass {
                class: dataset.class_names[class].clone(),
                count,
                folds: k,
            });
        }
    }
    let fold_of = stratified_folds(&dataset.labels, dataset.n_classes(), k, seed);

    let outcomes: Vec<Result<FoldOutcome, ClassifyError>> = (0..k)
        .into_par_iter()
        .map(|fold| run_fold(dataset, spec, &fold_of, fold))
        .collect();

    let n_classes = dataset.n_classes();
    let mut confusion = vec![vec![0u64; n_classes]; n_classes];
    let mut acc_sum = 0.0;
    let mut base_sum = 0.0;
    let mut f1_sum = 0.0;
    for outcome in outcomes {
        let o = outcome?;
        acc_sum += o.correct as f64 / o.total as f64;
        base_sum += o.baseline_correct as f64 / o.total as f64;
        f1_sum += o.weighted_f1;
        for (row, fold_row) in confusion.iter_mut().zip(&o.confusion) {
            for (cell, v) in row.iter_mut().zip(fold_row) {
                *cell += v;
            }
        }
    }
    let accuracy = acc_sum / k as f64;
    let baseline_accuracy = base_sum / k as f64;
    Ok(EvalReport {
        accuracy,
        f_measure: f1_sum / k as f64,
        confusion,
        baseline_accuracy,
        improvement: accuracy - baseline_accuracy,
        class_names: dataset.class_names.clone(),
        folds: k,
        seed,
    })
}

/// Classifier family for grid search; ZeroR has nothing to tune.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierFamily {
    Cart,
    Svm,
}

/// Hyperparameter grid; the defaults are a log-spaced C sweep and the usual
/// leaf-size/pruning combinations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub c_values: Vec<f64>,
    pub min_leaf: Vec<usize>,
    pub prune: Vec<bool>,
}

impl Default for ParamGrid {
    fn default() -> Self {
        ParamGrid {
            c_values: vec![0.01, 0.1, 1.0, 10.0, 100.0],
            min_leaf: vec![1, 2, 5, 10],
            prune: vec![true, false],
        }
    }
}

impl ParamGrid {
    pub fn points(&self, family: ClassifierFamily) -> Vec<ModelSpec> {
        match family {
            ClassifierFamily::Svm => self.c_values.iter().map(|&c| ModelSpec::Svm { c }).collect(),
            ClassifierFamily::Cart => {
                let mut points = Vec::new();
                for &min_leaf in &self.min_leaf {
                    for &prune in &self.prune {
                        points.push(ModelSpec::Cart { min_leaf, prune });
                    }
                }
                points
            }
        }
    }
}

/// Lower key = simpler model, used to break score ties.
fn complexity_key(spec: &ModelSpec) -> (i64, i64) {
    match spec {
        ModelSpec::ZeroR => (i64::MIN, 0),
        ModelSpec::Svm { c } => ((c * 1e9) as i64, 0),
        ModelSpec::Cart { min_leaf, prune } => (-(*min_leaf as i64), !*prune as i64),
    }
}

/// Exhaustive grid search scored by nested cross-validation: each grid point
/// is scored by inner 5-fold CV on every outer training split, and the best
/// point (ties to the simplest) is finally evaluated by outer k-fold CV.
pub fn grid_search(
    dataset: &Dataset,
    family: ClassifierFamily,
    grid: &ParamGrid,
    k: usize,
    seed: u64,
) -> Result<(ModelSpec, EvalReport), ClassifyError> {
    let points = grid.points(family);
    if points.is_empty() {
        return Err(ClassifyError::EmptyDataset);
    }

    let fold_of = stratified_folds(&dataset.labels, dataset.n_classes(), k, seed);
    let outer_trains: Vec<Dataset> = (0..k)
        .map(|fold| {
            let idx: Vec<usize> = (0..dataset.rows.len())
                .filter(|&i| fold_of[i] != fold)
                .collect();
            dataset.subset(&idx)
        })
        .collect();

    let scores: Vec<Result<f64, ClassifyError>> = points
        .par_iter()
        .map(|&spec| {
            let mut sum = 0.0;
            for (fold, train) in outer_trains.iter().enumerate() {
                let inner_seed = derive_seed(seed, &format!("inner-{fold}"));
                let report = cross_validate(train, spec, 5, inner_seed)?;
                sum += report.accuracy;
            }
            Ok(sum / outer_trains.len() as f64)
        })
        .collect();

    let mut best: Option<(ModelSpec, f64)> = None;
    for (spec, score) in points.iter().zip(scores) {
        let score = score?;
        let replace = match &best {
            None => true,
            Some((best_spec, best_score)) => {
                score > best_score + 1e-12
                    || ((score - best_score).abs() <= 1e-12
                        && complexity_key(spec) < complexity_key(best_spec))
            }
        };
        if replace {
            best = Some((*spec, score));
        }
    }
    let (best_spec, _) = best.unwrap();
    let report = cross_validate(dataset, best_spec, k, seed)?;
    Ok((best_spec, report))
}

/// Pipeline knobs used when re-running extraction and classification inside
/// the data-sufficiency sweep.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SweepConfig {
    pub folds: usize,
    pub seed: u64,
    pub svm_c: f64,
    pub session_gap_secs: i64,
    pub evf: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            folds: 10,
            seed: 7,
            svm_c: 1.0,
            session_gap_secs: crate::features::DEFAULT_SESSION_GAP_SECS,
            evf: crate::analysis::DEFAULT_EVF,
        }
    }
}

/// One point of the data-sufficiency curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: u32,
    pub kept_devices: u64,
    pub labeled_devices: u64,
    pub accuracy: Option<f64>,
    pub baseline_accuracy: Option<f64>,
    pub improvement: Option<f64>,
    pub error: Option<String>,
}

/// Re-filter the population at each activity threshold, re-extract features,
/// and re-evaluate the SVM by cross-validation. A failure at one threshold is
/// recorded and the sweep continues.
pub fn data_sufficiency_sweep(
    timelines: &[DeviceTimeline],
    labels: &BTreeMap<MacAddress, String>,
    thresholds: &[u32],
    config: &SweepConfig,
) -> Vec<SweepPoint> {
    thresholds
        .iter()
        .map(|&threshold| {
            let (kept, _report) = filter_population(timelines.to_vec(), threshold);
            let kept_devices = kept.len() as u64;
            let (mut matrix, _skipped) = extract_corpus(&kept, config.session_gap_secs);
            let mut point = SweepPoint {
                threshold,
                kept_devices,
                labeled_devices: 0,
                accuracy: None,
                baseline_accuracy: None,
                improvement: None,
                error: None,
            };
            if let Err(e) = detect_and_rescale(&mut matrix, config.evf) {
                point.error = Some(e.to_string());
                return point;
            }
            let dataset = match super::dataset_from_labels(&matrix, labels) {
                Ok(d) => d,
                Err(e) => {
                    point.error = Some(e.to_string());
                    return point;
                }
            };
            point.labeled_devices = dataset.rows.len() as u64;
            match cross_validate(
                &dataset,
                ModelSpec::Svm { c: config.svm_c },
                config.folds,
                derive_seed(config.seed, &format!("sweep-{threshold}")),
            ) {
                Ok(report) => {
                    point.accuracy = Some(report.accuracy);
                    point.baseline_accuracy = Some(report.baseline_accuracy);
                    point.improvement = Some(report.improvement);
                }
                Err(e) => point.error = Some(e.to_string()),
            }
            point
        })
        .collect()
}
