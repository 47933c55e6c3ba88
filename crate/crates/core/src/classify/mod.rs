//! Classifier training and evaluation: the ZeroR baseline, a CART decision
//! tree, a linear SVM trained by sequential minimal optimization, and the
//! cross-validation harness with grid search and the data-sufficiency sweep.

mod cart;
mod eval;
mod svm;

pub use cart::{cart_train, node_count, tree_depth, TreeNode};
pub use eval::{
    cross_validate, data_sufficiency_sweep, derive_seed, grid_search, stratified_folds,
    ClassifierFamily, EvalReport, ParamGrid, SweepConfig, SweepPoint,
};
pub use svm::{
    dual_objective_for, kkt_violations, smo_train, svm_multiclass, Standardizer, SvmBinaryModel,
    SvmModel, DEFAULT_SMO_TOL,
};

use crate::telemetry::{MacAddress, Oui};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("training data contains a single class")]
    SingleClass,
    #[error("class {class} has {count} members, fewer than the {folds} folds")]
    TooFewPerClass {
        class: String,
        count: usize,
        folds: usize,
    },
    #[error("length mismatch: {left} rows vs {right} auxiliary values")]
    LengthMismatch { left: usize, right: usize },
}

/// A labeled feature matrix ready for training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Class id per row, indexing into `class_names`.
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    /// Row identities, aligned with `rows`.
    pub macs: Vec<MacAddress>,
    /// Per-row vendor prefix, when the OUI categorical feature is in play.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oui: Option<Vec<Oui>>,
}

impl Dataset {
    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_classes()];
        for &label in &self.labels {
            counts[label] += 1;
        }
        counts
    }

    /// Rows selected by index, preserving order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
            macs: indices.iter().map(|&i| self.macs[i]).collect(),
            oui: self
                .oui
                .as_ref()
                .map(|ouis| indices.iter().map(|&i| ouis[i]).collect()),
        }
    }
}

/// Append one-hot indicator columns for the `top_n` most frequent OUIs plus
/// an "other" bucket.
pub fn encode_oui(dataset: &Dataset, ouis: &[Oui], top_n: usize) -> Result<Dataset, ClassifyError> {
    if ouis.len() != dataset.rows.len() {
        return Err(ClassifyError::LengthMismatch {
            left: dataset.rows.len(),
            right: ouis.len(),
        });
    }
    let mut counts: BTreeMap<Oui, usize> = BTreeMap::new();
    for oui in ouis {
        *counts.entry(*oui).or_insert(0) += 1;
    }
    let mut ranked: Vec<(Oui, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let top: Vec<Oui> = ranked.into_iter().take(top_n).map(|(o, _)| o).collect();

    let mut out = dataset.clone();
    for oui in &top {
        out.feature_names.push(format!("oui_{oui}"));
    }
    out.feature_names.push("oui_other".to_string());
    for (row, oui) in out.rows.iter_mut().zip(ouis) {
        let mut hit = false;
        for candidate in &top {
            let on = candidate == oui;
            row.push(if on { 1.0 } else { 0.0 });
            hit |= on;
        }
        row.push(if hit { 0.0 } else { 1.0 });
    }
    out.oui = Some(ouis.to_vec());
    Ok(out)
}

/// Assemble a labeled dataset from a feature matrix and a mac-to-class map.
/// Unlabeled rows are dropped; class ids follow sorted class-name order.
pub fn dataset_from_labels(
    matrix: &crate::features::FeatureMatrix,
    labels: &BTreeMap<MacAddress, String>,
) -> Result<Dataset, ClassifyError> {
    let mut class_names: Vec<String> = labels
        .iter()
        .filter(|(mac, _)| matrix.macs.contains(mac))
        .map(|(_, name)| name.clone())
        .collect();
    class_names.sort();
    class_names.dedup();
    if class_names.is_empty() {
        return Err(ClassifyError::EmptyDataset);
    }

    let mut rows = Vec::new();
    let mut row_labels = Vec::new();
    let mut macs = Vec::new();
    let mut ouis = Vec::new();
    for (mac, row) in matrix.macs.iter().zip(&matrix.rows) {
        if let Some(name) = labels.get(mac) {
            let id = class_names.binary_search(name).expect("name collected above");
            rows.push(row.clone());
            row_labels.push(id);
            macs.push(*mac);
            ouis.push(mac.oui());
        }
    }
    Ok(Dataset {
        feature_names: matrix.names.clone(),
        rows,
        labels: row_labels,
        class_names,
        macs,
        oui: Some(ouis),
    })
}

/// The baseline classifier: always predicts the most common training class.
/// Ties break toward the lowest class id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroRModel {
    pub modal_class: usize,
    pub class_counts: Vec<usize>,
}

/// Train the ZeroR baseline.
pub fn zero_r(train: &Dataset) -> Result<ZeroRModel, ClassifyError> {
    if train.rows.is_empty() {
        return Err(ClassifyError::EmptyDataset);
    }
    let counts = train.class_counts();
    let modal_class = counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .unwrap();
    Ok(ZeroRModel {
        modal_class,
        class_counts: counts,
    })
}

impl ZeroRModel {
    pub fn predict(&self, _row: &[f64]) -> usize {
        self.modal_class
    }
}

/// Which classifier to train, with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSpec {
    ZeroR,
    Cart { min_leaf: usize, prune: bool },
    Svm { c: f64 },
}

impl std::fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelSpec::ZeroR => write!(f, "zeror"),
            ModelSpec::Cart { min_leaf, prune } => {
                write!(f, "cart(min_leaf={min_leaf},prune={prune})")
            }
            ModelSpec::Svm { c } => write!(f, "svm(c={c})"),
        }
    }
}

/// A trained, serializable model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TrainedModel {
    ZeroR(ZeroRModel),
    Cart(TreeNode),
    Svm(SvmModel),
}

impl ModelSpec {
    pub fn train(&self, dataset: &Dataset) -> Result<TrainedModel, ClassifyError> {
        match *self {
            ModelSpec::ZeroR => Ok(TrainedModel::ZeroR(zero_r(dataset)?)),
            ModelSpec::Cart { min_leaf, prune } => {
                Ok(TrainedModel::Cart(cart_train(dataset, min_leaf, prune)?))
            }
            ModelSpec::Svm { c } => Ok(TrainedModel::Svm(svm_multiclass(dataset, c)?)),
        }
    }
}

impl TrainedModel {
    pub fn predict(&self, row: &[f64]) -> usize {
        match self {
            TrainedModel::ZeroR(m) => m.predict(row),
            TrainedModel::Cart(tree) => tree.predict(row),
            TrainedModel::Svm(m) => m.predict(row),
        }
    }
}

#[cfg(test)]
pub(crate) fn toy_dataset(rows: Vec<Vec<f64>>, labels: Vec<usize>, n_classes: usize) -> Dataset {
    let n = rows.len();
    let n_features = rows.first().map(|r| r.len()).unwrap_or(0);
    Dataset {
        feature_names: (0..n_features).map(|i| format!("f{i}")).collect(),
        rows,
        labels,
        class_names: (0..n_classes).map(|i| format!("class{i}")).collect(),
        macs: (0..n)
            .map(|i| MacAddress([0, 0, 0, 0, (i >> 8) as u8, i as u8]))
            .collect(),
        oui: None,
    }
}
