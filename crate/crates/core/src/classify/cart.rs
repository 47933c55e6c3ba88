//! CART decision tree: Gini-impurity splits over midpoint thresholds, with
//! optional minimal cost-complexity pruning tuned by an internal 5-fold CV.

use super::{ClassifyError, Dataset};
use serde::{Deserialize, Serialize};

/// A decision tree node. Rows with `feature < threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum TreeNode {
    Leaf {
        class: usize,
        class_distribution: Vec<usize>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn predict(&self, row: &[f64]) -> usize {
        match self {
            TreeNode::Leaf { class, .. } => *class,
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if row[*feature] < *threshold {
                    left.predict(row)
                } else {
                    right.predict(row)
                }
            }
        }
    }
}

/// Total number of nodes in the tree.
pub fn node_count(tree: &TreeNode) -> usize {
    match tree {
        TreeNode::Leaf { .. } => 1,
        TreeNode::Split { left, right, .. } => 1 + node_count(left) + node_count(right),
    }
}

/// Depth of the tree; a bare leaf has depth 0.
pub fn tree_depth(tree: &TreeNode) -> usize {
    match tree {
        TreeNode::Leaf { .. } => 0,
        TreeNode::Split { left, right, .. } => 1 + tree_depth(left).max(tree_depth(right)),
    }
}

fn class_counts(labels: &[usize], indices: &[usize], n_classes: usize) -> Vec<usize> {
    let mut counts = vec![0usize; n_classes];
    for &i in indices {
        counts[labels[i]] += 1;
    }
    counts
}

fn majority(counts: &[usize]) -> usize {
    counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

fn leaf(counts: Vec<usize>) -> TreeNode {
    TreeNode::Leaf {
        class: majority(&counts),
        class_distribution: counts,
    }
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Best Gini-gain split over (feature, midpoint-between-adjacent-distinct
/// values) candidates. Features are scanned in schema order and the first
/// best candidate wins, so the result is deterministic.
fn best_split(
    dataset: &Dataset,
    indices: &[usize],
    counts: &[usize],
    min_leaf: usize,
) -> Option<BestSplit> {
    let n = indices.len();
    let n_f = n as f64;
    let total_sumsq: f64 = counts.iter().map(|&c| (c * c) as f64).sum();
    let parent_impurity = 1.0 - total_sumsq / (n_f * n_f);

    let mut best: Option<BestSplit> = None;
    let mut sorted: Vec<(f64, usize)> = Vec::with_capacity(n);
    for feature in 0..dataset.feature_names.len() {
        sorted.clear();
        sorted.extend(
            indices
                .iter()
                .map(|&i| (dataset.rows[i][feature], dataset.labels[i])),
        );
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        if sorted[0].0 == sorted[n - 1].0 {
            continue;
        }

        let mut left_counts = vec![0usize; counts.len()];
        let mut left_sumsq = 0.0f64;
        let mut right_sumsq = total_sumsq;
        for split_at in 1..n {
            let label = sorted[split_at - 1].1;
            let lc = left_counts[label] as f64;
            let rc = (counts[label] - left_counts[label]) as f64;
            left_sumsq += 2.0 * lc + 1.0;
            right_sumsq -= 2.0 * rc - 1.0;
            left_counts[label] += 1;

            if sorted[split_at].0 == sorted[split_at - 1].0 {
                continue;
            }
            let n_left = split_at;
            let n_right = n - split_at;
            if n_left < min_leaf || n_right < min_leaf {
                continue;
            }
            let gini_left = 1.0 - left_sumsq / (n_left * n_left) as f64;
            let gini_right = 1.0 - right_sumsq / (n_right * n_right) as f64;
            let weighted =
                (n_left as f64 * gini_left + n_right as f64 * gini_right) / n_f;
            let gain = parent_impurity - weighted;
            if best.as_ref().map(|b| gain > b.gain).unwrap_or(true) {
                best = Some(BestSplit {
                    feature,
                    threshold: (sorted[split_at - 1].0 + sorted[split_at].0) / 2.0,
                    gain,
                });
            }
        }
    }
    best
}

fn grow(dataset: &Dataset, indices: &[usize], min_leaf: usize) -> TreeNode {
    let counts = class_counts(&dataset.labels, indices, dataset.n_classes());
    let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
    if pure || indices.len() < 2 * min_leaf {
        return leaf(counts);
    }
    // An impure node splits even at zero gain (as long as a valid candidate
    // exists); children are strictly smaller so recursion terminates.
    let Some(split) = best_split(dataset, indices, &counts, min_leaf) else {
        return leaf(counts);
    };
    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
        .iter()
        .partition(|&&i| dataset.rows[i][split.feature] < split.threshold);
    debug_assert!(!left_idx.is_empty() && !right_idx.is_empty());
    TreeNode::Split {
        feature: split.feature,
        threshold: split.threshold,
        left: Box::new(grow(dataset, &left_idx, min_leaf)),
        right: Box::new(grow(dataset, &right_idx, min_leaf)),
    }
}

/// Grow a CART tree; optionally apply minimal cost-complexity pruning with
/// the penalty chosen by a deterministic internal 5-fold cross-validation.
pub fn cart_train(
    train: &Dataset,
    min_leaf: usize,
    prune: bool,
) -> Result<TreeNode, ClassifyError> {
    if train.rows.is_empty() {
        return Err(ClassifyError::EmptyDataset);
    }
    let min_leaf = min_leaf.max(1);
    let all: Vec<usize> = (0..train.rows.len()).collect();
    let tree = grow(train, &all, min_leaf);
    if !prune {
        return Ok(tree);
    }

    let alphas = candidate_alphas(&tree, train, &all);
    if alphas.len() <= 1 {
        return Ok(tree);
    }
    let best_alpha = select_alpha_by_cv(train, min_leaf, &alphas);
    Ok(prune_to_alpha(&tree, best_alpha, train.rows.len()))
}

/// Node error count if collapsed to a leaf.
fn node_error(tree: &TreeNode) -> usize {
    let dist = subtree_distribution(tree);
    dist.iter().sum::<usize>() - dist[majority(&dist)]
}

fn subtree_distribution(tree: &TreeNode) -> Vec<usize> {
    match tree {
        TreeNode::Leaf {
            class_distribution, ..
        } => class_distribution.clone(),
        TreeNode::Split { left, right, .. } => {
            let mut dist = subtree_distribution(left);
            for (d, r) in dist.iter_mut().zip(subtree_distribution(right)) {
                *d += r;
            }
            dist
        }
    }
}

/// Sum of leaf errors and leaf count of a subtree.
fn subtree_error(tree: &TreeNode) -> (usize, usize) {
    match tree {
        TreeNode::Leaf { .. } => (node_error(tree), 1),
        TreeNode::Split { left, right, .. } => {
            let (le, ll) = subtree_error(left);
            let (re, rl) = subtree_error(right);
            (le + re, ll + rl)
        }
    }
}

/// Weakest-link penalty sequence of the fully grown tree: the alpha values at
/// which successive subtrees collapse, bracketed by 0 and a value beyond the
/// last breakpoint.
fn candidate_alphas(tree: &TreeNode, _train: &Dataset, all: &[usize]) -> Vec<f64> {
    let n_total = all.len() as f64;
    let mut working = tree.clone();
    let mut alphas = vec![0.0f64];
    while let Some(g) = weakest_link(&working, n_total) {
        alphas.push(g);
        working = collapse_at_or_below(&working, g, n_total);
    }
    alphas.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    if let Some(&last) = alphas.last() {
        alphas.push(last * 2.0 + 1e-9);
    }
    alphas
}

/// Smallest g(t) = (R(t) - R(T_t)) / (leaves - 1) over internal nodes.
fn weakest_link(tree: &TreeNode, n_total: f64) -> Option<f64> {
    match tree {
        TreeNode::Leaf { .. } => None,
        TreeNode::Split { left, right, .. } => {
            let (sub_err, leaves) = subtree_error(tree);
            let own = (node_error(tree) as f64 - sub_err as f64) / n_total
                / (leaves as f64 - 1.0);
            let child_min = [weakest_link(left, n_total), weakest_link(right, n_total)]
                .into_iter()
                .flatten()
                .fold(f64::INFINITY, f64::min);
            Some(own.min(child_min))
        }
    }
}

fn collapse_at_or_below(tree: &TreeNode, alpha: f64, n_total: f64) -> TreeNode {
    match tree {
        TreeNode::Leaf { .. } => tree.clone(),
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            let left = collapse_at_or_below(left, alpha, n_total);
            let right = collapse_at_or_below(right, alpha, n_total);
            let rebuilt = TreeNode::Split {
                feature: *feature,
                threshold: *threshold,
                left: Box::new(left),
                right: Box::new(right),
            };
            let (sub_err, leaves) = subtree_error(&rebuilt);
            if leaves > 1 {
                let g = (node_error(&rebuilt) as f64 - sub_err as f64) / n_total
                    / (leaves as f64 - 1.0);
                if g <= alpha + 1e-15 {
                    return leaf(subtree_distribution(&rebuilt));
                }
            }
            rebuilt
        }
    }
}

/// Minimal cost-complexity pruning for a fixed penalty: collapse a node
/// whenever its cost as a leaf does not exceed the cost of its subtree.
pub(crate) fn prune_to_alpha(tree: &TreeNode, alpha: f64, n_total: usize) -> TreeNode {
    fn walk(tree: &TreeNode, alpha: f64, n_total: f64) -> (TreeNode, f64, usize) {
        match tree {
            TreeNode::Leaf { .. } => {
                (tree.clone(), node_error(tree) as f64 / n_total + alpha, 1)
            }
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                let (l, lc, ll) = walk(left, alpha, n_total);
                let (r, rc, rl) = walk(right, alpha, n_total);
                let keep_cost = lc + rc;
                let dist = {
                    let mut d = subtree_distribution(&l);
                    for (a, b) in d.iter_mut().zip(subtree_distribution(&r)) {
                        *a += b;
                    }
                    d
                };
                let as_leaf_err = dist.iter().sum::<usize>() - dist[majority(&dist)];
                let collapse_cost = as_leaf_err as f64 / n_total + alpha;
                if collapse_cost <= keep_cost + 1e-15 {
                    (leaf(dist), collapse_cost, 1)
                } else {
                    (
                        TreeNode::Split {
                            feature: *feature,
                            threshold: *threshold,
                            left: Box::new(l),
                            right: Box::new(r),
                        },
                        keep_cost,
                        ll + rl,
                    )
                }
            }
        }
    }
    walk(tree, alpha, n_total as f64).0
}

/// Pick the pruning penalty by deterministic 5-fold CV on the training data:
/// folds are dealt round-robin per class in row order, no RNG. Ties prefer
/// the larger penalty (smaller tree).
fn select_alpha_by_cv(train: &Dataset, min_leaf: usize, alphas: &[f64]) -> f64 {
    const FOLDS: usize = 5;
    let mut fold_of = vec![0usize; train.rows.len()];
    let mut per_class_seen = vec![0usize; train.n_classes()];
    for (i, &label) in train.labels.iter().enumerate() {
        fold_of[i] = per_class_seen[label] % FOLDS;
        per_class_seen[label] += 1;
    }

    let mut fold_trees: Vec<(TreeNode, Vec<usize>, usize)> = Vec::new();
    for fold in 0..FOLDS {
        let train_idx: Vec<usize> = (0..train.rows.len())
            .filter(|&i| fold_of[i] != fold)
            .collect();
        let test_idx: Vec<usize> = (0..train.rows.len())
            .filter(|&i| fold_of[i] == fold)
            .collect();
        if train_idx.is_empty() || test_idx.is_empty() {
            continue;
        }
        let sub = train.subset(&train_idx);
        let all: Vec<usize> = (0..sub.rows.len()).collect();
        let tree = grow(&sub, &all, min_leaf);
        fold_trees.push((tree, test_idx, train_idx.len()));
    }

    let mut best = (alphas[0], f64::MIN);
    for &alpha in alphas {
        let mut correct = 0usize;
        let mut total = 0usize;
        for (tree, test_idx, train_len) in &fold_trees {
            let pruned = prune_to_alpha(tree, alpha, *train_len);
            for &i in test_idx {
                if pruned.predict(&train.rows[i]) == train.labels[i] {
                    correct += 1;
                }
                total += 1;
            }
        }
        let acc = if total == 0 {
            0.0
        } else {
            correct as f64 / total as f64
        };
        if acc >= best.1 {
            best = (alpha, acc);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::toy_dataset;

    fn train_accuracy(tree: &TreeNode, d: &Dataset) -> f64 {
        let correct = d
            .rows
            .iter()
            .zip(&d.labels)
            .filter(|(row, &label)| tree.predict(row) == label)
            .count();
        correct as f64 / d.rows.len() as f64
    }

    #[test]
    fn single_threshold_gives_depth_one_tree() {
        let rows: Vec<Vec<f64>> = (-10..10).map(|x| vec![x as f64]).collect();
        let labels: Vec<usize> = (-10..10).map(|x| if x < 0 { 0 } else { 1 }).collect();
        let d = toy_dataset(rows, labels, 2);
        let tree = cart_train(&d, 1, false).unwrap();
        assert_eq!(tree_depth(&tree), 1);
        assert_eq!(train_accuracy(&tree, &d), 1.0);
        match &tree {
            TreeNode::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert!((*threshold - (-0.5)).abs() < 1e-12);
            }
            _ => panic!("expected split"),
        }
    }

    #[test]
    fn pure_input_is_single_leaf() {
        let d = toy_dataset(vec![vec![1.0], vec![2.0], vec![3.0]], vec![1, 1, 1], 2);
        let tree = cart_train(&d, 1, false).unwrap();
        assert!(matches!(tree, TreeNode::Leaf { class: 1, .. }));
    }

    #[test]
    fn xor_layout_solved_at_depth_two() {
        // No single axis split beats 50% on XOR; brute-force over all axis
        // thresholds confirms it, and the grown tree must reach depth 2.
        let rows = vec![
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
        ];
        let labels = vec![0, 1, 1, 0];
        let d = toy_dataset(rows.clone(), labels.clone(), 2);

        for feature in 0..2 {
            // The only candidate threshold per axis is the midpoint 0.5.
            let correct_as_left0: usize = rows
                .iter()
                .zip(&labels)
                .filter(|(r, &l)| (r[feature] < 0.5) == (l == 0))
                .count();
            let best_side = correct_as_left0.max(4 - correct_as_left0);
            assert_eq!(best_side, 2, "depth-1 tree cannot beat 50% on XOR");
        }

        let tree = cart_train(&d, 1, false).unwrap();
        assert_eq!(tree_depth(&tree), 2);
        assert_eq!(train_accuracy(&tree, &d), 1.0);
    }

    #[test]
    fn perfect_training_accuracy_on_duplicate_free_data() {
        // Deterministic pseudo-random duplicate-free rows.
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64) / (u32::MAX as f64)
        };
        let rows: Vec<Vec<f64>> = (0..150).map(|_| vec![next(), next(), next()]).collect();
        let labels: Vec<usize> = (0..150).map(|_| (next() * 3.0) as usize % 3).collect();
        let d = toy_dataset(rows, labels, 3);
        let tree = cart_train(&d, 1, false).unwrap();
        assert_eq!(train_accuracy(&tree, &d), 1.0);
    }

    #[test]
    fn min_leaf_respected() {
        let rows: Vec<Vec<f64>> = (0..40).map(|x| vec![x as f64]).collect();
        let labels: Vec<usize> = (0..40).map(|x| (x / 5) % 2).collect();
        let d = toy_dataset(rows, labels, 2);
        let tree = cart_train(&d, 5, false).unwrap();
        fn check_leaf_sizes(tree: &TreeNode, min_leaf: usize) {
            match tree {
                TreeNode::Leaf { class_distribution, .. } => {
                    assert!(class_distribution.iter().sum::<usize>() >= min_leaf);
                }
                TreeNode::Split { left, right, .. } => {
                    check_leaf_sizes(left, min_leaf);
                    check_leaf_sizes(right, min_leaf);
                }
            }
        }
        check_leaf_sizes(&tree, 5);
    }

    #[test]
    fn pruning_never_grows_the_tree() {
        let mut state = 99u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64) / (u32::MAX as f64)
        };
        // Noisy labels so pruning has something to cut.
        let rows: Vec<Vec<f64>> = (0..200).map(|_| vec![next(), next()]).collect();
        let labels: Vec<usize> = rows
            .iter()
            .map(|r| {
                let clean = if r[0] > 0.5 { 1 } else { 0 };
                if next() < 0.15 {
                    1 - clean
                } else {
                    clean
                }
            })
            .collect();
        let d = toy_dataset(rows, labels, 2);
        let unpruned = cart_train(&d, 1, false).unwrap();
        let pruned = cart_train(&d, 1, true).unwrap();
        assert!(node_count(&pruned) <= node_count(&unpruned));
    }

    #[test]
    fn prune_to_alpha_monotone_in_alpha() {
        let rows: Vec<Vec<f64>> = (0..50).map(|x| vec![(x % 25) as f64, (x / 5) as f64]).collect();
        let labels: Vec<usize> = (0..50).map(|x| (x % 3 == 0) as usize).collect();
        let d = toy_dataset(rows, labels, 2);
        let tree = cart_train(&d, 1, false).unwrap();
        let mut last = usize::MAX;
        for alpha in [0.0, 0.001, 0.01, 0.1, 1.0] {
            let pruned = prune_to_alpha(&tree, alpha, d.rows.len());
            let size = node_count(&pruned);
            assert!(size <= last);
            last = size;
        }
        // A huge penalty collapses to the root.
        assert_eq!(node_count(&prune_to_alpha(&tree, 10.0, d.rows.len())), 1);
    }

    #[test]
    fn empty_dataset_errors() {
        let d = toy_dataset(vec![], vec![], 2);
        assert!(matches!(
            cart_train(&d, 1, false),
            Err(ClassifyError::EmptyDataset)
        ));
    }

    #[test]
    fn deterministic_training() {
        let rows: Vec<Vec<f64>> = (0..60).map(|x| vec![(x as f64).sin(), (x as f64).cos()]).collect();
        let labels: Vec<usize> = (0..60).map(|x| (x % 2) as usize).collect();
        let d = toy_dataset(rows, labels, 2);
        let a = cart_train(&d, 2, true).unwrap();
        let b = cart_train(&d, 2, true).unwrap();
        assert_eq!(a, b);
    }
}
