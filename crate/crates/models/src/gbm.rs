//! Gradient-boosted regression trees with histogram-based split finding,
//! squared-error loss, and early stopping on a time-ordered validation tail.
//!
//! Each feature is bucketed once into quantile bins on the training rows;
//! node statistics are accumulated per bin, so a split scan costs
//! `O(bins)` per feature. With squared error the negative gradient is the
//! residual and the optimal leaf value is the mean residual, which makes
//! the training loss non-increasing per boosting round for any learning
//! rate in (0, 2).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ModelError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GbmConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub n_bins: usize,
    pub min_leaf: usize,
    /// Rounds without validation improvement before stopping; 0 disables
    /// early stopping (the model then trains on every row).
    pub patience: usize,
    /// Fraction of rows reserved as the time-ordered validation tail.
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for GbmConfig {
    fn default() -> Self {
        Self {
            n_trees: 1000,
            max_depth: 8,
            learning_rate: 0.01,
            n_bins: 64,
            min_leaf: 20,
            patience: 50,
            val_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Node {
    feature: usize,
    /// Split on raw value: `x <= threshold` goes left.
    threshold: f64,
    left: usize,
    right: usize,
    value: f64,
    is_leaf: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
    /// Total squared-error gain of the tree's splits.
    gain: f64,
}

impl Tree {
    fn predict_row(&self, row: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            let node = &self.nodes[idx];
            if node.is_leaf {
                return node.value;
            }
            idx = if row[node.feature] <= node.threshold { node.left } else { node.right };
        }
    }

    pub fn n_splits(&self) -> usize {
        self.nodes.iter().filter(|n| !n.is_leaf).count()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GbmModel {
    pub config: GbmConfig,
    /// Mean of the training targets; the boosting starting point.
    pub base: f64,
    trees: Vec<Tree>,
    pub n_features: usize,
    /// Training MSE after each kept boosting round.
    pub train_loss_history: Vec<f64>,
    /// Validation MSE per round (empty without early stopping).
    pub val_loss_history: Vec<f64>,
    /// Split-gain totals per feature over the kept trees.
    feature_gain: Vec<f64>,
}

impl GbmModel {
    pub fn trees_used(&self) -> usize {
        self.trees.len()
    }

    pub fn feature_importance(&self) -> &[f64] {
        &self.feature_gain
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<f64, ModelError> {
        if row.len() != self.n_features {
            return Err(ModelError::ShapeMismatch(format!(
                "{} features, expected {}",
                row.len(),
                self.n_features
            )));
        }
        let mut acc = self.base;
        for t in &self.trees {
            acc += self.config.learning_rate * t.predict_row(row);
        }
        Ok(acc)
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>, ModelError> {
        rows.iter().map(|r| self.predict_row(r)).collect()
    }
}

/// Quantile bin upper boundaries for one feature (deduplicated, ascending).
fn quantile_edges(values: &[f64], n_bins: usize) -> Vec<f64> {
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if sorted.is_empty() {
        return vec![0.0];
    }
    let mut edges = Vec::with_capacity(n_bins);
    for b in 1..=n_bins {
        let pos = (b as f64 / n_bins as f64 * (sorted.len() - 1) as f64).round() as usize;
        edges.push(sorted[pos]);
    }
    edges.dedup();
    edges
}

fn bin_value(v: f64, edges: &[f64]) -> u16 {
    edges.partition_point(|&e| e < v).min(edges.len() - 1) as u16
}

struct SplitCandidate {
    feature: usize,
    bin: usize,
    gain: f64,
}

const MIN_GAIN: f64 = 1e-12;

struct TreeBuilder<'a> {
    binned: &'a [Vec<u16>], // column-major
    edges: &'a [Vec<f64>],
    gradients: &'a [f64],
    max_depth: usize,
    min_leaf: usize,
}

impl TreeBuilder<'_> {
    /// Best split for the rows of one node, scanning every feature's bins.
    fn best_split(&self, rows: &[usize]) -> Option<SplitCandidate> {
        let total_sum: f64 = rows.iter().map(|&r| self.gradients[r]).sum();
        let total_n = rows.len();
        if total_n < 2 * self.min_leaf {
            return None;
        }
        let parent_score = total_sum * total_sum / total_n as f64;

        let candidates: Vec<Option<SplitCandidate>> = (0..self.binned.len())
            .into_par_iter()
            .map(|feature| {
                let bins = self.edges[feature].len();
                if bins < 2 {
                    return None;
                }
                let col = &self.binned[feature];
                let mut sums = vec![0.0; bins];
                let mut counts = vec![0usize; bins];
                for &r in rows {
                    let b = col[r] as usize;
                    sums[b] += self.gradients[r];
                    counts[b] += 1;
                }
                let mut best: Option<SplitCandidate> = None;
                let mut left_sum = 0.0;
                let mut left_n = 0usize;
                for b in 0..bins - 1 {
                    left_sum += sums[b];
                    left_n += counts[b];
                    let right_n = total_n - left_n;
                    if left_n < self.min_leaf || right_n < self.min_leaf {
                        continue;
                    }
                    let right_sum = total_sum - left_sum;
                    let gain = left_sum * left_sum / left_n as f64
                        + right_sum * right_sum / right_n as f64
                        - parent_score;
                    if gain > best.as_ref().map_or(MIN_GAIN, |c| c.gain) {
                        best = Some(SplitCandidate { feature, bin: b, gain });
                    }
                }
                best
            })
            .collect();

        // Deterministic reduction: highest gain, ties to the lowest feature.
        let mut best: Option<SplitCandidate> = None;
        for cand in candidates.into_iter().flatten() {
            let better = match &best {
                None => true,
                Some(b) => cand.gain > b.gain,
            };
            if better {
                best = Some(cand);
            }
        }
        best
    }

    fn build(&self) -> Tree {
        let all_rows: Vec<usize> = (0..self.gradients.len()).collect();
        let mut nodes = Vec::new();
        let mut gain_total = 0.0;
        // (node index, rows, depth)
        let mut queue: Vec<(usize, Vec<usize>, usize)> = Vec::new();

        let root_value = mean(&all_rows, self.gradients);
        nodes.push(Node {
            feature: 0,
            threshold: 0.0,
            left: 0,
            right: 0,
            value: root_value,
            is_leaf: true,
        });
        queue.push((0, all_rows, 0));

        while let Some((idx, rows, depth)) = queue.pop() {
            if depth >= self.max_depth {
                continue;
            }
            let Some(split) = self.best_split(&rows) else {
                continue;
            };
            let col = &self.binned[split.feature];
            let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
                rows.iter().partition(|&&r| (col[r] as usize) <= split.bin);

            let left_idx = nodes.len();
            let right_idx = nodes.len() + 1;
            nodes.push(Node {
                feature: 0,
                threshold: 0.0,
                left: 0,
                right: 0,
                value: mean(&left_rows, self.gradients),
                is_leaf: true,
            });
            nodes.push(Node {
                feature: 0,
                threshold: 0.0,
                left: 0,
                right: 0,
                value: mean(&right_rows, self.gradients),
                is_leaf: true,
            });
            let node = &mut nodes[idx];
            node.feature = split.feature;
            node.threshold = self.edges[split.feature][split.bin];
            node.left = left_idx;
            node.right = right_idx;
            node.is_leaf = false;
            gain_total += split.gain;

            queue.push((left_idx, left_rows, depth + 1));
            queue.push((right_idx, right_rows, depth + 1));
        }

        Tree { nodes, gain: gain_total }
    }
}

fn mean(rows: &[usize], values: &[f64]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    rows.iter().map(|&r| values[r]).sum::<f64>() / rows.len() as f64
}

/// Fit by stagewise residual boosting. `rows` is row-major with one feature
/// vector per observation, aligned with `y` in time order.
pub fn fit(rows: &[Vec<f64>], y: &[f64], config: &GbmConfig) -> Result<GbmModel, ModelError> {
    let n = y.len();
    if rows.len() != n {
        return Err(ModelError::LengthMismatch(format!("{} rows vs {} targets", rows.len(), n)));
    }
    if n < 2 * config.min_leaf.max(1) {
        return Err(ModelError::TooFewRows(format!(
            "{n} rows; need at least {}",
            2 * config.min_leaf.max(1)
        )));
    }
    let n_features = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != n_features) {
        return Err(ModelError::ShapeMismatch("ragged feature rows".into()));
    }

    let val_len = if config.patience > 0 {
        ((n as f64 * config.val_fraction).round() as usize).min(n / 2)
    } else {
        0
    };
    let grow_len = n - val_len;
    if grow_len < 2 * config.min_leaf.max(1) {
        return Err(ModelError::TooFewRows(format!(
            "{grow_len} grow rows after validation split"
        )));
    }

    // Bin features on the grow slice (column-major).
    let mut edges = Vec::with_capacity(n_features);
    let mut binned = Vec::with_capacity(n_features);
    for f in 0..n_features {
        let col: Vec<f64> = rows[..grow_len].iter().map(|r| r[f]).collect();
        let e = quantile_edges(&col, config.n_bins.max(2));
        binned.push(rows[..grow_len].iter().map(|r| bin_value(r[f], &e)).collect::<Vec<u16>>());
        edges.push(e);
    }

    let base = y[..grow_len].iter().sum::<f64>() / grow_len as f64;
    let mut grow_pred = vec![base; grow_len];
    let mut val_pred = vec![base; val_len];
    let val_rows = &rows[grow_len..];
    let val_y = &y[grow_len..];

    let mut trees: Vec<Tree> = Vec::new();
    let mut train_loss_history = Vec::new();
    let mut val_loss_history = Vec::new();
    let mut best_val = f64::INFINITY;
    let mut best_round = 0usize;

    for round in 0..config.n_trees {
        let gradients: Vec<f64> =
            y[..grow_len].iter().zip(&grow_pred).map(|(a, p)| a - p).collect();
        let builder = TreeBuilder {
            binned: &binned,
            edges: &edges,
            gradients: &gradients,
            max_depth: config.max_depth,
            min_leaf: config.min_leaf,
        };
        let tree = builder.build();
        if tree.n_splits() == 0 {
            break;
        }

        for (i, p) in grow_pred.iter_mut().enumerate() {
            let row: Vec<f64> = (0..n_features).map(|f| rows[i][f]).collect();
            *p += config.learning_rate * tree.predict_row(&row);
        }
        let train_mse = y[..grow_len]
            .iter()
            .zip(&grow_pred)
            .map(|(a, p)| (a - p).powi(2))
            .sum::<f64>()
            / grow_len as f64;
        train_loss_history.push(train_mse);
        trees.push(tree);

        if val_len > 0 {
            let tree = trees.last().unwrap();
            for (p, row) in val_pred.iter_mut().zip(val_rows) {
                *p += config.learning_rate * tree.predict_row(row);
            }
            let val_mse = val_y
                .iter()
                .zip(&val_pred)
                .map(|(a, p)| (a - p).powi(2))
                .sum::<f64>()
                / val_len as f64;
            val_loss_history.push(val_mse);
            if val_mse < best_val - 1e-12 {
                best_val = val_mse;
                best_round = round + 1;
            } else if round + 1 - best_round >= config.patience {
                break;
            }
        }
    }

    if val_len > 0 {
        trees.truncate(best_round);
        train_loss_history.truncate(best_round);
        val_loss_history.truncate(best_round);
    }

    let mut feature_gain = vec![0.0; n_features];
    for t in &trees {
        for node in t.nodes.iter().filter(|n| !n.is_leaf) {
            // Attribute the whole tree gain per split via node recomputation
            // being unavailable; distribute the tree gain over its splits.
            let _ = node;
        }
    }
    // Gain attribution: recompute per tree by walking splits.
    for t in &trees {
        let splits = t.n_splits();
        if splits == 0 {
            continue;
        }
        for node in t.nodes.iter().filter(|n| !n.is_leaf) {
            feature_gain[node.feature] += t.gain / splits as f64;
        }
    }

    Ok(GbmModel {
        config: config.clone(),
        base,
        trees,
        n_features,
        train_loss_history,
        val_loss_history,
        feature_gain,
    })
}
