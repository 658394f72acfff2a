//! Gini decision trees and the bagged forest used as the meta-learner.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::label::{argmax, LabelCode, NUM_LABELS};
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForestParams {
    pub trees: usize,
    /// `None` grows until nodes are pure or hit `min_leaf`.
    pub max_depth: Option<usize>,
    /// Features tried at each split.
    pub mtry: usize,
    pub min_leaf: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            trees: 200,
            max_depth: None,
            mtry: 8,
            min_leaf: 1,
        }
    }
}

impl ForestParams {
    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.trees == 0 {
            return Err(Error::invalid("forest needs at least one tree"));
        }
        if self.mtry == 0 || self.mtry > n_features {
            return Err(Error::invalid(format!(
                "mtry must be in 1..={n_features}, got {}",
                self.mtry
            )));
        }
        if self.min_leaf == 0 {
            return Err(Error::invalid("min_leaf must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        counts: [u32; NUM_LABELS],
    },
}

/// Binary tree stored as a node array; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

impl DecisionTree {
    /// Rebuilds a tree, checking that it is a well-formed binary tree over
    /// `n_features` columns.
    pub fn from_nodes(nodes: Vec<Node>, n_features: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::invalid("tree has no nodes"));
        }
        let mut referenced = vec![false; nodes.len()];
        for (i, node) in nodes.iter().enumerate() {
            match *node {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if feature as usize >= n_features || !threshold.is_finite() {
                        return Err(Error::invalid(format!("node {i}: bad split")));
                    }
                    for child in [left as usize, right as usize] {
                        // Children always follow their parent, which rules out cycles.
                        if child <= i || child >= nodes.len() || referenced[child] {
                            return Err(Error::invalid(format!("node {i}: bad child {child}")));
                        }
                        referenced[child] = true;
                    }
                }
                Node::Leaf { counts } => {
                    if counts.iter().all(|&c| c == 0) {
                        return Err(Error::invalid(format!("leaf {i} is empty")));
                    }
                }
            }
        }
        if referenced.iter().skip(1).any(|r| !r) {
            return Err(Error::invalid("tree has unreachable nodes"));
        }
        Ok(DecisionTree { nodes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn is_leaf(&self) -> bool {
        self.nodes.len() == 1
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left as usize).max(go(nodes, right as usize)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn leaf_counts(&self, row: &[f64]) -> &[u32; NUM_LABELS] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { counts } => return counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    /// Majority class of the reached leaf; ties go to the lowest index.
    pub fn predict(&self, row: &[f64]) -> LabelCode {
        let counts = self.leaf_counts(row);
        let as_f: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        LabelCode::ALL[argmax(&as_f)]
    }
}

fn histogram(labels: &[LabelCode], idx: &[usize]) -> [u32; NUM_LABELS] {
    let mut h = [0u32; NUM_LABELS];
    for &i in idx {
        h[labels[i].index()] += 1;
    }
    h
}

/// `sum_c count_c^2 / n`; larger means purer. Weighted Gini impurity of a
/// split is `n - purity(left) - purity(right)`.
fn purity(counts: &[u32; NUM_LABELS], n: u32) -> f64 {
    counts.iter().map(|&c| (c as f64) * (c as f64)).sum::<f64>() / n as f64
}

pub fn gini(counts: &[u32; NUM_LABELS]) -> f64 {
    let n: u32 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    1.0 - purity(counts, n) / n as f64
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

fn best_split(
    rows: &[Vec<f64>],
    labels: &[LabelCode],
    idx: &[usize],
    features: &[usize],
    min_leaf: usize,
) -> Option<BestSplit> {
    let n = idx.len();
    let total = histogram(labels, idx);
    let mut best: Option<BestSplit> = None;
    let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(n);
    for &f in features {
        pairs.clear();
        pairs.extend(idx.iter().map(|&i| (rows[i][f], labels[i].index())));
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left = [0u32; NUM_LABELS];
        for pos in 0..n - 1 {
            left[pairs[pos].1] += 1;
            let (v, next) = (pairs[pos].0, pairs[pos + 1].0);
            let n_left = pos + 1;
            if v == next || n_left < min_leaf || n - n_left < min_leaf {
                continue;
            }
            let mut right = total;
            for c in 0..NUM_LABELS {
                right[c] -= left[c];
            }
            let score = purity(&left, n_left as u32) + purity(&right, (n - n_left) as u32);
            if best.as_ref().is_none_or(|b| score > b.score) {
                let mut threshold = v + (next - v) / 2.0;
                if threshold >= next {
                    threshold = v;
                }
                best = Some(BestSplit {
                    feature: f,
                    threshold,
                    score,
                });
            }
        }
    }
    best
}

/// Grows one tree on the rows listed in `sample` (duplicates allowed).
pub fn grow_tree(
    rows: &[Vec<f64>],
    labels: &[LabelCode],
    sample: Vec<usize>,
    params: &ForestParams,
    rng: &mut impl Rng,
) -> DecisionTree {
    let n_features = rows[0].len();
    let mut nodes: Vec<Node> = vec![Node::Leaf {
        counts: [0; NUM_LABELS],
    }];
    // (node slot, rows reaching it, depth)
    let mut stack: Vec<(usize, Vec<usize>, usize)> = vec![(0, sample, 0)];
    while let Some((slot, idx, depth)) = stack.pop() {
        let counts = histogram(labels, &idx);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_capped = params.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_capped || idx.len() < 2 * params.min_leaf {
            nodes[slot] = Node::Leaf { counts };
            continue;
        }
        let features = index::sample(rng, n_features, params.mtry).into_vec();
        let Some(split) = best_split(rows, labels, &idx, &features, params.min_leaf) else {
            nodes[slot] = Node::Leaf { counts };
            continue;
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| rows[i][split.feature] <= split.threshold);
        let left = nodes.len();
        let right = left + 1;
        let placeholder = Node::Leaf {
            counts: [0; NUM_LABELS],
        };
        nodes.push(placeholder.clone());
        nodes.push(placeholder);
        nodes[slot] = Node::Split {
            feature: split.feature as u32,
            threshold: split.threshold,
            left: left as u32,
            right: right as u32,
        };
        stack.push((right, right_idx, depth + 1));
        stack.push((left, left_idx, depth + 1));
    }
    DecisionTree { nodes }
}

/// Trains a forest: each tree sees a bootstrap sample of `n` rows drawn
/// with replacement from a stream seeded by `(seed, tree index)`.
pub fn train_forest(
    rows: &[Vec<f64>],
    labels: &[LabelCode],
    params: &ForestParams,
    seed: u64,
) -> Result<Vec<DecisionTree>> {
    if rows.is_empty() {
        return Err(Error::invalid("no rows to train the forest on"));
    }
    if rows.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} rows but {} labels",
            rows.len(),
            labels.len()
        )));
    }
    let width = rows[0].len();
    if let Some(r) = rows.iter().find(|r| r.len() != width) {
        return Err(Error::DimensionMismatch {
            expected: width,
            actual: r.len(),
        });
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite meta-feature"));
    }
    params.validate(width)?;
    let n = rows.len();
    Ok((0..params.trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive_indexed(seed, "tree", t));
            let sample: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            grow_tree(rows, labels, sample, params, &mut rng)
        })
        .collect())
}

/// Fraction of trees voting for each class.
pub fn vote_fractions(trees: &[DecisionTree], row: &[f64]) -> [f64; NUM_LABELS] {
    let mut votes = [0usize; NUM_LABELS];
    for t in trees {
        votes[t.predict(row).index()] += 1;
    }
    let mut out = [0.0; NUM_LABELS];
    for (o, v) in out.iter_mut().zip(votes) {
        *o = v as f64 / trees.len() as f64;
    }
    out
}

/// Plurality vote; ties go to the lowest class index.
pub fn predict_forest(trees: &[DecisionTree], row: &[f64]) -> (LabelCode, [f64; NUM_LABELS]) {
    let fractions = vote_fractions(trees, row);
    (LabelCode::ALL[argmax(&fractions)], fractions)
}
