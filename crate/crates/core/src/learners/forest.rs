//! Random forests of CART trees with impurity-decrease importance.
//!
//! Regression trees split on squared-error (variance) decrease; classification
//! trees take 0/1 labels and split on Gini decrease. A feature's importance is
//! the total impurity decrease of the splits on it, summed over trees and
//! normalized to sum to one.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Flag, MaxwayError, Result};
use crate::rng::RngHandle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForestTask {
    Regression,
    Classification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features tried per split; `None` uses ⌈√p⌉ (classification) or ⌈p/3⌉ (regression).
    pub mtry: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig { n_trees: 200, max_depth: None, min_leaf: 5, mtry: None, bootstrap: true }
    }
}

impl ForestConfig {
    pub fn mtry_for(&self, p: usize, task: ForestTask) -> usize {
        let default = match task {
            ForestTask::Classification => (p as f64).sqrt().ceil() as usize,
            ForestTask::Regression => (p as f64 / 3.0).ceil() as usize,
        };
        self.mtry.unwrap_or(default).clamp(1, p.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestFit {
    pub trees: Vec<Tree>,
    pub importance: Array1<f64>,
    pub task: ForestTask,
    pub config: ForestConfig,
    pub seed: RngHandle,
    pub n_features: usize,
    #[serde(default)]
    pub flags: Vec<Flag>,
}

impl ForestFit {
    /// Average of tree outputs (class-1 probability for classification).
    pub fn predict(&self, x: &Array2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.n_features {
            return Err(MaxwayError::DimensionMismatch(format!(
                "forest has {} features, input has {}",
                self.n_features,
                x.ncols()
            )));
        }
        let nt = self.trees.len() as f64;
        let mut row = vec![0.0; x.ncols()];
        Ok(Array1::from_iter(x.outer_iter().map(|r| {
            row.iter_mut().zip(r.iter()).for_each(|(d, s)| *d = *s);
            self.trees.iter().map(|t| t.predict_row(&row)).sum::<f64>() / nt
        })))
    }
}

struct Builder<'a> {
    cols: &'a [Vec<f64>],
    y: &'a [f64],
    task: ForestTask,
    min_leaf: usize,
    max_depth: usize,
    mtry: usize,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
    n_left: usize,
}

impl<'a> Builder<'a> {
    fn impurity_scale(&self) -> f64 {
        match self.task {
            ForestTask::Regression => 1.0,
            // Gini of 0/1 labels is twice their variance
            ForestTask::Classification => 2.0,
        }
    }

    fn best_split(&self, idx: &[usize], rng: &mut impl Rng) -> Option<BestSplit> {
        let n = idx.len();
        let p = self.cols.len();
        let total: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let base = total * total / n as f64;
        let mut order: Vec<usize> = (0..p).collect();
        order.shuffle(rng);
        let mut best: Option<BestSplit> = None;
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);
        for (tried, &f) in order.iter().enumerate() {
            if tried >= self.mtry && best.is_some() {
                break;
            }
            let col = &self.cols[f];
            pairs.clear();
            pairs.extend(idx.iter().map(|&i| (col[i], self.y[i])));
            pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            if pairs[0].0 == pairs[n - 1].0 {
                continue;
            }
            let mut left = 0.0;
            for i in 0..n - 1 {
                left += pairs[i].1;
                let nl = i + 1;
                let nr = n - nl;
                if nl < self.min_leaf {
                    continue;
                }
                if nr < self.min_leaf {
                    break;
                }
                if pairs[i].0 == pairs[i + 1].0 {
                    continue;
                }
                let right = total - left;
                let gain = left * left / nl as f64 + right * right / nr as f64 - base;
                if gain > best.as_ref().map_or(1e-12 * base.abs().max(1e-300), |b| b.gain) {
                    let (a, b) = (pairs[i].0, pairs[i + 1].0);
                    let mut threshold = 0.5 * (a + b);
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some(BestSplit { feature: f, threshold, gain, n_left: nl });
                }
            }
        }
        best
    }

    fn build(&self, sample: Vec<usize>, rng: &mut impl Rng, importance: &mut [f64]) -> Tree {
        let mut nodes = Vec::new();
        let mut stack = vec![(sample, 0usize, usize::MAX, false)];
        while let Some((idx, depth, parent, is_left)) = stack.pop() {
            let at = nodes.len();
            if parent != usize::MAX {
                if let Node::Split { left, right, .. } = &mut nodes[parent] {
                    if is_left {
                        *left = at;
                    } else {
                        *right = at;
                    }
                }
            }
            let n = idx.len();
            let mean = idx.iter().map(|&i| self.y[i]).sum::<f64>() / n as f64;
            let pure = idx.iter().all(|&i| self.y[i] == self.y[idx[0]]);
            let split = if pure || depth >= self.max_depth || n < 2 * self.min_leaf {
                None
            } else {
                self.best_split(&idx, rng)
            };
            match split {
                None => nodes.push(Node::Leaf { value: mean }),
                Some(s) => {
                    importance[s.feature] += s.gain * self.impurity_scale();
                    let col = &self.cols[s.feature];
                    let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| col[i] <= s.threshold);
                    debug_assert_eq!(l.len(), s.n_left);
                    nodes.push(Node::Split { feature: s.feature, threshold: s.threshold, left: 0, right: 0 });
                    stack.push((r, depth + 1, at, false));
                    stack.push((l, depth + 1, at, true));
                }
            }
        }
        Tree { nodes }
    }
}

/// Fits a random forest; tree `t` draws from stream `[t]` of `rng`.
pub fn fit_forest(x: &Array2<f64>, y: &Array1<f64>, task: ForestTask, config: &ForestConfig, rng: &RngHandle) -> Result<ForestFit> {
    let (n, p) = x.dim();
    if y.len() != n {
        return Err(MaxwayError::DimensionMismatch(format!("X has {n} rows, y has {}", y.len())));
    }
    if config.n_trees == 0 || config.min_leaf == 0 {
        return Err(MaxwayError::InvalidConfig("forest needs n_trees ≥ 1 and min_leaf ≥ 1".into()));
    }
    if n < 2 * config.min_leaf {
        return Err(MaxwayError::InvalidConfig(format!("n={n} is below 2·min_leaf={}", 2 * config.min_leaf)));
    }
    if task == ForestTask::Classification {
        if let Some(row) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(MaxwayError::BadBinary { field: "y".into(), row, value: y[row] });
        }
    }
    let cols: Vec<Vec<f64>> = (0..p).map(|j| x.column(j).to_vec()).collect();
    let yv = y.to_vec();
    let builder = Builder {
        cols: &cols,
        y: &yv,
        task,
        min_leaf: config.min_leaf,
        max_depth: config.max_depth.unwrap_or(usize::MAX),
        mtry: config.mtry_for(p, task),
    };
    let grown: Vec<(Tree, Vec<f64>)> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut r = rng.child(t as u64).rng();
            let sample: Vec<usize> = if config.bootstrap {
                (0..n).map(|_| r.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut imp = vec![0.0; p];
            let tree = builder.build(sample, &mut r, &mut imp);
            (tree, imp)
        })
        .collect();
    let mut importance = Array1::zeros(p);
    let mut trees = Vec::with_capacity(grown.len());
    for (tree, imp) in grown {
        for (a, b) in importance.iter_mut().zip(&imp) {
            *a += b;
        }
        trees.push(tree);
    }
    let total = importance.sum();
    if total > 0.0 {
        importance /= total;
    }
    let mut flags = Vec::new();
    if yv.iter().all(|&v| v == yv[0]) {
        flags.push(Flag::DegenerateTarget);
    }
    Ok(ForestFit { trees, importance, task, config: config.clone(), seed: rng.clone(), n_features: p, flags })
}
