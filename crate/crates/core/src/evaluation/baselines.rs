//! Interpretable reference models on concept truth degrees.

use serde::{Deserialize, Serialize};

use super::metrics::roc_auc_macro;
use crate::autodiff::{sigmoid, AdamConfig, AdamState, ParamSet, Tensor};
use crate::error::{Error, Result};
use crate::training::one_hot;

fn check_xy(x: &[f64], labels: &[usize], dim: usize, n_classes: usize) -> Result<()> {
    if dim == 0 || labels.is_empty() || x.len() != labels.len() * dim {
        return Err(Error::shape(format!(
            "{} inputs for {} samples of {dim} features",
            x.len(),
            labels.len()
        )));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= n_classes) {
        return Err(Error::contract(format!("label {y} outside {n_classes} classes")));
    }
    let first = labels[0];
    if labels.iter().all(|&y| y == first) {
        return Err(Error::UndefinedMetric("training labels contain a single class".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRegConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            learning_rate: 0.05,
            l2: 1e-3,
        }
    }
}

/// One-vs-rest logistic regression, `σ(x·W + b)` per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegression {
    pub n_inputs: usize,
    pub n_classes: usize,
    /// `n_inputs × n_classes`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LogisticRegression {
    /// Full-batch Adam on BCE plus `l2·‖W‖²`, from zero weights.
    pub fn fit(x: &[f64], labels: &[usize], n_inputs: usize, n_classes: usize, cfg: &LogRegConfig) -> Result<Self> {
        check_xy(x, labels, n_inputs, n_classes)?;
        let mut params = ParamSet::<f64>::new();
        let w = params.push("weight", &[n_inputs, n_classes], vec![0.0; n_inputs * n_classes]);
        let b = params.push("bias", &[1, n_classes], vec![0.0; n_classes]);
        let xs = Tensor::new(x.to_vec(), &[labels.len(), n_inputs])?;
        let targets = one_hot::<f64>(labels, n_classes)?;
        let mut adam = AdamState::new(
            &params,
            AdamConfig {
                learning_rate: cfg.learning_rate,
                ..AdamConfig::default()
            },
        );
        for _ in 0..cfg.epochs {
            let leaves = params.leaves(true);
            let (wt, bt) = (&leaves[w.0], &leaves[b.0]);
            let probs = xs.matmul(wt)?.add(bt)?.sigmoid()?;
            let loss = probs
                .binary_cross_entropy(&targets)?
                .add(&wt.mul(wt)?.sum().mul_scalar(cfg.l2))?;
            loss.backward()?;
            adam.step(&mut params, &ParamSet::collect_grads(&leaves))?;
        }
        Ok(Self {
            n_inputs,
            n_classes,
            weights: params.get(w).values.clone(),
            bias: params.get(b).values.clone(),
        })
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        x.chunks(self.n_inputs)
            .flat_map(|row| {
                (0..self.n_classes).map(move |c| {
                    let z: f64 = self.bias[c]
                        + row
                            .iter()
                            .enumerate()
                            .map(|(i, v)| v * self.weights[i * self.n_classes + c])
                            .sum::<f64>();
                    sigmoid(z)
                })
            })
            .collect()
    }

    pub fn coefficient(&self, input: usize, class: usize) -> f64 {
        self.weights[input * self.n_classes + class]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        /// Class frequencies of the training samples reaching the leaf.
        distribution: Vec<f64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        /// `x[feature] <= threshold`
        left: usize,
        right: usize,
    },
}

/// CART classifier with Gini impurity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub n_inputs: usize,
    pub n_classes: usize,
    pub nodes: Vec<TreeNode>,
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

impl DecisionTree {
    pub fn fit(x: &[f64], labels: &[usize], n_inputs: usize, n_classes: usize, max_depth: usize) -> Result<Self> {
        check_xy(x, labels, n_inputs, n_classes)?;
        let mut tree = Self {
            n_inputs,
            n_classes,
            nodes: Vec::new(),
        };
        let rows: Vec<usize> = (0..labels.len()).collect();
        tree.grow(x, labels, rows, max_depth);
        Ok(tree)
    }

    fn grow(&mut self, x: &[f64], labels: &[usize], rows: Vec<usize>, depth: usize) -> usize {
        let mut counts = vec![0usize; self.n_classes];
        for &r in &rows {
            counts[labels[r]] += 1;
        }
        let id = self.nodes.len();
        let leaf = TreeNode::Leaf {
            distribution: counts.iter().map(|&c| c as f64 / rows.len() as f64).collect(),
        };
        self.nodes.push(leaf);
        let parent = gini(&counts, rows.len());
        if depth == 0 || parent == 0.0 || rows.len() < 2 {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(x, labels, &rows) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i * self.n_inputs + feature] <= threshold);
        let left = self.grow(x, labels, l, depth - 1);
        let right = self.grow(x, labels, r, depth - 1);
        self.nodes[id] = TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    fn best_split(&self, x: &[f64], labels: &[usize], rows: &[usize]) -> Option<(usize, f64)> {
        let n = rows.len();
        let mut best: Option<(f64, usize, f64)> = None;
        for f in 0..self.n_inputs {
            let mut sorted: Vec<(f64, usize)> = rows.iter().map(|&r| (x[r * self.n_inputs + f], labels[r])).collect();
            sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
            let mut left = vec![0usize; self.n_classes];
            let mut right = vec![0usize; self.n_classes];
            for &(_, y) in &sorted {
                right[y] += 1;
            }
            for i in 0..n - 1 {
                let y = sorted[i].1;
                left[y] += 1;
                right[y] -= 1;
                if sorted[i].0 == sorted[i + 1].0 {
                    continue;
                }
                let (nl, nr) = (i + 1, n - i - 1);
                let impurity = (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / n as f64;
                if best.is_none_or(|b| impurity < b.0) {
                    best = Some((impurity, f, (sorted[i].0 + sorted[i + 1].0) / 2.0));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    fn leaf_for(&self, row: &[f64]) -> &[f64] {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                TreeNode::Leaf { distribution } => return distribution,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        x.chunks(self.n_inputs).flat_map(|row| self.leaf_for(row).to_vec()).collect()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], id: usize) -> usize {
            match &nodes[id] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }

    /// Root-to-leaf paths, e.g. `x_0 <= 0.5 & x_1 > 0.5 => y_1`.
    pub fn rules(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, Vec::<String>::new())];
        while let Some((id, path)) = stack.pop() {
            match &self.nodes[id] {
                TreeNode::Leaf { distribution } => {
                    let class = crate::reasoner::argmax(distribution);
                    let body = if path.is_empty() { "true".to_string() } else { path.join(" & ") };
                    out.push(format!("{body} => y_{class}"));
                }
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let mut r = path.clone();
                    r.push(format!("x_{feature} > {threshold}"));
                    stack.push((*right, r));
                    let mut l = path;
                    l.push(format!("x_{feature} <= {threshold}"));
                    stack.push((*left, l));
                }
            }
        }
        out
    }
}

/// How concept truth degrees are presented to a baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ConceptInputs {
    /// Fuzzy degrees as predicted.
    #[default]
    Degrees,
    /// Degrees thresholded at 0.5 to 0 or 1.
    Hardened,
}

impl ConceptInputs {
    pub fn prepare(self, truth: &[f64]) -> Vec<f64> {
        match self {
            ConceptInputs::Degrees => truth.to_vec(),
            ConceptInputs::Hardened => truth.iter().map(|&v| if v > 0.5 { 1.0 } else { 0.0 }).collect(),
        }
    }
}

/// Train/test inputs for a baseline comparison.
#[derive(Debug, Clone, Copy)]
pub struct BaselineData<'a> {
    pub train_x: &'a [f64],
    pub train_y: &'a [usize],
    pub test_x: &'a [f64],
    pub test_y: &'a [usize],
    pub n_inputs: usize,
    pub n_classes: usize,
}

pub fn baseline_logreg(data: BaselineData<'_>, cfg: &LogRegConfig) -> Result<(LogisticRegression, f64)> {
    let model = LogisticRegression::fit(data.train_x, data.train_y, data.n_inputs, data.n_classes, cfg)?;
    let auc = roc_auc_macro(&model.predict_proba(data.test_x), data.test_y, data.n_classes)?;
    Ok((model, auc))
}

pub fn baseline_tree(data: BaselineData<'_>, max_depth: usize) -> Result<(DecisionTree, f64)> {
    let model = DecisionTree::fit(data.train_x, data.train_y, data.n_inputs, data.n_classes, max_depth)?;
    let auc = roc_auc_macro(&model.predict_proba(data.test_x), data.test_y, data.n_classes)?;
    Ok((model, auc))
}
