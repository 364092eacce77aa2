//! Small classical ML stack: linear SGD, CART trees, random forests, a
//! one-hidden-layer network, closed-form ridge, constant baselines, metrics
//! and grid-searched cross-validation.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::split::complement;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidInput("ragged rows".into()));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Column-wise concatenation.
    pub fn hstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::InvalidInput(format!(
                "cannot stack {} rows with {} rows",
                self.rows, other.rows
            )));
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        for r in 0..self.rows {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(other.row(r));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols + other.cols,
            data,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Task {
    /// Targets are class indices `0..classes` stored as `f64`.
    Classification { classes: usize },
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    SgdLinear,
    DecisionTree,
    RandomForest,
    FeedForward,
    Ridge,
    MajorityClass,
    Mean,
    Median,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::SgdLinear => "sgd_linear",
            Family::DecisionTree => "decision_tree",
            Family::RandomForest => "random_forest",
            Family::FeedForward => "feed_forward",
            Family::Ridge => "ridge",
            Family::MajorityClass => "majority_class",
            Family::Mean => "mean",
            Family::Median => "median",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Weight decay for SGD-trained models.
    pub l2: f64,
    pub batch_size: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub n_trees: usize,
    /// Features tried per split; `None` means all for a tree and `sqrt(d)` for a forest.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub hidden: usize,
    /// Ridge penalty; must be positive.
    pub lambda: f64,
    pub fit_intercept: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            learning_rate: 0.1,
            epochs: 50,
            l2: 1e-4,
            batch_size: 16,
            max_depth: 5,
            min_samples_split: 2,
            n_trees: 50,
            max_features: None,
            bootstrap: true,
            hidden: 16,
            lambda: 1.0,
            fit_intercept: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    #[serde(default)]
    pub params: Hyperparams,
    #[serde(default)]
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(family: Family) -> Self {
        ModelSpec {
            family,
            params: Hyperparams::default(),
            seed: 0,
        }
    }

    pub fn with_params(family: Family, params: Hyperparams) -> Self {
        ModelSpec {
            family,
            params,
            seed: 0,
        }
    }

    /// Family name plus the hyperparameters that family reads.
    pub fn label(&self) -> String {
        let p = &self.params;
        match self.family {
            Family::SgdLinear => format!("sgd_linear(lr={},epochs={})", p.learning_rate, p.epochs),
            Family::DecisionTree => format!("decision_tree(depth={})", p.max_depth),
            Family::RandomForest => {
                format!("random_forest(trees={},depth={})", p.n_trees, p.max_depth)
            }
            Family::FeedForward => format!(
                "feed_forward(hidden={},lr={},epochs={})",
                p.hidden, p.learning_rate, p.epochs
            ),
            Family::Ridge => format!("ridge(lambda={})", p.lambda),
            other => other.name().to_string(),
        }
    }

    pub fn validate(&self, task: Task) -> Result<()> {
        let p = &self.params;
        let bad = |m: String| Err(Error::InvalidParameter(format!("{}: {m}", self.family)));
        let classification = matches!(task, Task::Classification { .. });
        match self.family {
            Family::Ridge | Family::Mean | Family::Median if classification => {
                return bad("is a regression model".into())
            }
            Family::MajorityClass if !classification => return bad("is a classification model".into()),
            _ => {}
        }
        if let Task::Classification { classes } = task {
            if classes < 2 {
                return bad(format!("classification needs >= 2 classes, got {classes}"));
            }
        }
        match self.family {
            Family::SgdLinear | Family::FeedForward => {
                if !(p.learning_rate > 0.0) || p.epochs == 0 || p.l2 < 0.0 {
                    return bad("needs learning_rate > 0, epochs >= 1 and l2 >= 0".into());
                }
                if self.family == Family::FeedForward && (p.hidden == 0 || p.batch_size == 0) {
                    return bad("needs hidden >= 1 and batch_size >= 1".into());
                }
            }
            Family::DecisionTree | Family::RandomForest => {
                if p.min_samples_split < 2 {
                    return bad("min_samples_split must be >= 2".into());
                }
                if self.family == Family::RandomForest && p.n_trees == 0 {
                    return bad("n_trees must be >= 1".into());
                }
                if p.max_features == Some(0) {
                    return bad("max_features must be >= 1".into());
                }
            }
            Family::Ridge => {
                if !(p.lambda > 0.0) || !p.lambda.is_finite() {
                    return bad(format!("lambda must be > 0, got {}", p.lambda));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Column standardization fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Self {
        let n = x.rows().max(1) as f64;
        let mut mean = vec![0.0; x.cols()];
        for r in 0..x.rows() {
            for (m, v) in mean.iter_mut().zip(x.row(r)) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; x.cols()];
        for r in 0..x.rows() {
            for ((s, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let scale = var
            .into_iter()
            .map(|v| if v > 1e-24 { v.sqrt() } else { 1.0 })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn transform(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for r in 0..x.rows() {
            let t = self.apply(x.row(r));
            out.row_mut(r).copy_from_slice(&t);
        }
        out
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    z.iter_mut().for_each(|v| *v /= total);
}

fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Linear model trained by per-sample SGD: multinomial logistic for
/// classification, squared loss for regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    scaler: Standardizer,
    /// `outputs x (d + 1)`, bias last.
    weights: Vec<Vec<f64>>,
    classification: bool,
}

impl LinearModel {
    fn train(x: &Matrix, y: &[f64], task: Task, p: &Hyperparams, seed: u64) -> Self {
        let scaler = Standardizer::fit(x);
        let xs = scaler.transform(x);
        let (outputs, classification) = match task {
            Task::Classification { classes } => (classes, true),
            Task::Regression => (1, false),
        };
        let d = x.cols();
        let mut w = vec![vec![0.0; d + 1]; outputs];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..x.rows()).collect();
        for epoch in 0..p.epochs {
            order.shuffle(&mut rng);
            let lr = p.learning_rate / (1.0 + epoch as f64).sqrt();
            for &i in &order {
                let row = xs.row(i);
                let mut z: Vec<f64> = w
                    .iter()
                    .map(|wk| wk[..d].iter().zip(row).map(|(a, b)| a * b).sum::<f64>() + wk[d])
                    .collect();
                if classification {
                    softmax_in_place(&mut z);
                    z[y[i] as usize] -= 1.0;
                } else {
                    z[0] -= y[i];
                }
                for (wk, g) in w.iter_mut().zip(&z) {
                    for (wj, xj) in wk[..d].iter_mut().zip(row) {
                        *wj -= lr * (g * xj + p.l2 * *wj);
                    }
                    wk[d] -= lr * g;
                }
            }
        }
        LinearModel {
            scaler,
            weights: w,
            classification,
        }
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        let r = self.scaler.apply(row);
        let d = r.len();
        let z: Vec<f64> = self
            .weights
            .iter()
            .map(|wk| wk[..d].iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() + wk[d])
            .collect();
        if self.classification {
            argmax_first(&z) as f64
        } else {
            z[0]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// CART tree: Gini impurity for classification, squared error for regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

struct TreeBuilder<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    classes: Option<usize>,
    max_depth: usize,
    min_samples_split: usize,
    max_features: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    fn leaf_value(&self, idx: &[usize]) -> f64 {
        match self.classes {
            Some(k) => {
                let mut counts = vec![0usize; k];
                for &i in idx {
                    counts[self.y[i] as usize] += 1;
                }
                let mut best = 0;
                for (c, n) in counts.iter().enumerate() {
                    if *n > counts[best] {
                        best = c;
                    }
                }
                best as f64
            }
            None => idx.iter().map(|&i| self.y[i]).sum::<f64>() / idx.len() as f64,
        }
    }

    /// Node impurity times node size (Gini) or sum of squared errors.
    fn cost(&self, idx: &[usize]) -> f64 {
        match self.classes {
            Some(k) => {
                let mut counts = vec![0.0; k];
                for &i in idx {
                    counts[self.y[i] as usize] += 1.0;
                }
                gini_weighted(&counts, idx.len() as f64)
            }
            None => {
                let n = idx.len() as f64;
                let s: f64 = idx.iter().map(|&i| self.y[i]).sum();
                let s2: f64 = idx.iter().map(|&i| self.y[i] * self.y[i]).sum();
                (s2 - s * s / n).max(0.0)
            }
        }
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.x.cols();
        if self.max_features >= d {
            return (0..d).collect();
        }
        let mut all: Vec<usize> = (0..d).collect();
        let (chosen, _) = all.partial_shuffle(&mut self.rng, self.max_features);
        let mut chosen = chosen.to_vec();
        chosen.sort_unstable();
        chosen
    }

    /// Best (feature, threshold, cost) over candidate features; first wins on ties.
    fn best_split(&mut self, idx: &[usize]) -> Option<(usize, f64, f64)> {
        let n = idx.len();
        let mut best: Option<(usize, f64, f64)> = None;
        for f in self.candidate_features() {
            let mut sorted = idx.to_vec();
            sorted.sort_by(|&a, &b| self.x.get(a, f).total_cmp(&self.x.get(b, f)).then(a.cmp(&b)));
            let costs = match self.classes {
                Some(k) => {
                    let mut left = vec![0.0; k];
                    let mut right = vec![0.0; k];
                    for &i in &sorted {
                        right[self.y[i] as usize] += 1.0;
                    }
                    let mut costs = Vec::with_capacity(n);
                    for (pos, &i) in sorted.iter().enumerate().take(n - 1) {
                        let c = self.y[i] as usize;
                        left[c] += 1.0;
                        right[c] -= 1.0;
                        let nl = (pos + 1) as f64;
                        costs.push(gini_weighted(&left, nl) + gini_weighted(&right, n as f64 - nl));
                    }
                    costs
                }
                None => {
                    let total: f64 = sorted.iter().map(|&i| self.y[i]).sum();
                    let total2: f64 = sorted.iter().map(|&i| self.y[i] * self.y[i]).sum();
                    let (mut s, mut s2) = (0.0, 0.0);
                    let mut costs = Vec::with_capacity(n);
                    for (pos, &i) in sorted.iter().enumerate().take(n - 1) {
                        s += self.y[i];
                        s2 += self.y[i] * self.y[i];
                        let nl = (pos + 1) as f64;
                        let nr = n as f64 - nl;
                        let left = s2 - s * s / nl;
                        let right = (total2 - s2) - (total - s) * (total - s) / nr;
                        costs.push(left.max(0.0) + right.max(0.0));
                    }
                    costs
                }
            };
            for (pos, c) in costs.into_iter().enumerate() {
                let (a, b) = (self.x.get(sorted[pos], f), self.x.get(sorted[pos + 1], f));
                if a == b {
                    continue;
                }
                if best.is_none_or(|(_, _, bc)| c < bc - 1e-12) {
                    // the midpoint can round up to `b` when the two values are adjacent floats
                    let mid = a + (b - a) / 2.0;
                    best = Some((f, if mid < b { mid } else { a }, c));
                }
            }
        }
        best
    }

    fn build(&mut self, idx: &[usize], depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: self.leaf_value(idx),
        });
        let parent_cost = self.cost(idx);
        if depth >= self.max_depth || idx.len() < self.min_samples_split || parent_cost <= 1e-12 {
            return id;
        }
        let Some((feature, threshold, cost)) = self.best_split(idx) else {
            return id;
        };
        if cost >= parent_cost - 1e-12 {
            return id;
        }
        let (l, r): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| self.x.get(i, feature) <= threshold);
        if l.is_empty() || r.is_empty() {
            return id;
        }
        let left = self.build(&l, depth + 1);
        let right = self.build(&r, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

fn gini_weighted(counts: &[f64], n: f64) -> f64 {
    if n <= 0.0 {
        return 0.0;
    }
    let sq: f64 = counts.iter().map(|c| c * c).sum();
    n - sq / n
}

impl Tree {
    fn train(
        x: &Matrix,
        y: &[f64],
        idx: &[usize],
        task: Task,
        p: &Hyperparams,
        max_features: usize,
        rng: ChaCha8Rng,
    ) -> Self {
        let mut b = TreeBuilder {
            x,
            y,
            classes: match task {
                Task::Classification { classes } => Some(classes),
                Task::Regression => None,
            },
            max_depth: p.max_depth,
            min_samples_split: p.min_samples_split,
            max_features,
            rng,
            nodes: Vec::new(),
        };
        b.build(idx, 0);
        Tree { nodes: b.nodes }
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// One-hidden-layer ReLU network. Softmax + cross-entropy for
/// classification, a linear output with half squared error for regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ffnn {
    d: usize,
    h: usize,
    k: usize,
    classification: bool,
    /// `h x d`, then `h` biases, then `k x h`, then `k` biases.
    params: Vec<f64>,
}

impl Ffnn {
    /// He-uniform initialization of the weights, zero biases.
    pub fn new(d: usize, h: usize, task: Task, seed: u64) -> Self {
        let (k, classification) = match task {
            Task::Classification { classes } => (classes, true),
            Task::Regression => (1, false),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; h * d + h + k * h + k];
        let a1 = (6.0 / d.max(1) as f64).sqrt();
        for v in &mut params[..h * d] {
            *v = rng.random_range(-a1..a1);
        }
        let a2 = (6.0 / h as f64).sqrt();
        let off = h * d + h;
        for v in &mut params[off..off + k * h] {
            *v = rng.random_range(-a2..a2);
        }
        Ffnn {
            d,
            h,
            k,
            classification,
            params,
        }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    fn forward(&self, row: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (d, h, k) = (self.d, self.h, self.k);
        let (w1, rest) = self.params.split_at(h * d);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(k * h);
        let hidden: Vec<f64> = (0..h)
            .map(|j| {
                let z = w1[j * d..(j + 1) * d].iter().zip(row).map(|(a, b)| a * b).sum::<f64>() + b1[j];
                z.max(0.0)
            })
            .collect();
        let out: Vec<f64> = (0..k)
            .map(|c| w2[c * h..(c + 1) * h].iter().zip(&hidden).map(|(a, b)| a * b).sum::<f64>() + b2[c])
            .collect();
        (hidden, out)
    }

    /// Mean loss over the rows and its gradient with respect to [`Ffnn::params`].
    pub fn loss_and_gradient(&self, x: &Matrix, y: &[f64]) -> Result<(f64, Vec<f64>)> {
        if x.rows() != y.len() || x.cols() != self.d || x.rows() == 0 {
            return Err(Error::InvalidInput("batch shape does not match the network".into()));
        }
        let (d, h, k) = (self.d, self.h, self.k);
        let n = x.rows() as f64;
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let w2 = &self.params[h * d + h..h * d + h + k * h];
        for r in 0..x.rows() {
            let row = x.row(r);
            let (hidden, mut out) = self.forward(row);
            // dL/d(out)
            if self.classification {
                softmax_in_place(&mut out);
                let target = y[r] as usize;
                loss -= out[target].max(1e-300).ln();
                out[target] -= 1.0;
            } else {
                let e = out[0] - y[r];
                loss += 0.5 * e * e;
                out[0] = e;
            }
            let (g_w1, rest) = grad.split_at_mut(h * d);
            let (g_b1, rest) = rest.split_at_mut(h);
            let (g_w2, g_b2) = rest.split_at_mut(k * h);
            for c in 0..k {
                g_b2[c] += out[c] / n;
                for j in 0..h {
                    g_w2[c * h + j] += out[c] * hidden[j] / n;
                }
            }
            for j in 0..h {
                if hidden[j] <= 0.0 {
                    continue;
                }
                let back: f64 = (0..k).map(|c| out[c] * w2[c * h + j]).sum();
                g_b1[j] += back / n;
                for (g, xi) in g_w1[j * d..(j + 1) * d].iter_mut().zip(row) {
                    *g += back * xi / n;
                }
            }
        }
        Ok((loss / n, grad))
    }

    fn train(&mut self, x: &Matrix, y: &[f64], p: &Hyperparams, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f00d);
        let mut order: Vec<usize> = (0..x.rows()).collect();
        for _ in 0..p.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(p.batch_size) {
                let bx = x.select_rows(batch);
                let by: Vec<f64> = batch.iter().map(|&i| y[i]).collect();
                let (_, grad) = self.loss_and_gradient(&bx, &by)?;
                for (w, g) in self.params.iter_mut().zip(&grad) {
                    *w -= p.learning_rate * (g + p.l2 * *w);
                }
            }
        }
        Ok(())
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        let (_, out) = self.forward(row);
        if self.classification {
            argmax_first(&out) as f64
        } else {
            out[0]
        }
    }
}

/// Closed-form ridge regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

impl RidgeModel {
    /// Solves `(X'X + lambda I) beta = X'y`, on centered data when fitting an
    /// intercept. Falls back to an SVD solve if the Cholesky factorization fails.
    pub fn fit(x: &Matrix, y: &[f64], lambda: f64, fit_intercept: bool) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidParameter(format!("ridge lambda must be > 0, got {lambda}")));
        }
        let (n, d) = (x.rows(), x.cols());
        let mut xm = DMatrix::from_row_slice(n, d, &x.data);
        let mut yv = DVector::from_column_slice(y);
        let (x_mean, y_mean) = if fit_intercept {
            let means: Vec<f64> = (0..d).map(|c| xm.column(c).mean()).collect();
            for (c, m) in means.iter().enumerate() {
                xm.column_mut(c).add_scalar_mut(-m);
            }
            let ym = yv.mean();
            yv.add_scalar_mut(-ym);
            (means, ym)
        } else {
            (vec![0.0; d], 0.0)
        };
        let xt = xm.transpose();
        let gram = &xt * &xm + DMatrix::identity(d, d) * lambda;
        let rhs = &xt * &yv;
        let beta = match gram.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => gram
                .svd(true, true)
                .solve(&rhs, 1e-12)
                .map_err(|e| Error::InvalidInput(format!("ridge solve failed: {e}")))?,
        };
        let coefficients: Vec<f64> = beta.iter().copied().collect();
        let intercept = y_mean - coefficients.iter().zip(&x_mean).map(|(b, m)| b * m).sum::<f64>();
        Ok(RidgeModel {
            coefficients,
            intercept,
        })
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(row).map(|(b, v)| b * v).sum::<f64>()
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.coefficients.len() {
            return Err(Error::InvalidInput(format!(
                "ridge model has {} coefficients, input has {} columns",
                self.coefficients.len(),
                x.cols()
            )));
        }
        Ok((0..x.rows()).map(|r| self.predict_row(x.row(r))).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Model {
    Linear(LinearModel),
    Tree(Tree),
    Forest { trees: Vec<Tree>, classes: Option<usize> },
    Network { scaler: Standardizer, net: Ffnn },
    Ridge(RidgeModel),
    Constant(f64),
}

fn check_targets(x: &Matrix, y: &[f64], task: Task) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::InvalidInput(format!(
            "{} feature rows but {} targets",
            x.rows(),
            y.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::EmptyInput("training set"));
    }
    if let Some(v) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite target {v}")));
    }
    if let Task::Classification { classes } = task {
        if let Some(v) = y.iter().find(|v| v.fract() != 0.0 || **v < 0.0 || **v >= classes as f64) {
            return Err(Error::InvalidInput(format!("class target {v} outside 0..{classes}")));
        }
    }
    Ok(())
}

fn majority_of(y: &[f64], classes: usize) -> f64 {
    let mut counts = vec![0usize; classes];
    for v in y {
        counts[*v as usize] += 1;
    }
    let mut best = 0;
    for (c, n) in counts.iter().enumerate() {
        if *n > counts[best] {
            best = c;
        }
    }
    best as f64
}

/// Fits `spec` on `(x, y)`. Deterministic given `spec.seed`.
pub fn train(spec: &ModelSpec, x: &Matrix, y: &[f64], task: Task) -> Result<Model> {
    spec.validate(task)?;
    check_targets(x, y, task)?;
    let p = &spec.params;
    let all: Vec<usize> = (0..x.rows()).collect();
    Ok(match spec.family {
        Family::SgdLinear => Model::Linear(LinearModel::train(x, y, task, p, spec.seed)),
        Family::DecisionTree => {
            let mf = p.max_features.unwrap_or(x.cols());
            Model::Tree(Tree::train(x, y, &all, task, p, mf, ChaCha8Rng::seed_from_u64(spec.seed)))
        }
        Family::RandomForest => {
            let mf = p
                .max_features
                .unwrap_or_else(|| ((x.cols() as f64).sqrt().floor() as usize).max(1));
            let trees = (0..p.n_trees)
                .into_par_iter()
                .map(|t| {
                    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                    rng.set_stream(t as u64);
                    let sample: Vec<usize> = if p.bootstrap {
                        (0..x.rows()).map(|_| rng.random_range(0..x.rows())).collect()
                    } else {
                        all.clone()
                    };
                    Tree::train(x, y, &sample, task, p, mf, rng)
                })
                .collect();
            Model::Forest {
                trees,
                classes: match task {
                    Task::Classification { classes } => Some(classes),
                    Task::Regression => None,
                },
            }
        }
        Family::FeedForward => {
            let scaler = Standardizer::fit(x);
            let xs = scaler.transform(x);
            let mut net = Ffnn::new(x.cols(), p.hidden, task, spec.seed);
            net.train(&xs, y, p, spec.seed)?;
            Model::Network { scaler, net }
        }
        Family::Ridge => Model::Ridge(RidgeModel::fit(x, y, p.lambda, p.fit_intercept)?),
        Family::MajorityClass => match task {
            Task::Classification { classes } => Model::Constant(majority_of(y, classes)),
            Task::Regression => unreachable!("validated above"),
        },
        Family::Mean => Model::Constant(y.iter().sum::<f64>() / y.len() as f64),
        Family::Median => {
            let mut s = y.to_vec();
            s.sort_by(f64::total_cmp);
            let m = s.len() / 2;
            Model::Constant(if s.len() % 2 == 1 { s[m] } else { (s[m - 1] + s[m]) / 2.0 })
        }
    })
}

impl Model {
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        let expected = match self {
            Model::Linear(m) => Some(m.scaler.mean.len()),
            Model::Network { net, .. } => Some(net.d),
            Model::Ridge(m) => Some(m.coefficients.len()),
            _ => None,
        };
        if let Some(d) = expected {
            if x.cols() != d {
                return Err(Error::InvalidInput(format!(
                    "model expects {d} features, got {}",
                    x.cols()
                )));
            }
        }
        Ok((0..x.rows()).map(|r| self.predict_row(x.row(r))).collect())
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        match self {
            Model::Linear(m) => m.predict_row(row),
            Model::Tree(t) => t.predict_row(row),
            Model::Forest { trees, classes } => {
                let votes = trees.iter().map(|t| t.predict_row(row));
                match classes {
                    Some(k) => majority_of(&votes.collect::<Vec<_>>(), *k),
                    None => votes.sum::<f64>() / trees.len() as f64,
                }
            }
            Model::Network { scaler, net } => net.predict_row(&scaler.apply(row)),
            Model::Ridge(m) => m.predict_row(row),
            Model::Constant(v) => *v,
        }
    }
}

fn check_lengths(y: &[f64], pred: &[f64]) -> Result<()> {
    if y.len() != pred.len() {
        return Err(Error::InvalidInput(format!(
            "{} targets but {} predictions",
            y.len(),
            pred.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::EmptyInput("metric input"));
    }
    Ok(())
}

pub fn accuracy(y: &[f64], pred: &[f64]) -> Result<f64> {
    check_lengths(y, pred)?;
    let hits = y.iter().zip(pred).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / y.len() as f64)
}

pub fn rmse(y: &[f64], pred: &[f64]) -> Result<f64> {
    check_lengths(y, pred)?;
    let mse = y.iter().zip(pred).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64;
    Ok(mse.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    Rmse,
}

impl Metric {
    pub fn score(self, y: &[f64], pred: &[f64]) -> Result<f64> {
        match self {
            Metric::Accuracy => accuracy(y, pred),
            Metric::Rmse => rmse(y, pred),
        }
    }

    /// Whether `a` is strictly better than `b`. NaN loses to everything.
    pub fn better(self, a: f64, b: f64) -> bool {
        if a.is_nan() {
            return false;
        }
        if b.is_nan() {
            return true;
        }
        match self {
            Metric::Accuracy => a > b,
            Metric::Rmse => a < b,
        }
    }
}

/// Test-fold scores of `spec`; `folds` holds the test row indices.
pub fn cross_validate(
    spec: &ModelSpec,
    x: &Matrix,
    y: &[f64],
    task: Task,
    folds: &[Vec<usize>],
    metric: Metric,
) -> Result<Vec<f64>> {
    folds
        .par_iter()
        .map(|test| {
            let train_idx = complement(x.rows(), test);
            let ty: Vec<f64> = train_idx.iter().map(|&i| y[i]).collect();
            let model = train(spec, &x.select_rows(&train_idx), &ty, task)?;
            let pred = model.predict(&x.select_rows(test))?;
            let truth: Vec<f64> = test.iter().map(|&i| y[i]).collect();
            metric.score(&truth, &pred)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub spec: ModelSpec,
    pub label: String,
    pub fold_scores: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub cells: Vec<CvCell>,
    /// Index of the chosen cell.
    pub best: usize,
}

impl CvReport {
    pub fn best_cell(&self) -> &CvCell {
        &self.cells[self.best]
    }
}

/// Mean CV score per grid cell; picks the best (first on ties).
pub fn grid_search_cv(
    grid: &[ModelSpec],
    x: &Matrix,
    y: &[f64],
    task: Task,
    folds: &[Vec<usize>],
    metric: Metric,
) -> Result<CvReport> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("model grid is empty".into()));
    }
    let cells = grid
        .par_iter()
        .map(|spec| {
            let fold_scores = cross_validate(spec, x, y, task, folds, metric)
                .map_err(|e| e.in_stage(format!("grid cell {}", spec.label())))?;
            let mean = fold_scores.iter().sum::<f64>() / fold_scores.len() as f64;
            Ok(CvCell {
                spec: *spec,
                label: spec.label(),
                fold_scores,
                mean,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, c) in cells.iter().enumerate() {
        if metric.better(c.mean, cells[best].mean) {
            best = i;
        }
    }
    Ok(CvReport { cells, best })
}

/// Small default grid for `family`.
pub fn default_grid(family: Family, seed: u64) -> Vec<ModelSpec> {
    let base = Hyperparams::default();
    let mk = |params: Hyperparams| ModelSpec {
        family,
        params,
        seed,
    };
    match family {
        Family::SgdLinear => [0.01, 0.1]
            .iter()
            .map(|&lr| mk(Hyperparams { learning_rate: lr, ..base }))
            .collect(),
        Family::DecisionTree => [3, 5, 10]
            .iter()
            .map(|&d| mk(Hyperparams { max_depth: d, ..base }))
            .collect(),
        Family::RandomForest => [50, 100]
            .iter()
            .flat_map(|&t| {
                [5, 10].map(|d| mk(Hyperparams { n_trees: t, max_depth: d, ..base }))
            })
            .collect(),
        Family::FeedForward => [16, 64]
            .iter()
            .flat_map(|&h| {
                [0.01, 0.1].map(|lr| mk(Hyperparams { hidden: h, learning_rate: lr, ..base }))
            })
            .collect(),
        Family::Ridge => [0.1, 1.0, 10.0]
            .iter()
            .map(|&l| mk(Hyperparams { lambda: l, ..base }))
            .collect(),
        Family::MajorityClass | Family::Mean | Family::Median => vec![mk(base)],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::split::kfold_indices;

    fn separable(n: usize, seed: u64) -> (Matrix, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        while rows.len() < n {
            let a: f64 = rng.random_range(-1.0..1.0);
            let b: f64 = rng.random_range(-1.0..1.0);
            let margin = a + 0.5 * b;
            if margin.abs() < 0.2 {
                continue;
            }
            rows.push(vec![a, b]);
            y.push(if margin > 0.0 { 1.0 } else { 0.0 });
        }
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    const TWO: Task = Task::Classification { classes: 2 };

    #[test]
    fn sgd_separates_with_margin() {
        let (x, y) = separable(200, 1);
        let m = train(&ModelSpec::new(Family::SgdLinear), &x, &y, TWO).unwrap();
        assert!(accuracy(&y, &m.predict(&x).unwrap()).unwrap() >= 0.99);
    }

    #[test]
    fn constant_target_tree() {
        let (x, _) = separable(30, 2);
        let y = vec![2.0; 30];
        let task = Task::Classification { classes: 3 };
        let m = train(&ModelSpec::new(Family::DecisionTree), &x, &y, task).unwrap();
        assert!(m.predict(&x).unwrap().iter().all(|v| *v == 2.0));
        let r = train(&ModelSpec::new(Family::DecisionTree), &x, &[4.5; 30], Task::Regression).unwrap();
        assert!(r.predict(&x).unwrap().iter().all(|v| *v == 4.5));
    }

    #[test]
    fn ridge_recovers_exact_system() {
        // 3x3 full-rank system with known solution; brute force = Cramer's rule.
        let x = Matrix::from_rows(&[vec![2.0, 1.0, 0.0], vec![1.0, 3.0, 1.0], vec![0.0, 1.0, 4.0]]).unwrap();
        let beta = [1.5, -2.0, 0.25];
        let y: Vec<f64> = (0..3).map(|r| x.row(r).iter().zip(beta).map(|(a, b)| a * b).sum()).collect();
        let m = RidgeModel::fit(&x, &y, 1e-12, false).unwrap();
        for (got, want) in m.coefficients.iter().zip(beta) {
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
        assert!(RidgeModel::fit(&x, &y, 0.0, false).is_err());
        assert!(ModelSpec::new(Family::Ridge).validate(TWO).is_err());
    }

    #[test]
    fn forest_of_one_unbagged_tree_equals_the_tree() {
        let (x, y) = separable(80, 3);
        let params = Hyperparams {
            n_trees: 1,
            bootstrap: false,
            max_features: Some(x.cols()),
            max_depth: 4,
            ..Hyperparams::default()
        };
        let tree = train(&ModelSpec::with_params(Family::DecisionTree, params), &x, &y, TWO).unwrap();
        let forest = train(&ModelSpec::with_params(Family::RandomForest, params), &x, &y, TWO).unwrap();
        let Model::Forest { trees, .. } = &forest else { panic!("not a forest") };
        assert_eq!(Model::Tree(trees[0].clone()), tree);
        assert_eq!(tree.predict(&x).unwrap(), forest.predict(&x).unwrap());
    }

    #[test]
    fn tree_respects_depth() {
        let (x, y) = separable(100, 4);
        for depth in [0, 1, 3] {
            let p = Hyperparams { max_depth: depth, ..Hyperparams::default() };
            let Model::Tree(t) = train(&ModelSpec::with_params(Family::DecisionTree, p), &x, &y, TWO).unwrap() else {
                panic!()
            };
            assert!(t.depth() <= depth);
        }
    }

    #[test]
    fn ffnn_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..10).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        for (task, y) in [
            (Task::Classification { classes: 3 }, (0..10).map(|i| (i % 3) as f64).collect::<Vec<_>>()),
            (Task::Regression, (0..10).map(|i| i as f64 * 0.3 - 1.0).collect()),
        ] {
            let mut net = Ffnn::new(4, 6, task, 11);
            let (_, grad) = net.loss_and_gradient(&x, &y).unwrap();
            let base = net.params().to_vec();
            let h = 1e-5;
            for i in 0..base.len() {
                let mut p = base.clone();
                p[i] += h;
                net.set_params(&p).unwrap();
                let up = net.loss_and_gradient(&x, &y).unwrap().0;
                p[i] -= 2.0 * h;
                net.set_params(&p).unwrap();
                let down = net.loss_and_gradient(&x, &y).unwrap().0;
                let numeric = (up - down) / (2.0 * h);
                let scale = numeric.abs().max(grad[i].abs()).max(1e-8);
                assert!((numeric - grad[i]).abs() / scale < 1e-4 || (numeric - grad[i]).abs() < 1e-9,
                    "param {i}: analytic {} numeric {numeric}", grad[i]);
            }
            net.set_params(&base).unwrap();
        }
    }

    #[test]
    fn metric_examples() {
        assert_eq!(accuracy(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(accuracy(&[1.0, 2.0], &[2.0, 2.0]).unwrap(), 0.5);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert!(accuracy(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn baselines() {
        let x = Matrix::zeros(5, 1);
        let y = [1.0, 1.0, 0.0, 0.0, 2.0];
        let m = train(&ModelSpec::new(Family::MajorityClass), &x, &y, Task::Classification { classes: 3 }).unwrap();
        assert_eq!(m.predict(&x).unwrap()[0], 0.0);
        let yr = [1.0, 2.0, 10.0, 3.0];
        let x4 = Matrix::zeros(4, 1);
        let mean = train(&ModelSpec::new(Family::Mean), &x4, &yr, Task::Regression).unwrap();
        assert_eq!(mean.predict(&x4).unwrap()[0], 4.0);
        let med = train(&ModelSpec::new(Family::Median), &x4, &yr, Task::Regression).unwrap();
        assert_eq!(med.predict(&x4).unwrap()[0], 2.5);
    }

    #[test]
    fn shape_errors() {
        let x = Matrix::zeros(3, 2);
        assert!(matches!(
            train(&ModelSpec::new(Family::DecisionTree), &x, &[0.0, 1.0], TWO),
            Err(Error::InvalidInput(_))
        ));
        assert!(train(&ModelSpec::new(Family::DecisionTree), &x, &[0.0, 1.0, 5.0], TWO).is_err());
        let m = train(&ModelSpec::new(Family::SgdLinear), &x, &[0.0, 1.0, 1.0], TWO).unwrap();
        assert!(m.predict(&Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn grid_search_contract() {
        let (x, y) = separable(60, 6);
        let folds = kfold_indices(60, 5, 1).unwrap();
        let grid = default_grid(Family::DecisionTree, 0);
        let report = grid_search_cv(&grid, &x, &y, TWO, &folds, Metric::Accuracy).unwrap();
        assert_eq!(report.cells.len(), 3);
        assert!(report.cells.iter().all(|c| c.fold_scores.len() == 5));
        assert!(report.cells.iter().all(|c| c.mean <= report.best_cell().mean));
        let single = grid_search_cv(&grid[..1], &x, &y, TWO, &folds, Metric::Accuracy).unwrap();
        let plain = cross_validate(&grid[0], &x, &y, TWO, &folds, Metric::Accuracy).unwrap();
        assert_eq!(single.cells[0].fold_scores, plain);
        assert!(grid_search_cv(&[], &x, &y, TWO, &folds, Metric::Accuracy).is_err());
        // rmse picks the minimum
        let reg = grid_search_cv(&default_grid(Family::Ridge, 0), &x, &y, Task::Regression, &folds, Metric::Rmse)
            .unwrap();
        assert!(reg.cells.iter().all(|c| c.mean >= reg.best_cell().mean));
    }

    #[test]
    fn training_is_deterministic() {
        let (x, y) = separable(80, 7);
        for family in [Family::SgdLinear, Family::RandomForest, Family::FeedForward] {
            let spec = ModelSpec { seed: 3, ..ModelSpec::new(family) };
            assert_eq!(train(&spec, &x, &y, TWO).unwrap(), train(&spec, &x, &y, TWO).unwrap());
        }
    }
}
