//! CART trees (Gini or entropy, weighted classes) and the random forest.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_xy, ModelError};
use crate::corpus::ArousalLabel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Gini,
    Entropy,
}

impl Criterion {
    fn impurity(self, w0: f64, w1: f64) -> f64 {
        let t = w0 + w1;
        if t <= 0.0 {
            return 0.0;
        }
        let (p0, p1) = (w0 / t, w1 / t);
        match self {
            Criterion::Gini => 1.0 - p0 * p0 - p1 * p1,
            Criterion::Entropy => {
                let h = |p: f64| if p > 0.0 { -p * p.log2() } else { 0.0 };
                h(p0) + h(p1)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// `round(sqrt(p))`, at least 1.
    Sqrt,
    /// `floor(fraction · p)`, at least 1.
    Fraction(f64),
    All,
}

impl MaxFeatures {
    fn resolve(self, p: usize) -> usize {
        let m = match self {
            MaxFeatures::Sqrt => (p as f64).sqrt().round() as usize,
            MaxFeatures::Fraction(f) => (f * p as f64).floor() as usize,
            MaxFeatures::All => p,
        };
        m.clamp(1, p.max(1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinSplit {
    Count(usize),
    /// `ceil(fraction · n_train)`.
    Fraction(f64),
}

impl MinSplit {
    fn resolve(self, n: usize) -> usize {
        match self {
            MinSplit::Count(c) => c,
            MinSplit::Fraction(f) => (f * n as f64).ceil() as usize,
        }
        .max(2)
    }
}

/// Where a per-node 90% subsample applies (decision-tree baseline).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeSubsample {
    None,
    /// Best split searched on a random 90% of the node's rows.
    Rows,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub(crate) struct TreeParams {
    pub criterion: Criterion,
    pub max_features: MaxFeatures,
    pub min_split: MinSplit,
    pub node_subsample: NodeSubsample,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf { p_high: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// A fitted binary tree. Splits send `x[feature] <= threshold` left, with
/// thresholds placed on training values so the tree is invariant to strictly
/// increasing transforms of any column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    /// Weighted fraction of HIGH in the reached leaf.
    pub fn leaf_probability(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { p_high } => return p_high,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    /// Leaf majority, ties to HIGH.
    pub fn predict_one(&self, x: &[f64]) -> ArousalLabel {
        ArousalLabel::from_bool(self.leaf_probability(x) >= 0.5)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        fn d(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + d(nodes, left).max(d(nodes, right)),
            }
        }
        d(&self.nodes, 0)
    }
}

/// Balanced class weights `n / (2 · n_c)` over the given rows.
pub(crate) fn balanced_weights(y: &[bool], rows: &[usize]) -> [f64; 2] {
    let n1 = rows.iter().filter(|&&i| y[i]).count() as f64;
    let n0 = rows.len() as f64 - n1;
    let n = rows.len() as f64;
    let w = |c: f64| if c > 0.0 { n / (2.0 * c) } else { 0.0 };
    [w(n0), w(n1)]
}

/// Grows a tree on `rows` (duplicates allowed) until nodes are pure, hold
/// fewer than the minimum split count, or admit no split.
pub(crate) fn grow_tree(
    x: &[Vec<f64>],
    y: &[bool],
    rows: Vec<usize>,
    class_w: [f64; 2],
    params: &TreeParams,
    n_train: usize,
    rng: &mut ChaCha8Rng,
) -> Tree {
    let p = x[0].len();
    let max_features = params.max_features.resolve(p);
    let min_split = params.min_split.resolve(n_train);
    let mut nodes = vec![Node::Leaf { p_high: 0.0 }];
    let mut stack = vec![(0usize, rows)];
    let mut features: Vec<usize> = (0..p).collect();
    while let Some((slot, rows)) = stack.pop() {
        let (w0, w1) = rows.iter().fold((0.0, 0.0), |(a, b), &i| {
            if y[i] {
                (a, b + class_w[1])
            } else {
                (a + class_w[0], b)
            }
        });
        let p_high = if w0 + w1 > 0.0 { w1 / (w0 + w1) } else { 0.5 };
        nodes[slot] = Node::Leaf { p_high };
        if w0 == 0.0 || w1 == 0.0 || rows.len() < min_split {
            continue;
        }
        let search: Vec<usize> = match params.node_subsample {
            NodeSubsample::None => rows.clone(),
            NodeSubsample::Rows => {
                let m = ((rows.len() as f64) * 0.9).ceil() as usize;
                let mut r = rows.clone();
                r.shuffle(rng);
                r.truncate(m.max(2));
                r
            }
        };
        features.shuffle(rng);
        let mut best: Option<(f64, usize, f64)> = None;
        for (tried, &f) in features.iter().enumerate() {
            // keep looking past max_features until some feature splits
            if tried >= max_features && best.is_some() {
                break;
            }
            if let Some((gain, thr)) = best_split(x, y, &search, f, class_w, params.criterion) {
                if best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, thr));
                }
            }
        }
        let Some((_, feature, threshold)) = best else { continue };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][feature] <= threshold);
        if l.is_empty() || r.is_empty() {
            continue;
        }
        let left = nodes.len();
        nodes.push(Node::Leaf { p_high: 0.0 });
        let right = nodes.len();
        nodes.push(Node::Leaf { p_high: 0.0 });
        nodes[slot] = Node::Split { feature, threshold, left, right };
        stack.push((right, r));
        stack.push((left, l));
    }
    Tree { nodes }
}

/// Best threshold on one feature: (weighted impurity decrease, threshold).
fn best_split(
    x: &[Vec<f64>],
    y: &[bool],
    rows: &[usize],
    f: usize,
    cw: [f64; 2],
    crit: Criterion,
) -> Option<(f64, f64)> {
    let mut order: Vec<(f64, bool)> = rows.iter().map(|&i| (x[i][f], y[i])).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (t0, t1) = order.iter().fold((0.0, 0.0), |(a, b), &(_, c)| if c { (a, b + cw[1]) } else { (a + cw[0], b) });
    let parent = crit.impurity(t0, t1) * (t0 + t1);
    let (mut l0, mut l1) = (0.0, 0.0);
    let mut best: Option<(f64, f64)> = None;
    for k in 0..order.len() - 1 {
        if order[k].1 {
            l1 += cw[1];
        } else {
            l0 += cw[0];
        }
        if order[k].0 == order[k + 1].0 {
            continue;
        }
        let (r0, r1) = (t0 - l0, t1 - l1);
        let child = crit.impurity(l0, l1) * (l0 + l1) + crit.impurity(r0, r1) * (r0 + r1);
        let gain = parent - child;
        if best.is_none_or(|(g, _)| gain > g + 1e-12) {
            best = Some((gain, order[k].0));
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeight {
    None,
    /// Inverse class frequency over the whole training set.
    Balanced,
    /// Inverse class frequency recomputed on each bootstrap sample.
    BalancedSubsample,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub bootstrap: bool,
    pub max_features: MaxFeatures,
    pub criterion: Criterion,
    pub class_weight: ClassWeight,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            bootstrap: true,
            max_features: MaxFeatures::Sqrt,
            criterion: Criterion::Gini,
            class_weight: ClassWeight::BalancedSubsample,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    trees: Vec<Tree>,
    n_features: usize,
}

/// Bootstrap rows for tree `t` (seeded with `seed + t`), or all rows.
pub fn tree_rows(n: usize, bootstrap: bool, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if bootstrap {
        let mut r: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        r.sort_unstable();
        r
    } else {
        (0..n).collect()
    }
}

pub fn train_random_forest(x: &[Vec<f64>], y: &[ArousalLabel], cfg: &ForestConfig) -> Result<Forest, ModelError> {
    let yb = check_xy(x, y)?;
    if cfg.n_trees == 0 {
        return Err(ModelError::Invalid("n_trees must be >= 1".into()));
    }
    let params = TreeParams {
        criterion: cfg.criterion,
        max_features: cfg.max_features,
        min_split: MinSplit::Count(2),
        node_subsample: NodeSubsample::None,
    };
    let all: Vec<usize> = (0..x.len()).collect();
    let trees = (0..cfg.n_trees)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(t as u64));
            let rows = tree_rows(x.len(), cfg.bootstrap, &mut rng);
            let w = match cfg.class_weight {
                ClassWeight::None => [1.0, 1.0],
                ClassWeight::Balanced => balanced_weights(&yb, &all),
                ClassWeight::BalancedSubsample => balanced_weights(&yb, &rows),
            };
            grow_tree(x, &yb, rows, w, &params, x.len(), &mut rng)
        })
        .collect();
    Ok(Forest { trees, n_features: x[0].len() })
}

impl Forest {
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// Fraction of trees voting HIGH.
    pub fn predict_proba(&self, x: &[Vec<f64>]) -> Result<Vec<f64>, ModelError> {
        if let Some(r) = x.iter().find(|r| r.len() != self.n_features) {
            return Err(ModelError::Invalid(format!("{} features, forest expects {}", r.len(), self.n_features)));
        }
        Ok(x.iter()
            .map(|r| {
                let votes = self.trees.iter().filter(|t| t.predict_one(r).is_high()).count();
                votes as f64 / self.trees.len() as f64
            })
            .collect())
    }

    /// Majority vote, ties to HIGH.
    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<ArousalLabel>, ModelError> {
        Ok(self.predict_proba(x)?.into_iter().map(|p| ArousalLabel::from_bool(p >= 0.5)).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecisionTreeConfig {
    pub criterion: Criterion,
    pub min_split: MinSplit,
    pub max_features: MaxFeatures,
    pub node_subsample: NodeSubsample,
    pub class_weight: ClassWeight,
    pub seed: u64,
}

impl Default for DecisionTreeConfig {
    /// Entropy, 10% minimum split, 0.9 feature fraction, balanced weights.
    fn default() -> Self {
        Self {
            criterion: Criterion::Entropy,
            min_split: MinSplit::Fraction(0.1),
            max_features: MaxFeatures::Fraction(0.9),
            node_subsample: NodeSubsample::None,
            class_weight: ClassWeight::Balanced,
            seed: 0,
        }
    }
}

impl DecisionTreeConfig {
    /// The 0.9 read as a per-node row subsample with all features searched.
    pub fn row_reading() -> Self {
        Self { max_features: MaxFeatures::All, node_subsample: NodeSubsample::Rows, ..Self::default() }
    }
}

pub fn train_decision_tree(x: &[Vec<f64>], y: &[ArousalLabel], cfg: &DecisionTreeConfig) -> Result<Tree, ModelError> {
    let yb = check_xy(x, y)?;
    let rows: Vec<usize> = (0..x.len()).collect();
    let w = match cfg.class_weight {
        ClassWeight::None => [1.0, 1.0],
        _ => balanced_weights(&yb, &rows),
    };
    let params = TreeParams {
        criterion: cfg.criterion,
        max_features: cfg.max_features,
        min_split: cfg.min_split,
        node_subsample: cfg.node_subsample,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(grow_tree(x, &yb, rows, w, &params, x.len(), &mut rng))
}
