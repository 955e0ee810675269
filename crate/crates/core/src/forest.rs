//! Random-forest regression: bootstrap samples, random feature subsets per node,
//! variance-reduction splits at midpoints between sorted values.

use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub tree_count: usize,
    /// Features examined per node; `None` means ⌊d/3⌋ (at least 1).
    pub candidate_features: Option<usize>,
    /// Nodes holding fewer samples than this become leaves.
    pub min_node_size: usize,
    pub min_variance: f64,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            tree_count: 200,
            candidate_features: None,
            min_node_size: 5,
            min_variance: 1e-8,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tree_count == 0 {
            return Err(Error::InvalidParameter("tree_count must be >= 1".into()));
        }
        if self.candidate_features == Some(0) {
            return Err(Error::InvalidParameter("candidate_features must be >= 1".into()));
        }
        Ok(())
    }

    fn mtry(&self, dim: usize) -> usize {
        self.candidate_features.unwrap_or(dim / 3).clamp(1, dim)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf { value: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    /// Node 0 is the root.
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn leaf(value: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf { value }],
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[feature as usize] <= threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
            }
        }
    }

    /// Structural checks: child indices in range, leaves in [0, 1], acyclic.
    pub fn validate(&self, feature_count: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::ModelFormat("empty tree".into()));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            match *n {
                Node::Leaf { value } => {
                    if !(0.0..=1.0).contains(&value) {
                        return Err(Error::ModelFormat(format!("leaf {i} value {value} outside [0,1]")));
                    }
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let ok = (feature as usize) < feature_count
                        && threshold.is_finite()
                        && (left as usize) > i
                        && (right as usize) > i
                        && (left as usize) < self.nodes.len()
                        && (right as usize) < self.nodes.len();
                    if !ok {
                        return Err(Error::ModelFormat(format!("malformed split node {i}")));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<RegressionTree>,
    pub feature_count: usize,
    pub seed: u64,
}

impl ForestModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.feature_count {
            return Err(Error::DimensionMismatch(format!(
                "expected {} features, got {}",
                self.feature_count,
                x.len()
            )));
        }
        if let Some(col) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature { row: 0, col });
        }
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        Ok(sum / self.trees.len() as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trees.is_empty() {
            return Err(Error::ModelFormat("forest has no trees".into()));
        }
        self.trees.iter().try_for_each(|t| t.validate(self.feature_count))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedForest {
    pub model: ForestModel,
    /// Mean squared out-of-bag error over rows left out by at least one tree.
    pub oob_mse: Option<f64>,
}

pub fn train_forest(features: &[Vec<f64>], labels: &[f64], cfg: &ForestConfig) -> Result<ForestModel> {
    Ok(train_forest_with_oob(features, labels, cfg)?.model)
}

pub fn train_forest_with_oob(features: &[Vec<f64>], labels: &[f64], cfg: &ForestConfig) -> Result<TrainedForest> {
    cfg.validate()?;
    let n = features.len();
    if n < 10 {
        return Err(Error::InsufficientData(format!("{n} training rows, need at least 10")));
    }
    if labels.len() != n {
        return Err(Error::DimensionMismatch(format!("{n} rows but {} labels", labels.len())));
    }
    let dim = features[0].len();
    if dim == 0 {
        return Err(Error::DimensionMismatch("zero-length feature rows".into()));
    }
    for (r, row) in features.iter().enumerate() {
        if row.len() != dim {
            return Err(Error::DimensionMismatch(format!("row {r} has {} features, expected {dim}", row.len())));
        }
        if let Some(col) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature { row: r, col });
        }
    }
    if let Some(bad) = labels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidParameter(format!("label {bad} outside [0,1]")));
    }

    let columns: Vec<Vec<f64>> = (0..dim).map(|f| features.iter().map(|r| r[f]).collect()).collect();
    let order: Vec<Vec<u32>> = columns
        .par_iter()
        .map(|col| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
            idx
        })
        .collect();
    let data = TrainingData {
        columns: &columns,
        order: &order,
        labels,
        mtry: cfg.mtry(dim),
        min_node: cfg.min_node_size.max(1) as u32,
        min_variance: cfg.min_variance,
    };

    let grown: Vec<(RegressionTree, Vec<u32>)> = (0..cfg.tree_count)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(t as u64));
            let mut weight = vec![0u32; n];
            for _ in 0..n {
                weight[rng.random_range(0..n)] += 1;
            }
            let tree = grow_tree(&data, &weight, &mut rng);
            let oob: Vec<u32> = (0..n as u32).filter(|&r| weight[r as usize] == 0).collect();
            (tree, oob)
        })
        .collect();

    let mut oob_sum = vec![0.0; n];
    let mut oob_count = vec![0u32; n];
    for (tree, oob) in &grown {
        for &r in oob {
            oob_sum[r as usize] += tree.predict(&features[r as usize]);
            oob_count[r as usize] += 1;
        }
    }
    let (mut se, mut m) = (0.0, 0usize);
    for r in 0..n {
        if oob_count[r] > 0 {
            let p = oob_sum[r] / oob_count[r] as f64;
            se += (p - labels[r]).powi(2);
            m += 1;
        }
    }
    Ok(TrainedForest {
        model: ForestModel {
            trees: grown.into_iter().map(|(t, _)| t).collect(),
            feature_count: dim,
            seed: cfg.seed,
        },
        oob_mse: (m > 0).then(|| se / m as f64),
    })
}

struct TrainingData<'a> {
    columns: &'a [Vec<f64>],
    order: &'a [Vec<u32>],
    labels: &'a [f64],
    mtry: usize,
    min_node: u32,
    min_variance: f64,
}

struct Split {
    feature: usize,
    threshold: f64,
    sse: f64,
}

/// Weighted sums of the labels over a node.
#[derive(Clone, Copy, Default)]
struct Moments {
    w: f64,
    s: f64,
    s2: f64,
}

impl Moments {
    fn push(&mut self, w: f64, y: f64) {
        self.w += w;
        self.s += w * y;
        self.s2 += w * y * y;
    }

    fn sse(&self) -> f64 {
        if self.w == 0.0 {
            0.0
        } else {
            (self.s2 - self.s * self.s / self.w).max(0.0)
        }
    }
}

fn grow_tree(data: &TrainingData, weight: &[u32], rng: &mut ChaCha8Rng) -> RegressionTree {
    let dim = data.columns.len();
    // per-feature row lists of the bootstrap sample, each sorted by that feature;
    // every node owns the same [start, end) range in all of them
    let mut idx: Vec<Vec<u32>> = data
        .order
        .iter()
        .map(|o| o.iter().copied().filter(|&r| weight[r as usize] > 0).collect())
        .collect();
    let active = idx[0].len();
    let mut goes_left = vec![false; weight.len()];
    let mut scratch: Vec<u32> = Vec::with_capacity(active);
    let mut nodes = Vec::new();
    nodes.push(Node::Leaf { value: 0.0 });
    let mut stack = vec![(0usize, 0usize, active)];
    let mut features: Vec<usize> = (0..dim).collect();

    while let Some((node, start, end)) = stack.pop() {
        let mut m = Moments::default();
        let mut count = 0u32;
        for &r in &idx[0][start..end] {
            let w = weight[r as usize];
            m.push(w as f64, data.labels[r as usize]);
            count += w;
        }
        let mean = (m.s / m.w).clamp(0.0, 1.0);
        let variance = m.sse() / m.w;
        if count < data.min_node || variance < data.min_variance {
            nodes[node] = Node::Leaf { value: mean };
            continue;
        }

        features.shuffle(rng);
        let mut best: Option<Split> = None;
        let mut examined = 0;
        for &f in &features {
            if examined >= data.mtry && best.is_some() {
                break;
            }
            let col = &data.columns[f];
            let rows = &idx[f][start..end];
            if col[rows[0] as usize] == col[rows[rows.len() - 1] as usize] {
                continue;
            }
            examined += 1;
            let mut left = Moments::default();
            for k in 0..rows.len() - 1 {
                let r = rows[k] as usize;
                left.push(weight[r] as f64, data.labels[r]);
                let (v, next) = (col[r], col[rows[k + 1] as usize]);
                if v == next {
                    continue;
                }
                let right = Moments {
                    w: m.w - left.w,
                    s: m.s - left.s,
                    s2: m.s2 - left.s2,
                };
                let sse = left.sse() + right.sse();
                if best.as_ref().is_none_or(|b| sse < b.sse) {
                    let mid = v + (next - v) / 2.0;
                    let threshold = if mid < next { mid } else { v };
                    best = Some(Split { feature: f, threshold, sse });
                }
            }
        }
        let Some(split) = best else {
            nodes[node] = Node::Leaf { value: mean };
            continue;
        };

        let col = &data.columns[split.feature];
        for &r in &idx[0][start..end] {
            goes_left[r as usize] = col[r as usize] <= split.threshold;
        }
        let mut n_left = 0;
        for list in idx.iter_mut() {
            let seg = &mut list[start..end];
            scratch.clear();
            let mut l = 0;
            for i in 0..seg.len() {
                let r = seg[i];
                if goes_left[r as usize] {
                    seg[l] = r;
                    l += 1;
                } else {
                    scratch.push(r);
                }
            }
            seg[l..].copy_from_slice(&scratch);
            n_left = l;
        }
        let left_id = nodes.len();
        nodes.push(Node::Leaf { value: 0.0 });
        nodes.push(Node::Leaf { value: 0.0 });
        nodes[node] = Node::Split {
            feature: split.feature as u32,
            threshold: split.threshold,
            left: left_id as u32,
            right: left_id as u32 + 1,
        };
        stack.push((left_id + 1, start + n_left, end));
        stack.push((left_id, start, start + n_left));
    }
    RegressionTree { nodes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// 116-dim rows where only feature 0 carries signal: label = [x > 0].
    fn toy(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..n {
            let x: f64 = rng.random_range(-10.0..10.0);
            let mut row = vec![0.5; 116];
            row[0] = x;
            xs.push(row);
            ys.push(if x > 0.0 { 1.0 } else { 0.0 });
        }
        (xs, ys)
    }

    fn probe(x: f64) -> Vec<f64> {
        let mut row = vec![0.5; 116];
        row[0] = x;
        row
    }

    #[test]
    fn separable_toy() {
        let (xs, ys) = toy(200, 1);
        let trained = train_forest_with_oob(&xs, &ys, &ForestConfig { seed: 7, ..Default::default() }).unwrap();
        let model = &trained.model;
        assert_eq!(model.trees.len(), 200);
        assert!(model.predict(&probe(-5.0)).unwrap() <= 0.1);
        assert!(model.predict(&probe(5.0)).unwrap() >= 0.9);
        assert!(trained.oob_mse.unwrap() <= 0.05, "{:?}", trained.oob_mse);
        model.validate().unwrap();
    }

    #[test]
    fn constant_labels() {
        let (xs, _) = toy(50, 2);
        let ys = vec![1.0; 50];
        let model = train_forest(&xs, &ys, &ForestConfig { tree_count: 10, ..Default::default() }).unwrap();
        for x in [-9.0, 0.0, 3.3] {
            assert_eq!(model.predict(&probe(x)).unwrap(), 1.0);
        }
    }

    #[test]
    fn single_leaf_model() {
        let model = ForestModel {
            trees: vec![RegressionTree::leaf(0.3)],
            feature_count: 3,
            seed: 0,
        };
        assert_eq!(model.predict(&[1.0, -4.0, 9.0]).unwrap(), 0.3);
        assert!(model.predict(&[1.0]).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let (xs, ys) = toy(120, 3);
        let cfg = ForestConfig { tree_count: 20, seed: 11, ..Default::default() };
        let a = train_forest(&xs, &ys, &cfg).unwrap();
        let b = train_forest(&xs, &ys, &cfg).unwrap();
        assert_eq!(a, b);
        for x in [-3.0, 0.1, 7.0] {
            assert_eq!(a.predict(&probe(x)).unwrap().to_bits(), b.predict(&probe(x)).unwrap().to_bits());
        }
    }

    #[test]
    fn convex_combination_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<Vec<f64>> = (0..300).map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let ys: Vec<f64> = xs.iter().map(|r| 0.2 + 0.5 * (r[0] * r[1]).abs().min(1.0)).collect();
        let (lo, hi) = ys.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        let model = train_forest(&xs, &ys, &ForestConfig { tree_count: 30, ..Default::default() }).unwrap();
        for _ in 0..2000 {
            let p: Vec<f64> = (0..8).map(|_| rng.random_range(-3.0..3.0)).collect();
            let v = model.predict(&p).unwrap();
            assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }

    #[test]
    fn monotone_feature_transform_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xs: Vec<Vec<f64>> = (0..150).map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let ys: Vec<f64> = xs.iter().map(|r| if r[2] + 0.3 * r[0] > 0.0 { 0.9 } else { 0.1 }).collect();
        let warped: Vec<Vec<f64>> = xs
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r[2] = r[2].exp();
                r
            })
            .collect();
        let cfg = ForestConfig { tree_count: 15, seed: 4, ..Default::default() };
        let a = train_forest(&xs, &ys, &cfg).unwrap();
        let b = train_forest(&warped, &ys, &cfg).unwrap();
        // splits see only the ordering, so both forests partition the data identically;
        // thresholds on the warped feature differ only by where the midpoint falls
        for (ta, tb) in a.trees.iter().zip(&b.trees) {
            assert_eq!(ta.nodes.len(), tb.nodes.len());
            for (na, nb) in ta.nodes.iter().zip(&tb.nodes) {
                match (na, nb) {
                    (Node::Leaf { value: va }, Node::Leaf { value: vb }) => assert_eq!(va, vb),
                    (
                        Node::Split { feature: fa, threshold: xa, left: la, right: ra },
                        Node::Split { feature: fb, threshold: xb, left: lb, right: rb },
                    ) => {
                        assert_eq!((fa, la, ra), (fb, lb, rb));
                        if *fa != 2 {
                            assert_eq!(xa, xb);
                        }
                    }
                    _ => panic!("node kinds differ"),
                }
            }
        }
        for (x, w) in xs.iter().zip(&warped) {
            assert!((a.predict(x).unwrap() - b.predict(w).unwrap()).abs() < 0.1);
        }
    }

    #[test]
    fn duplicates_do_not_increase_error() {
        let (mut xs, mut ys) = toy(100, 8);
        let target = (xs[0].clone(), ys[0]);
        let cfg = ForestConfig { tree_count: 50, seed: 2, ..Default::default() };
        let err = |xs: &[Vec<f64>], ys: &[f64]| {
            let m = train_forest(xs, ys, &cfg).unwrap();
            (m.predict(&target.0).unwrap() - target.1).abs()
        };
        let base = err(&xs, &ys);
        for _ in 0..5 {
            xs.push(target.0.clone());
            ys.push(target.1);
        }
        assert!(err(&xs, &ys) <= base + 1e-12);
    }

    #[test]
    fn input_errors() {
        let (xs, ys) = toy(9, 1);
        assert!(matches!(train_forest(&xs, &ys, &ForestConfig::default()), Err(Error::InsufficientData(_))));
        let (mut xs, ys) = toy(20, 1);
        xs[4][17] = f64::NAN;
        assert!(matches!(
            train_forest(&xs, &ys, &ForestConfig::default()),
            Err(Error::NonFiniteFeature { row: 4, col: 17 })
        ));
        let (xs, mut ys) = toy(20, 1);
        ys[0] = 1.5;
        assert!(train_forest(&xs, &ys, &ForestConfig::default()).is_err());
    }
}
