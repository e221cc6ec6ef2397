//! Bagged regression forests with recorded bootstrap membership,
//! out-of-bag prediction and quantile-regression-forest CDF estimates.
//!
//! Every tree is grown on a bootstrap sample of size `n_train` by greedy
//! variance-reduction splitting. After fitting, *all* training rows are
//! routed through each tree and stored per leaf; the conditional CDF at `x`
//! is `F̂(y | x) = (1/T) Σ_t #{i ∈ leaf_t(x) : y_i ≤ y} / |leaf_t(x)|`,
//! i.e. every training index counts once per tree it shares a leaf with.

use std::time::Instant;

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::intervals::PointPredictor;
use crate::rng;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or smaller than `2·min_leaf`.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features considered per split; `None` means all `d`.
    pub features_per_split: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_leaf: 1,
            features_per_split: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Node<T> {
    Leaf { value: T, leaf: usize },
    Split { feature: usize, threshold: T, left: usize, right: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tree<T> {
    nodes: Vec<Node<T>>,
    n_leaves: usize,
}

impl<T: Real> Tree<T> {
    fn leaf_of(&self, x: &[T]) -> (usize, T) {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value, leaf } => return (*leaf, *value),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict(&self, x: &[T]) -> T {
        self.leaf_of(x).1
    }

    pub fn n_leaves(&self) -> usize {
        self.n_leaves
    }
}

struct Grower<'a, T> {
    ds: &'a Dataset<T>,
    cfg: &'a ForestConfig,
    rng: rng::Rng,
    nodes: Vec<Node<T>>,
    n_leaves: usize,
}

struct BestSplit<T> {
    gain: T,
    feature: usize,
    threshold: T,
    left: Vec<usize>,
    right: Vec<usize>,
}

impl<T: Real> Grower<'_, T> {
    fn leaf(&mut self, samples: &[usize]) -> usize {
        let value = samples.iter().map(|&i| self.ds.target(i)).sum::<T>() / T::from_count(samples.len());
        self.nodes.push(Node::Leaf {
            value,
            leaf: self.n_leaves,
        });
        self.n_leaves += 1;
        self.nodes.len() - 1
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.ds.d();
        match self.cfg.features_per_split {
            Some(m) if m < d => {
                let mut all: Vec<usize> = (0..d).collect();
                for i in 0..m {
                    let j = i + rng::index_below(&mut self.rng, d - i);
                    all.swap(i, j);
                }
                let mut chosen = all[..m.max(1)].to_vec();
                chosen.sort_unstable();
                chosen
            }
            _ => (0..d).collect(),
        }
    }

    fn best_split(&mut self, samples: &[usize]) -> Option<BestSplit<T>> {
        let n = samples.len();
        let min_leaf = self.cfg.min_leaf.max(1);
        let total: T = samples.iter().map(|&i| self.ds.target(i)).sum();
        let base = total * total / T::from_count(n);
        let mut best: Option<(T, usize, T, usize)> = None;
        let mut sorted = samples.to_vec();
        let ds = self.ds;
        let order_by = |f: usize, v: &mut Vec<usize>| {
            v.sort_by(|&a, &b| ds.row(a)[f].partial_cmp(&ds.row(b)[f]).unwrap().then(a.cmp(&b)));
        };
        for f in self.candidate_features() {
            order_by(f, &mut sorted);
            let mut left_sum = T::zero();
            for pos in 1..n {
                left_sum = left_sum + self.ds.target(sorted[pos - 1]);
                let (lo, hi) = (self.ds.row(sorted[pos - 1])[f], self.ds.row(sorted[pos])[f]);
                if pos < min_leaf || n - pos < min_leaf || !(lo < hi) {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / T::from_count(pos)
                    + right_sum * right_sum / T::from_count(n - pos)
                    - base;
                if best.as_ref().is_none_or(|b| gain > b.0) {
                    let mut threshold = (lo + hi) / T::lit(2.0);
                    if !(threshold < hi) {
                        threshold = lo;
                    }
                    best = Some((gain, f, threshold, pos));
                }
            }
        }
        let (gain, feature, threshold, pos) = best?;
        let scale = samples.iter().map(|&i| self.ds.target(i).abs()).fold(T::zero(), T::max);
        if !(gain > T::lit(1e-12) * (T::one() + scale * scale)) {
            return None;
        }
        order_by(feature, &mut sorted);
        Some(BestSplit {
            gain,
            feature,
            threshold,
            left: sorted[..pos].to_vec(),
            right: sorted[pos..].to_vec(),
        })
    }

    fn grow(&mut self, samples: &[usize], depth: usize) -> usize {
        let min_leaf = self.cfg.min_leaf.max(1);
        let stop = self.cfg.max_depth.is_some_and(|m| depth >= m) || samples.len() < 2 * min_leaf;
        if stop {
            return self.leaf(samples);
        }
        let Some(split) = self.best_split(samples) else {
            return self.leaf(samples);
        };
        debug_assert!(split.gain > T::zero());
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: T::zero(),
            leaf: usize::MAX,
        });
        let left = self.grow(&split.left, depth + 1);
        let right = self.grow(&split.right, depth + 1);
        self.nodes[at] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        at
    }
}

/// Fitted forest. Immutable after construction.
#[derive(Clone, Debug)]
pub struct Forest<T> {
    trees: Vec<Tree<T>>,
    /// `inbag_counts[t][i]`: bootstrap multiplicity of training row `i` in tree `t`.
    inbag_counts: Vec<Vec<u32>>,
    /// `leaf_targets[t][leaf]`: targets of the training rows routed there, sorted.
    leaf_targets: Vec<Vec<Vec<T>>>,
    /// `leaf_members[t][leaf]`: training row indices routed there.
    leaf_members: Vec<Vec<Vec<usize>>>,
    sorted_targets: Vec<T>,
    n_features: usize,
}

/// Prediction mode of [`Forest::predict`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PredictMode {
    Full,
    /// Average over trees whose bootstrap sample excludes training row `i`.
    Oob(usize),
}

pub fn fit_forest<T: Real>(ds: &Dataset<T>, cfg: &ForestConfig) -> Result<Forest<T>> {
    Forest::fit(ds, cfg, None)
}

impl<T: Real> Forest<T> {
    pub fn fit(ds: &Dataset<T>, cfg: &ForestConfig, deadline: Option<Instant>) -> Result<Self> {
        let n = ds.n();
        if n < 2 {
            return Err(Error::InvalidArgument("forest needs at least two training rows".into()));
        }
        if cfg.n_trees == 0 {
            return Err(Error::InvalidArgument("forest needs at least one tree".into()));
        }
        let fitted: Vec<Result<(Tree<T>, Vec<u32>)>> = (0..cfg.n_trees)
            .into_par_iter()
            .map(|t| {
                if deadline.is_some_and(|d| Instant::now() > d) {
                    return Err(Error::Timeout);
                }
                let mut rng = rng::seeded(rng::derive_seed(cfg.seed, t as u64));
                let mut counts = vec![0u32; n];
                let mut sample = Vec::with_capacity(n);
                for _ in 0..n {
                    let i = rng::index_below(&mut rng, n);
                    counts[i] += 1;
                    sample.push(i);
                }
                sample.sort_unstable();
                let mut g = Grower {
                    ds,
                    cfg,
                    rng,
                    nodes: Vec::new(),
                    n_leaves: 0,
                };
                g.grow(&sample, 0);
                Ok((
                    Tree {
                        nodes: g.nodes,
                        n_leaves: g.n_leaves,
                    },
                    counts,
                ))
            })
            .collect();
        let mut trees = Vec::with_capacity(cfg.n_trees);
        let mut inbag_counts = Vec::with_capacity(cfg.n_trees);
        for r in fitted {
            let (tree, counts) = r?;
            trees.push(tree);
            inbag_counts.push(counts);
        }
        let mut leaf_members = Vec::with_capacity(trees.len());
        let mut leaf_targets = Vec::with_capacity(trees.len());
        for tree in &trees {
            let mut members = vec![Vec::new(); tree.n_leaves];
            for (i, x) in ds.rows().enumerate() {
                members[tree.leaf_of(x).0].push(i);
            }
            let targets = members
                .iter()
                .map(|m| {
                    let mut ys: Vec<T> = m.iter().map(|&i| ds.target(i)).collect();
                    ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    ys
                })
                .collect();
            leaf_members.push(members);
            leaf_targets.push(targets);
        }
        let mut sorted_targets = ds.targets().to_vec();
        sorted_targets.sort_by(|a, b| a.partial_cmp(b).unwrap());
        sorted_targets.dedup();
        Ok(Self {
            trees,
            inbag_counts,
            leaf_targets,
            leaf_members,
            sorted_targets,
            n_features: ds.d(),
        })
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_train(&self) -> usize {
        self.inbag_counts.first().map_or(0, Vec::len)
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn trees(&self) -> &[Tree<T>] {
        &self.trees
    }

    pub fn inbag_count(&self, tree: usize, i: usize) -> u32 {
        self.inbag_counts[tree][i]
    }

    pub fn is_oob(&self, tree: usize, i: usize) -> bool {
        self.inbag_counts[tree][i] == 0
    }

    /// Trees whose bootstrap sample excludes training row `i`.
    pub fn oob_trees(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.trees.len()).filter(move |&t| self.is_oob(t, i))
    }

    pub fn leaf_members(&self, tree: usize) -> &[Vec<usize>] {
        &self.leaf_members[tree]
    }

    pub fn predict(&self, x: &[T], mode: PredictMode) -> Result<T> {
        if x.len() != self.n_features {
            return Err(Error::Dimension {
                expected: self.n_features,
                got: x.len(),
            });
        }
        match mode {
            PredictMode::Full => Ok(self.trees.iter().map(|t| t.predict(x)).sum::<T>() / T::from_count(self.trees.len())),
            PredictMode::Oob(i) => {
                if i >= self.n_train() {
                    return Err(Error::InvalidArgument(format!("training index {i} out of range")));
                }
                let (sum, count) = self
                    .oob_trees(i)
                    .fold((T::zero(), 0usize), |(s, c), t| (s + self.trees[t].predict(x), c + 1));
                if count == 0 {
                    Err(Error::NoOobTrees(i))
                } else {
                    Ok(sum / T::from_count(count))
                }
            }
        }
    }

    /// Signed out-of-bag residuals `y_i − ŷ₍ᵢ₎(x_i)` over `train` (the data
    /// the forest was fitted on). Rows without OOB trees are skipped.
    pub fn oob_residuals(&self, train: &Dataset<T>) -> Result<Vec<T>> {
        if train.n() != self.n_train() {
            return Err(Error::Dimension {
                expected: self.n_train(),
                got: train.n(),
            });
        }
        let mut out = Vec::with_capacity(train.n());
        for i in 0..train.n() {
            match self.predict(train.row(i), PredictMode::Oob(i)) {
                Ok(p) => out.push(train.target(i) - p),
                Err(Error::NoOobTrees(_)) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(out)
    }

    /// QRF weights `w_i(x)` over the training rows.
    pub fn qrf_weights(&self, x: &[T]) -> Vec<T> {
        let mut w = vec![T::zero(); self.n_train()];
        let per_tree = T::one() / T::from_count(self.trees.len());
        for (t, tree) in self.trees.iter().enumerate() {
            let members = &self.leaf_members[t][tree.leaf_of(x).0];
            let share = per_tree / T::from_count(members.len());
            for &i in members {
                w[i] = w[i] + share;
            }
        }
        w
    }

    /// Estimated conditional CDF `F̂(y | x)`. When every selected leaf has
    /// the same size the value is one correctly rounded division.
    pub fn qrf_cdf(&self, x: &[T], y: T) -> T {
        let mut total = T::zero();
        let mut count = 0usize;
        let mut size = None;
        let mut uniform = true;
        for (t, tree) in self.trees.iter().enumerate() {
            let ys = &self.leaf_targets[t][tree.leaf_of(x).0];
            let c = ys.partition_point(|&v| v <= y);
            count += c;
            uniform &= *size.get_or_insert(ys.len()) == ys.len();
            total = total + T::from_count(c) / T::from_count(ys.len());
        }
        let trees = self.trees.len();
        match size {
            Some(s) if uniform => T::from_count(count) / T::from_count(s * trees),
            _ => total / T::from_count(trees),
        }
    }

    /// `inf{y : F̂(y | x) ≥ β}`, searched over the training targets.
    pub fn qrf_quantile(&self, x: &[T], beta: T) -> T {
        let grid = &self.sorted_targets;
        let (mut lo, mut hi) = (0usize, grid.len() - 1);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.qrf_cdf(x, grid[mid]) >= beta {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        grid[lo]
    }
}

impl<T: Real> PointPredictor<T> for Forest<T> {
    fn predict(&self, x: &[T]) -> T {
        Forest::predict(self, x, PredictMode::Full).expect("feature dimension matches the fitted forest")
    }
}
