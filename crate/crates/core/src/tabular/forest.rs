use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FeatureTable, TabularError};
use crate::util::{self, Rng};

const MODEL_FORMAT: &str = "taugraph-rf";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfConfig {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or cannot be split.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for RfConfig {
    fn default() -> Self {
        Self { n_trees: 200, max_depth: None, min_leaf: 1, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Split {
        feature: usize,
        /// Rows with `x[feature] <= threshold` go left.
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Class probabilities `[cAD, rpAD]`.
        probs: [f64; 2],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    /// Node 0 is the root.
    pub nodes: Vec<TreeNode>,
}

impl DecisionTree {
    pub fn leaf_probs(&self, x: &[f64]) -> [f64; 2] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { probs } => return *probs,
                TreeNode::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right }
                }
            }
        }
    }

    pub fn uses_feature(&self, f: usize) -> bool {
        self.nodes.iter().any(|n| matches!(n, TreeNode::Split { feature, .. } if *feature == f))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RFModel {
    pub trees: Vec<DecisionTree>,
    pub n_features: usize,
    pub feature_names: Vec<String>,
    pub feature_subsample: usize,
    pub config: RfConfig,
    /// Mean impurity decrease per feature, normalized per tree.
    pub importances: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    model: RFModel,
}

impl RFModel {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string_pretty(&ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            model: self.clone(),
        })
        .expect("model serializes")
    }

    pub fn from_text(s: &str) -> Result<Self, TabularError> {
        let f: ModelFile = serde_json::from_str(s).map_err(|e| TabularError::BadModel(e.to_string()))?;
        if f.format != MODEL_FORMAT || f.version != MODEL_VERSION {
            return Err(TabularError::BadModel(format!("unsupported model {} v{}", f.format, f.version)));
        }
        Ok(f.model)
    }

    /// Probability of rpAD for one row, without dimension checks.
    pub(crate) fn p_rpad(&self, x: &[f64]) -> f64 {
        let s: f64 = self.trees.iter().map(|t| t.leaf_probs(x)[1]).sum();
        s / self.trees.len() as f64
    }
}

pub fn subsample_size(m: usize) -> usize {
    ((m as f64).sqrt().ceil() as usize).clamp(1, m.max(1))
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    m: usize,
    mtry: usize,
    max_depth: Option<usize>,
    min_leaf: usize,
    n_root: f64,
    nodes: Vec<TreeNode>,
    importance: Vec<f64>,
}

fn gini(c0: f64, c1: f64) -> f64 {
    let n = c0 + c1;
    if n == 0.0 {
        0.0
    } else {
        1.0 - (c0 * c0 + c1 * c1) / (n * n)
    }
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> [f64; 2] {
        let mut c = [0.0; 2];
        for &i in idx {
            c[self.y[i]] += 1.0;
        }
        c
    }

    /// Best threshold on one feature, scanning ascending; strict improvement
    /// keeps the lowest threshold among equals.
    fn best_on(&self, idx: &[usize], f: usize, parent: f64) -> Option<SplitChoice> {
        let mut vals: Vec<(f64, usize)> = idx.iter().map(|&i| (self.x[i][f], self.y[i])).collect();
        vals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = vals.len();
        let total = self.counts(idx);
        let mut left = [0.0; 2];
        let mut best: Option<SplitChoice> = None;
        for s in 1..n {
            left[vals[s - 1].1] += 1.0;
            let (lo, hi) = (vals[s - 1].0, vals[s].0);
            if lo == hi || s < self.min_leaf || n - s < self.min_leaf {
                continue;
            }
            let right = [total[0] - left[0], total[1] - left[1]];
            let nl = s as f64;
            let nr = (n - s) as f64;
            let child = (nl * gini(left[0], left[1]) + nr * gini(right[0], right[1])) / n as f64;
            let gain = parent - child;
            if best.as_ref().is_none_or(|b| gain > b.gain) {
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some(SplitChoice { feature: f, threshold, gain });
            }
        }
        best
    }

    fn pick(&self, idx: &[usize], features: &[usize], parent: f64) -> Option<SplitChoice> {
        let mut best: Option<SplitChoice> = None;
        for &f in features {
            if let Some(c) = self.best_on(idx, f, parent) {
                if best.as_ref().is_none_or(|b| c.gain > b.gain) {
                    best = Some(c);
                }
            }
        }
        best
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize, rng: &mut Rng) -> usize {
        let c = self.counts(&idx);
        let n = idx.len() as f64;
        let me = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { probs: [c[0] / n, c[1] / n] });
        let pure = c[0] == 0.0 || c[1] == 0.0;
        if pure || self.max_depth.is_some_and(|d| depth >= d) || idx.len() < 2 * self.min_leaf {
            return me;
        }
        let parent = gini(c[0], c[1]);
        let mut drawn: Vec<usize> = sample(rng, self.m, self.mtry).into_vec();
        drawn.sort_unstable();
        let mut choice = self.pick(&idx, &drawn, parent);
        if choice.is_none() {
            // Every drawn feature is constant here; fall back to the rest.
            let rest: Vec<usize> = (0..self.m).filter(|f| !drawn.contains(f)).collect();
            choice = self.pick(&idx, &rest, parent);
        }
        let Some(split) = choice else {
            return me;
        };
        self.importance[split.feature] += n / self.n_root * split.gain;
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][split.feature] <= split.threshold);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[me] = TreeNode::Split { feature: split.feature, threshold: split.threshold, left, right };
        me
    }
}

fn fit_tree(x: &[Vec<f64>], y: &[usize], m: usize, mtry: usize, cfg: &RfConfig, seed: u64) -> (DecisionTree, Vec<f64>) {
    let mut rng = util::rng(seed, 0);
    let n = x.len();
    let boot: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    let mut b = Builder {
        x,
        y,
        m,
        mtry,
        max_depth: cfg.max_depth,
        min_leaf: cfg.min_leaf.max(1),
        n_root: n as f64,
        nodes: Vec::new(),
        importance: vec![0.0; m],
    };
    b.grow(boot, 0, &mut rng);
    let total: f64 = b.importance.iter().sum();
    if total > 0.0 {
        b.importance.iter_mut().for_each(|v| *v /= total);
    }
    (DecisionTree { nodes: b.nodes }, b.importance)
}

/// Fits a forest on raw arrays; `y` holds class indices (0 = cAD, 1 = rpAD).
pub fn fit_forest(
    x: &[Vec<f64>],
    y: &[usize],
    feature_names: &[String],
    cfg: &RfConfig,
) -> Result<RFModel, TabularError> {
    let m = feature_names.len();
    if x.len() < 2 {
        return Err(TabularError::TooFewRows(x.len()));
    }
    if x.iter().any(|r| r.len() != m) {
        return Err(TabularError::DimensionMismatch {
            expected: m,
            found: x.iter().map(|r| r.len()).find(|&l| l != m).unwrap_or(0),
        });
    }
    if !(y.contains(&0) && y.contains(&1)) {
        return Err(TabularError::SingleClass);
    }
    if cfg.n_trees == 0 {
        return Err(TabularError::BadModel("n_trees must be positive".into()));
    }
    let mtry = subsample_size(m);
    let fitted: Vec<(DecisionTree, Vec<f64>)> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| fit_tree(x, y, m, mtry, cfg, util::derive_seed(cfg.seed, t as u64)))
        .collect();
    let mut importances = vec![0.0; m];
    for (_, imp) in &fitted {
        for (a, b) in importances.iter_mut().zip(imp) {
            *a += b;
        }
    }
    importances.iter_mut().for_each(|v| *v /= cfg.n_trees as f64);
    Ok(RFModel {
        trees: fitted.into_iter().map(|(t, _)| t).collect(),
        n_features: m,
        feature_names: feature_names.to_vec(),
        feature_subsample: mtry,
        config: *cfg,
        importances,
    })
}

pub fn train_random_forest(t: &FeatureTable, cfg: &RfConfig) -> Result<RFModel, TabularError> {
    let x: Vec<Vec<f64>> = t.rows.iter().map(|r| r.features.clone()).collect();
    fit_forest(&x, &t.labels(), &t.columns, cfg)
}

/// Mean of tree leaf distributions, `[p_cAD, p_rpAD]` per row.
pub fn rf_predict(m: &RFModel, rows: &[Vec<f64>]) -> Result<Vec<[f64; 2]>, TabularError> {
    rows.iter()
        .map(|x| {
            if x.len() != m.n_features {
                return Err(TabularError::DimensionMismatch { expected: m.n_features, found: x.len() });
            }
            let mut acc = [0.0; 2];
            for t in &m.trees {
                let p = t.leaf_probs(x);
                acc[0] += p[0];
                acc[1] += p[1];
            }
            let k = m.trees.len() as f64;
            Ok([acc[0] / k, acc[1] / k])
        })
        .collect()
}

/// Class index with ties going to cAD.
pub fn predicted_class(p: &[f64; 2]) -> usize {
    usize::from(p[1] > p[0])
}
