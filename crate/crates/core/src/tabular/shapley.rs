//! Interventional Shapley values for a forest's rpAD probability.
//!
//! The value of a coalition S is the model output averaged over background
//! rows, with features in S taken from the explained row and the rest from
//! the background row.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{FeatureTable, RFModel, TabularError};
use crate::util;

pub const MAX_EXACT_FEATURES: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShapleyMode {
    Exact,
    Sampled { n_permutations: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapleyAttribution {
    pub base_value: f64,
    /// Positive values push toward rpAD.
    pub phi: Vec<f64>,
    pub mode: ShapleyMode,
}

/// Background rows from a table, optionally a seeded subsample.
pub fn background_rows(t: &FeatureTable, max_rows: Option<usize>, seed: u64) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = t.rows.iter().map(|r| r.features.clone()).collect();
    if let Some(k) = max_rows {
        if rows.len() > k {
            rows.shuffle(&mut util::rng(seed, 0x5a9));
            rows.truncate(k);
        }
    }
    rows
}

fn coalition_value(m: &RFModel, x: &[f64], background: &[Vec<f64>], mask: u64) -> f64 {
    let mut z = vec![0.0; x.len()];
    let mut s = 0.0;
    for b in background {
        for j in 0..x.len() {
            z[j] = if mask >> j & 1 == 1 { x[j] } else { b[j] };
        }
        s += m.p_rpad(&z);
    }
    s / background.len() as f64
}

pub fn shapley_attribution(
    m: &RFModel,
    background: &[Vec<f64>],
    row: &[f64],
    mode: ShapleyMode,
) -> Result<ShapleyAttribution, TabularError> {
    let n = m.n_features;
    if row.len() != n || background.iter().any(|b| b.len() != n) {
        return Err(TabularError::DimensionMismatch { expected: n, found: row.len() });
    }
    if background.is_empty() {
        return Err(TabularError::TooFewRows(0));
    }
    match mode {
        ShapleyMode::Exact => exact(m, background, row),
        ShapleyMode::Sampled { n_permutations, seed } => Ok(sampled(m, background, row, n_permutations, seed)),
    }
}

fn exact(m: &RFModel, background: &[Vec<f64>], x: &[f64]) -> Result<ShapleyAttribution, TabularError> {
    let n = x.len();
    if n > MAX_EXACT_FEATURES {
        return Err(TabularError::TooManyFeaturesForExact(n));
    }
    let full = 1u64 << n;
    let values: Vec<f64> = (0..full).into_par_iter().map(|mask| coalition_value(m, x, background, mask)).collect();
    // weight(|S|) = |S|! (n-|S|-1)! / n!
    let mut w = vec![0.0; n.max(1)];
    for (s, ws) in w.iter_mut().enumerate() {
        let mut v = 1.0 / n as f64;
        // 1/n * 1/C(n-1, s)
        for i in 0..s {
            v *= (i + 1) as f64 / (n - 1 - i) as f64;
        }
        *ws = v;
    }
    let mut phi = vec![0.0; n];
    for (j, p) in phi.iter_mut().enumerate() {
        let bit = 1u64 << j;
        let mut acc = 0.0;
        for mask in (0..full).filter(|s| s & bit == 0) {
            let d = values[(mask | bit) as usize] - values[mask as usize];
            acc += w[mask.count_ones() as usize] * d;
        }
        *p = acc;
    }
    Ok(ShapleyAttribution { base_value: values[0], phi, mode: ShapleyMode::Exact })
}

fn sampled(m: &RFModel, background: &[Vec<f64>], x: &[f64], n_perm: usize, seed: u64) -> ShapleyAttribution {
    let n = x.len();
    let perms: Vec<Vec<usize>> = {
        let mut rng = util::rng(seed, 0x5a7);
        (0..n_perm.max(1))
            .map(|_| {
                let mut p: Vec<usize> = (0..n).collect();
                p.shuffle(&mut rng);
                p
            })
            .collect()
    };
    let contributions: Vec<Vec<f64>> = perms
        .par_iter()
        .map(|perm| {
            let mut phi = vec![0.0; n];
            let mut mask = 0u64;
            let mut prev = coalition_value(m, x, background, mask);
            for &j in perm {
                mask |= 1 << j;
                let cur = coalition_value(m, x, background, mask);
                phi[j] += cur - prev;
                prev = cur;
            }
            phi
        })
        .collect();
    let mut phi = vec![0.0; n];
    for c in &contributions {
        for (a, b) in phi.iter_mut().zip(c) {
            *a += b;
        }
    }
    phi.iter_mut().for_each(|v| *v /= contributions.len() as f64);
    ShapleyAttribution {
        base_value: coalition_value(m, x, background, 0),
        phi,
        mode: ShapleyMode::Sampled { n_permutations: n_perm, seed },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::forest::{fit_forest, rf_predict, DecisionTree, RfConfig, TreeNode};
    use rand::Rng as _;

    fn data(seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = util::rng(seed, 3);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..120 {
            let r: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            y.push(usize::from(r[0] + 0.5 * r[1] * r[2] > 0.0));
            x.push(r);
        }
        (x, y)
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("f{i}")).collect()
    }

    #[test]
    fn efficiency_exact() {
        let (x, y) = data(1);
        let m = fit_forest(&x, &y, &names(5), &RfConfig { n_trees: 30, ..Default::default() }).unwrap();
        for row in x.iter().take(5) {
            let a = shapley_attribution(&m, &x, row, ShapleyMode::Exact).unwrap();
            let p = rf_predict(&m, std::slice::from_ref(row)).unwrap()[0][1];
            let s = a.base_value + a.phi.iter().sum::<f64>();
            assert!((s - p).abs() <= 1e-9, "{s} vs {p}");
        }
    }

    #[test]
    fn sampled_also_sums_and_approximates() {
        let (x, y) = data(2);
        let m = fit_forest(&x, &y, &names(5), &RfConfig { n_trees: 20, ..Default::default() }).unwrap();
        let bg: Vec<Vec<f64>> = x[..40].to_vec();
        let e = shapley_attribution(&m, &bg, &x[0], ShapleyMode::Exact).unwrap();
        let s = shapley_attribution(&m, &bg, &x[0], ShapleyMode::Sampled { n_permutations: 400, seed: 1 }).unwrap();
        let p = rf_predict(&m, &[x[0].clone()]).unwrap()[0][1];
        assert!((s.base_value + s.phi.iter().sum::<f64>() - p).abs() < 1e-9);
        for (a, b) in e.phi.iter().zip(&s.phi) {
            assert!((a - b).abs() < 0.05, "{a} vs {b}");
        }
    }

    #[test]
    fn null_player_exact_zero() {
        let (x, y) = data(3);
        let m =
            fit_forest(&x, &y, &names(5), &RfConfig { n_trees: 10, max_depth: Some(2), ..Default::default() }).unwrap();
        let unused: Vec<usize> = (0..5).filter(|&j| !m.trees.iter().any(|t| t.uses_feature(j))).collect();
        assert!(!unused.is_empty() || m.trees.iter().all(|t| t.nodes.len() > 1));
        let a = shapley_attribution(&m, &x, &x[7], ShapleyMode::Exact).unwrap();
        for j in unused {
            assert_eq!(a.phi[j], 0.0);
        }
    }

    #[test]
    fn null_player_handmade() {
        let stump = |f: usize| DecisionTree {
            nodes: vec![
                TreeNode::Split { feature: f, threshold: 0.0, left: 1, right: 2 },
                TreeNode::Leaf { probs: [0.9, 0.1] },
                TreeNode::Leaf { probs: [0.2, 0.8] },
            ],
        };
        let m = RFModel {
            trees: vec![stump(0), stump(1)],
            n_features: 3,
            feature_names: names(3),
            feature_subsample: 2,
            config: RfConfig::default(),
            importances: vec![0.5, 0.5, 0.0],
        };
        let bg = vec![vec![-1.0, -1.0, 3.0], vec![1.0, -1.0, -3.0], vec![-1.0, 1.0, 0.0]];
        let a = shapley_attribution(&m, &bg, &[1.0, 1.0, 9.0], ShapleyMode::Exact).unwrap();
        assert_eq!(a.phi[2], 0.0);
        assert!(a.phi[0] > 0.0 && a.phi[1] > 0.0);
    }

    #[test]
    fn symmetric_duplicate_columns() {
        // Columns 0 and 1 are copies; one tree reads each.
        let stump = |f: usize| DecisionTree {
            nodes: vec![
                TreeNode::Split { feature: f, threshold: 0.5, left: 1, right: 2 },
                TreeNode::Leaf { probs: [0.7, 0.3] },
                TreeNode::Leaf { probs: [0.1, 0.9] },
            ],
        };
        let m = RFModel {
            trees: vec![stump(0), stump(1), stump(2)],
            n_features: 3,
            feature_names: names(3),
            feature_subsample: 2,
            config: RfConfig::default(),
            importances: vec![1.0 / 3.0; 3],
        };
        let mut rng = util::rng(4, 4);
        let bg: Vec<Vec<f64>> = (0..30)
            .map(|_| {
                let v: f64 = rng.random_range(0.0..1.0);
                vec![v, v, rng.random_range(0.0..1.0)]
            })
            .collect();
        let a = shapley_attribution(&m, &bg, &[0.9, 0.9, 0.1], ShapleyMode::Exact).unwrap();
        assert!((a.phi[0] - a.phi[1]).abs() <= 1e-12);
    }

    #[test]
    fn too_many_features() {
        let m = RFModel {
            trees: vec![DecisionTree { nodes: vec![TreeNode::Leaf { probs: [0.5, 0.5] }] }],
            n_features: 16,
            feature_names: names(16),
            feature_subsample: 4,
            config: RfConfig::default(),
            importances: vec![0.0; 16],
        };
        let r = shapley_attribution(&m, &[vec![0.0; 16]], &[0.0; 16], ShapleyMode::Exact);
        assert_eq!(r, Err(TabularError::TooManyFeaturesForExact(16)));
    }
}
