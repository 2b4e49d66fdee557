//! Edge-mask explainers for trained GNNs, rank agreement between them, and
//! aggregation of importances by cortical layer.

mod gnnx;
mod objective;
mod pgx;

pub use gnnx::{gnnx_explain, gnnx_explain_all, GnnxConfig};
pub use objective::Regularizers;
pub use pgx::{pgx_apply, pgx_train, PgExplainer, PgxConfig, PgxTrainReport};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{Diagnosis, Layer};
use crate::gnn::{GnnError, GraphInput};
use crate::spatial::PathologyGraph;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExplainError {
    #[error("length mismatch: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("explainer loss is not finite")]
    NonFiniteLoss,
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error("bad explainer file: {0}")]
    BadModel(String),
    #[error(transparent)]
    Gnn(#[from] GnnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gnnx,
    Pgx,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Gnnx => "gnnx",
            Method::Pgx => "pgx",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplanationResult {
    pub method: Method,
    pub target: usize,
    /// Mask value per edge, in graph edge order.
    pub edge_importance: Vec<f64>,
    /// Mean of incident edge importances; 0 for isolated nodes.
    pub node_importance: Vec<f64>,
    /// Nodes with at least one edge. Isolated nodes carry no evidence and
    /// are left out of layer means.
    pub has_edges: Vec<bool>,
    /// Objective before and after optimization (every step for gnnx).
    pub loss_history: Vec<f64>,
}

impl ExplanationResult {
    pub(crate) fn from_edges(
        g: &GraphInput,
        method: Method,
        target: usize,
        edge_importance: Vec<f64>,
        loss_history: Vec<f64>,
    ) -> Self {
        let node_importance = node_importance(g.n, &g.edges, &edge_importance);
        let has_edges = g.nbrs.iter().map(|n| !n.is_empty()).collect();
        Self { method, target, edge_importance, node_importance, has_edges, loss_history }
    }

    pub fn initial_loss(&self) -> f64 {
        self.loss_history[0]
    }

    pub fn final_loss(&self) -> f64 {
        *self.loss_history.last().expect("non-empty history")
    }
}

/// Per node: mean importance of incident edges, 0 when there are none.
pub fn node_importance(n: usize, edges: &[(usize, usize, f64)], edge_importance: &[f64]) -> Vec<f64> {
    let mut sum = vec![0.0; n];
    let mut deg = vec![0usize; n];
    for (&(u, v, _), &m) in edges.iter().zip(edge_importance) {
        sum[u] += m;
        sum[v] += m;
        deg[u] += 1;
        deg[v] += 1;
    }
    sum.iter().zip(&deg).map(|(s, &d)| if d > 0 { s / d as f64 } else { 0.0 }).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Agreement {
    pub rho: f64,
    /// Set when either side has zero rank variance; `rho` is then 0.
    pub degenerate: bool,
}

/// Ranks starting at 1, ties sharing their mean rank.
pub fn mid_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = rank;
        }
        i = j + 1;
    }
    r
}

pub fn spearman(a: &[f64], b: &[f64]) -> Result<Agreement, ExplainError> {
    if a.len() != b.len() {
        return Err(ExplainError::LengthMismatch { a: a.len(), b: b.len() });
    }
    let (ra, rb) = (mid_ranks(a), mid_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if a.len() < 2 || saa == 0.0 || sbb == 0.0 {
        return Ok(Agreement { rho: 0.0, degenerate: true });
    }
    Ok(Agreement { rho: (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0), degenerate: false })
}

/// Spearman correlation of the two edge masks.
pub fn explainer_agreement(a: &ExplanationResult, b: &ExplanationResult) -> Result<Agreement, ExplainError> {
    spearman(&a.edge_importance, &b.edge_importance)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerStat {
    pub diagnosis: Diagnosis,
    pub layer: u8,
    pub node_mean: Option<f64>,
    pub edge_mean: Option<f64>,
    pub n_nodes: usize,
    pub n_edges: usize,
}

/// Stats for every (class, layer) pair that has at least one node with
/// edges or one within-layer edge.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayerImportance {
    pub stats: Vec<LayerStat>,
}

impl LayerImportance {
    pub fn get(&self, d: Diagnosis, layer: u8) -> Option<&LayerStat> {
        self.stats.iter().find(|s| s.diagnosis == d && s.layer == layer)
    }

    /// Mean of the present per-layer node means among `layers`.
    pub fn mean_of_layers(&self, d: Diagnosis, layers: &[u8]) -> Option<f64> {
        let v: Vec<f64> = layers.iter().filter_map(|&l| self.get(d, l).and_then(|s| s.node_mean)).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Same for edge means.
    pub fn edge_mean_of_layers(&self, d: Diagnosis, layers: &[u8]) -> Option<f64> {
        let v: Vec<f64> = layers.iter().filter_map(|&l| self.get(d, l).and_then(|s| s.edge_mean)).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:?}"));
        let mut s = String::from("diagnosis,layer,node_mean,edge_mean,n_nodes,n_edges\n");
        for r in &self.stats {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.diagnosis,
                r.layer,
                opt(r.node_mean),
                opt(r.edge_mean),
                r.n_nodes,
                r.n_edges
            ));
        }
        s
    }
}

/// Pools raw mask values per class and layer across graphs. An edge belongs
/// to a layer only when both endpoints do.
pub fn layer_importance(items: &[(&PathologyGraph, &ExplanationResult)]) -> Result<LayerImportance, ExplainError> {
    #[derive(Default)]
    struct Acc {
        node: (f64, usize),
        edge: (f64, usize),
    }
    let mut acc: BTreeMap<(Diagnosis, u8), Acc> = BTreeMap::new();
    for (g, r) in items {
        if r.node_importance.len() != g.n_nodes() {
            return Err(ExplainError::LengthMismatch { a: g.n_nodes(), b: r.node_importance.len() });
        }
        if r.edge_importance.len() != g.n_edges() {
            return Err(ExplainError::LengthMismatch { a: g.n_edges(), b: r.edge_importance.len() });
        }
        for (i, n) in g.nodes.iter().enumerate() {
            if let (Layer::Cortical(k), true) = (n.layer, r.has_edges[i]) {
                let a = acc.entry((g.diagnosis, k)).or_default();
                a.node.0 += r.node_importance[i];
                a.node.1 += 1;
            }
        }
        for (e, m) in g.edges.iter().zip(&r.edge_importance) {
            if let (Layer::Cortical(a), Layer::Cortical(b)) = (g.nodes[e.u].layer, g.nodes[e.v].layer) {
                if a == b {
                    let s = acc.entry((g.diagnosis, a)).or_default();
                    s.edge.0 += m;
                    s.edge.1 += 1;
                }
            }
        }
    }
    let mean = |(s, n): (f64, usize)| (n > 0).then(|| s / n as f64);
    Ok(LayerImportance {
        stats: acc
            .into_iter()
            .map(|((diagnosis, layer), a)| LayerStat {
                diagnosis,
                layer,
                node_mean: mean(a.node),
                edge_mean: mean(a.edge),
                n_nodes: a.node.1,
                n_edges: a.edge.1,
            })
            .collect(),
    })
}

/// `edge,u,v,importance` rows.
pub fn edge_importance_csv(g: &GraphInput, r: &ExplanationResult) -> String {
    let mut s = String::from("edge,u,v,importance\n");
    for (i, (&(u, v, _), m)) in g.edges.iter().zip(&r.edge_importance).enumerate() {
        s.push_str(&format!("{i},{u},{v},{m:?}\n"));
    }
    s
}

/// `node,record_id,layer,importance` rows.
pub fn node_importance_csv(g: &PathologyGraph, r: &ExplanationResult) -> String {
    let mut s = String::from("node,record_id,layer,importance\n");
    for (i, (n, m)) in g.nodes.iter().zip(&r.node_importance).enumerate() {
        s.push_str(&format!("{i},{},{},{m:?}\n", n.record_id, n.layer));
    }
    s
}

/// Area under the ROC curve of `scores` separating `positive` items, with
/// ties counted as half. `None` when either class is empty.
pub fn auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let ranks = mid_ranks(scores);
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let rank_sum: f64 = ranks.iter().zip(positive).filter(|(_, &p)| p).map(|(r, _)| r).sum();
    Some((rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos * n_neg) as f64)
}
