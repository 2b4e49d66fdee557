//! Graph partitions (connected components, Markov Clustering) and the
//! per-cluster statistics fed to the tabular classifier.

mod mcl;

use thiserror::Error;

use crate::data::ObjectType;
use crate::spatial::PathologyGraph;
use crate::util::UnionFind;

pub use mcl::{markov_cluster, MclOutcome, MclParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusteringError {
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error("MCL did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error("assignment covers {got} nodes, graph has {expected}")]
    AssignmentMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClusterMethod {
    ConnectedComponents,
    Markov(MclParams),
    /// k-means over learned node embeddings.
    Embedding {
        k: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    /// Dense cluster id per node, numbered by first appearance.
    pub labels: Vec<usize>,
    pub method: ClusterMethod,
}

impl ClusterAssignment {
    pub fn n_clusters(&self) -> usize {
        self.labels.iter().max().map_or(0, |&l| l + 1)
    }
}

pub(crate) fn relabel_dense(raw: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    raw.iter()
        .map(|&r| {
            let next = map.len();
            *map.entry(r).or_insert(next)
        })
        .collect()
}

pub fn connected_components(g: &PathologyGraph) -> ClusterAssignment {
    let mut uf = UnionFind::new(g.n_nodes());
    for e in &g.edges {
        uf.union(e.u, e.v);
    }
    ClusterAssignment { labels: uf.labels(), method: ClusterMethod::ConnectedComponents }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterStats {
    pub cluster_id: usize,
    pub size: usize,
    /// Edges with both endpoints in the cluster.
    pub n_edges: usize,
    pub total_edge_length_um: f64,
    pub mean_edge_length_um: f64,
    pub bbox_area_mm2: f64,
    /// `n_edges / max(1, size·(size−1)/2)`.
    pub density: f64,
    pub slide_id: String,
    pub object_type: ObjectType,
}

impl ClusterStats {
    pub const FEATURES: [&'static str; 6] =
        ["size", "n_edges", "total_edge_length_um", "mean_edge_length_um", "bbox_area_mm2", "density"];

    pub fn features(&self) -> [f64; 6] {
        [
            self.size as f64,
            self.n_edges as f64,
            self.total_edge_length_um,
            self.mean_edge_length_um,
            self.bbox_area_mm2,
            self.density,
        ]
    }
}

/// Aggregates per cluster, ordered by cluster id.
pub fn cluster_stats(g: &PathologyGraph, assignment: &ClusterAssignment) -> Result<Vec<ClusterStats>, ClusteringError> {
    if assignment.labels.len() != g.n_nodes() {
        return Err(ClusteringError::AssignmentMismatch { expected: g.n_nodes(), got: assignment.labels.len() });
    }
    let k = assignment.n_clusters();
    let mut out: Vec<ClusterStats> = (0..k)
        .map(|c| ClusterStats {
            cluster_id: c,
            size: 0,
            n_edges: 0,
            total_edge_length_um: 0.0,
            mean_edge_length_um: 0.0,
            bbox_area_mm2: 0.0,
            density: 0.0,
            slide_id: g.slide_id.clone(),
            object_type: g.object_type,
        })
        .collect();
    let mut bbox = vec![[f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY]; k];
    for (v, &c) in assignment.labels.iter().enumerate() {
        out[c].size += 1;
        let n = &g.nodes[v];
        let b = &mut bbox[c];
        b[0] = b[0].min(n.x_um);
        b[1] = b[1].min(n.y_um);
        b[2] = b[2].max(n.x_um);
        b[3] = b[3].max(n.y_um);
    }
    for e in &g.edges {
        let c = assignment.labels[e.u];
        if assignment.labels[e.v] == c {
            out[c].n_edges += 1;
            out[c].total_edge_length_um += e.length_um;
        }
    }
    for (s, b) in out.iter_mut().zip(&bbox) {
        if s.n_edges > 0 {
            s.mean_edge_length_um = s.total_edge_length_um / s.n_edges as f64;
        }
        s.bbox_area_mm2 = (b[2] - b[0]) * (b[3] - b[1]) / 1e6;
        let pairs = (s.size * s.size.saturating_sub(1) / 2).max(1);
        s.density = s.n_edges as f64 / pairs as f64;
    }
    Ok(out)
}
