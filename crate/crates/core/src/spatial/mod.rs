//! Spatial graph construction: Delaunay triangulation of object centroids,
//! α-guided erosion, distance-based edge weights and per-layer subgraphs.

mod delaunay;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::data::{Diagnosis, Layer, ObjectType, SlideDataset};

pub use delaunay::{delaunay, triangulate};

/// Edges longer than this are never kept.
pub const MAX_EDGE_LENGTH_UM: f64 = 1000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpatialError {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("points {0} and {1} coincide")]
    DuplicatePoint(usize, usize),
    #[error("graph has no edges")]
    EmptyGraph,
    #[error("edge ({0}, {1}) has zero length")]
    ZeroLength(usize, usize),
    #[error("too few {object_type} objects: {found} (need at least 3)")]
    TooFewObjects { object_type: ObjectType, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GraphLevel {
    Patient,
    /// Cortical layer 1..=6.
    Layer(u8),
}

impl fmt::Display for GraphLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphLevel::Patient => f.write_str("patient"),
            GraphLevel::Layer(k) => write!(f, "layer:{k}"),
        }
    }
}

impl FromStr for GraphLevel {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "patient" => Ok(GraphLevel::Patient),
            _ => {
                let k: u8 = s.strip_prefix("layer:").ok_or(())?.parse().map_err(|_| ())?;
                if (1..=6).contains(&k) {
                    Ok(GraphLevel::Layer(k))
                } else {
                    Err(())
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphNode {
    pub record_id: String,
    pub x_um: f64,
    pub y_um: f64,
    pub layer: Layer,
}

/// Undirected edge stored once with `u < v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphEdge {
    pub u: usize,
    pub v: usize,
    pub length_um: f64,
    pub alpha_um: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathologyGraph {
    pub slide_id: String,
    pub patient_id: String,
    pub diagnosis: Diagnosis,
    pub object_type: ObjectType,
    pub level: GraphLevel,
    pub alpha_optimal_um: f64,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

impl PathologyGraph {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Stable identifier used for file names: `<slide>_<type>_<level>`.
    pub fn key(&self) -> String {
        let level = match self.level {
            GraphLevel::Patient => "patient".to_string(),
            GraphLevel::Layer(k) => format!("L{k}"),
        };
        format!("{}_{}_{}", self.slide_id, self.object_type, level)
    }

    /// Neighbor lists `(neighbor, edge index)` in edge order.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for (i, e) in self.edges.iter().enumerate() {
            adj[e.u].push((e.v, i));
            adj[e.v].push((e.u, i));
        }
        adj
    }
}

fn distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// Per-edge α value. Here α is the edge length; swapping in a
/// circumradius-based definition only requires changing this function.
pub fn edge_alpha(length_um: f64) -> f64 {
    length_um
}

/// Half the median of the per-edge α values. Even counts use the mean of
/// the two central order statistics.
pub fn compute_alpha_optimal(edges: &[GraphEdge]) -> Result<f64, SpatialError> {
    if edges.is_empty() {
        return Err(SpatialError::EmptyGraph);
    }
    let mut alphas: Vec<f64> = edges.iter().map(|e| e.alpha_um).collect();
    alphas.sort_by(|a, b| a.total_cmp(b));
    let m = alphas.len();
    let median = if m % 2 == 1 { alphas[m / 2] } else { 0.5 * (alphas[m / 2 - 1] + alphas[m / 2]) };
    Ok(0.5 * median)
}

/// Keeps exactly the edges with `alpha_um <= alpha_optimal_um` and
/// `length_um <= max_len_um`. Nodes are untouched.
pub fn erode(g: &PathologyGraph, alpha_optimal_um: f64, max_len_um: f64) -> PathologyGraph {
    PathologyGraph {
        alpha_optimal_um,
        edges: g
            .edges
            .iter()
            .filter(|e| e.alpha_um <= alpha_optimal_um && e.length_um <= max_len_um)
            .copied()
            .collect(),
        ..g.clone()
    }
}

/// Edge affinity `length^(-1/2)`.
pub fn edge_weight(length_um: f64) -> f64 {
    1.0 / length_um.sqrt()
}

pub fn weigh_edges(g: &PathologyGraph) -> Result<PathologyGraph, SpatialError> {
    let mut out = g.clone();
    for e in &mut out.edges {
        if !(e.length_um > 0.0) {
            return Err(SpatialError::ZeroLength(e.u, e.v));
        }
        e.weight = edge_weight(e.length_um);
    }
    Ok(out)
}

/// Induced subgraph per cortical layer 1..=6. Cross-layer edges are dropped
/// and unassigned nodes appear in no subgraph. Node order is preserved.
pub fn layer_subgraphs(g: &PathologyGraph) -> BTreeMap<u8, PathologyGraph> {
    let mut out = BTreeMap::new();
    for k in 1..=6u8 {
        let layer = Layer::Cortical(k);
        let mut remap = vec![usize::MAX; g.nodes.len()];
        let mut nodes = Vec::new();
        for (i, n) in g.nodes.iter().enumerate() {
            if n.layer == layer {
                remap[i] = nodes.len();
                nodes.push(n.clone());
            }
        }
        let edges = g
            .edges
            .iter()
            .filter(|e| remap[e.u] != usize::MAX && remap[e.v] != usize::MAX)
            .map(|e| GraphEdge { u: remap[e.u], v: remap[e.v], ..*e })
            .collect();
        out.insert(k, PathologyGraph { level: GraphLevel::Layer(k), nodes, edges, ..g.clone_header() });
    }
    out
}

impl PathologyGraph {
    fn clone_header(&self) -> PathologyGraph {
        PathologyGraph {
            slide_id: self.slide_id.clone(),
            patient_id: self.patient_id.clone(),
            diagnosis: self.diagnosis,
            object_type: self.object_type,
            level: self.level,
            alpha_optimal_um: self.alpha_optimal_um,
            nodes: Vec::new(),
            edges: Vec::new(),
        }
    }
}

/// Unfiltered Delaunay graph of the given nodes, with α and weights set.
pub fn delaunay_graph(template: &PathologyGraph, nodes: Vec<GraphNode>) -> Result<PathologyGraph, SpatialError> {
    let pts: Vec<(f64, f64)> = nodes.iter().map(|n| (n.x_um, n.y_um)).collect();
    let edges = delaunay(&pts)?
        .into_iter()
        .map(|(u, v)| {
            let length_um = distance(pts[u], pts[v]);
            GraphEdge { u, v, length_um, alpha_um: edge_alpha(length_um), weight: edge_weight(length_um) }
        })
        .collect();
    Ok(PathologyGraph { nodes, edges, ..template.clone_header() })
}

/// Filters one object type, merges coincident points (keeping the
/// lexicographically smallest id), triangulates, erodes and weighs.
/// For [`GraphLevel::Layer`] requests the eroded patient graph is split, so
/// every layer inherits the patient-level α_optimal.
pub fn build_pathology_graph(d: &SlideDataset, object_type: ObjectType) -> Result<PathologyGraph, SpatialError> {
    let mut recs: Vec<_> = d.records.iter().filter(|r| r.object_type == object_type).collect();
    if recs.len() < 3 {
        return Err(SpatialError::TooFewObjects { object_type, found: recs.len() });
    }
    // Dedup by exact coordinates; order nodes by first appearance.
    let mut by_coord: BTreeMap<(u64, u64), usize> = BTreeMap::new();
    let mut nodes: Vec<GraphNode> = Vec::with_capacity(recs.len());
    for r in recs.drain(..) {
        // +0.0 and -0.0 must collapse to the same key.
        let key = ((r.x_um + 0.0).to_bits(), (r.y_um + 0.0).to_bits());
        match by_coord.get(&key) {
            Some(&i) => {
                if r.id < nodes[i].record_id {
                    nodes[i].record_id = r.id.clone();
                    nodes[i].layer = r.layer;
                }
            }
            None => {
                by_coord.insert(key, nodes.len());
                nodes.push(GraphNode { record_id: r.id.clone(), x_um: r.x_um, y_um: r.y_um, layer: r.layer });
            }
        }
    }
    if nodes.len() < 3 {
        return Err(SpatialError::TooFewObjects { object_type, found: nodes.len() });
    }
    let template = PathologyGraph {
        slide_id: d.slide_id.clone(),
        patient_id: d.patient_id.clone(),
        diagnosis: d.diagnosis,
        object_type,
        level: GraphLevel::Patient,
        alpha_optimal_um: 0.0,
        nodes: Vec::new(),
        edges: Vec::new(),
    };
    let full = delaunay_graph(&template, nodes)?;
    let alpha = compute_alpha_optimal(&full.edges)?;
    weigh_edges(&erode(&full, alpha, MAX_EDGE_LENGTH_UM))
}

/// Patient graph followed by its six layer subgraphs.
pub fn build_all_levels(d: &SlideDataset, object_type: ObjectType) -> Result<Vec<PathologyGraph>, SpatialError> {
    let patient = build_pathology_graph(d, object_type)?;
    let mut out = vec![patient.clone()];
    out.extend(layer_subgraphs(&patient).into_values());
    Ok(out)
}
