use crate::spatial::PathologyGraph;
use crate::util::UnionFind;

/// The four extensive quantities that get normalized.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NormalizedCounts {
    pub n_nodes: f64,
    pub n_edges: f64,
    pub total_edge_length_um: f64,
    pub n_components: f64,
}

impl NormalizedCounts {
    fn scaled(raw: &GraphMetrics, by: f64) -> Self {
        if by > 0.0 {
            Self {
                n_nodes: raw.n_nodes as f64 / by,
                n_edges: raw.n_edges as f64 / by,
                total_edge_length_um: raw.total_edge_length_um / by,
                n_components: raw.n_components as f64 / by,
            }
        } else {
            Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphMetrics {
    pub n_nodes: usize,
    pub n_edges: usize,
    pub total_edge_length_um: f64,
    pub n_components: usize,
    pub mean_component_size: f64,
    pub largest_component_frac: f64,
    pub mean_edge_length_um: f64,
    pub alpha_optimal_um: f64,
    /// Divided by ROI area in mm². α is never ROI-normalized.
    pub per_roi_mm2: NormalizedCounts,
    /// Divided by `alpha_optimal_um`.
    pub per_alpha: NormalizedCounts,
}

impl GraphMetrics {
    pub const COLUMNS: [&'static str; 16] = [
        "n_nodes",
        "n_edges",
        "total_edge_length_um",
        "n_components",
        "mean_component_size",
        "largest_component_frac",
        "mean_edge_length_um",
        "alpha_optimal_um",
        "n_nodes_per_mm2",
        "n_edges_per_mm2",
        "total_edge_length_um_per_mm2",
        "n_components_per_mm2",
        "n_nodes_per_alpha",
        "n_edges_per_alpha",
        "total_edge_length_um_per_alpha",
        "n_components_per_alpha",
    ];

    pub fn values(&self) -> [f64; 16] {
        [
            self.n_nodes as f64,
            self.n_edges as f64,
            self.total_edge_length_um,
            self.n_components as f64,
            self.mean_component_size,
            self.largest_component_frac,
            self.mean_edge_length_um,
            self.alpha_optimal_um,
            self.per_roi_mm2.n_nodes,
            self.per_roi_mm2.n_edges,
            self.per_roi_mm2.total_edge_length_um,
            self.per_roi_mm2.n_components,
            self.per_alpha.n_nodes,
            self.per_alpha.n_edges,
            self.per_alpha.total_edge_length_um,
            self.per_alpha.n_components,
        ]
    }
}

/// Summary metrics. Empty graphs report zero counts and zero means.
pub fn graph_summary(g: &PathologyGraph, roi_area_mm2: f64) -> GraphMetrics {
    let n = g.n_nodes();
    let m = g.n_edges();
    let total: f64 = g.edges.iter().map(|e| e.length_um).sum();
    let mut uf = UnionFind::new(n);
    for e in &g.edges {
        uf.union(e.u, e.v);
    }
    let labels = uf.labels();
    let n_components = labels.iter().max().map_or(0, |&l| l + 1);
    let mut sizes = vec![0usize; n_components];
    for &l in &labels {
        sizes[l] += 1;
    }
    let largest = sizes.iter().copied().max().unwrap_or(0);
    let mut out = GraphMetrics {
        n_nodes: n,
        n_edges: m,
        total_edge_length_um: total,
        n_components,
        mean_component_size: if n_components > 0 { n as f64 / n_components as f64 } else { 0.0 },
        largest_component_frac: if n > 0 { largest as f64 / n as f64 } else { 0.0 },
        mean_edge_length_um: if m > 0 { total / m as f64 } else { 0.0 },
        alpha_optimal_um: g.alpha_optimal_um,
        per_roi_mm2: NormalizedCounts::default(),
        per_alpha: NormalizedCounts::default(),
    };
    out.per_roi_mm2 = NormalizedCounts::scaled(&out, roi_area_mm2);
    out.per_alpha = NormalizedCounts::scaled(&out, g.alpha_optimal_um);
    out
}
