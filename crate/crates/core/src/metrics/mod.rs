//! Per-node centralities (GNN input features) and per-graph summary
//! metrics with ROI- and α-normalized copies (tabular features).

mod centrality;
mod summary;

pub use centrality::{
    betweenness, closeness, clustering_coefficients, node_features, NodeFeatureMatrix, NODE_FEATURE_DIM,
    NODE_FEATURE_NAMES,
};
pub use summary::{graph_summary, GraphMetrics, NormalizedCounts};
