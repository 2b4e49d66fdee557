//! Spatial graph analytics for tau pathology: Delaunay graphs over annotated
//! plaques and tangles, graph metrics, clustering, random forests, graph
//! neural networks and explainers.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clustering;
pub mod data;
pub mod explain;
pub mod gnn;
pub mod metrics;
pub mod pipeline;
pub mod spatial;
pub mod synth;
pub mod tabular;
pub mod util;
