use ndarray::Array2;

use super::GnnError;
use crate::data::Diagnosis;
use crate::metrics::{node_features, NODE_FEATURE_DIM};
use crate::spatial::PathologyGraph;
use crate::util;

const LAMBDA_ITERS: usize = 50;
const LAMBDA_SEED: u64 = 0x1a4b;

/// Adjacency and features in the form the layers consume.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInput {
    pub n: usize,
    /// Undirected edges `(u, v, weight)`.
    pub edges: Vec<(usize, usize, f64)>,
    /// Per node: `(neighbor, edge index)`.
    pub nbrs: Vec<Vec<(usize, usize)>>,
    /// Sum of incident edge weights.
    pub deg_w: Vec<f64>,
    pub lambda_max: f64,
    /// Raw node features, `n × d`.
    pub x: Array2<f64>,
    pub label: usize,
}

impl GraphInput {
    pub fn new(n: usize, edges: Vec<(usize, usize, f64)>, x: Array2<f64>, label: usize) -> Result<Self, GnnError> {
        if x.nrows() != n {
            return Err(GnnError::DimensionMismatch { expected: n, found: x.nrows() });
        }
        let mut nbrs = vec![Vec::new(); n];
        let mut deg_w = vec![0.0; n];
        for (i, &(u, v, w)) in edges.iter().enumerate() {
            if u >= n || v >= n || u == v || !(w > 0.0 && w.is_finite()) {
                return Err(GnnError::BadGraph(format!("edge {i} ({u}, {v}, {w})")));
            }
            nbrs[u].push((v, i));
            nbrs[v].push((u, i));
            deg_w[u] += w;
            deg_w[v] += w;
        }
        let mut g = Self { n, edges, nbrs, deg_w, lambda_max: 2.0, x, label };
        g.lambda_max = g.estimate_lambda_max();
        Ok(g)
    }

    /// Node features from graph statistics; the label is the slide diagnosis.
    pub fn from_graph(g: &PathologyGraph) -> Self {
        let f = node_features(g);
        let mut x = Array2::zeros((g.n_nodes(), NODE_FEATURE_DIM));
        for i in 0..g.n_nodes() {
            for (j, v) in f.row(i).iter().enumerate() {
                x[[i, j]] = *v;
            }
        }
        let edges = g.edges.iter().map(|e| (e.u, e.v, e.weight)).collect();
        Self::new(g.n_nodes(), edges, x, g.diagnosis.class_index()).expect("pathology graphs are well formed")
    }

    pub fn diagnosis(&self) -> Diagnosis {
        Diagnosis::from_class_index(self.label)
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Symmetric normalized edge coefficient `w / sqrt(d_u d_v)`.
    pub(crate) fn sym_coef(&self, e: usize) -> f64 {
        let (u, v, w) = self.edges[e];
        w / (self.deg_w[u] * self.deg_w[v]).sqrt()
    }

    /// `L x` for the normalized Laplacian; isolated nodes have zero rows.
    fn laplacian_apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = (0..self.n).map(|v| if self.nbrs[v].is_empty() { 0.0 } else { x[v] }).collect();
        for (e, &(u, v, _)) in self.edges.iter().enumerate() {
            let c = self.sym_coef(e);
            out[u] -= c * x[v];
            out[v] -= c * x[u];
        }
        out
    }

    /// Power iteration on the normalized Laplacian, 2.0 when it has no edges
    /// or the estimate is unusable.
    fn estimate_lambda_max(&self) -> f64 {
        use rand::Rng as _;
        if self.edges.is_empty() {
            return 2.0;
        }
        let mut rng = util::rng(LAMBDA_SEED, self.n as u64);
        let mut x: Vec<f64> = (0..self.n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut lambda = 2.0;
        for _ in 0..LAMBDA_ITERS {
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return 2.0;
            }
            x.iter_mut().for_each(|v| *v /= norm);
            let lx = self.laplacian_apply(&x);
            lambda = x.iter().zip(&lx).map(|(a, b)| a * b).sum();
            x = lx;
        }
        if lambda > 1e-6 && lambda.is_finite() {
            lambda
        } else {
            2.0
        }
    }

    /// Copy with nodes reordered so new node `i` is old node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut inv = vec![0; self.n];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        let mut x = Array2::zeros(self.x.raw_dim());
        for (i, &p) in perm.iter().enumerate() {
            x.row_mut(i).assign(&self.x.row(p));
        }
        let edges = self.edges.iter().map(|&(u, v, w)| (inv[u], inv[v], w)).collect();
        let mut g = Self::new(self.n, edges, x, self.label).expect("permutation keeps validity");
        g.lambda_max = self.lambda_max;
        g
    }
}
