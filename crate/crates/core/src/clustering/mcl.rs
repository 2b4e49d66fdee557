//! Markov Clustering over the weighted adjacency of a pathology graph.
//!
//! MCL flow never crosses connected components, so each component is
//! clustered on its own dense matrix and the results are stitched together.

use crate::spatial::PathologyGraph;
use crate::util::UnionFind;

use super::{relabel_dense, ClusterAssignment, ClusterMethod, ClusteringError};

const PRUNE_BELOW: f64 = 1e-8;
const ATTRACTOR_MIN: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MclParams {
    /// Expansion power, integer ≥ 2.
    pub expansion: u32,
    /// Inflation exponent, > 1.
    pub inflation: f64,
    pub tolerance: f64,
    pub max_iters: usize,
}

impl Default for MclParams {
    fn default() -> Self {
        Self { expansion: 2, inflation: 2.0, tolerance: 1e-6, max_iters: 200 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MclOutcome {
    pub assignment: ClusterAssignment,
    pub converged: bool,
    /// Iterations used by the slowest component.
    pub iterations: usize,
    /// Largest |column sum − 1| seen after any inflation step.
    pub max_stochasticity_error: f64,
}

/// Column-major dense square matrix.
#[derive(Debug, Clone)]
struct Dense {
    n: usize,
    a: Vec<f64>,
}

impl Dense {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[j * self.n + i]
    }

    fn mul(&self, other: &Dense) -> Dense {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for j in 0..n {
            for k in 0..n {
                let b = other.a[j * n + k];
                if b == 0.0 {
                    continue;
                }
                let col = &self.a[k * n..(k + 1) * n];
                let dst = &mut out[j * n..(j + 1) * n];
                for i in 0..n {
                    dst[i] += col[i] * b;
                }
            }
        }
        Dense { n, a: out }
    }

    fn normalize_columns(&mut self) {
        let n = self.n;
        for j in 0..n {
            let col = &mut self.a[j * n..(j + 1) * n];
            let s: f64 = col.iter().sum();
            if s > 0.0 {
                col.iter_mut().for_each(|x| *x /= s);
            }
        }
    }

    fn max_column_error(&self) -> f64 {
        let n = self.n;
        (0..n).map(|j| (self.a[j * n..(j + 1) * n].iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max)
    }
}

struct Component {
    members: Vec<usize>,
    labels: Vec<usize>,
    converged: bool,
    iterations: usize,
    max_err: f64,
}

fn cluster_component(members: &[usize], edges: &[(usize, usize, f64)], p: &MclParams) -> Component {
    let n = members.len();
    let mut m = Dense { n, a: vec![0.0; n * n] };
    let mut loop_w = vec![0.0f64; n];
    for &(u, v, w) in edges {
        m.a[v * n + u] += w;
        m.a[u * n + v] += w;
        loop_w[u] = loop_w[u].max(w);
        loop_w[v] = loop_w[v].max(w);
    }
    for i in 0..n {
        m.a[i * n + i] += if loop_w[i] > 0.0 { loop_w[i] } else { 1.0 };
    }
    m.normalize_columns();
    let mut max_err = m.max_column_error();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < p.max_iters {
        iterations += 1;
        let mut next = m.clone();
        for _ in 1..p.expansion {
            next = next.mul(&m);
        }
        next.a.iter_mut().for_each(|x| *x = x.powf(p.inflation));
        next.normalize_columns();
        next.a.iter_mut().for_each(|x| {
            if *x < PRUNE_BELOW {
                *x = 0.0
            }
        });
        next.normalize_columns();
        max_err = max_err.max(next.max_column_error());
        let change = next.a.iter().zip(&m.a).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        m = next;
        if change < p.tolerance {
            converged = true;
            break;
        }
    }
    Component { members: members.to_vec(), labels: interpret(&m), converged, iterations, max_err }
}

/// Attractors are nodes with mass on their own diagonal. Attractors that
/// exchange mass form one system; every node joins the lowest-indexed
/// system among the attractor rows holding its mass.
fn interpret(m: &Dense) -> Vec<usize> {
    let n = m.n;
    let attractor: Vec<bool> = (0..n).map(|i| m.at(i, i) > ATTRACTOR_MIN).collect();
    let mut uf = UnionFind::new(n);
    for i in (0..n).filter(|&i| attractor[i]) {
        for k in (0..n).filter(|&k| attractor[k] && k != i) {
            if m.at(i, k) > 0.0 || m.at(k, i) > 0.0 {
                uf.union(i, k);
            }
        }
    }
    // System label = smallest attractor index in it.
    let mut system_min = vec![usize::MAX; n];
    for i in (0..n).filter(|&i| attractor[i]) {
        let r = uf.find(i);
        system_min[r] = system_min[r].min(i);
    }
    let raw: Vec<usize> = (0..n)
        .map(|j| {
            (0..n)
                .filter(|&i| attractor[i] && m.at(i, j) > 0.0)
                .map(|i| system_min[uf.find(i)])
                .min()
                // Only reachable before convergence; keep the node alone.
                .unwrap_or(n + j)
        })
        .collect();
    relabel_dense(&raw)
}

/// Markov Clustering with weights from the edge affinities and self-loops
/// equal to each node's strongest incident edge (1 for isolated nodes).
pub fn markov_cluster(g: &PathologyGraph, p: &MclParams) -> Result<MclOutcome, ClusteringError> {
    if p.expansion < 2 {
        return Err(ClusteringError::BadParameter(format!("expansion must be >= 2, got {}", p.expansion)));
    }
    if !(p.inflation > 1.0) || !p.inflation.is_finite() {
        return Err(ClusteringError::BadParameter(format!("inflation must be > 1, got {}", p.inflation)));
    }
    let n = g.n_nodes();
    let comps = super::connected_components(g);
    let k = comps.n_clusters();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut local = vec![0usize; n];
    for (v, &c) in comps.labels.iter().enumerate() {
        local[v] = members[c].len();
        members[c].push(v);
    }
    let mut comp_edges: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); k];
    for e in &g.edges {
        let c = comps.labels[e.u];
        comp_edges[c].push((local[e.u], local[e.v], e.weight));
    }
    let results: Vec<Component> =
        members.iter().zip(&comp_edges).map(|(mem, edges)| cluster_component(mem, edges, p)).collect();

    let mut raw = vec![0usize; n];
    let mut offset = 0;
    let mut converged = true;
    let mut iterations = 0;
    let mut max_err: f64 = 0.0;
    for r in &results {
        for (li, &v) in r.members.iter().enumerate() {
            raw[v] = offset + r.labels[li];
        }
        offset += r.labels.iter().max().map_or(0, |&l| l + 1);
        converged &= r.converged;
        iterations = iterations.max(r.iterations);
        max_err = max_err.max(r.max_err);
    }
    Ok(MclOutcome {
        assignment: ClusterAssignment { labels: relabel_dense(&raw), method: ClusterMethod::Markov(*p) },
        converged,
        iterations,
        max_stochasticity_error: max_err,
    })
}
