use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::data::Layer;
use crate::spatial::PathologyGraph;

/// Columns of the node feature matrix: four centralities then a 6-way
/// one-hot layer code.
pub const NODE_FEATURE_DIM: usize = 10;

pub const NODE_FEATURE_NAMES: [&str; NODE_FEATURE_DIM] = [
    "degree",
    "clustering_coef",
    "betweenness",
    "closeness",
    "layer_1",
    "layer_2",
    "layer_3",
    "layer_4",
    "layer_5",
    "layer_6",
];

#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatureMatrix {
    pub degree: Vec<usize>,
    pub clustering_coef: Vec<f64>,
    pub betweenness: Vec<f64>,
    pub closeness: Vec<f64>,
    pub layer: Vec<Layer>,
}

impl NodeFeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.degree.len()
    }

    pub fn row(&self, i: usize) -> [f64; NODE_FEATURE_DIM] {
        let mut r = [0.0; NODE_FEATURE_DIM];
        r[0] = self.degree[i] as f64;
        r[1] = self.clustering_coef[i];
        r[2] = self.betweenness[i];
        r[3] = self.closeness[i];
        if let Some(k) = self.layer[i].index() {
            r[4 + k] = 1.0;
        }
        r
    }

    pub fn rows(&self) -> Vec<[f64; NODE_FEATURE_DIM]> {
        (0..self.n_rows()).map(|i| self.row(i)).collect()
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    dist: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on distance, ties by node index.
        other.dist.total_cmp(&self.dist).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Relative tolerance for treating two path costs as equal.
const TIE_RTOL: f64 = 1e-12;

fn same_cost(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_RTOL * a.abs().max(b.abs())
}

struct ShortestPaths {
    dist: Vec<f64>,
    sigma: Vec<f64>,
    preds: Vec<Vec<usize>>,
    /// Settled nodes in non-decreasing distance order.
    order: Vec<usize>,
}

fn dijkstra(adj: &[Vec<(usize, f64)>], s: usize) -> ShortestPaths {
    let n = adj.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut sigma = vec![0.0; n];
    let mut preds = vec![Vec::new(); n];
    let mut settled = vec![false; n];
    let mut order = Vec::new();
    let mut heap = BinaryHeap::new();
    dist[s] = 0.0;
    sigma[s] = 1.0;
    heap.push(Entry { dist: 0.0, node: s });
    while let Some(Entry { dist: d, node: v }) = heap.pop() {
        if settled[v] || d > dist[v] {
            continue;
        }
        settled[v] = true;
        order.push(v);
        for &(w, len) in &adj[v] {
            if settled[w] {
                continue;
            }
            let nd = d + len;
            if dist[w].is_finite() && same_cost(nd, dist[w]) {
                sigma[w] += sigma[v];
                preds[w].push(v);
            } else if nd < dist[w] {
                dist[w] = nd;
                sigma[w] = sigma[v];
                preds[w].clear();
                preds[w].push(v);
                heap.push(Entry { dist: nd, node: w });
            }
        }
    }
    ShortestPaths { dist, sigma, preds, order }
}

fn weighted_adjacency(g: &PathologyGraph) -> Vec<Vec<(usize, f64)>> {
    let mut adj = vec![Vec::new(); g.n_nodes()];
    for e in &g.edges {
        adj[e.u].push((e.v, e.length_um));
        adj[e.v].push((e.u, e.length_um));
    }
    adj
}

/// Brandes betweenness with edge length as path cost, normalized by the
/// number of unordered pairs excluding the node, `(n-1)(n-2)/2`.
pub fn betweenness(g: &PathologyGraph) -> Vec<f64> {
    let adj = weighted_adjacency(g);
    let n = adj.len();
    let mut bc = vec![0.0; n];
    let mut delta = vec![0.0; n];
    for s in 0..n {
        let sp = dijkstra(&adj, s);
        delta.iter_mut().for_each(|d| *d = 0.0);
        for &w in sp.order.iter().rev() {
            for &v in &sp.preds[w] {
                delta[v] += sp.sigma[v] / sp.sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                bc[w] += delta[w];
            }
        }
    }
    let pairs = if n > 2 { ((n - 1) * (n - 2)) as f64 / 2.0 } else { 0.0 };
    bc.iter().map(|&b| if pairs > 0.0 { b / 2.0 / pairs } else { 0.0 }).collect()
}

/// Closeness within the node's component, scaled by the reachable fraction.
pub fn closeness(g: &PathologyGraph) -> Vec<f64> {
    let adj = weighted_adjacency(g);
    let n = adj.len();
    (0..n)
        .map(|s| {
            let sp = dijkstra(&adj, s);
            let reach = sp.order.len();
            let total: f64 = sp.order.iter().map(|&v| sp.dist[v]).sum();
            if reach <= 1 || n <= 1 || total <= 0.0 {
                0.0
            } else {
                let r = (reach - 1) as f64;
                (r / total) * (r / (n - 1) as f64)
            }
        })
        .collect()
}

/// Local clustering coefficient; 0 for nodes of degree below 2.
pub fn clustering_coefficients(g: &PathologyGraph) -> Vec<f64> {
    let n = g.n_nodes();
    let mut nbrs: Vec<Vec<usize>> = vec![Vec::new(); n];
    for e in &g.edges {
        nbrs[e.u].push(e.v);
        nbrs[e.v].push(e.u);
    }
    for l in &mut nbrs {
        l.sort_unstable();
        l.dedup();
    }
    (0..n)
        .map(|v| {
            let k = nbrs[v].len();
            if k < 2 {
                return 0.0;
            }
            let mut tri = 0usize;
            for (i, &a) in nbrs[v].iter().enumerate() {
                for &b in &nbrs[v][i + 1..] {
                    if nbrs[a].binary_search(&b).is_ok() {
                        tri += 1;
                    }
                }
            }
            tri as f64 / (k * (k - 1) / 2) as f64
        })
        .collect()
}

pub fn node_features(g: &PathologyGraph) -> NodeFeatureMatrix {
    let mut degree = vec![0usize; g.n_nodes()];
    for e in &g.edges {
        degree[e.u] += 1;
        degree[e.v] += 1;
    }
    NodeFeatureMatrix {
        degree,
        clustering_coef: clustering_coefficients(g),
        betweenness: betweenness(g),
        closeness: closeness(g),
        layer: g.nodes.iter().map(|n| n.layer).collect(),
    }
}
