//! Forward and reverse passes of the five convolution types.
//!
//! Every layer takes a per-edge multiplier `mask` (all ones for plain
//! inference). It scales the message along that edge in both directions,
//! while degree normalizations keep using the unmasked weights. Reverse
//! passes return the mask gradient alongside parameter gradients.

use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::GraphInput;

const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Gcn,
    Sage,
    Wsage,
    Cheb { k: usize },
    Gat { heads: usize },
}

/// One convolution with its parameter tensors. Biases are `1 × out`.
///
/// Tensor order: gcn `[W, b]`; sage/wsage `[W_self, W_neigh, b]`;
/// cheb `[W_0 .. W_{K-1}, b]`; gat `[W, a_src, a_dst, b]` with the
/// attention vectors stored `heads × (out / heads)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub kind: LayerKind,
    pub params: Vec<Array2<f64>>,
}

#[derive(Debug, Clone)]
pub(crate) enum Cache {
    /// `H W`.
    Gcn(Array2<f64>),
    /// Neighbor aggregate.
    Sage(Array2<f64>),
    /// Chebyshev terms `T_0 .. T_{K-1}` applied to H.
    Cheb(Vec<Array2<f64>>),
    Gat(GatCache),
}

#[derive(Debug, Clone)]
pub(crate) struct GatCache {
    z: Array2<f64>,
    /// Per head, per node: attention over `[self, nbrs..]` before masking.
    alpha: Vec<Vec<Vec<f64>>>,
    /// Matching pre-LeakyReLU scores.
    score: Vec<Vec<Vec<f64>>>,
}

fn bias_row(b: &Array2<f64>) -> ndarray::ArrayView1<'_, f64> {
    b.row(0)
}

fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

fn dot_rows(a: &Array2<f64>, i: usize, b: &Array2<f64>, j: usize) -> f64 {
    a.row(i).dot(&b.row(j))
}

/// `out_v += c * x_u` style sparse propagation: `out = diag ⊙ x + Σ_e coef_e m_e (x_u → v, x_v → u)`.
fn propagate(
    g: &GraphInput,
    x: &Array2<f64>,
    mask: &[f64],
    diag: impl Fn(usize) -> f64,
    coef: impl Fn(usize, usize) -> (f64, f64),
) -> Array2<f64> {
    let mut out = x.clone();
    for v in 0..g.n {
        let d = diag(v);
        out.row_mut(v).mapv_inplace(|a| a * d);
    }
    for (e, &(u, v, _)) in g.edges.iter().enumerate() {
        // (coefficient of x_u in out_v, coefficient of x_v in out_u)
        let (cvu, cuv) = coef(e, u);
        let (cvu, cuv) = (cvu * mask[e], cuv * mask[e]);
        let xu = x.row(u).to_owned();
        let xv = x.row(v).to_owned();
        out.row_mut(v).scaled_add(cvu, &xu);
        out.row_mut(u).scaled_add(cuv, &xv);
    }
    out
}

/// Transpose of [`propagate`] plus the mask gradient
/// `Σ (dout_v·x_u c_vu + dout_u·x_v c_uv)` per edge.
fn propagate_back(
    g: &GraphInput,
    x: &Array2<f64>,
    dout: &Array2<f64>,
    mask: &[f64],
    diag: impl Fn(usize) -> f64,
    coef: impl Fn(usize, usize) -> (f64, f64),
    dmask: &mut [f64],
) -> Array2<f64> {
    let mut dx = dout.clone();
    for v in 0..g.n {
        let d = diag(v);
        dx.row_mut(v).mapv_inplace(|a| a * d);
    }
    for (e, &(u, v, _)) in g.edges.iter().enumerate() {
        let (cvu, cuv) = coef(e, u);
        let dv = dout.row(v).to_owned();
        let du = dout.row(u).to_owned();
        dx.row_mut(u).scaled_add(cvu * mask[e], &dv);
        dx.row_mut(v).scaled_add(cuv * mask[e], &du);
        dmask[e] += cvu * dot_rows(dout, v, x, u) + cuv * dot_rows(dout, u, x, v);
    }
    dx
}

impl ConvLayer {
    pub fn out_dim(&self) -> usize {
        self.params.last().map_or(0, |b| b.ncols())
    }

    pub fn in_dim(&self) -> usize {
        self.params[0].nrows()
    }

    fn sage_coef<'a>(&self, g: &'a GraphInput) -> impl Fn(usize, usize) -> (f64, f64) + 'a {
        let weighted = self.kind == LayerKind::Wsage;
        let nbrs = &g.nbrs;
        let deg_w = &g.deg_w;
        let edges = &g.edges;
        move |e, _| {
            let (u, v, w) = edges[e];
            if weighted {
                (w / deg_w[v], w / deg_w[u])
            } else {
                (1.0 / nbrs[v].len() as f64, 1.0 / nbrs[u].len() as f64)
            }
        }
    }

    fn cheb_scale(g: &GraphInput) -> f64 {
        2.0 / g.lambda_max
    }

    /// Pre-activation output and the cache for the reverse pass.
    pub(crate) fn forward(&self, h: &Array2<f64>, g: &GraphInput, mask: &[f64]) -> (Array2<f64>, Cache) {
        let p = &self.params;
        match self.kind {
            LayerKind::Gcn => {
                let hw = h.dot(&p[0]);
                let mut z = propagate(
                    g,
                    &hw,
                    mask,
                    |v| 1.0 / (1.0 + g.deg_w[v]),
                    |e, _| {
                        let (u, v, w) = g.edges[e];
                        let c = w / ((1.0 + g.deg_w[u]) * (1.0 + g.deg_w[v])).sqrt();
                        (c, c)
                    },
                );
                z += &bias_row(&p[1]);
                (z, Cache::Gcn(hw))
            }
            LayerKind::Sage | LayerKind::Wsage => {
                let agg = propagate(g, h, mask, |_| 0.0, self.sage_coef(g));
                let mut z = h.dot(&p[0]) + agg.dot(&p[1]);
                z += &bias_row(&p[2]);
                (z, Cache::Sage(agg))
            }
            LayerKind::Cheb { k } => {
                let sc = Self::cheb_scale(g);
                let lt = |x: &Array2<f64>| {
                    propagate(
                        g,
                        x,
                        mask,
                        |v| if g.nbrs[v].is_empty() { -1.0 } else { sc - 1.0 },
                        |e, _| {
                            let c = -sc * g.sym_coef(e);
                            (c, c)
                        },
                    )
                };
                let mut t: Vec<Array2<f64>> = vec![h.clone()];
                if k > 1 {
                    t.push(lt(h));
                }
                for i in 2..k {
                    let next = 2.0 * lt(&t[i - 1]) - &t[i - 2];
                    t.push(next);
                }
                let mut z = Array2::zeros((g.n, self.out_dim()));
                for (ti, w) in t.iter().zip(p) {
                    z += &ti.dot(w);
                }
                z += &bias_row(&p[k]);
                (z, Cache::Cheb(t))
            }
            LayerKind::Gat { heads } => {
                let z = h.dot(&p[0]);
                let dh = z.ncols() / heads;
                let mut out = Array2::zeros(z.raw_dim());
                let mut alpha = Vec::with_capacity(heads);
                let mut score = Vec::with_capacity(heads);
                for k in 0..heads {
                    let zk = z.slice(s![.., k * dh..(k + 1) * dh]);
                    let src: Vec<f64> = (0..g.n).map(|v| zk.row(v).dot(&p[1].row(k))).collect();
                    let dst: Vec<f64> = (0..g.n).map(|v| zk.row(v).dot(&p[2].row(k))).collect();
                    let mut ak = Vec::with_capacity(g.n);
                    let mut sk = Vec::with_capacity(g.n);
                    for v in 0..g.n {
                        let cand = std::iter::once(v).chain(g.nbrs[v].iter().map(|&(u, _)| u));
                        let sc: Vec<f64> = cand.map(|u| dst[v] + src[u]).collect();
                        let e: Vec<f64> = sc.iter().map(|&x| leaky(x)).collect();
                        let mx = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        let ex: Vec<f64> = e.iter().map(|x| (x - mx).exp()).collect();
                        let tot: f64 = ex.iter().sum();
                        let a: Vec<f64> = ex.iter().map(|x| x / tot).collect();
                        let mut row = zk.row(v).to_owned() * a[0];
                        for (j, &(u, ei)) in g.nbrs[v].iter().enumerate() {
                            row.scaled_add(a[j + 1] * mask[ei], &zk.row(u));
                        }
                        out.slice_mut(s![v, k * dh..(k + 1) * dh]).assign(&row);
                        ak.push(a);
                        sk.push(sc);
                    }
                    alpha.push(ak);
                    score.push(sk);
                }
                out += &bias_row(&p[3]);
                (out, Cache::Gat(GatCache { z, alpha, score }))
            }
        }
    }

    /// Returns `(dH, parameter grads, )` and accumulates into `dmask`.
    pub(crate) fn backward(
        &self,
        h: &Array2<f64>,
        g: &GraphInput,
        mask: &[f64],
        cache: &Cache,
        dz: &Array2<f64>,
        dmask: &mut [f64],
    ) -> (Array2<f64>, Vec<Array2<f64>>) {
        let p = &self.params;
        let db = dz.sum_axis(Axis(0)).insert_axis(Axis(0));
        match (self.kind, cache) {
            (LayerKind::Gcn, Cache::Gcn(hw)) => {
                let dhw = propagate_back(
                    g,
                    hw,
                    dz,
                    mask,
                    |v| 1.0 / (1.0 + g.deg_w[v]),
                    |e, _| {
                        let (u, v, w) = g.edges[e];
                        let c = w / ((1.0 + g.deg_w[u]) * (1.0 + g.deg_w[v])).sqrt();
                        (c, c)
                    },
                    dmask,
                );
                let dw = h.t().dot(&dhw);
                (dhw.dot(&p[0].t()), vec![dw, db])
            }
            (LayerKind::Sage | LayerKind::Wsage, Cache::Sage(agg)) => {
                let dws = h.t().dot(dz);
                let dwn = agg.t().dot(dz);
                let dagg = dz.dot(&p[1].t());
                let mut dh = propagate_back(g, h, &dagg, mask, |_| 0.0, self.sage_coef(g), dmask);
                dh += &dz.dot(&p[0].t());
                (dh, vec![dws, dwn, db])
            }
            (LayerKind::Cheb { k }, Cache::Cheb(t)) => {
                let sc = Self::cheb_scale(g);
                let diag = |v: usize| if g.nbrs[v].is_empty() { -1.0 } else { sc - 1.0 };
                let coef = |e: usize, _| {
                    let c = -sc * g.sym_coef(e);
                    (c, c)
                };
                let mut grads: Vec<Array2<f64>> = t.iter().map(|ti| ti.t().dot(dz)).collect();
                let mut dt: Vec<Array2<f64>> = p[..k].iter().map(|w| dz.dot(&w.t())).collect();
                for i in (2..k).rev() {
                    let di = dt[i].clone();
                    let mut scratch = vec![0.0; dmask.len()];
                    let back = propagate_back(g, &t[i - 1], &di, mask, diag, coef, &mut scratch);
                    for (a, b) in dmask.iter_mut().zip(&scratch) {
                        *a += 2.0 * b;
                    }
                    dt[i - 1] = &dt[i - 1] + &(2.0 * back);
                    dt[i - 2] = &dt[i - 2] - &di;
                }
                if k > 1 {
                    let back = propagate_back(g, &t[0], &dt[1], mask, diag, coef, dmask);
                    dt[0] = &dt[0] + &back;
                }
                grads.push(db);
                (dt.swap_remove(0), grads)
            }
            (LayerKind::Gat { heads }, Cache::Gat(c)) => {
                let dhd = c.z.ncols() / heads;
                let mut dzz = Array2::zeros(c.z.raw_dim());
                let mut da_src = Array2::zeros(p[1].raw_dim());
                let mut da_dst = Array2::zeros(p[2].raw_dim());
                for k in 0..heads {
                    let cols = k * dhd..(k + 1) * dhd;
                    let zk = c.z.slice(s![.., cols.clone()]);
                    let mut dsrc = vec![0.0; g.n];
                    let mut ddst = vec![0.0; g.n];
                    for v in 0..g.n {
                        let dout = dz.slice(s![v, cols.clone()]);
                        let a = &c.alpha[k][v];
                        let sc = &c.score[k][v];
                        let deg = g.nbrs[v].len();
                        let mut dalpha = vec![0.0; deg + 1];
                        // self term
                        dalpha[0] = dout.dot(&zk.row(v));
                        dzz.slice_mut(s![v, cols.clone()]).scaled_add(a[0], &dout);
                        for (j, &(u, ei)) in g.nbrs[v].iter().enumerate() {
                            let dam = dout.dot(&zk.row(u));
                            dmask[ei] += a[j + 1] * dam;
                            dalpha[j + 1] = mask[ei] * dam;
                            dzz.slice_mut(s![u, cols.clone()]).scaled_add(a[j + 1] * mask[ei], &dout);
                        }
                        let inner: f64 = a.iter().zip(&dalpha).map(|(x, y)| x * y).sum();
                        for j in 0..=deg {
                            let de = a[j] * (dalpha[j] - inner);
                            let ds = de * if sc[j] > 0.0 { 1.0 } else { LEAKY_SLOPE };
                            ddst[v] += ds;
                            let u = if j == 0 { v } else { g.nbrs[v][j - 1].0 };
                            dsrc[u] += ds;
                        }
                    }
                    for v in 0..g.n {
                        let zv = zk.row(v).to_owned();
                        da_src.row_mut(k).scaled_add(dsrc[v], &zv);
                        da_dst.row_mut(k).scaled_add(ddst[v], &zv);
                        let mut row = dzz.slice_mut(s![v, cols.clone()]);
                        row.scaled_add(dsrc[v], &p[1].row(k));
                        row.scaled_add(ddst[v], &p[2].row(k));
                    }
                }
                let dw = h.t().dot(&dzz);
                (dzz.dot(&p[0].t()), vec![dw, da_src, da_dst, db])
            }
            _ => unreachable!("cache does not match layer kind"),
        }
    }

    /// Attention rows `[self, nbrs..]` per head for an unmasked pass.
    pub fn gat_attention(&self, h: &Array2<f64>, g: &GraphInput) -> Option<Vec<Vec<Vec<f64>>>> {
        if !matches!(self.kind, LayerKind::Gat { .. }) {
            return None;
        }
        let ones = vec![1.0; g.n_edges()];
        match self.forward(h, g, &ones).1 {
            Cache::Gat(c) => Some(c.alpha),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn graph(n: usize, edges: &[(usize, usize, f64)], x: Array2<f64>) -> GraphInput {
        GraphInput::new(n, edges.to_vec(), x, 0).unwrap()
    }

    fn apply(l: &ConvLayer, g: &GraphInput) -> Array2<f64> {
        l.forward(&g.x, g, &vec![1.0; g.n_edges()]).0
    }

    fn rand_mat(r: usize, c: usize, seed: u64) -> Array2<f64> {
        use rand::Rng as _;
        let mut rng = crate::util::rng(seed, 0);
        Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn gcn_single_node_identity() {
        let x = array![[0.3, -1.2, 4.0]];
        let l = ConvLayer { kind: LayerKind::Gcn, params: vec![Array2::eye(3), Array2::zeros((1, 3))] };
        assert_eq!(apply(&l, &graph(1, &[], x.clone())), x);
    }

    #[test]
    fn gcn_isolated_nodes_do_not_mix() {
        let x = rand_mat(2, 3, 1);
        let w = rand_mat(3, 2, 2);
        let l = ConvLayer { kind: LayerKind::Gcn, params: vec![w.clone(), Array2::zeros((1, 2))] };
        assert_eq!(apply(&l, &graph(2, &[], x.clone())), x.dot(&w));
    }

    #[test]
    fn sage_star_aggregates_leaf_feature() {
        let leaf = [0.5, -2.0];
        let x = array![[9.0, 9.0], [leaf[0], leaf[1]], [leaf[0], leaf[1]], [leaf[0], leaf[1]]];
        let edges = [(0, 1, 0.2), (0, 2, 0.7), (0, 3, 1.3)];
        let g = graph(4, &edges, x.clone());
        for kind in [LayerKind::Sage, LayerKind::Wsage] {
            let l = ConvLayer { kind, params: vec![Array2::zeros((2, 2)), Array2::eye(2), Array2::zeros((1, 2))] };
            let out = apply(&l, &g);
            assert!((out[[0, 0]] - leaf[0]).abs() < 1e-15 && (out[[0, 1]] - leaf[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn wsage_equal_weights_is_sage() {
        let x = rand_mat(5, 3, 3);
        let edges = [(0, 1, 0.5), (1, 2, 0.5), (2, 3, 0.5), (3, 0, 0.5), (0, 2, 0.5)];
        let g = graph(5, &edges, x);
        let params = vec![rand_mat(3, 4, 4), rand_mat(3, 4, 5), rand_mat(1, 4, 6)];
        let a = apply(&ConvLayer { kind: LayerKind::Sage, params: params.clone() }, &g);
        let b = apply(&ConvLayer { kind: LayerKind::Wsage, params }, &g);
        assert_eq!(a, b);
    }

    #[test]
    fn sage_isolated_node_uses_self_only() {
        let x = rand_mat(1, 3, 7);
        let params = vec![rand_mat(3, 2, 8), rand_mat(3, 2, 9), rand_mat(1, 2, 10)];
        let out = apply(&ConvLayer { kind: LayerKind::Sage, params: params.clone() }, &graph(1, &[], x.clone()));
        assert_eq!(out, x.dot(&params[0]) + params[2].row(0));
    }

    #[test]
    fn cheb_k1_has_no_mixing() {
        let x = rand_mat(3, 2, 11);
        let w0 = rand_mat(2, 2, 12);
        let g = graph(3, &[(0, 1, 1.0), (1, 2, 0.3)], x.clone());
        let l = ConvLayer { kind: LayerKind::Cheb { k: 1 }, params: vec![w0.clone(), Array2::zeros((1, 2))] };
        assert_eq!(apply(&l, &g), x.dot(&w0));
    }

    #[test]
    fn cheb_edgeless_second_term_is_negated() {
        let x = rand_mat(3, 2, 13);
        let w1 = rand_mat(2, 2, 14);
        let g = graph(3, &[], x.clone());
        assert_eq!(g.lambda_max, 2.0);
        let l = ConvLayer {
            kind: LayerKind::Cheb { k: 2 },
            params: vec![Array2::zeros((2, 2)), w1.clone(), Array2::zeros((1, 2))],
        };
        assert_eq!(apply(&l, &g), -x.dot(&w1));
    }

    #[test]
    fn lambda_max_of_single_edge_is_two() {
        let g = graph(2, &[(0, 1, 0.4)], Array2::zeros((2, 1)));
        assert!((g.lambda_max - 2.0).abs() < 1e-9);
    }

    #[test]
    fn gat_uniform_attention_on_identical_features() {
        let x = array![[1.0, 2.0], [1.0, 2.0], [1.0, 2.0], [1.0, 2.0]];
        let g = graph(4, &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)], x);
        let l = ConvLayer {
            kind: LayerKind::Gat { heads: 2 },
            params: vec![rand_mat(2, 4, 15), rand_mat(2, 2, 16), rand_mat(2, 2, 17), Array2::zeros((1, 4))],
        };
        let att = l.gat_attention(&g.x, &g).unwrap();
        for head in &att {
            for a in &head[0] {
                assert!((a - 0.25).abs() < 1e-12);
            }
        }
        // Equals the mean of the transformed neighbors (and self).
        let out = apply(&l, &g);
        let z = g.x.dot(&l.params[0]);
        for j in 0..4 {
            assert!((out[[0, j]] - z[[0, j]]).abs() < 1e-12);
        }
    }

    #[test]
    fn gat_single_node_attends_to_itself() {
        let g = graph(1, &[], rand_mat(1, 3, 18));
        let l = ConvLayer {
            kind: LayerKind::Gat { heads: 1 },
            params: vec![rand_mat(3, 2, 19), rand_mat(1, 2, 20), rand_mat(1, 2, 21), Array2::zeros((1, 2))],
        };
        assert_eq!(l.gat_attention(&g.x, &g).unwrap()[0][0], vec![1.0]);
    }

    #[test]
    fn gat_attention_rows_sum_to_one() {
        let edges = [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0), (1, 3, 1.0), (4, 0, 1.0)];
        let g = graph(5, &edges, rand_mat(5, 3, 22));
        let l = ConvLayer {
            kind: LayerKind::Gat { heads: 3 },
            params: vec![rand_mat(3, 6, 23), rand_mat(3, 2, 24), rand_mat(3, 2, 25), Array2::zeros((1, 6))],
        };
        for head in l.gat_attention(&g.x, &g).unwrap() {
            for row in head {
                assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn layers_are_permutation_equivariant() {
        let edges = [(0, 1, 0.3), (1, 2, 0.9), (2, 3, 0.4), (3, 4, 0.5), (4, 0, 0.2), (1, 4, 0.8), (2, 5, 0.6)];
        let g = graph(6, &edges, rand_mat(6, 3, 26));
        let perm = [3, 5, 0, 1, 4, 2];
        let gp = g.permuted(&perm);
        let layers = [
            ConvLayer { kind: LayerKind::Gcn, params: vec![rand_mat(3, 4, 27), rand_mat(1, 4, 28)] },
            ConvLayer {
                kind: LayerKind::Wsage,
                params: vec![rand_mat(3, 4, 29), rand_mat(3, 4, 30), rand_mat(1, 4, 31)],
            },
            ConvLayer {
                kind: LayerKind::Cheb { k: 3 },
                params: vec![rand_mat(3, 4, 32), rand_mat(3, 4, 33), rand_mat(3, 4, 34), rand_mat(1, 4, 35)],
            },
            ConvLayer {
                kind: LayerKind::Gat { heads: 2 },
                params: vec![rand_mat(3, 4, 36), rand_mat(2, 2, 37), rand_mat(2, 2, 38), rand_mat(1, 4, 39)],
            },
        ];
        for l in &layers {
            let a = apply(l, &g);
            let b = apply(l, &gp);
            for (i, &p) in perm.iter().enumerate() {
                for j in 0..4 {
                    assert!((b[[i, j]] - a[[p, j]]).abs() <= 1e-12, "{:?}", l.kind);
                }
            }
        }
    }
}
