use ndarray::{concatenate, Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::objective::{masked_objective, sigmoid, Regularizers};
use super::{ExplainError, ExplanationResult, Method};
use crate::gnn::{GnnModel, GraphInput, VecAdam, EMBEDDING_DIM};
use crate::util;

const INPUT_DIM: usize = 2 * EMBEDDING_DIM;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PgxConfig {
    pub epochs: usize,
    pub hidden: usize,
    pub lambda_size: f64,
    pub lambda_ent: f64,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for PgxConfig {
    fn default() -> Self {
        Self { epochs: 30, hidden: 32, lambda_size: 0.005, lambda_ent: 1.0, learning_rate: 0.003, seed: 0 }
    }
}

/// Edge scorer: `logit(u, v) = ½ (f_c([e_u, e_v]) + f_c([e_v, e_u]))` with
/// `f_c(x) = relu(x W1 + b1) · W2[:, c] + b2[c]` over standardized
/// embeddings, `c` the class being explained. The hidden layer is shared;
/// each class has its own output unit, since the edges that support one
/// class are not those that support the other.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgExplainer {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub embedding_mean: Vec<f64>,
    pub embedding_std: Vec<f64>,
    pub config: PgxConfig,
}

#[derive(Serialize, Deserialize)]
struct Stored {
    format: String,
    version: u32,
    explainer: PgExplainer,
}

const FORMAT: &str = "taugraph-pgx";

struct EdgeBatch {
    /// `[e_u, e_v]` rows followed by `[e_v, e_u]` rows.
    x: Array2<f64>,
}

impl PgExplainer {
    /// All-zero scorer: every edge gets logit 0.
    pub fn zeros(hidden: usize) -> Self {
        Self {
            w1: Array2::zeros((INPUT_DIM, hidden)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((hidden, 2)),
            b2: Array1::zeros(2),
            embedding_mean: vec![0.0; EMBEDDING_DIM],
            embedding_std: vec![1.0; EMBEDDING_DIM],
            config: PgxConfig { hidden, ..Default::default() },
        }
    }

    fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    fn flatten(&self) -> Vec<f64> {
        let mut p: Vec<f64> = self.w1.iter().copied().collect();
        p.extend(self.b1.iter());
        p.extend(self.w2.iter());
        p.extend(self.b2.iter());
        p
    }

    fn unflatten(&mut self, p: &[f64]) {
        let (a, rest) = p.split_at(self.w1.len());
        let (b, rest) = rest.split_at(self.b1.len());
        let (c, d) = rest.split_at(self.w2.len());
        self.w1.iter_mut().zip(a).for_each(|(x, y)| *x = *y);
        self.b1.iter_mut().zip(b).for_each(|(x, y)| *x = *y);
        self.w2.iter_mut().zip(c).for_each(|(x, y)| *x = *y);
        self.b2.iter_mut().zip(d).for_each(|(x, y)| *x = *y);
    }

    fn batch(&self, g: &GraphInput, emb: &Array2<f64>) -> EdgeBatch {
        let mut z = emb.clone();
        for mut row in z.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.embedding_mean[j]) / self.embedding_std[j];
            }
        }
        let e = g.n_edges();
        let mut x = Array2::zeros((2 * e, INPUT_DIM));
        for (i, &(u, v, _)) in g.edges.iter().enumerate() {
            let fwd = concatenate![Axis(0), z.row(u), z.row(v)];
            let rev = concatenate![Axis(0), z.row(v), z.row(u)];
            x.row_mut(i).assign(&fwd);
            x.row_mut(e + i).assign(&rev);
        }
        EdgeBatch { x }
    }

    fn logits_of(&self, b: &EdgeBatch, target: usize) -> (Vec<f64>, Array2<f64>) {
        let hidden = (b.x.dot(&self.w1) + &self.b1).mapv(|v| v.max(0.0));
        let out = hidden.dot(&self.w2.column(target)) + self.b2[target];
        let e = b.x.nrows() / 2;
        let s = (0..e).map(|i| 0.5 * (out[i] + out[e + i])).collect();
        (s, hidden)
    }

    /// Parameter gradient (flattened like [`Self::flatten`]) given `dL/ds`.
    fn backward(&self, b: &EdgeBatch, hidden: &Array2<f64>, ds: &[f64], target: usize) -> Vec<f64> {
        let e = ds.len();
        let dout = Array1::from_shape_fn(2 * e, |i| 0.5 * ds[i % e.max(1)]);
        let mut dw2 = Array2::zeros(self.w2.raw_dim());
        dw2.column_mut(target).assign(&hidden.t().dot(&dout));
        let mut db2 = Array1::zeros(2);
        db2[target] = dout.sum();
        let mut dh = dout.insert_axis(Axis(1)).dot(&self.w2.column(target).insert_axis(Axis(0)));
        dh.zip_mut_with(hidden, |d, &h| {
            if h <= 0.0 {
                *d = 0.0
            }
        });
        let dw1 = b.x.t().dot(&dh);
        let db1 = dh.sum_axis(Axis(0));
        let mut p: Vec<f64> = dw1.iter().copied().collect();
        p.extend(db1.iter());
        p.extend(dw2.iter());
        p.extend(db2.iter());
        p
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string_pretty(&Stored { format: FORMAT.into(), version: 1, explainer: self.clone() })
            .expect("explainer serializes")
    }

    pub fn from_text(s: &str) -> Result<Self, ExplainError> {
        let st: Stored = serde_json::from_str(s).map_err(|e| ExplainError::BadModel(e.to_string()))?;
        if st.format != FORMAT || st.version != 1 {
            return Err(ExplainError::BadModel(format!("{} v{}", st.format, st.version)));
        }
        let x = st.explainer;
        if x.w1.nrows() != INPUT_DIM
            || x.b1.len() != x.w1.ncols()
            || x.w2.dim() != (x.w1.ncols(), 2)
            || x.b2.len() != 2
            || x.embedding_mean.len() != EMBEDDING_DIM
            || x.embedding_std.len() != EMBEDDING_DIM
        {
            return Err(ExplainError::BadModel("tensor shapes".into()));
        }
        Ok(x)
    }
}

fn embedding_moments(embs: &[Array2<f64>]) -> (Vec<f64>, Vec<f64>) {
    let mut sum = [0.0; EMBEDDING_DIM];
    let mut sq = [0.0; EMBEDDING_DIM];
    let mut n = 0.0;
    for e in embs {
        for row in e.rows() {
            for (j, v) in row.iter().enumerate() {
                sum[j] += v;
                sq[j] += v * v;
            }
            n += 1.0;
        }
    }
    let n: f64 = f64::max(n, 1.0);
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std = sq
        .iter()
        .zip(&mean)
        .map(|(q, m)| {
            let sd = (q / n - m * m).max(0.0).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, std)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PgxTrainReport {
    /// Mean objective over the training graphs before training and after each epoch.
    pub loss_history: Vec<f64>,
}

/// Fits one scorer across all graphs, each explained against its label.
pub fn pgx_train(
    model: &GnnModel,
    graphs: &[&GraphInput],
    cfg: &PgxConfig,
) -> Result<(PgExplainer, PgxTrainReport), ExplainError> {
    if cfg.hidden == 0 {
        return Err(ExplainError::BadConfig("hidden width must be positive".into()));
    }
    let reg = Regularizers { lambda_size: cfg.lambda_size, lambda_ent: cfg.lambda_ent };
    let embs: Vec<Array2<f64>> = graphs.iter().map(|g| model.embed(g)).collect::<Result<_, _>>()?;
    let mut rng = util::rng(cfg.seed, 0x9e7);
    let mut x = PgExplainer::zeros(cfg.hidden);
    x.config = cfg.clone();
    let lim = (6.0 / (INPUT_DIM + cfg.hidden) as f64).sqrt();
    x.w1.mapv_inplace(|_| rng.random_range(-lim..lim));
    // Output weights start at zero so every mask starts at 0.5, the same
    // point the per-instance explainer starts from.
    (x.embedding_mean, x.embedding_std) = embedding_moments(&embs);
    let batches: Vec<EdgeBatch> = graphs.iter().zip(&embs).map(|(g, e)| x.batch(g, e)).collect();

    let mean_loss = |x: &PgExplainer| -> Result<f64, ExplainError> {
        let mut total = 0.0;
        for (g, b) in graphs.iter().zip(&batches) {
            let (s, _) = x.logits_of(b, g.label);
            total += masked_objective(model, g, g.label, &s, reg)?.0;
        }
        Ok(total / graphs.len().max(1) as f64)
    };

    let mut loss_history = vec![mean_loss(&x)?];
    let mut opt = VecAdam::new(x.n_params());
    let mut params = x.flatten();
    let mut order: Vec<usize> = (0..graphs.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let target = graphs[i].label;
            let (s, hidden) = x.logits_of(&batches[i], target);
            let (_, ds) = masked_objective(model, graphs[i], target, &s, reg)?;
            let grad = x.backward(&batches[i], &hidden, &ds, target);
            opt.step(&mut params, &grad, cfg.learning_rate);
            x.unflatten(&params);
        }
        loss_history.push(mean_loss(&x)?);
    }
    Ok((x, PgxTrainReport { loss_history }))
}

/// Deterministic mask for one graph; no per-instance optimization.
pub fn pgx_apply(
    explainer: &PgExplainer,
    model: &GnnModel,
    g: &GraphInput,
    target: usize,
) -> Result<ExplanationResult, ExplainError> {
    if target > 1 {
        return Err(ExplainError::BadConfig(format!("target class {target}")));
    }
    let reg = Regularizers { lambda_size: explainer.config.lambda_size, lambda_ent: explainer.config.lambda_ent };
    let emb = model.embed(g)?;
    let (s, _) = explainer.logits_of(&explainer.batch(g, &emb), target);
    let initial = masked_objective(model, g, target, &vec![0.0; s.len()], reg)?.0;
    let fin = masked_objective(model, g, target, &s, reg)?.0;
    let edge_importance = s.iter().map(|&v| sigmoid(v)).collect();
    Ok(ExplanationResult::from_edges(g, Method::Pgx, target, edge_importance, vec![initial, fin]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_matches_finite_differences() {
        let edges = vec![(0, 1, 0.5), (1, 2, 1.0), (0, 2, 0.3)];
        let g = GraphInput::new(3, edges, Array2::zeros((3, 10)), 0).unwrap();
        let emb = Array2::from_shape_fn((3, EMBEDDING_DIM), |(i, j)| ((i * 5 + j) % 7) as f64 * 0.3 - 1.0);
        let mut x = PgExplainer::zeros(4);
        let mut rng = util::rng(1, 0);
        x.w1.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        x.b1.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        x.w2.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        x.b2.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        let b = x.batch(&g, &emb);
        // Scalar probe: L = Σ c_e s_e.
        let c = [0.7, -1.3, 0.4];
        let probe = |x: &PgExplainer| x.logits_of(&b, 1).0.iter().zip(&c).map(|(s, c)| s * c).sum::<f64>();
        let (_, hidden) = x.logits_of(&b, 1);
        let grad = x.backward(&b, &hidden, &c, 1);
        let p = x.flatten();
        for k in 0..p.len() {
            let h = 1e-6;
            let mut q = p.clone();
            q[k] += h;
            let mut up = x.clone();
            up.unflatten(&q);
            q[k] -= 2.0 * h;
            let mut dn = x.clone();
            dn.unflatten(&q);
            let num = (probe(&up) - probe(&dn)) / (2.0 * h);
            assert!((num - grad[k]).abs() < 1e-6, "{k}: {num} vs {}", grad[k]);
        }
    }

    #[test]
    fn logits_are_symmetric_in_endpoints() {
        let g = GraphInput::new(2, vec![(0, 1, 1.0)], Array2::zeros((2, 10)), 0).unwrap();
        let flipped = GraphInput::new(2, vec![(1, 0, 1.0)], Array2::zeros((2, 10)), 0).unwrap();
        let emb = Array2::from_shape_fn((2, EMBEDDING_DIM), |(i, j)| (i + j) as f64 * 0.1);
        let mut x = PgExplainer::zeros(3);
        x.w1.mapv_inplace(|_| 0.2);
        x.w1[[0, 0]] = -1.0;
        x.w2.fill(0.5);
        let a = x.logits_of(&x.batch(&g, &emb), 0).0;
        let b = x.logits_of(&x.batch(&flipped, &emb), 0).0;
        assert!((a[0] - b[0]).abs() < 1e-15);
    }
}
