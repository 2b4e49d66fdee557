use ndarray::{Array2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::layers::{Cache, ConvLayer, LayerKind};
use super::{GnnError, GraphInput};
use crate::util;

pub const EMBEDDING_DIM: usize = 12;
const CHECKPOINT_FORMAT: &str = "taugraph-gnn";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    Gcn,
    Sage,
    Wsage,
    Cheb { k: usize },
    Gat { heads: usize },
}

impl Arch {
    fn layer_kind(self) -> LayerKind {
        match self {
            Arch::Gcn => LayerKind::Gcn,
            Arch::Sage => LayerKind::Sage,
            Arch::Wsage => LayerKind::Wsage,
            Arch::Cheb { k } => LayerKind::Cheb { k },
            Arch::Gat { heads } => LayerKind::Gat { heads },
        }
    }

    pub fn all_default() -> [Arch; 5] {
        [Arch::Gcn, Arch::Sage, Arch::Wsage, Arch::Cheb { k: 3 }, Arch::Gat { heads: 2 }]
    }
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Arch::Gcn => f.write_str("gcn"),
            Arch::Sage => f.write_str("sage"),
            Arch::Wsage => f.write_str("wsage"),
            Arch::Cheb { k } => write!(f, "cheb{k}"),
            Arch::Gat { heads } => write!(f, "gat{heads}"),
        }
    }
}

impl std::str::FromStr for Arch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let num = |p: &str| -> Result<usize, String> {
            let t = &s[p.len()..];
            if t.is_empty() {
                return Ok(if p == "cheb" { 3 } else { 2 });
            }
            t.parse().map_err(|_| format!("bad architecture `{s}`"))
        };
        match s {
            "gcn" => Ok(Arch::Gcn),
            "sage" => Ok(Arch::Sage),
            "wsage" => Ok(Arch::Wsage),
            _ if s.starts_with("cheb") => Ok(Arch::Cheb { k: num("cheb")? }),
            _ if s.starts_with("gat") => Ok(Arch::Gat { heads: num("gat")? }),
            _ => Err(format!("unknown architecture `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// Every node classified from its own embedding; nodes carry the slide label.
    NodeLevel,
    /// One prediction from the mean embedding.
    GraphMeanPool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GnnConfig {
    pub arch: Arch,
    /// Input dimension first, embedding dimension (12) last.
    pub layer_dims: Vec<usize>,
    pub head: Head,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub kfold_k: usize,
    pub score_lambda: f64,
    pub seed: u64,
}

impl Default for GnnConfig {
    fn default() -> Self {
        Self {
            arch: Arch::Gcn,
            layer_dims: vec![crate::metrics::NODE_FEATURE_DIM, 32, EMBEDDING_DIM],
            head: Head::NodeLevel,
            optimizer: Optimizer::Adam,
            learning_rate: 0.01,
            max_epochs: 60,
            patience: 10,
            kfold_k: 5,
            score_lambda: 0.5,
            seed: 0,
        }
    }
}

impl GnnConfig {
    pub fn validate(&self) -> Result<(), GnnError> {
        let bad = |m: &str| Err(GnnError::BadConfig(m.into()));
        if self.layer_dims.len() < 2 {
            return bad("layer_dims needs an input and an embedding size");
        }
        if *self.layer_dims.last().unwrap() != EMBEDDING_DIM {
            return bad("the last layer dimension must be 12");
        }
        if self.layer_dims.contains(&0) {
            return bad("layer dimensions must be positive");
        }
        match self.arch {
            Arch::Cheb { k } if k < 1 => return bad("cheb K must be >= 1"),
            Arch::Gat { heads } if heads < 1 => return bad("gat heads must be >= 1"),
            Arch::Gat { heads } if self.layer_dims[1..].iter().any(|d| d % heads != 0) => {
                return bad("gat layer dimensions must be divisible by heads")
            }
            _ => {}
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(self.score_lambda >= 0.0) {
            return bad("score_lambda must be >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnnModel {
    pub config: GnnConfig,
    pub layers: Vec<ConvLayer>,
    /// `12 × 2`.
    pub head_w: Array2<f64>,
    /// `1 × 2`.
    pub head_b: Array2<f64>,
    /// Input standardization, applied before the first layer.
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Input to each layer; `inputs[0]` is the standardized feature matrix.
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    caches: Vec<Cache>,
    /// `|V| × 12`, node-aligned.
    pub embeddings: Array2<f64>,
    /// `|V| × 2` for the node-level head, `1 × 2` for pooling.
    pub logits: Array2<f64>,
}

fn glorot(rng: &mut util::Rng, rows: usize, cols: usize) -> Array2<f64> {
    let lim = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-lim..lim))
}

pub fn softmax_row(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Mean cross-entropy of logit rows against one class, and its gradient.
pub fn cross_entropy(logits: &Array2<f64>, target: usize) -> (f64, Array2<f64>) {
    let n = logits.nrows().max(1) as f64;
    let mut loss = 0.0;
    let mut d = Array2::zeros(logits.raw_dim());
    for (i, row) in logits.axis_iter(Axis(0)).enumerate() {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - row[target];
        let p = softmax_row(row.as_slice().expect("contiguous"));
        for (j, pj) in p.iter().enumerate() {
            d[[i, j]] = (pj - if j == target { 1.0 } else { 0.0 }) / n;
        }
    }
    (loss / n, d)
}

impl GnnModel {
    pub fn new(config: &GnnConfig) -> Result<Self, GnnError> {
        config.validate()?;
        let mut rng = util::rng(config.seed, 0x9a1);
        let kind = config.arch.layer_kind();
        let layers = config
            .layer_dims
            .windows(2)
            .map(|w| {
                let (i, o) = (w[0], w[1]);
                let params = match kind {
                    LayerKind::Gcn => vec![glorot(&mut rng, i, o)],
                    LayerKind::Sage | LayerKind::Wsage => vec![glorot(&mut rng, i, o), glorot(&mut rng, i, o)],
                    LayerKind::Cheb { k } => (0..k).map(|_| glorot(&mut rng, i, o)).collect(),
                    LayerKind::Gat { heads } => {
                        let dh = o / heads;
                        vec![glorot(&mut rng, i, o), glorot(&mut rng, heads, dh), glorot(&mut rng, heads, dh)]
                    }
                };
                let mut params = params;
                params.push(Array2::zeros((1, o)));
                ConvLayer { kind, params }
            })
            .collect();
        let d_in = config.layer_dims[0];
        Ok(Self {
            config: config.clone(),
            layers,
            head_w: glorot(&mut rng, EMBEDDING_DIM, 2),
            head_b: Array2::zeros((1, 2)),
            feature_mean: vec![0.0; d_in],
            feature_std: vec![1.0; d_in],
            history: Vec::new(),
        })
    }

    pub fn in_dim(&self) -> usize {
        self.config.layer_dims[0]
    }

    /// Parameter tensors in a fixed order: layers first, then the head.
    pub fn tensors(&self) -> Vec<&Array2<f64>> {
        let mut v: Vec<&Array2<f64>> = self.layers.iter().flat_map(|l| l.params.iter()).collect();
        v.push(&self.head_w);
        v.push(&self.head_b);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut v: Vec<&mut Array2<f64>> = self.layers.iter_mut().flat_map(|l| l.params.iter_mut()).collect();
        v.push(&mut self.head_w);
        v.push(&mut self.head_b);
        v
    }

    pub fn n_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Sets standardization from the pooled nodes of the given graphs.
    pub fn fit_standardization(&mut self, graphs: &[&GraphInput]) {
        let d = self.in_dim();
        let mut sum = vec![0.0; d];
        let mut sq = vec![0.0; d];
        let mut n = 0.0;
        for g in graphs {
            for row in g.x.axis_iter(Axis(0)) {
                for j in 0..d {
                    sum[j] += row[j];
                    sq[j] += row[j] * row[j];
                }
                n += 1.0;
            }
        }
        if n == 0.0 {
            return;
        }
        for j in 0..d {
            let m = sum[j] / n;
            let var = (sq[j] / n - m * m).max(0.0);
            self.feature_mean[j] = m;
            self.feature_std[j] = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        }
    }

    fn standardize(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for mut row in out.axis_iter_mut(Axis(0)) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.feature_mean[j]) / self.feature_std[j];
            }
        }
        out
    }

    pub fn forward(&self, g: &GraphInput, mask: Option<&[f64]>) -> Result<ForwardPass, GnnError> {
        if g.x.ncols() != self.in_dim() {
            return Err(GnnError::DimensionMismatch { expected: self.in_dim(), found: g.x.ncols() });
        }
        let ones;
        let mask = match mask {
            Some(m) if m.len() != g.n_edges() => {
                return Err(GnnError::DimensionMismatch { expected: g.n_edges(), found: m.len() })
            }
            Some(m) => m,
            None => {
                ones = vec![1.0; g.n_edges()];
                &ones
            }
        };
        let mut inputs = vec![self.standardize(&g.x)];
        let mut pre = Vec::new();
        let mut caches = Vec::new();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let (z, c) = l.forward(&inputs[i], g, mask);
            let h = if i < last { z.mapv(|v| v.max(0.0)) } else { z.clone() };
            pre.push(z);
            caches.push(c);
            inputs.push(h);
        }
        let embeddings = inputs.pop().expect("at least one layer");
        let logits = match self.config.head {
            Head::NodeLevel => embeddings.dot(&self.head_w) + self.head_b.row(0),
            Head::GraphMeanPool => {
                let pooled = embeddings
                    .mean_axis(Axis(0))
                    .unwrap_or_else(|| ndarray::Array1::zeros(EMBEDDING_DIM))
                    .insert_axis(Axis(0));
                pooled.dot(&self.head_w) + self.head_b.row(0)
            }
        };
        Ok(ForwardPass { inputs, pre, caches, embeddings, logits })
    }

    /// Gradients of a loss whose logit gradient is `dlogits`, aligned with
    /// [`GnnModel::tensors`], plus the gradient with respect to the mask.
    pub fn backward(
        &self,
        g: &GraphInput,
        mask: Option<&[f64]>,
        fp: &ForwardPass,
        dlogits: &Array2<f64>,
    ) -> (Vec<Array2<f64>>, Vec<f64>) {
        let ones = vec![1.0; g.n_edges()];
        let mask = mask.unwrap_or(&ones);
        let (d_head_w, d_head_b, mut dh) = match self.config.head {
            Head::NodeLevel => (
                fp.embeddings.t().dot(dlogits),
                dlogits.sum_axis(Axis(0)).insert_axis(Axis(0)),
                dlogits.dot(&self.head_w.t()),
            ),
            Head::GraphMeanPool => {
                let n = fp.embeddings.nrows().max(1) as f64;
                let pooled = fp.embeddings.mean_axis(Axis(0)).expect("non-empty").insert_axis(Axis(0));
                let dpooled = dlogits.dot(&self.head_w.t());
                let dh = Array2::from_shape_fn(fp.embeddings.raw_dim(), |(_, j)| dpooled[[0, j]] / n);
                (pooled.t().dot(dlogits), dlogits.clone(), dh)
            }
        };
        let mut dmask = vec![0.0; g.n_edges()];
        let mut layer_grads: Vec<Vec<Array2<f64>>> = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for i in (0..self.layers.len()).rev() {
            let dz = if i < last {
                let mut d = dh.clone();
                d.zip_mut_with(&fp.pre[i], |a, &z| {
                    if z <= 0.0 {
                        *a = 0.0
                    }
                });
                d
            } else {
                dh.clone()
            };
            let (dprev, grads) = self.layers[i].backward(&fp.inputs[i], g, mask, &fp.caches[i], &dz, &mut dmask);
            layer_grads.push(grads);
            dh = dprev;
        }
        layer_grads.reverse();
        let mut out: Vec<Array2<f64>> = layer_grads.into_iter().flatten().collect();
        out.push(d_head_w);
        out.push(d_head_b);
        (out, dmask)
    }

    /// Cross-entropy against the graph label, with gradients.
    pub fn loss_and_grads(&self, g: &GraphInput, target: usize) -> Result<(f64, Vec<Array2<f64>>), GnnError> {
        let fp = self.forward(g, None)?;
        let (loss, d) = cross_entropy(&fp.logits, target);
        if !loss.is_finite() {
            return Err(GnnError::NonFiniteLoss);
        }
        Ok((loss, self.backward(g, None, &fp, &d).0))
    }

    /// Loss and (correct, total) prediction counts for one graph.
    pub fn evaluate(&self, g: &GraphInput) -> Result<(f64, usize, usize), GnnError> {
        let fp = self.forward(g, None)?;
        let (loss, _) = cross_entropy(&fp.logits, g.label);
        let correct = fp.logits.axis_iter(Axis(0)).filter(|r| usize::from(r[1] > r[0]) == g.label).count();
        Ok((loss, correct, fp.logits.nrows()))
    }

    pub fn embed(&self, g: &GraphInput) -> Result<Array2<f64>, GnnError> {
        Ok(self.forward(g, None)?.embeddings)
    }

    /// Probability of rpAD: per node for the node-level head (averaged),
    /// or from the pooled logits.
    pub fn predict_proba(&self, g: &GraphInput) -> Result<f64, GnnError> {
        let fp = self.forward(g, None)?;
        let p: f64 = fp.logits.axis_iter(Axis(0)).map(|r| softmax_row(&[r[0], r[1]])[1]).sum();
        Ok(p / fp.logits.nrows().max(1) as f64)
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string_pretty(&Checkpoint::from_model(self)).expect("checkpoint serializes")
    }

    pub fn from_text(s: &str) -> Result<Self, GnnError> {
        let c: Checkpoint = serde_json::from_str(s).map_err(|e| GnnError::BadCheckpoint(e.to_string()))?;
        c.into_model()
    }

    pub fn history_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,train_accuracy,val_loss,val_accuracy\n");
        for h in &self.history {
            s.push_str(&format!(
                "{},{:?},{:?},{:?},{:?}\n",
                h.epoch, h.train_loss, h.train_accuracy, h.val_loss, h.val_accuracy
            ));
        }
        s
    }
}

#[derive(Serialize, Deserialize)]
struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    fn from(a: &Array2<f64>) -> Self {
        Self { rows: a.nrows(), cols: a.ncols(), data: a.iter().copied().collect() }
    }

    fn into_array(self) -> Result<Array2<f64>, GnnError> {
        Array2::from_shape_vec((self.rows, self.cols), self.data).map_err(|e| GnnError::BadCheckpoint(e.to_string()))
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    config: GnnConfig,
    tensors: Vec<Tensor>,
    feature_mean: Vec<f64>,
    feature_std: Vec<f64>,
    history: Vec<EpochRecord>,
}

impl Checkpoint {
    fn from_model(m: &GnnModel) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: m.config.clone(),
            tensors: m.tensors().into_iter().map(Tensor::from).collect(),
            feature_mean: m.feature_mean.clone(),
            feature_std: m.feature_std.clone(),
            history: m.history.clone(),
        }
    }

    fn into_model(self) -> Result<GnnModel, GnnError> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(GnnError::BadCheckpoint(format!("unsupported {} v{}", self.format, self.version)));
        }
        let mut m = GnnModel::new(&self.config)?;
        if self.tensors.len() != m.tensors().len() {
            return Err(GnnError::BadCheckpoint("tensor count mismatch".into()));
        }
        for (dst, src) in m.tensors_mut().into_iter().zip(self.tensors) {
            let a = src.into_array()?;
            if a.raw_dim() != dst.raw_dim() {
                return Err(GnnError::BadCheckpoint("tensor shape mismatch".into()));
            }
            *dst = a;
        }
        m.feature_mean = self.feature_mean;
        m.feature_std = self.feature_std;
        m.history = self.history;
        Ok(m)
    }
}

/// Optimizer state for one model.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: Optimizer,
    t: i32,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl OptimizerState {
    pub fn new(kind: Optimizer, shapes: &[&Array2<f64>]) -> Self {
        let z = |a: &&Array2<f64>| Array2::zeros(a.raw_dim());
        Self { kind, t: 0, m: shapes.iter().map(z).collect(), v: shapes.iter().map(z).collect() }
    }

    pub fn step(&mut self, params: Vec<&mut Array2<f64>>, grads: &[Array2<f64>], lr: f64) {
        self.t += 1;
        let (b1t, b2t) = (1.0 - BETA1.powi(self.t), 1.0 - BETA2.powi(self.t));
        for (i, (p, g)) in params.into_iter().zip(grads).enumerate() {
            match self.kind {
                Optimizer::Sgd => p.scaled_add(-lr, g),
                Optimizer::Adam => {
                    self.m[i].zip_mut_with(g, |m, &g| *m = BETA1 * *m + (1.0 - BETA1) * g);
                    self.v[i].zip_mut_with(g, |v, &g| *v = BETA2 * *v + (1.0 - BETA2) * g * g);
                    ndarray::Zip::from(p).and(&self.m[i]).and(&self.v[i]).for_each(|p, &m, &v| {
                        *p -= lr * (m / b1t) / ((v / b2t).sqrt() + ADAM_EPS);
                    });
                }
            }
        }
    }
}

/// Adam (or SGD) over a flat parameter vector, used by the explainers.
#[derive(Debug, Clone)]
pub struct VecAdam {
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl VecAdam {
    pub fn new(n: usize) -> Self {
        Self { t: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    pub fn step(&mut self, p: &mut [f64], g: &[f64], lr: f64) {
        self.t += 1;
        let (b1t, b2t) = (1.0 - BETA1.powi(self.t), 1.0 - BETA2.powi(self.t));
        for i in 0..p.len() {
            self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * g[i];
            self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * g[i] * g[i];
            p[i] -= lr * (self.m[i] / b1t) / ((self.v[i] / b2t).sqrt() + ADAM_EPS);
        }
    }
}

/// `accuracy − λ·loss`; higher is better.
pub fn model_score(accuracy: f64, loss: f64, lambda: f64) -> f64 {
    accuracy - lambda * loss
}
