use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::objective::{masked_objective, sigmoid, Regularizers};
use super::{ExplainError, ExplanationResult, Method};
use crate::gnn::{GnnModel, GraphInput, VecAdam};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GnnxConfig {
    pub epochs: usize,
    pub lambda_size: f64,
    pub lambda_ent: f64,
    pub learning_rate: f64,
}

impl Default for GnnxConfig {
    fn default() -> Self {
        Self { epochs: 100, lambda_size: 0.005, lambda_ent: 1.0, learning_rate: 0.01 }
    }
}

impl GnnxConfig {
    fn regularizers(&self) -> Regularizers {
        Regularizers { lambda_size: self.lambda_size, lambda_ent: self.lambda_ent }
    }
}

/// Per-instance edge mask fitted by Adam from logits at 0. The start is
/// fixed, so the result depends on nothing but the inputs.
pub fn gnnx_explain(
    model: &GnnModel,
    g: &GraphInput,
    target: usize,
    cfg: &GnnxConfig,
) -> Result<ExplanationResult, ExplainError> {
    if target > 1 {
        return Err(ExplainError::BadConfig(format!("target class {target}")));
    }
    let reg = cfg.regularizers();
    let mut s = vec![0.0; g.n_edges()];
    let (initial_loss, mut grad) = masked_objective(model, g, target, &s, reg)?;
    let mut opt = VecAdam::new(s.len());
    let mut loss_history = vec![initial_loss];
    for _ in 0..cfg.epochs {
        opt.step(&mut s, &grad, cfg.learning_rate);
        let (l, gr) = masked_objective(model, g, target, &s, reg)?;
        loss_history.push(l);
        grad = gr;
    }
    let edge_importance: Vec<f64> = s.iter().map(|&v| sigmoid(v)).collect();
    Ok(ExplanationResult::from_edges(g, Method::Gnnx, target, edge_importance, loss_history))
}

/// Explains each graph against its own label, in parallel.
pub fn gnnx_explain_all(
    model: &GnnModel,
    graphs: &[&GraphInput],
    cfg: &GnnxConfig,
) -> Result<Vec<ExplanationResult>, ExplainError> {
    graphs.par_iter().map(|g| gnnx_explain(model, g, g.label, cfg)).collect()
}
