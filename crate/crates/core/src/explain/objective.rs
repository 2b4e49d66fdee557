use crate::gnn::{cross_entropy, GnnModel, GraphInput};

use super::ExplainError;

pub(crate) fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

fn softplus(s: f64) -> f64 {
    s.max(0.0) + (-s.abs()).exp().ln_1p()
}

/// Binary entropy of `sigmoid(s)`, in nats.
pub(crate) fn entropy_of_logit(s: f64) -> f64 {
    let m = sigmoid(s);
    m * softplus(-s) + (1.0 - m) * softplus(s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularizers {
    pub lambda_size: f64,
    pub lambda_ent: f64,
}

/// Masked-prediction objective over edge logits `s`:
/// `CE(target | mask = σ(s)) + λ_size Σσ(s) + λ_ent mean H(σ(s))`,
/// returned with its gradient in `s`.
pub(crate) fn masked_objective(
    model: &GnnModel,
    g: &GraphInput,
    target: usize,
    s: &[f64],
    reg: Regularizers,
) -> Result<(f64, Vec<f64>), ExplainError> {
    let m: Vec<f64> = s.iter().map(|&v| sigmoid(v)).collect();
    let fp = model.forward(g, Some(&m))?;
    let (ce, dl) = cross_entropy(&fp.logits, target);
    let (_, dmask) = model.backward(g, Some(&m), &fp, &dl);
    let n = s.len().max(1) as f64;
    let size: f64 = m.iter().sum();
    let ent: f64 = s.iter().map(|&v| entropy_of_logit(v)).sum::<f64>() / n;
    let loss = ce + reg.lambda_size * size + reg.lambda_ent * ent;
    if !loss.is_finite() {
        return Err(ExplainError::NonFiniteLoss);
    }
    let grad = s
        .iter()
        .zip(&m)
        .zip(&dmask)
        .map(|((&si, &mi), &di)| {
            let dm = mi * (1.0 - mi);
            (di + reg.lambda_size) * dm - reg.lambda_ent * si * dm / n
        })
        .collect();
    Ok((loss, grad))
}
