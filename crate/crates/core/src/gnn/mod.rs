//! Message-passing networks with hand-written gradients, grouped k-fold
//! training, 12-d node embeddings and k-means over them.

mod graph;
mod kmeans;
pub mod layers;
mod model;
mod train;

pub use graph::GraphInput;
pub use kmeans::{embedding_clustering, kmeans_fit, KMeans, DEFAULT_RESTARTS};
pub use layers::{ConvLayer, LayerKind};
pub use model::{
    cross_entropy, model_score, softmax_row, Arch, EpochRecord, ForwardPass, GnnConfig, GnnModel, Head, Optimizer,
    OptimizerState, VecAdam, EMBEDDING_DIM,
};
pub use train::{evaluate_set, fit, folds_csv, oversample, train, FitReport, FoldMetrics, TrainOutcome};

use ndarray::Array2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GnnError {
    #[error("expected dimension {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("loss is not finite")]
    NonFiniteLoss,
    #[error("training data holds a single class")]
    SingleClass,
    #[error("k = {k} is invalid for {rows} rows")]
    BadK { k: usize, rows: usize },
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error("bad graph: {0}")]
    BadGraph(String),
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
}

/// Embedding rows as CSV: `node,record_id,e0..e11`.
pub fn embeddings_csv(record_ids: &[String], e: &Array2<f64>) -> String {
    let mut s = String::from("node,record_id");
    for j in 0..e.ncols() {
        s.push_str(&format!(",e{j}"));
    }
    s.push('\n');
    for (i, id) in record_ids.iter().enumerate() {
        s.push_str(&format!("{i},{id}"));
        for v in e.row(i) {
            s.push_str(&format!(",{v:?}"));
        }
        s.push('\n');
    }
    s
}

/// Largest relative disagreement between analytic gradients and central
/// differences with step `h`, over every parameter and every mask entry.
/// Relative error is `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn max_gradient_error(model: &GnnModel, g: &GraphInput, mask: &[f64], h: f64) -> f64 {
    let loss_at = |m: &GnnModel, mask: &[f64]| {
        let fp = m.forward(g, Some(mask)).expect("forward");
        cross_entropy(&fp.logits, g.label).0
    };
    let fp = model.forward(g, Some(mask)).expect("forward");
    let (_, dl) = cross_entropy(&fp.logits, g.label);
    let (grads, dmask) = model.backward(g, Some(mask), &fp, &dl);
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
    let mut worst: f64 = 0.0;
    let mut probe = model.clone();
    for (t, grad) in grads.iter().enumerate() {
        for idx in 0..grad.len() {
            let orig = {
                let tensor = &mut probe.tensors_mut()[t];
                let slot = tensor.as_slice_mut().expect("contiguous").get_mut(idx).unwrap();
                let o = *slot;
                *slot = o + h;
                o
            };
            let up = loss_at(&probe, mask);
            probe.tensors_mut()[t].as_slice_mut().unwrap()[idx] = orig - h;
            let down = loss_at(&probe, mask);
            probe.tensors_mut()[t].as_slice_mut().unwrap()[idx] = orig;
            let num = (up - down) / (2.0 * h);
            worst = worst.max(rel(grad.as_slice().unwrap()[idx], num));
        }
    }
    let mut m = mask.to_vec();
    for e in 0..m.len() {
        let o = m[e];
        m[e] = o + h;
        let up = loss_at(model, &m);
        m[e] = o - h;
        let down = loss_at(model, &m);
        m[e] = o;
        worst = worst.max(rel(dmask[e], (up - down) / (2.0 * h)));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn rand_graph(seed: u64, n: usize, label: usize) -> GraphInput {
        let mut rng = crate::util::rng(seed, 0);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.random_bool(0.45) {
                    edges.push((u, v, rng.random_range(0.05..1.0)));
                }
            }
        }
        let x = Array2::from_shape_fn((n, 10), |_| rng.random_range(-1.0..1.0));
        GraphInput::new(n, edges, x, label).unwrap()
    }

    fn cfg(arch: Arch, head: Head) -> GnnConfig {
        GnnConfig { arch, head, layer_dims: vec![10, 8, 12], seed: 3, ..Default::default() }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let g = rand_graph(1, 6, 1);
        let mask: Vec<f64> = (0..g.n_edges()).map(|i| 0.3 + 0.1 * i as f64).collect();
        for arch in [Arch::Gcn, Arch::Sage, Arch::Wsage, Arch::Cheb { k: 3 }, Arch::Gat { heads: 2 }] {
            for head in [Head::NodeLevel, Head::GraphMeanPool] {
                let m = GnnModel::new(&cfg(arch, head)).unwrap();
                let err = max_gradient_error(&m, &g, &mask, 1e-5);
                assert!(err <= 1e-4, "{arch} {head:?}: {err}");
            }
        }
    }

    #[test]
    fn pooled_logits_permutation_invariant() {
        let g = rand_graph(2, 7, 0);
        let perm = [6, 2, 4, 0, 1, 5, 3];
        let gp = g.permuted(&perm);
        for arch in Arch::all_default() {
            let m = GnnModel::new(&cfg(arch, Head::GraphMeanPool)).unwrap();
            let a = m.forward(&g, None).unwrap();
            let b = m.forward(&gp, None).unwrap();
            for j in 0..2 {
                assert!((a.logits[[0, j]] - b.logits[[0, j]]).abs() <= 1e-9);
            }
            for (i, &p) in perm.iter().enumerate() {
                for j in 0..12 {
                    assert!((b.embeddings[[i, j]] - a.embeddings[[p, j]]).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn embedding_shape_and_zero_column() {
        let mut g = rand_graph(3, 9, 0);
        g.x.column_mut(4).fill(0.0);
        let mut m = GnnModel::new(&GnnConfig { layer_dims: vec![10, 16, 12], ..Default::default() }).unwrap();
        m.fit_standardization(&[&g]);
        let e = m.embed(&g).unwrap();
        assert_eq!(e.dim(), (9, 12));
        assert!(e.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn feature_dim_checked() {
        let m = GnnModel::new(&GnnConfig::default()).unwrap();
        let g = GraphInput::new(2, vec![], Array2::zeros((2, 3)), 0).unwrap();
        assert!(matches!(m.forward(&g, None), Err(GnnError::DimensionMismatch { .. })));
    }

    #[test]
    fn config_validation() {
        assert!(GnnModel::new(&GnnConfig { layer_dims: vec![10, 8], ..Default::default() }).is_err());
        assert!(GnnModel::new(&GnnConfig { arch: Arch::Gat { heads: 5 }, ..Default::default() }).is_err());
        assert!(GnnModel::new(&GnnConfig { arch: Arch::Cheb { k: 0 }, ..Default::default() }).is_err());
        assert_eq!("cheb4".parse::<Arch>().unwrap(), Arch::Cheb { k: 4 });
        assert_eq!("gat".parse::<Arch>().unwrap(), Arch::Gat { heads: 2 });
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let g = rand_graph(4, 6, 1);
        for kind in [Optimizer::Adam, Optimizer::Sgd] {
            let mut m = GnnModel::new(&GnnConfig { optimizer: kind, ..Default::default() }).unwrap();
            let before = m.clone();
            let (_, grads) = m.loss_and_grads(&g, 1).unwrap();
            let mut opt = OptimizerState::new(kind, &m.tensors());
            opt.step(m.tensors_mut(), &grads, 0.0);
            assert_eq!(m, before);
        }
    }

    #[test]
    fn small_step_decreases_loss() {
        let g = rand_graph(5, 6, 0);
        for arch in Arch::all_default() {
            let mut m = GnnModel::new(&cfg(arch, Head::NodeLevel)).unwrap();
            let (l0, grads) = m.loss_and_grads(&g, 0).unwrap();
            let mut opt = OptimizerState::new(Optimizer::Sgd, &m.tensors());
            opt.step(m.tensors_mut(), &grads, 1e-3);
            let (l1, _) = m.loss_and_grads(&g, 0).unwrap();
            assert!(l1 < l0, "{arch}: {l1} !< {l0}");
        }
    }

    #[test]
    fn oversampling() {
        let labels: Vec<usize> = [vec![0; 12], vec![1; 6]].concat();
        let idx = oversample(&labels, 1).unwrap();
        assert_eq!(idx.len(), 24);
        let extra = &idx[18..];
        let mut sorted = extra.to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, (12..18).collect::<Vec<_>>());
        let balanced = [0, 1, 0, 1];
        assert_eq!(oversample(&balanced, 0).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(oversample(&[1, 1], 0), Err(GnnError::SingleClass));
    }

    #[test]
    fn score_form() {
        assert!((model_score(0.9, 0.2, 0.5) - 0.8).abs() < 1e-15);
        assert_eq!(model_score(0.7, 3.0, 0.0), 0.7);
        assert!(model_score(0.7, 0.1, 0.5) >= model_score(0.7, 0.2, 0.5));
    }

    fn toy_cohort() -> (Vec<GraphInput>, Vec<String>) {
        // Class is readable from the mean of feature 0.
        let mut graphs = Vec::new();
        let mut groups = Vec::new();
        for i in 0..12 {
            let label = i % 2;
            let mut g = rand_graph(100 + i as u64, 8, label);
            g.x.column_mut(0).mapv_inplace(|v| v + if label == 1 { 1.5 } else { -1.5 });
            graphs.push(g);
            groups.push(format!("s{i}"));
        }
        (graphs, groups)
    }

    #[test]
    fn training_is_deterministic_and_learns() {
        let (graphs, groups) = toy_cohort();
        let c = GnnConfig { kfold_k: 3, max_epochs: 30, patience: 30, seed: 7, ..Default::default() };
        let a = train(&graphs, &groups, &c).unwrap();
        let b = train(&graphs, &groups, &c).unwrap();
        assert_eq!(a.model, b.model);
        assert!(a.folds.iter().all(|f| f.val_accuracy >= 0.75), "{:?}", a.folds);
        crate::tabular::check_no_leakage(&groups, &a.splits).unwrap();
    }

    #[test]
    fn early_stopping_contract() {
        let (graphs, _) = toy_cohort();
        let tr: Vec<&GraphInput> = graphs[..8].iter().collect();
        let va: Vec<&GraphInput> = graphs[8..].iter().collect();
        // Zero learning rate: loss never improves after epoch 1.
        let c = GnnConfig { learning_rate: 0.0, patience: 2, max_epochs: 50, ..Default::default() };
        let (_, r) = fit(&tr, &va, &c).unwrap();
        assert_eq!(r.best_epoch, 1);
        assert!(r.epochs_run <= r.best_epoch + 2);
        // Training on the validation set with a tiny step keeps improving.
        let c = GnnConfig {
            learning_rate: 1e-4,
            optimizer: Optimizer::Sgd,
            patience: 1,
            max_epochs: 8,
            ..Default::default()
        };
        let (m, r) = fit(&tr, &tr, &c).unwrap();
        let losses: Vec<f64> = m.history.iter().map(|h| h.val_loss).collect();
        if losses.windows(2).all(|w| w[1] < w[0]) {
            assert_eq!(r.epochs_run, 8);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut m = GnnModel::new(&GnnConfig { arch: Arch::Gat { heads: 4 }, ..Default::default() }).unwrap();
        m.feature_mean[2] = 0.25;
        let back = GnnModel::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert!(GnnModel::from_text("{\"format\":\"x\"}").is_err());
    }
}
