use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::model::{model_score, EpochRecord, GnnConfig, GnnModel, OptimizerState};
use super::{GnnError, GraphInput};
use crate::tabular::{grouped_kfold, Fold};
use crate::util;

/// Indices of a class-balanced training list: every item once, then the
/// minority class repeated cyclically in a seeded order until counts match.
pub fn oversample(labels: &[usize], seed: u64) -> Result<Vec<usize>, GnnError> {
    let by: [Vec<usize>; 2] = [0, 1].map(|c| (0..labels.len()).filter(|&i| labels[i] == c).collect());
    if by[0].is_empty() || by[1].is_empty() {
        return Err(GnnError::SingleClass);
    }
    let mut out: Vec<usize> = (0..labels.len()).collect();
    let (minor, major) = if by[0].len() < by[1].len() { (&by[0], &by[1]) } else { (&by[1], &by[0]) };
    let mut order = minor.clone();
    order.shuffle(&mut util::rng(seed, 0x05a));
    out.extend(order.iter().cycle().take(major.len() - minor.len()));
    Ok(out)
}

/// Mean per-graph loss and pooled accuracy.
pub fn evaluate_set(model: &GnnModel, graphs: &[&GraphInput]) -> Result<(f64, f64), GnnError> {
    let mut loss = 0.0;
    let (mut correct, mut total) = (0, 0);
    for g in graphs {
        let (l, c, t) = model.evaluate(g)?;
        if !l.is_finite() {
            return Err(GnnError::NonFiniteLoss);
        }
        loss += l;
        correct += c;
        total += t;
    }
    let n = graphs.len().max(1) as f64;
    Ok((loss / n, if total > 0 { correct as f64 / total as f64 } else { 0.0 }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

/// Trains one model with early stopping on validation loss (training loss
/// when `val` is empty) and restores the best epoch's parameters.
pub fn fit(train: &[&GraphInput], val: &[&GraphInput], cfg: &GnnConfig) -> Result<(GnnModel, FitReport), GnnError> {
    let mut model = GnnModel::new(cfg)?;
    model.fit_standardization(train);
    let labels: Vec<usize> = train.iter().map(|g| g.label).collect();
    let schedule = oversample(&labels, cfg.seed)?;
    let mut opt = OptimizerState::new(cfg.optimizer, &model.tensors());
    let mut rng = util::rng(cfg.seed, 0x7a1);
    let mut best: Option<(f64, usize, GnnModel)> = None;
    let mut wait = 0;
    let mut epochs_run = 0;
    for epoch in 1..=cfg.max_epochs {
        epochs_run = epoch;
        let mut order = schedule.clone();
        order.shuffle(&mut rng);
        for &i in &order {
            let (_, grads) = model.loss_and_grads(train[i], train[i].label)?;
            let lr = cfg.learning_rate;
            opt.step(model.tensors_mut(), &grads, lr);
        }
        let (tl, ta) = evaluate_set(&model, train)?;
        let (vl, va) = if val.is_empty() { (tl, ta) } else { evaluate_set(&model, val)? };
        model.history.push(EpochRecord { epoch, train_loss: tl, train_accuracy: ta, val_loss: vl, val_accuracy: va });
        if best.as_ref().is_none_or(|(b, _, _)| vl < *b) {
            best = Some((vl, epoch, model.clone()));
            wait = 0;
        } else {
            wait += 1;
            if wait >= cfg.patience {
                break;
            }
        }
    }
    let history = model.history.clone();
    let Some((_, best_epoch, mut best_model)) = best else {
        // max_epochs = 0: the untrained model is the result.
        return Ok((model, FitReport { best_epoch: 0, epochs_run: 0, val_loss: f64::NAN, val_accuracy: f64::NAN }));
    };
    best_model.history = history;
    let rec = best_model.history[best_epoch - 1];
    Ok((best_model, FitReport { best_epoch, epochs_run, val_loss: rec.val_loss, val_accuracy: rec.val_accuracy }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldMetrics {
    pub fold: usize,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The best-scoring fold's model.
    pub model: GnnModel,
    pub best_fold: usize,
    pub folds: Vec<FoldMetrics>,
    /// Graph-index splits, for leakage auditing.
    pub splits: Vec<Fold>,
}

/// Grouped k-fold training; each fold validates on its held-out groups.
pub fn train(graphs: &[GraphInput], groups: &[String], cfg: &GnnConfig) -> Result<TrainOutcome, GnnError> {
    cfg.validate()?;
    let labels: Vec<usize> = graphs.iter().map(|g| g.label).collect();
    let splits =
        grouped_kfold(groups, &labels, cfg.kfold_k, cfg.seed).map_err(|e| GnnError::BadConfig(e.to_string()))?;
    let results: Vec<Result<(GnnModel, FoldMetrics), GnnError>> = splits
        .par_iter()
        .enumerate()
        .map(|(k, f)| {
            let tr: Vec<&GraphInput> = f.train.iter().map(|&i| &graphs[i]).collect();
            let va: Vec<&GraphInput> = f.test.iter().map(|&i| &graphs[i]).collect();
            let fold_cfg = GnnConfig { seed: util::derive_seed(cfg.seed, k as u64), ..cfg.clone() };
            let (m, r) = fit(&tr, &va, &fold_cfg)?;
            let score = model_score(r.val_accuracy, r.val_loss, cfg.score_lambda);
            Ok((
                m,
                FoldMetrics {
                    fold: k,
                    best_epoch: r.best_epoch,
                    epochs_run: r.epochs_run,
                    val_loss: r.val_loss,
                    val_accuracy: r.val_accuracy,
                    score,
                },
            ))
        })
        .collect();
    let mut models = Vec::new();
    let mut folds = Vec::new();
    for r in results {
        let (m, f) = r?;
        models.push(m);
        folds.push(f);
    }
    let best_fold = folds.iter().enumerate().fold(0, |b, (i, f)| if f.score > folds[b].score { i } else { b });
    Ok(TrainOutcome { model: models.swap_remove(best_fold), best_fold, folds, splits })
}

pub fn folds_csv(folds: &[FoldMetrics]) -> String {
    let mut s = String::from("fold,best_epoch,epochs_run,val_loss,val_accuracy,score\n");
    for f in folds {
        s.push_str(&format!(
            "{},{},{},{:?},{:?},{:?}\n",
            f.fold, f.best_epoch, f.epochs_run, f.val_loss, f.val_accuracy, f.score
        ));
    }
    s
}
