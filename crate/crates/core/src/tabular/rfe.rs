use super::{forest, grouped_kfold, FeatureTable, Fold, RfConfig, TabularError};

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    /// Pooled out-of-fold accuracy.
    pub accuracy: f64,
    /// Out-of-fold `[p_cAD, p_rpAD]` per row.
    pub oof: Vec<[f64; 2]>,
}

/// Trains on each fold's training rows and scores its test rows.
pub fn cross_validate(t: &FeatureTable, folds: &[Fold], cfg: &RfConfig) -> Result<CvResult, TabularError> {
    let labels = t.labels();
    let mut oof = vec![[0.0; 2]; t.len()];
    for (i, f) in folds.iter().enumerate() {
        let train = t.subset_rows(&f.train);
        let fold_cfg = RfConfig { seed: crate::util::derive_seed(cfg.seed, i as u64), ..*cfg };
        let model = forest::train_random_forest(&train, &fold_cfg)?;
        let rows: Vec<Vec<f64>> = f.test.iter().map(|&r| t.rows[r].features.clone()).collect();
        for (&r, p) in f.test.iter().zip(forest::rf_predict(&model, &rows)?) {
            oof[r] = p;
        }
    }
    let tested: usize = folds.iter().map(|f| f.test.len()).sum();
    let correct =
        folds.iter().flat_map(|f| f.test.iter()).filter(|&&r| forest::predicted_class(&oof[r]) == labels[r]).count();
    Ok(CvResult { accuracy: if tested > 0 { correct as f64 / tested as f64 } else { 0.0 }, oof })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfeConfig {
    pub forest: RfConfig,
    pub folds: usize,
    pub step: usize,
}

impl Default for RfeConfig {
    fn default() -> Self {
        Self { forest: RfConfig::default(), folds: 5, step: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfeReport {
    /// Dropped features, earliest first.
    pub elimination_order: Vec<String>,
    /// All features, most important (last survivor) first.
    pub ranking: Vec<String>,
    /// `(n_features, cv_accuracy)` for every subset size visited.
    pub accuracy_by_size: Vec<(usize, f64)>,
    /// Highest-accuracy subset; ties go to the smaller one.
    pub best_subset: Vec<String>,
    /// The grouped splits every subset was scored on.
    pub folds: Vec<Fold>,
}

pub fn recursive_feature_elimination(t: &FeatureTable, cfg: &RfeConfig) -> Result<RfeReport, TabularError> {
    if t.n_features() < 2 {
        return Err(TabularError::TooFewFeatures(t.n_features()));
    }
    let step = cfg.step.max(1);
    let folds = grouped_kfold(&t.groups(), &t.labels(), cfg.folds, cfg.forest.seed)?;
    let mut remaining: Vec<usize> = (0..t.n_features()).collect();
    let mut dropped = Vec::new();
    let mut by_size = Vec::new();
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let sub = t.subset_columns(&remaining);
        let acc = cross_validate(&sub, &folds, &cfg.forest)?.accuracy;
        by_size.push((remaining.len(), acc));
        if best.as_ref().is_none_or(|(a, _)| acc >= *a) {
            best = Some((acc, remaining.clone()));
        }
        if remaining.len() == 1 {
            break;
        }
        let model = forest::train_random_forest(&sub, &cfg.forest)?;
        let n_drop = step.min(remaining.len() - 1);
        // Stable sort keeps the lower column first among equal importances.
        let mut order: Vec<usize> = (0..remaining.len()).collect();
        order.sort_by(|&a, &b| model.importances[a].total_cmp(&model.importances[b]));
        let mut gone: Vec<usize> = order[..n_drop].to_vec();
        gone.sort_unstable();
        for &pos in gone.iter().rev() {
            dropped.push(remaining.remove(pos));
        }
    }
    let name = |c: &usize| t.columns[*c].clone();
    let mut ranking: Vec<String> = remaining.iter().map(name).collect();
    ranking.extend(dropped.iter().rev().map(name));
    Ok(RfeReport {
        elimination_order: dropped.iter().map(name).collect(),
        ranking,
        accuracy_by_size: by_size,
        best_subset: best.map(|(_, s)| s.iter().map(name).collect()).unwrap_or_default(),
        folds,
    })
}
