//! Feature tables, grouped cross-validation, random forests, recursive
//! feature elimination and Shapley attributions.

mod cv;
mod forest;
mod rfe;
mod shapley;
mod table;

pub use cv::{check_no_leakage, grouped_kfold, Fold};
pub use forest::{
    fit_forest, predicted_class, rf_predict, subsample_size, train_random_forest, DecisionTree, RFModel, RfConfig,
    TreeNode,
};
pub use rfe::{cross_validate, recursive_feature_elimination, CvResult, RfeConfig, RfeReport};
pub use shapley::{background_rows, shapley_attribution, ShapleyAttribution, ShapleyMode, MAX_EXACT_FEATURES};
pub use table::{assemble_features, FeatureRow, FeatureSource, FeatureTable, RowKind};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TabularError {
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("k = {k} folds but only {groups} groups")]
    TooFewGroups { k: usize, groups: usize },
    #[error("training data holds a single class")]
    SingleClass,
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("need at least 2 features, got {0}")]
    TooFewFeatures(usize),
    #[error("expected {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("exact Shapley limited to 15 features, got {0}")]
    TooManyFeaturesForExact(usize),
    #[error("bad model: {0}")]
    BadModel(String),
}

/// Attribution table as CSV rows `row_id,feature,phi`.
pub fn attribution_csv(row_ids: &[String], names: &[String], attrs: &[ShapleyAttribution]) -> String {
    let mut out = String::from("row_id,feature,phi\n");
    for (id, a) in row_ids.iter().zip(attrs) {
        for (n, p) in names.iter().zip(&a.phi) {
            out.push_str(&format!("{id},{n},{p:?}\n"));
        }
    }
    out
}
