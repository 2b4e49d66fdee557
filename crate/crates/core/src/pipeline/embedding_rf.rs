//! Random forests over clusters of learned node embeddings, compared with
//! forests over connected components on the same slide-level folds. The
//! GNN, the k-means codebook and both forests see training slides only.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::clustering::{cluster_stats, connected_components, ClusterAssignment, ClusterMethod, ClusterStats};
use crate::gnn::{self, kmeans_fit, GnnConfig, GraphInput, KMeans, EMBEDDING_DIM};
use crate::spatial::PathologyGraph;
use crate::tabular::{self, fit_forest, grouped_kfold, predicted_class, rf_predict, Fold, RfConfig};
use crate::util;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingRfConfig {
    pub outer_k: usize,
    pub n_clusters: usize,
    pub restarts: usize,
}

impl Default for EmbeddingRfConfig {
    fn default() -> Self {
        Self { outer_k: 5, n_clusters: 6, restarts: gnn::DEFAULT_RESTARTS }
    }
}

/// Column names of an embedding-cluster row.
pub fn embedding_cluster_columns() -> Vec<String> {
    let mut c: Vec<String> = ClusterStats::FEATURES.iter().map(|s| s.to_string()).collect();
    c.extend((0..EMBEDDING_DIM).map(|j| format!("emb_mean_{j}")));
    c.push("node_fraction".into());
    c
}

/// One row per non-empty embedding cluster of `g`: the raw cluster
/// statistics of the induced node set, its mean embedding and the share of
/// the graph's nodes it holds.
pub fn embedding_cluster_rows(
    g: &PathologyGraph,
    emb: &Array2<f64>,
    codebook: &KMeans,
) -> Result<Vec<Vec<f64>>, PipelineError> {
    let rows: Vec<Vec<f64>> = emb.rows().into_iter().map(|r| r.to_vec()).collect();
    let raw = codebook.predict(&rows);
    // Dense ids in order of first appearance, as cluster_stats expects.
    let mut map = vec![usize::MAX; codebook.centroids.len()];
    let mut next = 0;
    let labels: Vec<usize> = raw
        .iter()
        .map(|&c| {
            if map[c] == usize::MAX {
                map[c] = next;
                next += 1;
            }
            map[c]
        })
        .collect();
    let assignment = ClusterAssignment { labels, method: ClusterMethod::Embedding { k: codebook.centroids.len() } };
    let stats = cluster_stats(g, &assignment)?;
    let mut sums = vec![vec![0.0; EMBEDDING_DIM]; stats.len()];
    for (v, &c) in assignment.labels.iter().enumerate() {
        for (s, x) in sums[c].iter_mut().zip(emb.row(v)) {
            *s += x;
        }
    }
    Ok(stats
        .iter()
        .map(|s| {
            let mut f = s.features().to_vec();
            f.extend(sums[s.cluster_id].iter().map(|x| x / s.size as f64));
            f.push(s.size as f64 / g.n_nodes().max(1) as f64);
            f
        })
        .collect())
}

fn component_rows(g: &PathologyGraph) -> Result<Vec<Vec<f64>>, PipelineError> {
    Ok(cluster_stats(g, &connected_components(g))?.iter().map(|s| s.features().to_vec()).collect())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tally {
    pub correct_rows: usize,
    pub rows: usize,
    /// Slides whose mean row probability lands on the right class.
    pub correct_slides: usize,
    pub slides: usize,
}

impl Tally {
    pub fn row_accuracy(&self) -> f64 {
        self.correct_rows as f64 / self.rows.max(1) as f64
    }

    pub fn slide_accuracy(&self) -> f64 {
        self.correct_slides as f64 / self.slides.max(1) as f64
    }

    fn add(&mut self, p: &[[f64; 2]], label: usize) {
        self.correct_rows += p.iter().filter(|q| predicted_class(q) == label).count();
        self.rows += p.len();
        let mean = p.iter().map(|q| q[1]).sum::<f64>() / p.len().max(1) as f64;
        self.correct_slides += usize::from(usize::from(mean > 0.5) == label);
        self.slides += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldComparison {
    pub fold: usize,
    pub components: Tally,
    pub embedding: Tally,
}

#[derive(Debug, Clone)]
pub struct EmbeddingRfReport {
    /// Slide-level outer folds.
    pub folds: Vec<Fold>,
    /// Per outer fold, the GNN's own grouped splits, as indices into that
    /// fold's training slides.
    pub inner_splits: Vec<Vec<Fold>>,
    pub per_fold: Vec<FoldComparison>,
    pub components: Tally,
    pub embedding: Tally,
}

impl EmbeddingRfReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("fold,source,rows,row_accuracy,slides,slide_accuracy\n");
        let mut line = |fold: &str, src: &str, t: &Tally| {
            s.push_str(&format!(
                "{fold},{src},{},{:?},{},{:?}\n",
                t.rows,
                t.row_accuracy(),
                t.slides,
                t.slide_accuracy()
            ));
        };
        for f in &self.per_fold {
            line(&f.fold.to_string(), "components", &f.components);
            line(&f.fold.to_string(), "embedding", &f.embedding);
        }
        line("all", "components", &self.components);
        line("all", "embedding", &self.embedding);
        s
    }
}

fn merge(into: &mut Tally, t: &Tally) {
    into.correct_rows += t.correct_rows;
    into.rows += t.rows;
    into.correct_slides += t.correct_slides;
    into.slides += t.slides;
}

fn fit_and_score(
    train_x: Vec<Vec<f64>>,
    train_y: Vec<usize>,
    names: &[String],
    test: &[(Vec<Vec<f64>>, usize)],
    forest: &RfConfig,
) -> Result<Tally, PipelineError> {
    let model = fit_forest(&train_x, &train_y, names, forest)?;
    let mut t = Tally::default();
    for (rows, label) in test {
        t.add(&rf_predict(&model, rows)?, *label);
    }
    Ok(t)
}

/// Grouped outer CV over slides, one graph per slide.
pub fn compare_embedding_rf(
    graphs: &[PathologyGraph],
    cfg: &EmbeddingRfConfig,
    gnn_cfg: &GnnConfig,
    forest: &RfConfig,
    seed: u64,
) -> Result<EmbeddingRfReport, PipelineError> {
    let inputs: Vec<GraphInput> = graphs.iter().map(GraphInput::from_graph).collect();
    let slides: Vec<String> = graphs.iter().map(|g| g.slide_id.clone()).collect();
    let labels: Vec<usize> = inputs.iter().map(|g| g.label).collect();
    let folds = grouped_kfold(&slides, &labels, cfg.outer_k, seed)?;
    let comp_names: Vec<String> = ClusterStats::FEATURES.iter().map(|s| s.to_string()).collect();
    let emb_names = embedding_cluster_columns();
    let comp_rows: Vec<Vec<Vec<f64>>> = graphs.iter().map(component_rows).collect::<Result<_, _>>()?;

    let mut per_fold = Vec::new();
    let mut inner_splits = Vec::new();
    for (k, f) in folds.iter().enumerate() {
        let fold_seed = util::derive_seed(seed, k as u64);
        let tr: Vec<GraphInput> = f.train.iter().map(|&i| inputs[i].clone()).collect();
        let tr_groups: Vec<String> = f.train.iter().map(|&i| slides[i].clone()).collect();
        let outcome = gnn::train(&tr, &tr_groups, &GnnConfig { seed: fold_seed, ..gnn_cfg.clone() })?;
        inner_splits.push(outcome.splits);
        let embs: Vec<Array2<f64>> = inputs.iter().map(|g| outcome.model.embed(g)).collect::<Result<_, _>>()?;
        let train_nodes: Vec<Vec<f64>> =
            f.train.iter().flat_map(|&i| embs[i].rows().into_iter().map(|r| r.to_vec()).collect::<Vec<_>>()).collect();
        let (codebook, _) = kmeans_fit(&train_nodes, cfg.n_clusters, cfg.restarts, fold_seed)?;
        let emb_rows = |i: usize| embedding_cluster_rows(&graphs[i], &embs[i], &codebook);

        let rf = RfConfig { seed: fold_seed, ..*forest };
        let (mut cx, mut cy, mut ex, mut ey) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for &i in &f.train {
            for r in &comp_rows[i] {
                cx.push(r.clone());
                cy.push(labels[i]);
            }
            for r in emb_rows(i)? {
                ex.push(r);
                ey.push(labels[i]);
            }
        }
        let comp_test: Vec<(Vec<Vec<f64>>, usize)> =
            f.test.iter().map(|&i| (comp_rows[i].clone(), labels[i])).collect();
        let emb_test: Vec<(Vec<Vec<f64>>, usize)> =
            f.test.iter().map(|&i| Ok((emb_rows(i)?, labels[i]))).collect::<Result<_, PipelineError>>()?;
        per_fold.push(FoldComparison {
            fold: k,
            components: fit_and_score(cx, cy, &comp_names, &comp_test, &rf)?,
            embedding: fit_and_score(ex, ey, &emb_names, &emb_test, &rf)?,
        });
    }
    let mut components = Tally::default();
    let mut embedding = Tally::default();
    for f in &per_fold {
        merge(&mut components, &f.components);
        merge(&mut embedding, &f.embedding);
    }
    Ok(EmbeddingRfReport { folds, inner_splits, per_fold, components, embedding })
}

/// Slide-level and GNN-level leakage audit of a report.
pub fn check_report_leakage(graphs: &[PathologyGraph], r: &EmbeddingRfReport) -> Result<(), String> {
    let slides: Vec<String> = graphs.iter().map(|g| g.slide_id.clone()).collect();
    tabular::check_no_leakage(&slides, &r.folds)?;
    for (f, inner) in r.folds.iter().zip(&r.inner_splits) {
        let tr: Vec<String> = f.train.iter().map(|&i| slides[i].clone()).collect();
        tabular::check_no_leakage(&tr, inner)?;
    }
    Ok(())
}
