use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::RunConfig;
use super::stats::{correlation_matrix, pca};
use super::svg;
use super::workspace::{RunManifest, Table, Workspace};
use super::{check_report_leakage, compare_embedding_rf, PipelineError};
use crate::clustering::{cluster_stats, connected_components, markov_cluster, ClusterStats};
use crate::data::{
    deserialize_graph, parse_annotations, parse_metadata, serialize_graph, validate_dataset, write_annotations,
    write_metadata, AnnotationSchema, Diagnosis, ObjectType,
};
use crate::explain::{
    edge_importance_csv, explainer_agreement, gnnx_explain_all, layer_importance, node_importance_csv, pgx_apply,
    pgx_train, ExplanationResult,
};
use crate::gnn::{embeddings_csv, folds_csv, kmeans_fit, train, GnnModel, GraphInput};
use crate::metrics::{graph_summary, node_features, GraphMetrics, NODE_FEATURE_NAMES};
use crate::spatial::{build_all_levels, GraphLevel, PathologyGraph};
use crate::synth::generate_cohort;
use crate::tabular::{
    attribution_csv, background_rows, check_no_leakage, cross_validate, grouped_kfold, predicted_class,
    recursive_feature_elimination, rf_predict, shapley_attribution, train_random_forest, FeatureRow, FeatureTable,
    RFModel, RfeConfig, RowKind, ShapleyMode, MAX_EXACT_FEATURES,
};
use crate::util;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    GenData,
    BuildGraph,
    Metrics,
    Cluster,
    TrainRf,
    Shap,
    TrainGnn,
    Embed,
    Explain,
    Report,
}

impl Command {
    /// In pipeline order.
    pub const ALL: [Command; 10] = [
        Command::GenData,
        Command::BuildGraph,
        Command::Metrics,
        Command::Cluster,
        Command::TrainRf,
        Command::Shap,
        Command::TrainGnn,
        Command::Embed,
        Command::Explain,
        Command::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::BuildGraph => "build-graph",
            Command::Metrics => "metrics",
            Command::Cluster => "cluster",
            Command::TrainRf => "train-rf",
            Command::Shap => "shap",
            Command::TrainGnn => "train-gnn",
            Command::Embed => "embed",
            Command::Explain => "explain",
            Command::Report => "report",
        }
    }
}

impl std::str::FromStr for Command {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| PipelineError::Usage(format!("unknown command `{s}`")))
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub overrides: Vec<String>,
    /// Slide directory for `build-graph`; defaults to the run's own cohort.
    pub input: Option<PathBuf>,
}

pub fn run(cmd: Command, opts: &RunOptions) -> Result<RunManifest, PipelineError> {
    if opts.input.is_some() && cmd != Command::BuildGraph {
        return Err(PipelineError::Usage("--input only applies to build-graph".into()));
    }
    let (cfg, _) = RunConfig::load(opts.config.as_deref(), &opts.overrides, opts.seed)?;
    let mut ws = Workspace::new(&opts.out)?;
    match cmd {
        Command::GenData => gen_data(&mut ws, &cfg)?,
        Command::BuildGraph => build_graph(&mut ws, opts.input.as_deref())?,
        Command::Metrics => metrics(&mut ws)?,
        Command::Cluster => cluster(&mut ws, &cfg)?,
        Command::TrainRf => train_rf(&mut ws, &cfg)?,
        Command::Shap => shap(&mut ws, &cfg)?,
        Command::TrainGnn => train_gnn(&mut ws, &cfg)?,
        Command::Embed => embed(&mut ws, &cfg)?,
        Command::Explain => explain(&mut ws, &cfg)?,
        Command::Report => report(&mut ws, &cfg)?,
    }
    let snapshot = serde_json::to_value(&cfg).expect("config serializes");
    ws.finish(cmd.name(), cfg.seed, snapshot)
}

fn data_err(m: impl Into<String>) -> PipelineError {
    PipelineError::Data(m.into())
}

// ---- gen-data / build-graph ---------------------------------------------------

fn gen_data(ws: &mut Workspace, cfg: &RunConfig) -> Result<(), PipelineError> {
    let cohort = generate_cohort(&cfg.synth)?;
    ws.reset_dir("cohort")?;
    let mut index = String::from("slide_id,patient_id,diagnosis,n_plaque,n_tangle\n");
    for s in &cohort.slides {
        ws.write(&format!("cohort/{}.csv", s.slide_id), write_annotations(s))?;
        ws.write(&format!("cohort/{}.meta", s.slide_id), write_metadata(s))?;
        let _ = writeln!(
            index,
            "{},{},{},{},{}",
            s.slide_id,
            s.patient_id,
            s.diagnosis,
            s.count(ObjectType::Plaque),
            s.count(ObjectType::Tangle)
        );
    }
    ws.write("cohort/slides.csv", index)
}

fn build_graph(ws: &mut Workspace, input: Option<&Path>) -> Result<(), PipelineError> {
    let internal = input.is_none();
    let dir = input.map_or_else(|| ws.root().join("cohort"), Path::to_path_buf);
    let mut metas: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(PipelineError::io(&dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "meta"))
        .collect();
    metas.sort();
    if metas.is_empty() {
        return Err(data_err(format!("no slide metadata (*.meta) in {}", dir.display())));
    }
    let mut slides = Vec::new();
    for m in &metas {
        let a = m.with_extension("csv");
        let mut read = |p: &Path| {
            let name = p.file_name().expect("file").to_string_lossy().into_owned();
            if internal {
                ws.read(&format!("cohort/{name}"))
            } else {
                ws.read_external(p, p.display().to_string())
            }
        };
        let meta = parse_metadata(&read(m)?)?;
        let text = read(&a)?;
        let slide = parse_annotations(text.as_bytes(), &AnnotationSchema::default(), &meta)?;
        if let Some(v) = validate_dataset(&slide).violations.first() {
            return Err(data_err(format!(
                "{}: {}{}",
                slide.slide_id,
                v.record_id.as_ref().map(|r| format!("record {r}: ")).unwrap_or_default(),
                v.message
            )));
        }
        slides.push(slide);
    }
    let built: Vec<Vec<PathologyGraph>> = slides
        .par_iter()
        .map(|s| {
            let mut v = build_all_levels(s, ObjectType::Plaque)?;
            v.extend(build_all_levels(s, ObjectType::Tangle)?);
            Ok(v)
        })
        .collect::<Result<_, PipelineError>>()?;
    ws.reset_dir("graphs")?;
    let mut index = String::from(
        "key,slide_id,patient_id,diagnosis,object_type,level,roi_area_mm2,alpha_optimal_um,n_nodes,n_edges\n",
    );
    for (s, graphs) in slides.iter().zip(&built) {
        for g in graphs {
            ws.write(&format!("graphs/{}.graph", g.key()), serialize_graph(g))?;
            let _ = writeln!(
                index,
                "{},{},{},{},{},{},{:?},{:?},{},{}",
                g.key(),
                g.slide_id,
                g.patient_id,
                g.diagnosis,
                g.object_type,
                g.level,
                s.roi_area_mm2,
                g.alpha_optimal_um,
                g.n_nodes(),
                g.n_edges()
            );
        }
    }
    ws.write("graphs/index.csv", index)
}

// ---- graph loading ----------------------------------------------------------------

struct IndexedGraph {
    graph: PathologyGraph,
    roi_area_mm2: f64,
}

/// Graphs listed in the index, optionally only patient-level ones of one type.
fn load_graphs(ws: &mut Workspace, filter: Option<ObjectType>) -> Result<Vec<IndexedGraph>, PipelineError> {
    let t = Table::parse("graphs/index.csv", &ws.read("graphs/index.csv")?)?;
    let (k, ty, lv, roi) = (t.col("key")?, t.col("object_type")?, t.col("level")?, t.col("roi_area_mm2")?);
    let mut out = Vec::new();
    for r in &t.rows {
        if let Some(want) = filter {
            if r[ty] != want.as_str() || r[lv] != GraphLevel::Patient.to_string() {
                continue;
            }
        }
        let graph = deserialize_graph(&ws.read(&format!("graphs/{}.graph", r[k]))?)?;
        out.push(IndexedGraph { graph, roi_area_mm2: t.num(r, roi)? });
    }
    Ok(out)
}

fn patient_graphs(ws: &mut Workspace, cfg: &RunConfig) -> Result<Vec<PathologyGraph>, PipelineError> {
    let gs: Vec<PathologyGraph> = load_graphs(ws, Some(cfg.object_type()?))?.into_iter().map(|g| g.graph).collect();
    if gs.is_empty() {
        return Err(data_err(format!("no patient-level {} graphs", cfg.object_type)));
    }
    Ok(gs)
}

fn all_patient_graphs(ws: &mut Workspace) -> Result<Vec<PathologyGraph>, PipelineError> {
    let mut gs: Vec<PathologyGraph> = load_graphs(ws, Some(ObjectType::Plaque))?.into_iter().map(|g| g.graph).collect();
    gs.extend(load_graphs(ws, Some(ObjectType::Tangle))?.into_iter().map(|g| g.graph));
    Ok(gs)
}

// ---- metrics / cluster --------------------------------------------------------------

fn metrics(ws: &mut Workspace) -> Result<(), PipelineError> {
    let graphs = load_graphs(ws, None)?;
    ws.reset_dir("metrics")?;
    let mut csv = String::from("key,slide_id,diagnosis,object_type,level");
    for c in GraphMetrics::COLUMNS {
        csv.push(',');
        csv.push_str(c);
    }
    csv.push('\n');
    let summaries: Vec<GraphMetrics> = graphs.par_iter().map(|g| graph_summary(&g.graph, g.roi_area_mm2)).collect();
    for (g, m) in graphs.iter().zip(&summaries) {
        let g = &g.graph;
        let _ = write!(csv, "{},{},{},{},{}", g.key(), g.slide_id, g.diagnosis, g.object_type, g.level);
        for v in m.values() {
            let _ = write!(csv, ",{v:?}");
        }
        csv.push('\n');
    }
    ws.write("metrics/graph_metrics.csv", csv)?;

    let patient: Vec<&PathologyGraph> =
        graphs.iter().map(|g| &g.graph).filter(|g| g.level == GraphLevel::Patient).collect();
    let tables: Vec<String> = patient
        .par_iter()
        .map(|g| {
            let f = node_features(g);
            let mut s = format!("node,record_id,{}\n", NODE_FEATURE_NAMES.join(","));
            for (i, n) in g.nodes.iter().enumerate() {
                let _ = write!(s, "{i},{}", n.record_id);
                for v in f.row(i) {
                    let _ = write!(s, ",{v:?}");
                }
                s.push('\n');
            }
            s
        })
        .collect();
    for (g, t) in patient.iter().zip(tables) {
        ws.write(&format!("metrics/nodes/{}.csv", g.key()), t)?;
    }
    Ok(())
}

fn stats_csv(rows: &[(&PathologyGraph, Vec<ClusterStats>)]) -> String {
    let mut s = format!("key,slide_id,object_type,diagnosis,cluster_id,{}\n", ClusterStats::FEATURES.join(","));
    for (g, stats) in rows {
        for c in stats {
            let _ = write!(s, "{},{},{},{},{}", g.key(), g.slide_id, g.object_type, g.diagnosis, c.cluster_id);
            for v in c.features() {
                let _ = write!(s, ",{v:?}");
            }
            s.push('\n');
        }
    }
    s
}

fn labels_csv(rows: &[(&PathologyGraph, Vec<usize>)]) -> String {
    let mut s = String::from("key,node,record_id,cluster\n");
    for (g, labels) in rows {
        for (i, (n, l)) in g.nodes.iter().zip(labels).enumerate() {
            let _ = writeln!(s, "{},{i},{},{l}", g.key(), n.record_id);
        }
    }
    s
}

fn cluster(ws: &mut Workspace, cfg: &RunConfig) -> Result<(), PipelineError> {
    let params = cfg.mcl_params()?;
    let graphs = all_patient_graphs(ws)?;
    let results: Vec<_> = graphs
        .par_iter()
        .map(|g| {
            let cc = connected_components(g);
            let mcl = markov_cluster(g, &params)?;
            if !mcl.converged {
                return Err(PipelineError::Numeric(format!(
                    "MCL did not converge on {} within {} iterations",
                    g.key(),
                    params.max_iters
                )));
            }
            Ok((cluster_stats(g, &cc)?, cc, cluster_stats(g, &mcl.assignment)?, mcl))
        })
        .collect::<Result<_, PipelineError>>()?;
    ws.reset_dir("clusters")?;
    let mut runs = String::from("key,n_components,n_mcl_clusters,iterations,max_stochasticity_error\n");
    for (g, (_, cc, _, m)) in graphs.iter().zip(&results) {
        let _ = writeln!(
            runs,
            "{},{},{},{},{:?}",
            g.key(),
            cc.n_clusters(),
            m.assignment.n_clusters(),
            m.iterations,
            m.max_stochasticity_error
        );
    }
    let pick = |f: &dyn Fn(&(Vec<ClusterStats>, _, Vec<ClusterStats>, _)) -> Vec<ClusterStats>| {
        graphs.iter().zip(&results).map(|(g, r)| (g, f(r))).collect::<Vec<_>>()
    };
    ws.write("clusters/stats_cc.csv", stats_csv(&pick(&|r| r.0.clone())))?;
    ws.write("clusters/stats_mcl.csv", stats_csv(&pick(&|r| r.2.clone())))?;
    let labels = |mcl: bool| -> Vec<(&PathologyGraph, Vec<usize>)> {
        graphs
            .iter()
            .zip(&results)
            .map(|(g, r)| (g, if mcl { r.3.assignment.labels.clone() } else { r.1.labels.clone() }))
            .collect()
    };
    ws.write("clusters/labels_cc.csv", labels_csv(&labels(false)))?;
    ws.write("clusters/labels_mcl.csv", labels_csv(&labels(true)))?;
    ws.write("clusters/mcl_runs.csv", runs)
}

// ---- random forest / shap -------------------------------------------------------------

/// Feature table for `rf.source` of the configured object type.
fn feature_table(ws: &mut Workspace, cfg: &RunConfig) -> Result<FeatureTable, PipelineError> {
    let ot = cfg.object_type()?;
    let (file, columns, kind): (String, Vec<String>, RowKind) = match cfg.rf.source.as_str() {
        "cc" | "mcl" => (
            format!("clusters/stats_{}.csv", cfg.rf.source),
            ClusterStats::FEATURES.iter().map(|s| s.to_string()).collect(),
            RowKind::Cluster,
        ),
        "graph" => (
            "metrics/graph_metrics.csv".into(),
            GraphMetrics::COLUMNS.iter().map(|s| s.to_string()).collect(),
            RowKind::Graph,
        ),
        s => return Err(PipelineError::Config(format!("rf.source `{s}` has no feature table"))),
    };
    let t = Table::parse(&file, &ws.read(&file)?)?;
    let (slide, diag, ty) = (t.col("slide_id")?, t.col("diagnosis")?, t.col("object_type")?);
    let level = if kind == RowKind::Graph { Some(t.col("level")?) } else { None };
    let cols: Vec<usize> = columns.iter().map(|c| t.col(c)).collect::<Result<_, _>>()?;
    let mut table = FeatureTable::new(columns);
    for r in &t.rows {
        if r[ty] != ot.as_str() || level.is_some_and(|l| r[l] != "patient") {
            continue;
        }
        let label: Diagnosis = r[diag].parse().map_err(|_| data_err(format!("{file}: bad diagnosis `{}`", r[diag])))?;
        table.push(FeatureRow {
            features: cols.iter().map(|&c| t.num(r, c)).collect::<Result<_, _>>()?,
            label,
            group_id: r[slide].clone(),
            row_kind: kind,
        })?;
    }
    if table.is_empty() {
        return Err(data_err(format!("{file}: no {} rows", ot)));
    }
    Ok(table)
}

fn table_csv(t: &FeatureTable) -> String {
    let mut s = format!("row,group,label,{}\n", t.columns.join(","));
    for (i, r) in t.rows.iter().enumerate() {
        let _ = write!(s, "{i},{},{}", r.group_id, r.label);
        for v in &r.features {
            let _ = write!(s, ",{v:?}");
        }
        s.push('\n');
    }
    s
}

fn parse_table_csv(text: &str) -> Result<FeatureTable, PipelineError> {
    let t = Table::parse("rf/table.csv", text)?;
    let (g, l) = (t.col("group")?, t.col("label")?);
    let mut table = FeatureTable::new(t.header[3..].to_vec());
    for r in &t.rows {
        table.push(FeatureRow {
            features: (3..t.header.len()).map(|c| t.num(r, c)).collect::<Result<_, _>>()?,
            label: r[l].parse().map_err(|_| data_err("rf/table.csv: bad label"))?,
            group_id: r[g].clone(),
            row_kind: RowKind::Cluster,
        })?;
    }
    Ok(table)
}

fn train_rf(ws: &mut Workspace, cfg: &RunConfig) -> Result<(), PipelineError> {
    let forest = cfg.forest();
    if cfg.rf.source == "embedding" {
        let graphs = patient_graphs(ws, cfg)?;
        let r = compare_embedding_rf(&graphs, &cfg.embedding_rf(), &cfg.gnn_config()?, &forest, cfg.seed)?;
        check_report_leakage(&graphs, &r).map_err(data_err)?;
        ws.reset_dir("rf")?;
        ws.write("rf/embedding_comparison.csv", r.to_csv())?;
        let summary = format!(
            "metric,value\nsource,embedding\ncomponent_row_accuracy,{:?}\nembedding_row_accuracy,{:?}\ncomponent_slide_accuracy,{:?}\nembedding_slide_accuracy,{:?}\n",
            r.components.row_accuracy(),
            r.embedding.row_accuracy(),
            r.components.slide_accuracy(),
            r.embedding.slide_accuracy()
        );
        return ws.write("rf/summary.csv", summary);
    }
    let table = feature_table(ws, cfg)?;
    let groups = table.groups();
    let labels = table.labels();
    let folds = grouped_kfold(&groups, &labels, cfg.rf.folds, cfg.seed)?;
    check_no_leakage(&groups, &folds).map_err(data_err)?;
    let cv = cross_validate(&table, &folds, &forest)?;
    let rfe = recursive_feature_elimination(&table, &RfeConfig { forest, folds: cfg.rf.folds, step: cfg.rf.rfe_step })?;
    check_no_leakage(&groups, &rfe.folds).map_err(data_err)?;
    let model = train_random_forest(&table, &forest)?;

    ws.reset_dir("rf")?;
    ws.write("rf/table.csv", table_csv(&table))?;
    ws.write("rf/model.json", model.to_text())?;
    let mut pred = String::from("row,group,label,fold,p_rpad,predicted\n");
    let mut fold_of = vec![0; table.len()];
    for (k, f) in folds.iter().enumerate() {
        for &i in &f.test {
            fold_of[i] = k;
        }
    }
    for (i, r) in table.rows.iter().enumerate() {
        let p = cv.oof[i];
        let _ = writeln!(
            pred,
            "{i},{},{},{},{:?},{}",
            r.group_id,
            r.label,
            fold_of[i],
            p[1],
            Diagnosis::from_class_index(predicted_class(&p))
        );
    }
    ws.write("rf/cv_predictions.csv", pred)?;
    let mut folds_txt = String::from("fold,group\n");
    for (k, f) in folds.iter().enumerate() {
        let mut gs: Vec<&String> = f.test.iter().map(|&i| &groups[i]).collect();
        gs.sort();
        gs.dedup();
        for g in gs {
            let _ = writeln!(folds_txt, "{k},{g}");
        }
    }
    ws.write("rf/folds.csv", folds_txt)?;
    let mut rfe_txt = String::from("n_features,cv_accuracy\n");
    for (n, a) in &rfe.accuracy_by_size {
        let _ = writeln!(rfe_txt, "{n},{a:?}");
    }
    ws.write("rf/rfe.csv", rfe_txt)?;
    let mut rank = String::from("rank,feature,in_best_subset\n");
    for (i, f) in rfe.ranking.iter().enumerate() {
        let _ = writeln!(rank, "{},{f},{}", i + 1, rfe.best_subset.contains(f));
    }
    ws.write("rf/ranking.csv", rank)?;
    let mut imp = String::from("feature,importance\n");
    for (f, v) in model.feature_names.iter().zip(&model.importances) {
        let _ = writeln!(imp, "{f},{v:?}");
    }
    ws.write("rf/importances.csv", imp)?;
    let n_groups = {
        let mut g = groups.clone();
        g.sort();
        g.dedup();
        g.len()
    };
    ws.write(
        "rf/summary.csv",
        format!(
            "metric,value\nsource,{}\nn_rows,{}\nn_groups,{n_groups}\nn_features,{}\ncv_accuracy,{:?}\n",
            cfg.rf.source,
            table.len(),
            table.n_features(),
            cv.accuracy
        ),
    )
}

fn shap(ws: &mut Workspace, cfg: &RunConfig) -> Result<(), PipelineError> {
    if !ws.exists("rf/model.json") {
        return Err(data_err("missing rf/model.json; run train-rf with rf.source cc, mcl or graph first"));
    }
    let model = RFModel::from_text(&ws.read("rf/model.json")?)?;
    let table = parse_table_csv(&ws.read("rf/table.csv")?)?;
    if table.columns != model.feature_names {
        return Err(data_err("rf/table.csv and rf/model.json disagree on features"));
    }
    let bg = background_rows(&table, Some(cfg.shap.background), cfg.seed);
    let stride = table.len().div_ceil(cfg.shap.max_rows).max(1);
    let picked: Vec<usize> = (0..table.len()).step_by(stride).collect();
    let attrs = picked
        .par_iter()
        .map(|&i| {
            let mode = if model.n_features <= MAX_EXACT_FEATURES {
                ShapleyMode::Exact
            } else {
                ShapleyMode::Sampled {
                    n_permutations: cfg.shap.permutations,
                    seed: util::derive_seed(cfg.seed, i as u64),
                }
            };
            shapley_attribution(&model, &bg, &table.rows[i].features, mode)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<Vec<f64>> = picked.iter().map(|&i| table.rows[i].features.clone()).collect();
    let preds = rf_predict(&model, &rows)?;
    ws.reset_dir("shap")?;
    let ids: Vec<String> = picked.iter().map(|i| i.to_string()).collect();
    ws.write("shap/attributions.csv", attribution_csv(&ids, &table.columns, &attrs))?;
    let mut per_row = String::from("row,group,label,base_value,prediction\n");
    for ((&i, a), p) in picked.iter().zip(&attrs).zip(&preds) {
        let r = &table.rows[i];
        let _ = writeln!(per_row, "{i},{},{},{:?},{:?}", r.group_id, r.label, a.base_value, p[1]);
    }
    ws.write("shap/rows.csv", per_row)?;
    let n = attrs.len() as f64;
    let mut summary = String::from("feature,mean_abs_phi,mean_phi\n");
    for (j, f) in table.columns.iter().enumerate() {
        let abs = attrs.iter().map(|a| a.phi[j].abs()).sum::<f64>() / n;
        let raw = attrs.iter().map(|a| a.phi[j]).sum::<f64>() / n;
        let _ = writeln!(summary, "{f},{abs:?},{raw:?}");
    }
    ws.write("shap/summary.csv", summary)
}

// ---- gnn / embed / explain ---------------------------------------------------------------

fn train_gnn(ws: &mut Workspace, cfg: &RunConfig) -> Result<(), PipelineError> {
    let graphs = patient_graphs(ws, cfg)?;
    let inputs: Vec<GraphInput> = graphs.iter().map(GraphInput::from_graph).collect();
    let groups: Vec<String> = graphs.iter().map(|g| g.slide_id.clone()).collect();
    let out = train(&inputs, &groups, &cfg.gnn_config()?)?;
    check_no_leakage(&groups, &out.splits).map_err(data_err)?;
    ws.reset_dir("gnn")?;
    ws.write("gnn/model.json", out.model.to_text())?;
    ws.write("gnn/folds.csv", folds_csv(&out.folds))?;
    ws.write("gnn/history.csv", out.model.history_csv())?;
    let mut splits = String::from("fold,slide_id,role\n");
    for (k, f) in out.splits.iter().enumerate() {
        for (role, idx) in [("train", &f.train), ("test", &f.test)] {
            for &i in idx {
                let _ = writeln!(splits, "{k},{},{role}", groups[i]);
            }
        }
    }
    ws.write("gnn/splits.csv", splits)?;
    let mut pred = String::from("key,slide_id,diagnosis,p_rpad\n");
    for (g, x) in graphs.iter().zip(&inputs) {
        let _ = writeln!(pred, "{},{},{},{:?}", g.key(), g.slide_id, g.diagnosis, out.model.predict_proba(x)?);
    }
    ws.write("gnn/predictions.csv", pred)?;
    ws.write("gnn/best_fold.csv", format!("best_fold\n{}\n", out.best_fold))
}

fn load_model(ws: &mut Workspace) -> Result<GnnModel, PipelineError> {
    Ok(GnnModel::from_text(&ws.read("gnn/model.json")?)?)
}

fn embed(ws: &mut Workspace, cfg: &RunConfig) -> Result<(), PipelineError> {
    let model = load_model(ws)?;
    let graphs = patient_graphs(ws, cfg)?;
    let embs = graphs.par_iter().map(|g| model.embed(&GraphInput::from_graph(g))).collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<Vec<f64>> = embs.iter().flat_map(|e| e.rows().into_iter().map(|r| r.to_vec())).collect();
    let (_, labels) = kmeans_fit(&rows, cfg.embed.n_clusters, cfg.embed.restarts, cfg.seed)?;
    let proj = pca(&rows, 2);
    ws.reset_dir("embed")?;
    let mut clusters = String::from("key,node,record_id,layer,cluster\n");
    let mut scatter = String::from("key,diagnosis,node,cluster,pc1,pc2\n");
    let mut comp = vec![[0usize; 2]; cfg.embed.n_clusters];
    let mut at = 0;
    for (g, e) in graphs.iter().zip(&embs) {
        let ids: Vec<String> = g.nodes.iter().map(|n| n.record_id.clone()).collect();
        ws.write(&format!("embed/nodes/{}.csv", g.key()), embeddings_csv(&ids, e))?;
        for (i, n) in g.nodes.iter().enumerate() {
            let c = labels[at];
            comp[c][g.diagnosis.class_index()] += 1;
            let _ = writeln!(clusters, "{},{i},{},{},{c}", g.key(), n.record_id, n.layer);
            let p = &proj.scores[at];
            let _ = writeln!(scatter, "{},{},{i},{c},{:?},{:?}", g.key(), g.diagnosis, p[0], p[1]);
            at += 1;
        }
    }
    ws.write("embed/clusters.csv", clusters)?;
    ws.write("embed/pca.csv", scatter)?;
    let mut var = String::from("component,explained_variance\n");
    for (i, v) in proj.explained.iter().enumerate() {
        let _ = writeln!(var, "pc{},{v:?}", i + 1);
    }
    ws.write("embed/pca_variance.csv", var)?;
    let mut c = String::from("cluster,n_cad,n_rpad\n");
    for (k, [a, b]) in comp.iter().enumerate() {
        let _ = writeln!(c, "{k},{a},{b}");
    }
    ws.write("embed/cluster_composition.csv", c)
}

fn explain(ws: &mut Workspace, cfg: &RunConfig) -> Result<(), PipelineError> {
    let model = load_model(ws)?;
    let graphs = patient_graphs(ws, cfg)?;
    let inputs: Vec<GraphInput> = graphs.iter().map(GraphInput::from_graph).collect();
    let refs: Vec<&GraphInput> = inputs.iter().collect();
    let gnnx = gnnx_explain_all(&model, &refs, &cfg.explain.gnnx)?;
    let (px, report) = pgx_train(&model, &refs, &cfg.explain.pgx)?;
    let pgx = refs.par_iter().map(|g| pgx_apply(&px, &model, g, g.label)).collect::<Result<Vec<_>, _>>()?;
    ws.reset_dir("explain")?;
    ws.write("explain/pgx.json", px.to_text())?;
    let mut training = String::from("epoch,mean_loss\n");
    for (e, l) in report.loss_history.iter().enumerate() {
        let _ = writeln!(training, "{e},{l:?}");
    }
    ws.write("explain/pgx_training.csv", training)?;
    let mut edges = String::from("key,method,edge,u,v,importance\n");
    let mut nodes = String::from("key,method,node,record_id,layer,importance\n");
    let mut losses = String::from("key,method,initial_loss,final_loss\n");
    for (name, results) in [("gnnx", &gnnx), ("pgx", &pgx)] {
        for ((g, x), r) in graphs.iter().zip(&inputs).zip(results.iter()) {
            prefix_rows(&mut edges, &edge_importance_csv(x, r), &format!("{},{name}", g.key()));
            prefix_rows(&mut nodes, &node_importance_csv(g, r), &format!("{},{name}", g.key()));
            let _ = writeln!(losses, "{},{name},{:?},{:?}", g.key(), r.initial_loss(), r.final_loss());
        }
        let pairs: Vec<(&PathologyGraph, &ExplanationResult)> = graphs.iter().zip(results.iter()).collect();
        ws.write(&format!("explain/layers_{name}.csv"), layer_importance(&pairs)?.to_csv())?;
    }
    ws.write("explain/edges.csv", edges)?;
    ws.write("explain/nodes.csv", nodes)?;
    ws.write("explain/losses.csv", losses)?;
    let mut agree = String::from("key,rho,degenerate\n");
    for ((g, a), b) in graphs.iter().zip(&gnnx).zip(&pgx) {
        let r = explainer_agreement(a, b)?;
        let _ = writeln!(agree, "{},{:?},{}", g.key(), r.rho, r.degenerate);
    }
    ws.write("explain/agreement.csv", agree)
}

/// Appends the data rows of `csv` to `out`, each prefixed with `prefix,`.
fn prefix_rows(out: &mut String, csv: &str, prefix: &str) {
    for line in csv.lines().skip(1) {
        let _ = writeln!(out, "{prefix},{line}");
    }
}

// ---- report --------------------------------------------------------------------------

fn report(ws: &mut Workspace, cfg: &RunConfig) -> Result<(), PipelineError> {
    let mut items: Vec<(String, String)> = Vec::new();
    let mut files: BTreeMap<String, String> = BTreeMap::new();
    let ot = cfg.object_type()?;

    if ws.exists("metrics/graph_metrics.csv") {
        let t = Table::parse("metrics/graph_metrics.csv", &ws.read("metrics/graph_metrics.csv")?)?;
        let (ty, lv) = (t.col("object_type")?, t.col("level")?);
        let rows: Vec<&Vec<String>> = t.rows.iter().filter(|r| r[ty] == ot.as_str() && r[lv] == "patient").collect();
        let cols: Vec<Vec<f64>> = GraphMetrics::COLUMNS
            .iter()
            .map(|c| {
                let j = t.col(c)?;
                rows.iter().map(|r| t.num(r, j)).collect()
            })
            .collect::<Result<_, PipelineError>>()?;
        let m = correlation_matrix(&cols);
        let mut csv = format!("metric,{}\n", GraphMetrics::COLUMNS.join(","));
        for (name, row) in GraphMetrics::COLUMNS.iter().zip(&m) {
            csv.push_str(name);
            for v in row {
                csv.push(',');
                if let Some(v) = v {
                    let _ = write!(csv, "{v:?}");
                }
            }
            csv.push('\n');
        }
        files.insert("report/correlation.csv".into(), csv);
        let labels: Vec<String> = GraphMetrics::COLUMNS.iter().map(|s| s.to_string()).collect();
        files.insert(
            "report/correlation.svg".into(),
            svg::heatmap(&format!("Graph metric correlation ({ot} graphs)"), &labels, &m),
        );
        items.push(("correlation_graphs".into(), rows.len().to_string()));
    }

    for method in ["gnnx", "pgx"] {
        let f = format!("explain/layers_{method}.csv");
        if !ws.exists(&f) {
            continue;
        }
        let t = Table::parse(&f, &ws.read(&f)?)?;
        let (d, l, nm) = (t.col("diagnosis")?, t.col("layer")?, t.col("node_mean")?);
        let cats: Vec<String> = (1..=6).map(|k| format!("L{k}")).collect();
        let series: Vec<(String, Vec<Option<f64>>)> = [Diagnosis::Cad, Diagnosis::Rpad]
            .iter()
            .map(|dx| {
                let v = (1..=6)
                    .map(|k| {
                        t.rows
                            .iter()
                            .find(|r| r[d] == dx.as_str() && r[l] == k.to_string())
                            .and_then(|r| r[nm].parse::<f64>().ok())
                    })
                    .collect();
                (dx.to_string(), v)
            })
            .collect();
        files.insert(
            format!("report/layer_importance_{method}.svg"),
            svg::bar_chart(
                &format!("Mean raw node importance by layer ({method}), not normalized per graph"),
                "importance",
                &cats,
                &series,
            ),
        );
        items.push((format!("layer_importance_{method}"), "written".into()));
    }

    if ws.exists("shap/summary.csv") {
        let t = Table::parse("shap/summary.csv", &ws.read("shap/summary.csv")?)?;
        let (f, a) = (t.col("feature")?, t.col("mean_abs_phi")?);
        let mut rows: Vec<(String, f64)> =
            t.rows.iter().map(|r| Ok((r[f].clone(), t.num(r, a)?))).collect::<Result<_, PipelineError>>()?;
        rows.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
        let cats: Vec<String> = rows.iter().map(|r| r.0.clone()).collect();
        let vals = rows.iter().map(|r| Some(r.1)).collect();
        files.insert(
            "report/shap_summary.svg".into(),
            svg::bar_chart(
                "Mean |Shapley value| per feature",
                "mean |phi|",
                &cats,
                &[("toward rpAD or cAD".into(), vals)],
            ),
        );
        items.push(("shap_top_feature".into(), cats.first().cloned().unwrap_or_default()));
    }

    if ws.exists("embed/pca.csv") {
        let t = Table::parse("embed/pca.csv", &ws.read("embed/pca.csv")?)?;
        let (c, x, y) = (t.col("cluster")?, t.col("pc1")?, t.col("pc2")?);
        let mut pts = Vec::with_capacity(t.rows.len());
        let mut k = 0;
        for r in &t.rows {
            let cl: usize = r[c].parse().map_err(|_| data_err("embed/pca.csv: bad cluster"))?;
            k = k.max(cl + 1);
            pts.push((t.num(r, x)?, t.num(r, y)?, cl));
        }
        let groups: Vec<String> = (0..k).map(|i| format!("cluster {i}")).collect();
        files.insert(
            "report/embedding_scatter.svg".into(),
            svg::scatter("Node embeddings, first two principal components", "PC1", "PC2", &pts, &groups),
        );
        items.push(("embedding_points".into(), pts.len().to_string()));
    }

    for (file, key) in [("rf/summary.csv", "rf"), ("gnn/folds.csv", "gnn")] {
        if !ws.exists(file) {
            continue;
        }
        let t = Table::parse(file, &ws.read(file)?)?;
        if key == "rf" {
            for r in &t.rows {
                items.push((format!("rf_{}", r[0]), r[1].clone()));
            }
        } else {
            let (a, s) = (t.col("val_accuracy")?, t.col("score")?);
            let accs: Vec<f64> = t.rows.iter().map(|r| t.num(r, a)).collect::<Result<_, _>>()?;
            let best = t.rows.iter().map(|r| t.num(r, s)).collect::<Result<Vec<_>, _>>()?;
            items.push(("gnn_mean_val_accuracy".into(), format!("{:?}", util::mean(&accs))));
            items.push((
                "gnn_best_score".into(),
                format!("{:?}", best.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
            ));
        }
    }
    if ws.exists("explain/agreement.csv") {
        let t = Table::parse("explain/agreement.csv", &ws.read("explain/agreement.csv")?)?;
        let j = t.col("rho")?;
        let rho: Vec<f64> = t.rows.iter().map(|r| t.num(r, j)).collect::<Result<_, _>>()?;
        items.push(("explainer_mean_spearman".into(), format!("{:?}", util::mean(&rho))));
    }

    if files.is_empty() {
        return Err(data_err("nothing to report; run metrics, shap, embed or explain first"));
    }
    ws.reset_dir("report")?;
    for (path, body) in &files {
        ws.write(path, body)?;
    }
    let mut summary = String::from("item,value\n");
    for (k, v) in items {
        let _ = writeln!(summary, "{k},{v}");
    }
    ws.write("report/summary.csv", summary)
}
