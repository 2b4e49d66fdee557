use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::clustering::MclParams;
use crate::data::ObjectType;
use crate::explain::{GnnxConfig, PgxConfig};
use crate::gnn::{Arch, GnnConfig, Head, Optimizer, EMBEDDING_DIM};
use crate::metrics::NODE_FEATURE_DIM;
use crate::synth::SynthConfig;
use crate::tabular::RfConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MclSection {
    pub expansion: u32,
    pub inflation: f64,
    pub tolerance: f64,
    pub max_iters: usize,
}

impl Default for MclSection {
    fn default() -> Self {
        let p = MclParams::default();
        Self { expansion: p.expansion, inflation: p.inflation, tolerance: p.tolerance, max_iters: p.max_iters }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RfSection {
    /// `cc`, `mcl`, `graph` or `embedding`.
    pub source: String,
    pub n_trees: usize,
    /// 0 grows trees without a depth limit.
    pub max_depth: usize,
    pub min_leaf: usize,
    pub folds: usize,
    pub rfe_step: usize,
}

impl Default for RfSection {
    fn default() -> Self {
        Self { source: "cc".into(), n_trees: 200, max_depth: 0, min_leaf: 1, folds: 5, rfe_step: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapSection {
    pub background: usize,
    /// Rows explained, taken at an even stride through the table.
    pub max_rows: usize,
    /// Permutations per row when there are too many features for exact mode.
    pub permutations: usize,
}

impl Default for ShapSection {
    fn default() -> Self {
        Self { background: 50, max_rows: 200, permutations: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GnnSection {
    /// `gcn`, `sage`, `wsage`, `cheb<K>` or `gat<heads>`.
    pub arch: String,
    /// `graph_mean_pool` or `node_level`.
    pub head: String,
    /// Hidden widths between the input and the 12-d embedding.
    pub hidden: Vec<usize>,
    /// `adam` or `sgd`.
    pub optimizer: String,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub kfold_k: usize,
    pub score_lambda: f64,
}

impl Default for GnnSection {
    fn default() -> Self {
        let g = GnnConfig::default();
        Self {
            arch: "gcn".into(),
            head: "graph_mean_pool".into(),
            hidden: g.layer_dims[1..g.layer_dims.len() - 1].to_vec(),
            optimizer: "adam".into(),
            learning_rate: g.learning_rate,
            max_epochs: g.max_epochs,
            patience: g.patience,
            kfold_k: g.kfold_k,
            score_lambda: g.score_lambda,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSection {
    pub gnnx: GnnxConfig,
    pub pgx: PgxConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedSection {
    pub n_clusters: usize,
    pub restarts: usize,
    /// Outer folds of the embedding-cluster forest comparison.
    pub outer_k: usize,
}

impl Default for EmbedSection {
    fn default() -> Self {
        let e = super::EmbeddingRfConfig::default();
        Self { n_clusters: e.n_clusters, restarts: e.restarts, outer_k: e.outer_k }
    }
}

/// One run's configuration. `seed` drives every random stream; section
/// seeds are overwritten by it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Object type the models are trained on.
    pub object_type: String,
    pub synth: SynthConfig,
    pub mcl: MclSection,
    pub rf: RfSection,
    pub shap: ShapSection,
    pub gnn: GnnSection,
    pub explain: ExplainSection,
    pub embed: EmbedSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            object_type: "plaque".into(),
            synth: SynthConfig::default(),
            mcl: MclSection::default(),
            rf: RfSection::default(),
            shap: ShapSection::default(),
            gnn: GnnSection::default(),
            explain: ExplainSection::default(),
            embed: EmbedSection::default(),
        }
    }
}

fn config_err(m: impl Into<String>) -> PipelineError {
    PipelineError::Config(m.into())
}

/// `--set` value: any TOML literal, otherwise a bare string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<(), PipelineError> {
    let (key, raw) =
        assignment.split_once('=').ok_or_else(|| config_err(format!("--set expects key=value, got `{assignment}`")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(config_err(format!("bad key `{key}`")));
    }
    let mut table = root;
    for p in &parts[..parts.len() - 1] {
        let entry = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| config_err(format!("`{p}` in `{key}` is not a section")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl RunConfig {
    /// Config file (if any), then `--set` overrides in order, then `--seed`.
    pub fn load(
        path: Option<&Path>,
        overrides: &[String],
        seed: Option<u64>,
    ) -> Result<(Self, Option<String>), PipelineError> {
        let text = match path {
            Some(p) => Some(std::fs::read_to_string(p).map_err(|e| config_err(format!("{}: {e}", p.display())))?),
            None => None,
        };
        let mut table = match &text {
            Some(t) => t.parse::<toml::Table>().map_err(|e| config_err(e.to_string()))?,
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg = RunConfig::deserialize(toml::Value::Table(table)).map_err(|e| config_err(e.to_string()))?;
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.synth.seed = cfg.seed;
        cfg.explain.pgx.seed = cfg.seed;
        cfg.validate()?;
        Ok((cfg, text))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.object_type()?;
        self.synth.validate()?;
        self.mcl_params()?;
        if !["cc", "mcl", "graph", "embedding"].contains(&self.rf.source.as_str()) {
            return Err(config_err(format!("rf.source must be cc, mcl, graph or embedding, got `{}`", self.rf.source)));
        }
        if self.rf.n_trees == 0 || self.rf.min_leaf == 0 || self.rf.rfe_step == 0 {
            return Err(config_err("rf.n_trees, rf.min_leaf and rf.rfe_step must be positive"));
        }
        if self.rf.folds < 2 {
            return Err(config_err("rf.folds must be at least 2"));
        }
        if self.shap.background == 0 || self.shap.max_rows == 0 || self.shap.permutations == 0 {
            return Err(config_err("shap sizes must be positive"));
        }
        self.gnn_config()?.validate()?;
        if self.gnn.kfold_k < 2 || self.embed.outer_k < 2 {
            return Err(config_err("gnn.kfold_k and embed.outer_k must be at least 2"));
        }
        if self.embed.n_clusters == 0 || self.embed.restarts == 0 {
            return Err(config_err("embed.n_clusters and embed.restarts must be positive"));
        }
        for (name, lr, ls, le) in [
            ("gnnx", self.explain.gnnx.learning_rate, self.explain.gnnx.lambda_size, self.explain.gnnx.lambda_ent),
            ("pgx", self.explain.pgx.learning_rate, self.explain.pgx.lambda_size, self.explain.pgx.lambda_ent),
        ] {
            if !(lr > 0.0 && lr.is_finite() && ls >= 0.0 && ls.is_finite() && le >= 0.0 && le.is_finite()) {
                return Err(config_err(format!("explain.{name}: rates must be positive and penalties non-negative")));
            }
        }
        if self.explain.pgx.hidden == 0 {
            return Err(config_err("explain.pgx.hidden must be positive"));
        }
        Ok(())
    }

    pub fn object_type(&self) -> Result<ObjectType, PipelineError> {
        self.object_type
            .parse()
            .map_err(|_| config_err(format!("object_type must be plaque or tangle, got `{}`", self.object_type)))
    }

    pub fn mcl_params(&self) -> Result<MclParams, PipelineError> {
        let m = &self.mcl;
        if m.expansion < 2 || !(m.inflation > 1.0) || !(m.tolerance > 0.0) || m.max_iters == 0 {
            return Err(config_err("mcl: expansion >= 2, inflation > 1, tolerance > 0, max_iters > 0"));
        }
        Ok(MclParams { expansion: m.expansion, inflation: m.inflation, tolerance: m.tolerance, max_iters: m.max_iters })
    }

    pub fn forest(&self) -> RfConfig {
        RfConfig {
            n_trees: self.rf.n_trees,
            max_depth: (self.rf.max_depth > 0).then_some(self.rf.max_depth),
            min_leaf: self.rf.min_leaf,
            seed: self.seed,
        }
    }

    pub fn gnn_config(&self) -> Result<GnnConfig, PipelineError> {
        let g = &self.gnn;
        let arch: Arch = g.arch.parse().map_err(config_err)?;
        let head = match g.head.as_str() {
            "graph_mean_pool" => Head::GraphMeanPool,
            "node_level" => Head::NodeLevel,
            h => return Err(config_err(format!("gnn.head must be graph_mean_pool or node_level, got `{h}`"))),
        };
        let optimizer = match g.optimizer.as_str() {
            "adam" => Optimizer::Adam,
            "sgd" => Optimizer::Sgd,
            o => return Err(config_err(format!("gnn.optimizer must be adam or sgd, got `{o}`"))),
        };
        let mut layer_dims = vec![NODE_FEATURE_DIM];
        layer_dims.extend(&g.hidden);
        layer_dims.push(EMBEDDING_DIM);
        Ok(GnnConfig {
            arch,
            layer_dims,
            head,
            optimizer,
            learning_rate: g.learning_rate,
            max_epochs: g.max_epochs,
            patience: g.patience,
            kfold_k: g.kfold_k,
            score_lambda: g.score_lambda,
            seed: self.seed,
        })
    }

    pub fn embedding_rf(&self) -> super::EmbeddingRfConfig {
        super::EmbeddingRfConfig {
            outer_k: self.embed.outer_k,
            n_clusters: self.embed.n_clusters,
            restarts: self.embed.restarts,
        }
    }
}
