use crate::clustering::ClusterStats;
use crate::data::Diagnosis;
use crate::metrics::GraphMetrics;

use super::TabularError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Cluster,
    Graph,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub features: Vec<f64>,
    pub label: Diagnosis,
    /// Slide the row came from; rows sharing it never straddle a CV split.
    pub group_id: String,
    pub row_kind: RowKind,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTable {
    pub columns: Vec<String>,
    pub rows: Vec<FeatureRow>,
}

impl FeatureTable {
    pub fn new(columns: Vec<String>) -> Self {
        Self { columns, rows: Vec::new() }
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: FeatureRow) -> Result<(), TabularError> {
        if row.features.len() != self.columns.len() {
            return Err(TabularError::SchemaMismatch(format!(
                "row has {} features, table has {} columns",
                row.features.len(),
                self.columns.len()
            )));
        }
        if row.features.iter().any(|v| !v.is_finite()) {
            return Err(TabularError::SchemaMismatch("non-finite feature value".into()));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn labels(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.label.class_index()).collect()
    }

    pub fn groups(&self) -> Vec<String> {
        self.rows.iter().map(|r| r.group_id.clone()).collect()
    }

    pub fn subset_rows(&self, idx: &[usize]) -> FeatureTable {
        FeatureTable { columns: self.columns.clone(), rows: idx.iter().map(|&i| self.rows[i].clone()).collect() }
    }

    pub fn subset_columns(&self, cols: &[usize]) -> FeatureTable {
        FeatureTable {
            columns: cols.iter().map(|&c| self.columns[c].clone()).collect(),
            rows: self
                .rows
                .iter()
                .map(|r| FeatureRow { features: cols.iter().map(|&c| r.features[c]).collect(), ..r.clone() })
                .collect(),
        }
    }

    /// Appends columns computed per row (e.g. embedding summaries).
    pub fn with_extra_columns(&self, names: &[String], extra: &[Vec<f64>]) -> Result<FeatureTable, TabularError> {
        if extra.len() != self.rows.len() || extra.iter().any(|e| e.len() != names.len()) {
            return Err(TabularError::SchemaMismatch("extra columns misaligned".into()));
        }
        let mut columns = self.columns.clone();
        columns.extend(names.iter().cloned());
        let rows = self
            .rows
            .iter()
            .zip(extra)
            .map(|(r, e)| {
                let mut features = r.features.clone();
                features.extend_from_slice(e);
                FeatureRow { features, ..r.clone() }
            })
            .collect();
        Ok(FeatureTable { columns, rows })
    }
}

/// One input to [`assemble_features`].
#[derive(Debug, Clone)]
pub enum FeatureSource<'a> {
    Clusters { stats: &'a [ClusterStats], diagnosis: Diagnosis },
    Graph { metrics: &'a GraphMetrics, slide_id: &'a str, diagnosis: Diagnosis },
}

impl FeatureSource<'_> {
    fn columns(&self) -> Vec<String> {
        match self {
            FeatureSource::Clusters { .. } => ClusterStats::FEATURES.iter().map(|s| s.to_string()).collect(),
            FeatureSource::Graph { .. } => GraphMetrics::COLUMNS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// One row per cluster (and per graph, when graph sources are given).
/// Every source must share the column schema of the first one.
pub fn assemble_features(sources: &[FeatureSource<'_>]) -> Result<FeatureTable, TabularError> {
    let Some(first) = sources.first() else {
        return Ok(FeatureTable::default());
    };
    let mut table = FeatureTable::new(first.columns());
    for src in sources {
        if src.columns() != table.columns {
            return Err(TabularError::SchemaMismatch("sources disagree on feature columns".into()));
        }
        match src {
            FeatureSource::Clusters { stats, diagnosis } => {
                for s in stats.iter() {
                    table.push(FeatureRow {
                        features: s.features().to_vec(),
                        label: *diagnosis,
                        group_id: s.slide_id.clone(),
                        row_kind: RowKind::Cluster,
                    })?;
                }
            }
            FeatureSource::Graph { metrics, slide_id, diagnosis } => table.push(FeatureRow {
                features: metrics.values().to_vec(),
                label: *diagnosis,
                group_id: slide_id.to_string(),
                row_kind: RowKind::Graph,
            })?,
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ObjectType;
    use crate::metrics::graph_summary;

    fn stats(slide: &str, n: usize) -> Vec<ClusterStats> {
        (0..n)
            .map(|i| ClusterStats {
                cluster_id: i,
                size: i + 1,
                n_edges: i,
                total_edge_length_um: 10.0 * i as f64,
                mean_edge_length_um: 10.0,
                bbox_area_mm2: 0.01,
                density: 0.5,
                slide_id: slide.into(),
                object_type: ObjectType::Plaque,
            })
            .collect()
    }

    #[test]
    fn rows_and_groups() {
        let a = stats("A", 3);
        let b = stats("B", 2);
        let t = assemble_features(&[
            FeatureSource::Clusters { stats: &a, diagnosis: Diagnosis::Cad },
            FeatureSource::Clusters { stats: &b, diagnosis: Diagnosis::Rpad },
        ])
        .unwrap();
        assert_eq!(t.len(), 5);
        assert_eq!(t.groups(), ["A", "A", "A", "B", "B"]);
        assert_eq!(t.labels(), [0, 0, 0, 1, 1]);
        assert_eq!(t.n_features(), 6);
    }

    #[test]
    fn mixed_schemas_rejected() {
        let a = stats("A", 1);
        let g = crate::spatial::PathologyGraph {
            slide_id: "A".into(),
            patient_id: "P".into(),
            diagnosis: Diagnosis::Cad,
            object_type: ObjectType::Plaque,
            level: crate::spatial::GraphLevel::Patient,
            alpha_optimal_um: 1.0,
            nodes: vec![],
            edges: vec![],
        };
        let m = graph_summary(&g, 1.0);
        let err = assemble_features(&[
            FeatureSource::Clusters { stats: &a, diagnosis: Diagnosis::Cad },
            FeatureSource::Graph { metrics: &m, slide_id: "A", diagnosis: Diagnosis::Cad },
        ]);
        assert!(matches!(err, Err(TabularError::SchemaMismatch(_))));
    }

    #[test]
    fn empty_input() {
        assert!(assemble_features(&[]).unwrap().is_empty());
    }
}
