//! Two-class task with a known answer: class-1 slides hide a tight 5-point
//! motif among hard-core background points, class-0 slides hold background
//! only.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{layer_of, SynthError};
use crate::data::{AnnotationRecord, Cohort, Diagnosis, ObjectType, Provenance, SlideDataset};
use crate::util;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotifConfig {
    pub n_slides_per_class: usize,
    pub roi_width_um: f64,
    pub roi_height_um: f64,
    pub n_background: usize,
    pub motif_size: usize,
    /// Motif points fall in a disk of this radius, so every pair is within
    /// twice the radius.
    pub motif_radius_um: f64,
    /// Background points keep strictly more than this from every other point.
    pub min_background_gap_um: f64,
    pub seed: u64,
}

impl Default for MotifConfig {
    fn default() -> Self {
        Self {
            n_slides_per_class: 30,
            roi_width_um: 1000.0,
            roi_height_um: 1000.0,
            n_background: 50,
            motif_size: 5,
            motif_radius_um: 25.0,
            min_background_gap_um: 50.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotifTask {
    pub cohort: Cohort,
    /// Record ids of the planted motif per slide; empty for class 0.
    pub motif_ids: Vec<Vec<String>>,
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

fn slide(cfg: &MotifConfig, d: Diagnosis, index: usize, seed: u64) -> Result<(SlideDataset, Vec<String>), SynthError> {
    let mut rng = util::rng(seed, 0);
    let (w, h) = (cfg.roi_width_um, cfg.roi_height_um);
    let mut pts: Vec<(f64, f64)> = Vec::new();
    if d == Diagnosis::Rpad {
        let r = cfg.motif_radius_um;
        let cx = rng.random_range(r..w - r);
        let cy = rng.random_range(r..h - r);
        while pts.len() < cfg.motif_size {
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            let rad = r * rng.random_range(0.0f64..1.0).sqrt();
            pts.push((cx + rad * a.cos(), cy + rad * a.sin()));
        }
    }
    let n_motif = pts.len();
    let gap2 = cfg.min_background_gap_um.powi(2);
    let mut attempts = 0usize;
    while pts.len() < n_motif + cfg.n_background {
        attempts += 1;
        if attempts > 200_000 {
            return Err(SynthError::BadConfig("cannot place background points with the requested gap".into()));
        }
        let p = (rng.random_range(0.0..w), rng.random_range(0.0..h));
        if pts.iter().all(|&q| dist2(p, q) > gap2) {
            pts.push(p);
        }
    }
    let slide_id = format!("motif_{}_{index:03}", d.as_str());
    let records: Vec<AnnotationRecord> = pts
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| AnnotationRecord {
            id: format!("o{i:04}"),
            slide_id: slide_id.clone(),
            object_type: ObjectType::Plaque,
            x_um: x,
            y_um: y,
            area_um2: 500.0,
            layer: layer_of(y, h, 6),
        })
        .collect();
    let motif = records[..n_motif].iter().map(|r| r.id.clone()).collect();
    Ok((
        SlideDataset {
            patient_id: format!("P{slide_id}"),
            slide_id,
            diagnosis: d,
            roi_polygon: vec![(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)],
            roi_area_mm2: w * h / 1e6,
            resolution_nm_per_px: 227.0,
            records,
        },
        motif,
    ))
}

/// Class 1 is labeled rpAD and class 0 cAD.
pub fn planted_motif_task(cfg: &MotifConfig) -> Result<MotifTask, SynthError> {
    if cfg.motif_size < 2 || !(cfg.motif_radius_um > 0.0) {
        return Err(SynthError::BadConfig("motif needs ≥ 2 points and a positive radius".into()));
    }
    if 2.0 * cfg.motif_radius_um > cfg.min_background_gap_um {
        return Err(SynthError::BadConfig("motif diameter exceeds the background gap".into()));
    }
    if !(cfg.roi_width_um > 2.0 * cfg.motif_radius_um && cfg.roi_height_um > 2.0 * cfg.motif_radius_um) {
        return Err(SynthError::BadConfig("ROI too small for the motif".into()));
    }
    let mut slides = Vec::new();
    let mut motif_ids = Vec::new();
    let mut j = 0u64;
    for d in [Diagnosis::Cad, Diagnosis::Rpad] {
        for i in 0..cfg.n_slides_per_class {
            let (s, m) = slide(cfg, d, i, util::derive_seed(cfg.seed, j))?;
            j += 1;
            slides.push(s);
            motif_ids.push(m);
        }
    }
    Ok(MotifTask { cohort: Cohort { slides, provenance: Provenance::Synthetic, seed: Some(cfg.seed) }, motif_ids })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::build_pathology_graph;

    fn close_pairs(s: &SlideDataset, within: f64) -> Vec<(usize, usize)> {
        let p: Vec<(f64, f64)> = s.records.iter().map(|r| (r.x_um, r.y_um)).collect();
        let mut out = Vec::new();
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                if dist2(p[i], p[j]) <= within * within {
                    out.push((i, j));
                }
            }
        }
        out
    }

    #[test]
    fn motif_is_a_clique_and_background_is_sparse() {
        let t = planted_motif_task(&MotifConfig { n_slides_per_class: 10, ..Default::default() }).unwrap();
        for (s, m) in t.cohort.slides.iter().zip(&t.motif_ids) {
            let pairs = close_pairs(s, 50.0);
            match s.diagnosis {
                Diagnosis::Cad => {
                    assert!(m.is_empty());
                    assert!(pairs.is_empty());
                }
                Diagnosis::Rpad => {
                    assert_eq!(m.len(), 5);
                    // Exactly the 10 motif pairs are within 50 μm.
                    assert_eq!(pairs.len(), 10);
                    assert!(pairs.iter().all(|&(i, j)| i < 5 && j < 5));
                }
            }
        }
    }

    #[test]
    fn motif_edges_survive_erosion() {
        let t = planted_motif_task(&MotifConfig { n_slides_per_class: 10, seed: 2, ..Default::default() }).unwrap();
        for (s, m) in t.cohort.slides.iter().zip(&t.motif_ids).filter(|(s, _)| s.diagnosis == Diagnosis::Rpad) {
            let g = build_pathology_graph(s, ObjectType::Plaque).unwrap();
            assert!(g.alpha_optimal_um >= 50.0, "α_opt {}", g.alpha_optimal_um);
            let in_motif = |i: usize| m.contains(&g.nodes[i].record_id);
            let pts: Vec<(f64, f64)> = g.nodes.iter().map(|n| (n.x_um, n.y_um)).collect();
            let mut before: Vec<(usize, usize)> = crate::spatial::delaunay(&pts)
                .unwrap()
                .into_iter()
                .filter(|&(u, v)| in_motif(u) && in_motif(v))
                .collect();
            let mut after: Vec<(usize, usize)> = g
                .edges
                .iter()
                .filter(|e| in_motif(e.u) && in_motif(e.v))
                .map(|e| (e.u.min(e.v), e.u.max(e.v)))
                .collect();
            before.iter_mut().for_each(|e| *e = (e.0.min(e.1), e.0.max(e.1)));
            before.sort_unstable();
            after.sort_unstable();
            assert_eq!(before, after);
            // Nearest neighbors stay inside the motif, so it stays connected.
            assert!(after.len() >= 4);
        }
    }

    #[test]
    fn deterministic() {
        let c = MotifConfig { n_slides_per_class: 3, seed: 9, ..Default::default() };
        assert_eq!(planted_motif_task(&c).unwrap(), planted_motif_task(&c).unwrap());
    }

    #[test]
    fn impossible_gap_rejected() {
        let c = MotifConfig { n_background: 5000, ..Default::default() };
        assert!(planted_motif_task(&c).is_err());
    }
}
