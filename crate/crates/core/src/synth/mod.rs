//! Synthetic labeled cohorts: a Thomas cluster process per cortical band,
//! with class-specific band intensities and cluster spread.

mod motif;

use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    write_annotations, write_metadata, AnnotationRecord, Cohort, Diagnosis, Layer, ObjectType, Provenance, SlideDataset,
};
use crate::util::{self, Rng};

pub use motif::{planted_motif_task, MotifConfig, MotifTask};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("bad synthetic config: {0}")]
    BadConfig(String),
    #[error("io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassProfile {
    /// Per-band multiplier on the parent rate, band 1 first.
    pub band_multipliers: Vec<f64>,
    /// Offspring spread around each parent, μm.
    pub sigma_um: f64,
}

impl Default for ClassProfile {
    fn default() -> Self {
        Self { band_multipliers: vec![1.0; 6], sigma_um: 80.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_slides_per_class: usize,
    pub roi_width_um: f64,
    pub roi_height_um: f64,
    /// Equal horizontal bands stacked along y; band k is cortical layer k.
    pub n_bands: usize,
    /// Plaque parents per mm² at multiplier 1.
    pub parent_rate_per_mm2: f64,
    pub offspring_per_parent: f64,
    /// Tangle rate relative to plaques.
    pub tangle_rate_scale: f64,
    pub cad: ClassProfile,
    pub rpad: ClassProfile,
    pub resolution_nm_per_px: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_slides_per_class: 20,
            roi_width_um: 4000.0,
            roi_height_um: 4000.0,
            n_bands: 6,
            parent_rate_per_mm2: 2.0,
            offspring_per_parent: 8.0,
            tangle_rate_scale: 0.5,
            cad: ClassProfile { band_multipliers: vec![1.0, 3.0, 1.0, 1.0, 3.0, 3.0], sigma_um: 120.0 },
            rpad: ClassProfile { band_multipliers: vec![1.0, 1.0, 3.0, 3.0, 1.0, 1.0], sigma_um: 40.0 },
            resolution_nm_per_px: 227.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn profile(&self, d: Diagnosis) -> &ClassProfile {
        match d {
            Diagnosis::Cad => &self.cad,
            Diagnosis::Rpad => &self.rpad,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::BadConfig(m));
        if !(1..=6).contains(&self.n_bands) {
            return bad(format!("n_bands must be 1..=6, got {}", self.n_bands));
        }
        if !(self.roi_width_um > 0.0 && self.roi_height_um > 0.0)
            || !self.roi_width_um.is_finite()
            || !self.roi_height_um.is_finite()
        {
            return bad("ROI dimensions must be positive".into());
        }
        for (name, v) in [
            ("parent_rate_per_mm2", self.parent_rate_per_mm2),
            ("offspring_per_parent", self.offspring_per_parent),
            ("tangle_rate_scale", self.tangle_rate_scale),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a finite non-negative number"));
            }
        }
        if !(self.resolution_nm_per_px > 0.0) {
            return bad("resolution must be positive".into());
        }
        for (name, p) in [("cad", &self.cad), ("rpad", &self.rpad)] {
            if p.band_multipliers.len() != self.n_bands {
                return bad(format!("{name}: {} multipliers for {} bands", p.band_multipliers.len(), self.n_bands));
            }
            if p.band_multipliers.iter().any(|m| !(*m >= 0.0 && m.is_finite())) {
                return bad(format!("{name}: multipliers must be non-negative"));
            }
            if !(p.sigma_um > 0.0 && p.sigma_um.is_finite()) {
                return bad(format!("{name}: sigma must be positive"));
            }
        }
        Ok(())
    }

    pub fn band_height_um(&self) -> f64 {
        self.roi_height_um / self.n_bands as f64
    }

    /// Expected objects of one type in band `k` (0-based) of one slide.
    pub fn expected_band_count(&self, d: Diagnosis, object_type: ObjectType, k: usize) -> f64 {
        let area_mm2 = self.roi_width_um * self.band_height_um() / 1e6;
        let scale = match object_type {
            ObjectType::Plaque => 1.0,
            ObjectType::Tangle => self.tangle_rate_scale,
        };
        self.parent_rate_per_mm2 * scale * area_mm2 * self.profile(d).band_multipliers[k] * self.offspring_per_parent
    }
}

pub fn layer_of(y_um: f64, roi_height_um: f64, n_bands: usize) -> Layer {
    let h = roi_height_um / n_bands as f64;
    let k = ((y_um / h).floor() as isize).clamp(0, n_bands as isize - 1) as u8;
    Layer::Cortical(k + 1)
}

fn poisson(rng: &mut Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as usize
}

/// Offspring are drawn from the Gaussian around the parent conditioned on
/// the parent's band, so band expectations match the configured rates.
fn offspring(rng: &mut Rng, px: f64, py: f64, sigma: f64, w: f64, y0: f64, y1: f64) -> (f64, f64) {
    let n = Normal::new(0.0, sigma).expect("positive sigma");
    for _ in 0..10_000 {
        let x = px + n.sample(rng);
        let y = py + n.sample(rng);
        if (0.0..=w).contains(&x) && y >= y0 && y < y1 {
            return (x, y);
        }
    }
    (px, py)
}

fn generate_slide(cfg: &SynthConfig, d: Diagnosis, index: usize, seed: u64) -> SlideDataset {
    let mut rng = util::rng(seed, 0);
    let slide_id = format!("{}_{index:03}", d.as_str());
    let h = cfg.band_height_um();
    let profile = cfg.profile(d);
    let mut records = Vec::new();
    for (object_type, scale, prefix) in
        [(ObjectType::Plaque, 1.0, 'p'), (ObjectType::Tangle, cfg.tangle_rate_scale, 't')]
    {
        let mut count = 0usize;
        for (k, &mult) in profile.band_multipliers.iter().enumerate() {
            let (y0, y1) = (k as f64 * h, (k + 1) as f64 * h);
            let area_mm2 = cfg.roi_width_um * h / 1e6;
            let n_parents = poisson(&mut rng, cfg.parent_rate_per_mm2 * scale * mult * area_mm2);
            for _ in 0..n_parents {
                let px = rng.random_range(0.0..cfg.roi_width_um);
                let py = rng.random_range(y0..y1);
                for _ in 0..poisson(&mut rng, cfg.offspring_per_parent) {
                    let (x, y) = offspring(&mut rng, px, py, profile.sigma_um, cfg.roi_width_um, y0, y1);
                    let area_um2 = match object_type {
                        ObjectType::Plaque => rng.random_range(200.0..1200.0),
                        ObjectType::Tangle => rng.random_range(40.0..200.0),
                    };
                    records.push(AnnotationRecord {
                        id: format!("{prefix}{count:05}"),
                        slide_id: slide_id.clone(),
                        object_type,
                        x_um: x,
                        y_um: y,
                        area_um2,
                        layer: Layer::Cortical(k as u8 + 1),
                    });
                    count += 1;
                }
            }
        }
    }
    let (w, ht) = (cfg.roi_width_um, cfg.roi_height_um);
    SlideDataset {
        patient_id: format!("P{}", slide_id),
        slide_id,
        diagnosis: d,
        roi_polygon: vec![(0.0, 0.0), (w, 0.0), (w, ht), (0.0, ht)],
        roi_area_mm2: w * ht / 1e6,
        resolution_nm_per_px: cfg.resolution_nm_per_px,
        records,
    }
}

/// cAD slides first, then rpAD; each slide has its own derived seed.
pub fn generate_cohort(cfg: &SynthConfig) -> Result<Cohort, SynthError> {
    cfg.validate()?;
    let jobs: Vec<(Diagnosis, usize)> = [Diagnosis::Cad, Diagnosis::Rpad]
        .iter()
        .flat_map(|&d| (0..cfg.n_slides_per_class).map(move |i| (d, i)))
        .collect();
    let slides = jobs
        .par_iter()
        .enumerate()
        .map(|(j, &(d, i))| generate_slide(cfg, d, i, util::derive_seed(cfg.seed, j as u64)))
        .collect();
    Ok(Cohort { slides, provenance: Provenance::Synthetic, seed: Some(cfg.seed) })
}

/// Writes `<slide>.csv` and `<slide>.meta` per slide; returns written paths.
pub fn write_cohort(c: &Cohort, dir: &Path) -> Result<Vec<std::path::PathBuf>, SynthError> {
    let io = |e: std::io::Error| SynthError::Io(e.to_string());
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut out = Vec::new();
    for s in &c.slides {
        let a = dir.join(format!("{}.csv", s.slide_id));
        let m = dir.join(format!("{}.meta", s.slide_id));
        std::fs::write(&a, write_annotations(s)).map_err(io)?;
        std::fs::write(&m, write_metadata(s)).map_err(io)?;
        out.push(a);
        out.push(m);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::validate_dataset;
    use crate::spatial::{build_pathology_graph, SpatialError};

    #[test]
    fn deterministic_per_seed() {
        let cfg = SynthConfig { n_slides_per_class: 2, seed: 5, ..Default::default() };
        let a = generate_cohort(&cfg).unwrap();
        let b = generate_cohort(&cfg).unwrap();
        assert_eq!(a, b);
        let bytes = |c: &Cohort| c.slides.iter().map(|s| write_annotations(s) + &write_metadata(s)).collect::<String>();
        assert_eq!(bytes(&a), bytes(&b));
        let c = generate_cohort(&SynthConfig { seed: 6, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn points_inside_and_layers_match_bands() {
        let cfg = SynthConfig { n_slides_per_class: 2, ..Default::default() };
        for s in generate_cohort(&cfg).unwrap().slides {
            assert!(validate_dataset(&s).is_empty());
            for r in &s.records {
                assert_eq!(r.layer, layer_of(r.y_um, cfg.roi_height_um, cfg.n_bands));
            }
            let n = s.count(ObjectType::Plaque);
            assert!((250..=900).contains(&n), "{n} plaques");
        }
    }

    #[test]
    fn rpad_middle_band_ratio() {
        let cfg = SynthConfig { n_slides_per_class: 20, seed: 11, ..Default::default() };
        let cohort = generate_cohort(&cfg).unwrap();
        let (mut mid, mut rest) = (0.0, 0.0);
        for s in cohort.slides.iter().filter(|s| s.diagnosis == Diagnosis::Rpad) {
            for r in s.records.iter().filter(|r| r.object_type == ObjectType::Plaque) {
                match r.layer {
                    Layer::Cortical(3 | 4) => mid += 1.0,
                    _ => rest += 1.0,
                }
            }
        }
        let m = &cfg.rpad.band_multipliers;
        let expected = (m[2] + m[3]) / (m[0] + m[1] + m[4] + m[5]);
        let ratio = mid / rest;
        assert!((ratio / expected - 1.0).abs() <= 0.2, "{ratio} vs {expected}");
    }

    #[test]
    fn per_band_counts_match_expectation() {
        // Cluster counts are overdispersed; 200 slides put ±20% beyond 4 SE.
        let cfg = SynthConfig { n_slides_per_class: 200, seed: 3, ..Default::default() };
        let cohort = generate_cohort(&cfg).unwrap();
        for d in [Diagnosis::Cad, Diagnosis::Rpad] {
            for t in [ObjectType::Plaque, ObjectType::Tangle] {
                let mut counts = [0.0f64; 6];
                let slides: Vec<_> = cohort.slides.iter().filter(|s| s.diagnosis == d).collect();
                for s in &slides {
                    for r in s.records.iter().filter(|r| r.object_type == t) {
                        counts[r.layer.index().unwrap()] += 1.0;
                    }
                }
                for (k, c) in counts.iter().enumerate() {
                    let mean = c / slides.len() as f64;
                    let e = cfg.expected_band_count(d, t, k);
                    assert!((mean / e - 1.0).abs() <= 0.2, "{d} {t} band {k}: {mean} vs {e}");
                }
            }
        }
    }

    #[test]
    fn zero_intensity_gives_empty_slides() {
        let cfg = SynthConfig { n_slides_per_class: 1, parent_rate_per_mm2: 0.0, ..Default::default() };
        let c = generate_cohort(&cfg).unwrap();
        for s in &c.slides {
            assert!(s.records.is_empty());
            assert!(matches!(
                build_pathology_graph(s, ObjectType::Plaque),
                Err(SpatialError::TooFewObjects { found: 0, .. })
            ));
        }
    }

    #[test]
    fn bad_configs() {
        let bad = [
            SynthConfig { n_bands: 7, ..Default::default() },
            SynthConfig { parent_rate_per_mm2: -1.0, ..Default::default() },
            SynthConfig { rpad: ClassProfile { band_multipliers: vec![1.0; 5], sigma_um: 40.0 }, ..Default::default() },
            SynthConfig { roi_width_um: 0.0, ..Default::default() },
        ];
        for c in bad {
            assert!(matches!(generate_cohort(&c), Err(SynthError::BadConfig(_))));
        }
    }

    #[test]
    fn writes_parseable_files() {
        let cfg = SynthConfig { n_slides_per_class: 1, ..Default::default() };
        let c = generate_cohort(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let paths = write_cohort(&c, dir.path()).unwrap();
        assert_eq!(paths.len(), 4);
        let s = crate::data::read_slide(&paths[0], &paths[1]).unwrap();
        assert_eq!(s.records.len(), c.slides[0].records.len());
        assert_eq!(s.diagnosis, Diagnosis::Cad);
    }
}
