//! Annotation and slide data model, input parsing, validation and the
//! graph text format.

mod annotations;
mod geometry;
mod graph_format;

use std::fmt;
use std::str::FromStr;

pub use annotations::{
    parse_annotations, parse_metadata, read_slide, write_annotations, write_metadata, AnnotationSchema, SlideMetadata,
};
pub use geometry::{is_simple_polygon, point_in_or_on_polygon, roi_area, shoelace_area_um2};
pub use graph_format::{deserialize_graph, serialize_graph, GRAPH_FORMAT_HEADER};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("bad value in row {row}, column `{column}`")]
    BadValue { row: usize, column: String },
    #[error("duplicate record id `{0}`")]
    DuplicateId(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("corrupt payload at line {line}: {reason}")]
    CorruptPayload { line: usize, reason: String },
    #[error("bad metadata: {0}")]
    BadMetadata(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for DataError {
    fn from(e: std::io::Error) -> Self {
        DataError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ObjectType {
    Plaque,
    Tangle,
}

impl ObjectType {
    pub const ALL: [ObjectType; 2] = [ObjectType::Plaque, ObjectType::Tangle];

    pub fn as_str(self) -> &'static str {
        match self {
            ObjectType::Plaque => "plaque",
            ObjectType::Tangle => "tangle",
        }
    }
}

impl fmt::Display for ObjectType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ObjectType {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "plaque" => Ok(ObjectType::Plaque),
            "tangle" => Ok(ObjectType::Tangle),
            _ => Err(()),
        }
    }
}

/// Cortical layer label. `Layer(k)` holds k in 1..=6.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Layer {
    Cortical(u8),
    Unassigned,
}

impl Layer {
    pub fn new(k: u8) -> Option<Self> {
        (1..=6).contains(&k).then_some(Layer::Cortical(k))
    }

    /// Zero-based slot for one-hot encodings.
    pub fn index(self) -> Option<usize> {
        match self {
            Layer::Cortical(k) => Some(k as usize - 1),
            Layer::Unassigned => None,
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Layer::Cortical(k) => write!(f, "{k}"),
            Layer::Unassigned => f.write_str("NA"),
        }
    }
}

impl FromStr for Layer {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "NA" {
            return Ok(Layer::Unassigned);
        }
        s.parse::<u8>().ok().and_then(Layer::new).ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Diagnosis {
    /// Classic progression.
    Cad,
    /// Rapid progression.
    Rpad,
}

impl Diagnosis {
    /// Class index used by the classifiers: cAD = 0, rpAD = 1.
    pub fn class_index(self) -> usize {
        match self {
            Diagnosis::Cad => 0,
            Diagnosis::Rpad => 1,
        }
    }

    pub fn from_class_index(i: usize) -> Self {
        if i == 0 {
            Diagnosis::Cad
        } else {
            Diagnosis::Rpad
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Diagnosis::Cad => "cAD",
            Diagnosis::Rpad => "rpAD",
        }
    }
}

impl fmt::Display for Diagnosis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Diagnosis {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "cAD" => Ok(Diagnosis::Cad),
            "rpAD" => Ok(Diagnosis::Rpad),
            _ => Err(()),
        }
    }
}

/// One annotated pathology object.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRecord {
    pub id: String,
    pub slide_id: String,
    pub object_type: ObjectType,
    pub x_um: f64,
    pub y_um: f64,
    pub area_um2: f64,
    pub layer: Layer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlideDataset {
    pub slide_id: String,
    pub patient_id: String,
    pub diagnosis: Diagnosis,
    pub roi_polygon: Vec<(f64, f64)>,
    pub roi_area_mm2: f64,
    pub resolution_nm_per_px: f64,
    pub records: Vec<AnnotationRecord>,
}

impl SlideDataset {
    pub fn count(&self, object_type: ObjectType) -> usize {
        self.records.iter().filter(|r| r.object_type == object_type).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Real,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub slides: Vec<SlideDataset>,
    pub provenance: Provenance,
    pub seed: Option<u64>,
}

impl Cohort {
    /// Slide ids must be unique; returns the first repeated id otherwise.
    pub fn check_unique_ids(&self) -> Result<(), DataError> {
        let mut seen = std::collections::HashSet::new();
        for s in &self.slides {
            if !seen.insert(s.slide_id.as_str()) {
                return Err(DataError::DuplicateId(s.slide_id.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Offending record, or `None` for slide-level problems.
    pub record_id: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Lists every invariant violation in the dataset. Never fails.
pub fn validate_dataset(d: &SlideDataset) -> ValidationReport {
    let mut violations = Vec::new();
    let poly = &d.roi_polygon;
    let simple = poly.len() >= 3 && is_simple_polygon(poly);
    if poly.len() < 3 {
        violations.push(Violation { record_id: None, message: "ROI has fewer than 3 vertices".into() });
    } else if !simple {
        violations.push(Violation { record_id: None, message: "ROI not simple".into() });
    }
    if simple {
        match roi_area(poly) {
            Ok(a) => {
                if (a - d.roi_area_mm2).abs() > 1e-9 * a.max(1.0) {
                    violations.push(Violation {
                        record_id: None,
                        message: format!("roi_area_mm2 {} disagrees with polygon area {a}", d.roi_area_mm2),
                    });
                }
            }
            Err(_) => violations.push(Violation { record_id: None, message: "ROI has zero area".into() }),
        }
    }
    if !(d.resolution_nm_per_px > 0.0) {
        violations.push(Violation { record_id: None, message: "resolution must be positive".into() });
    }
    let mut seen = std::collections::HashSet::new();
    for r in &d.records {
        let id = Some(r.id.clone());
        if !seen.insert(r.id.as_str()) {
            violations.push(Violation { record_id: id.clone(), message: "duplicate id".into() });
        }
        if !r.x_um.is_finite() || !r.y_um.is_finite() {
            violations.push(Violation { record_id: id, message: "non-finite coordinates".into() });
            continue;
        }
        if r.area_um2 < 0.0 || !r.area_um2.is_finite() {
            violations.push(Violation { record_id: id.clone(), message: "negative area".into() });
        }
        if r.slide_id != d.slide_id {
            violations.push(Violation { record_id: id.clone(), message: "slide id mismatch".into() });
        }
        if poly.len() >= 3 && !point_in_or_on_polygon((r.x_um, r.y_um), poly) {
            violations.push(Violation { record_id: id, message: "outside ROI".into() });
        }
    }
    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_slide(records: Vec<(f64, f64)>) -> SlideDataset {
        let roi = vec![(0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0)];
        SlideDataset {
            slide_id: "s".into(),
            patient_id: "p".into(),
            diagnosis: Diagnosis::Cad,
            roi_area_mm2: roi_area(&roi).unwrap(),
            roi_polygon: roi,
            resolution_nm_per_px: 227.0,
            records: records
                .into_iter()
                .enumerate()
                .map(|(i, (x, y))| AnnotationRecord {
                    id: format!("r{i}"),
                    slide_id: "s".into(),
                    object_type: ObjectType::Plaque,
                    x_um: x,
                    y_um: y,
                    area_um2: 1.0,
                    layer: Layer::Cortical(1),
                })
                .collect(),
        }
    }

    #[test]
    fn record_outside_roi_is_reported() {
        let d = square_slide(vec![(-1.0, 5.0), (3.0, 3.0)]);
        let report = validate_dataset(&d);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].message, "outside ROI");
        assert_eq!(report.violations[0].record_id.as_deref(), Some("r0"));
    }

    #[test]
    fn records_inside_and_on_boundary_are_clean() {
        let d = square_slide(vec![(1.0, 1.0), (10.0, 5.0), (0.0, 0.0)]);
        assert!(validate_dataset(&d).is_empty());
    }

    #[test]
    fn bowtie_roi_is_not_simple() {
        let mut d = square_slide(vec![]);
        d.roi_polygon = vec![(0.0, 0.0), (10.0, 10.0), (10.0, 0.0), (0.0, 10.0)];
        let report = validate_dataset(&d);
        assert!(report.violations.iter().any(|v| v.message == "ROI not simple"));
    }

    #[test]
    fn layer_and_labels_parse() {
        assert_eq!("NA".parse::<Layer>(), Ok(Layer::Unassigned));
        assert_eq!("4".parse::<Layer>(), Ok(Layer::Cortical(4)));
        assert!("7".parse::<Layer>().is_err());
        assert!("0".parse::<Layer>().is_err());
        assert_eq!("rpAD".parse::<Diagnosis>(), Ok(Diagnosis::Rpad));
        assert_eq!("tangle".parse::<ObjectType>(), Ok(ObjectType::Tangle));
    }
}
