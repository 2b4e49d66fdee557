use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use super::{roi_area, AnnotationRecord, DataError, Diagnosis, Layer, ObjectType, SlideDataset};

/// Header names for the required annotation columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationSchema {
    pub id: String,
    pub object_type: String,
    pub x_um: String,
    pub y_um: String,
    pub area_um2: String,
    pub layer: String,
}

impl Default for AnnotationSchema {
    fn default() -> Self {
        Self {
            id: "id".into(),
            object_type: "type".into(),
            x_um: "x_um".into(),
            y_um: "y_um".into(),
            area_um2: "area_um2".into(),
            layer: "layer".into(),
        }
    }
}

/// Contents of a slide sidecar file.
#[derive(Debug, Clone, PartialEq)]
pub struct SlideMetadata {
    pub slide_id: String,
    pub patient_id: String,
    pub diagnosis: Diagnosis,
    pub resolution_nm_per_px: f64,
    pub roi_polygon: Vec<(f64, f64)>,
}

fn detect_delimiter(header: &str) -> u8 {
    if header.contains('\t') {
        b'\t'
    } else {
        b','
    }
}

fn parse_finite(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn valid_id(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(|c| c.is_whitespace() || c.is_control())
}

/// Parses an annotation table and attaches the slide metadata.
///
/// Row order is preserved and columns outside the schema are ignored.
pub fn parse_annotations<R: Read>(
    mut reader: R,
    schema: &AnnotationSchema,
    meta: &SlideMetadata,
) -> Result<SlideDataset, DataError> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let header_line = text.lines().next().unwrap_or("");
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(detect_delimiter(header_line))
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| DataError::Io(e.to_string()))?.clone();
    let col = |name: &str| -> Result<usize, DataError> {
        headers.iter().position(|h| h == name).ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let c_id = col(&schema.id)?;
    let c_type = col(&schema.object_type)?;
    let c_x = col(&schema.x_um)?;
    let c_y = col(&schema.y_um)?;
    let c_area = col(&schema.area_um2)?;
    let c_layer = col(&schema.layer)?;

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|_| DataError::BadValue { row: row_no, column: "<row>".into() })?;
        let field = |c: usize, name: &str| {
            row.get(c).ok_or_else(|| DataError::BadValue { row: row_no, column: name.to_string() })
        };
        let bad = |name: &str| DataError::BadValue { row: row_no, column: name.to_string() };
        let id = field(c_id, &schema.id)?.to_string();
        if !valid_id(&id) {
            return Err(bad(&schema.id));
        }
        let object_type =
            field(c_type, &schema.object_type)?.parse::<ObjectType>().map_err(|_| bad(&schema.object_type))?;
        let x_um = parse_finite(field(c_x, &schema.x_um)?).ok_or_else(|| bad(&schema.x_um))?;
        let y_um = parse_finite(field(c_y, &schema.y_um)?).ok_or_else(|| bad(&schema.y_um))?;
        let area_um2 = parse_finite(field(c_area, &schema.area_um2)?)
            .filter(|a| *a >= 0.0)
            .ok_or_else(|| bad(&schema.area_um2))?;
        let layer = field(c_layer, &schema.layer)?.parse::<Layer>().map_err(|_| bad(&schema.layer))?;
        if !seen.insert(id.clone()) {
            return Err(DataError::DuplicateId(id));
        }
        records.push(AnnotationRecord {
            id,
            slide_id: meta.slide_id.clone(),
            object_type,
            x_um,
            y_um,
            area_um2,
            layer,
        });
    }

    Ok(SlideDataset {
        slide_id: meta.slide_id.clone(),
        patient_id: meta.patient_id.clone(),
        diagnosis: meta.diagnosis,
        roi_area_mm2: roi_area(&meta.roi_polygon)?,
        roi_polygon: meta.roi_polygon.clone(),
        resolution_nm_per_px: meta.resolution_nm_per_px,
        records,
    })
}

/// Parses the key/value sidecar: `slide_id`, `patient_id`, `diagnosis`,
/// `resolution_nm_per_px`, then `roi:` and one `x y` vertex per line.
pub fn parse_metadata(text: &str) -> Result<SlideMetadata, DataError> {
    let mut slide_id = None;
    let mut patient_id = None;
    let mut diagnosis = None;
    let mut resolution = None;
    let mut roi = Vec::new();
    let mut in_roi = false;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if in_roi {
            let mut it = line.split_whitespace();
            let (Some(x), Some(y), None) = (it.next(), it.next(), it.next()) else {
                return Err(DataError::BadMetadata(format!("line {}: bad vertex", n + 1)));
            };
            match (parse_finite(x), parse_finite(y)) {
                (Some(x), Some(y)) => roi.push((x, y)),
                _ => return Err(DataError::BadMetadata(format!("line {}: non-numeric vertex", n + 1))),
            }
            continue;
        }
        let (key, value) = line
            .split_once(':')
            .or_else(|| line.split_once('='))
            .ok_or_else(|| DataError::BadMetadata(format!("line {}: expected key: value", n + 1)))?;
        let value = value.trim();
        match key.trim() {
            "slide_id" => slide_id = Some(value.to_string()),
            "patient_id" => patient_id = Some(value.to_string()),
            "diagnosis" => {
                diagnosis = Some(
                    value
                        .parse::<Diagnosis>()
                        .map_err(|_| DataError::BadMetadata(format!("unknown diagnosis `{value}`")))?,
                )
            }
            "resolution_nm_per_px" => {
                resolution = Some(
                    parse_finite(value)
                        .filter(|r| *r > 0.0)
                        .ok_or_else(|| DataError::BadMetadata("bad resolution".into()))?,
                )
            }
            "roi" => in_roi = true,
            // Unknown keys are tolerated.
            _ => {}
        }
    }
    let missing = |k: &str| DataError::BadMetadata(format!("missing key `{k}`"));
    let slide_id = slide_id.ok_or_else(|| missing("slide_id"))?;
    if !valid_id(&slide_id) {
        return Err(DataError::BadMetadata("slide_id must be non-empty without whitespace".into()));
    }
    Ok(SlideMetadata {
        slide_id,
        patient_id: patient_id.ok_or_else(|| missing("patient_id"))?,
        diagnosis: diagnosis.ok_or_else(|| missing("diagnosis"))?,
        resolution_nm_per_px: resolution.ok_or_else(|| missing("resolution_nm_per_px"))?,
        roi_polygon: roi,
    })
}

pub fn read_slide(annotations: &Path, metadata: &Path) -> Result<SlideDataset, DataError> {
    let meta = parse_metadata(&std::fs::read_to_string(metadata)?)?;
    let file = std::fs::File::open(annotations)?;
    parse_annotations(file, &AnnotationSchema::default(), &meta)
}

/// Comma-delimited annotation table with the canonical header.
pub fn write_annotations(d: &SlideDataset) -> String {
    let mut out = String::from("id,type,x_um,y_um,area_um2,layer\n");
    for r in &d.records {
        let _ = writeln!(out, "{},{},{},{},{},{}", r.id, r.object_type, r.x_um, r.y_um, r.area_um2, r.layer);
    }
    out
}

pub fn write_metadata(d: &SlideDataset) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "slide_id: {}", d.slide_id);
    let _ = writeln!(out, "patient_id: {}", d.patient_id);
    let _ = writeln!(out, "diagnosis: {}", d.diagnosis);
    let _ = writeln!(out, "resolution_nm_per_px: {}", d.resolution_nm_per_px);
    out.push_str("roi:\n");
    for (x, y) in &d.roi_polygon {
        let _ = writeln!(out, "{x} {y}");
    }
    out
}
