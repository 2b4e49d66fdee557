use robust::{orient2d, Coord};

use super::DataError;

fn coord(p: (f64, f64)) -> Coord<f64> {
    Coord { x: p.0, y: p.1 }
}

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    orient2d(coord(a), coord(b), coord(c))
}

/// Signed shoelace area in μm², positive for counter-clockwise vertex order.
pub fn shoelace_area_um2(polygon: &[(f64, f64)]) -> f64 {
    if polygon.len() < 3 {
        return 0.0;
    }
    // Relative to the first vertex to limit cancellation for far-off ROIs.
    let (ox, oy) = polygon[0];
    let mut twice = 0.0;
    for i in 0..polygon.len() {
        let (x0, y0) = polygon[i];
        let (x1, y1) = polygon[(i + 1) % polygon.len()];
        twice += (x0 - ox) * (y1 - oy) - (x1 - ox) * (y0 - oy);
    }
    0.5 * twice
}

/// Unsigned ROI area in mm².
pub fn roi_area(polygon: &[(f64, f64)]) -> Result<f64, DataError> {
    if polygon.len() < 3 {
        return Err(DataError::DegenerateGeometry(format!("polygon has {} vertices", polygon.len())));
    }
    if polygon.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(DataError::DegenerateGeometry("non-finite vertex".into()));
    }
    let area = shoelace_area_um2(polygon).abs() / 1e6;
    if area == 0.0 {
        return Err(DataError::DegenerateGeometry("zero-area polygon".into()));
    }
    Ok(area)
}

fn on_segment(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> bool {
    orient(a, b, p) == 0.0 && p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

fn segments_intersect(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    if o1 * o2 < 0.0 && o3 * o4 < 0.0 {
        return true;
    }
    on_segment(a, b, c) || on_segment(a, b, d) || on_segment(c, d, a) || on_segment(c, d, b)
}

/// True when no two non-adjacent edges touch and adjacent edges share only
/// their common vertex.
pub fn is_simple_polygon(polygon: &[(f64, f64)]) -> bool {
    let n = polygon.len();
    if n < 3 {
        return false;
    }
    let edge = |i: usize| (polygon[i], polygon[(i + 1) % n]);
    for i in 0..n {
        let (a, b) = edge(i);
        if a == b {
            return false;
        }
        for j in (i + 1)..n {
            let (c, d) = edge(j);
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // Folding back onto the previous edge.
                let (shared, other_a, other_b) = if j == i + 1 { (b, a, d) } else { (a, b, c) };
                if orient(other_a, shared, other_b) == 0.0 {
                    let back = (other_a.0 - shared.0) * (other_b.0 - shared.0)
                        + (other_a.1 - shared.1) * (other_b.1 - shared.1);
                    if back > 0.0 {
                        return false;
                    }
                }
                continue;
            }
            if segments_intersect(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

/// Even-odd containment with the boundary counted as inside.
pub fn point_in_or_on_polygon(p: (f64, f64), polygon: &[(f64, f64)]) -> bool {
    let n = polygon.len();
    let mut inside = false;
    for i in 0..n {
        let a = polygon[i];
        let b = polygon[(i + 1) % n];
        if on_segment(a, b, p) {
            return true;
        }
        if (a.1 > p.1) != (b.1 > p.1) {
            // Side test of p against the upward-oriented edge.
            let (lo, hi) = if a.1 < b.1 { (a, b) } else { (b, a) };
            if orient(lo, hi, p) > 0.0 {
                inside = !inside;
            }
        }
    }
    inside
}
