//! Incremental Bowyer–Watson Delaunay triangulation.
//!
//! Orientation and in-circle signs come from exact adaptive predicates.
//! Exact cocircular ties are resolved by perturbing the lifted paraboloid
//! coordinate of each point by an infinitesimal that shrinks with the input
//! index, so the output is unique and independent of insertion order.
//! The unbounded outside of the hull is represented by ghost triangles that
//! share a single vertex at infinity.

use robust::{incircle, orient2d, Coord};

use super::SpatialError;

const GHOST: usize = usize::MAX;

type Point = (f64, f64);

fn c(p: Point) -> Coord<f64> {
    Coord { x: p.0, y: p.1 }
}

fn orient(a: Point, b: Point, p: Point) -> f64 {
    orient2d(c(a), c(b), c(p))
}

/// Sign of the perturbed in-circle determinant for ccw `(a, b, c)` and query `d`.
/// Positive means `d` lies inside.
fn incircle_perturbed(pts: &[Point], t: [usize; 3], d: usize) -> f64 {
    let [a, b, cc] = t;
    let det = incircle(c(pts[a]), c(pts[b]), c(pts[cc]), c(pts[d]));
    if det != 0.0 {
        return det;
    }
    // The lifted z of row k perturbed by eps_k; its cofactor is a signed
    // orientation of the remaining three rows. Lower index = larger eps.
    let rows = [a, b, cc, d];
    let mut order = [0usize, 1, 2, 3];
    order.sort_by_key(|&k| rows[k]);
    for k in order {
        let cof = match k {
            0 => orient(pts[b], pts[cc], pts[d]),
            1 => -orient(pts[a], pts[cc], pts[d]),
            2 => orient(pts[a], pts[b], pts[d]),
            _ => -orient(pts[a], pts[b], pts[cc]),
        };
        if cof != 0.0 {
            return cof;
        }
    }
    // Unreachable for a non-degenerate triangle: the last cofactor is its area.
    0.0
}

fn strictly_between(a: Point, b: Point, p: Point) -> bool {
    let dot = (p.0 - a.0) * (b.0 - a.0) + (p.1 - a.1) * (b.1 - a.1);
    let len2 = (b.0 - a.0) * (b.0 - a.0) + (b.1 - a.1) * (b.1 - a.1);
    dot > 0.0 && dot < len2
}

fn in_conflict(pts: &[Point], t: [usize; 3], p: usize) -> bool {
    let ghost_at = t.iter().position(|&v| v == GHOST);
    match ghost_at {
        None => incircle_perturbed(pts, t, p) > 0.0,
        Some(g) => {
            // Rotate so the ghost is last: (u, v, inf), outside on the left of u -> v.
            let u = t[(g + 1) % 3];
            let v = t[(g + 2) % 3];
            let o = orient(pts[u], pts[v], pts[p]);
            o > 0.0 || (o == 0.0 && strictly_between(pts[u], pts[v], pts[p]))
        }
    }
}

/// Delaunay edge set as sorted `(u, v)` pairs with `u < v`.
pub fn delaunay(points: &[(f64, f64)]) -> Result<Vec<(usize, usize)>, SpatialError> {
    Ok(edges_of(&triangulate(points)?))
}

/// Finite triangles of the triangulation, each counter-clockwise.
pub fn triangulate(points: &[(f64, f64)]) -> Result<Vec<[usize; 3]>, SpatialError> {
    let n = points.len();
    if n < 3 {
        return Err(SpatialError::DegenerateGeometry(format!("need at least 3 points, got {n}")));
    }
    if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(SpatialError::DegenerateGeometry("non-finite point".into()));
    }
    let mut sorted: Vec<usize> = (0..n).collect();
    sorted.sort_by(|&i, &j| points[i].partial_cmp(&points[j]).unwrap().then(i.cmp(&j)));
    for w in sorted.windows(2) {
        if points[w[0]] == points[w[1]] {
            return Err(SpatialError::DuplicatePoint(w[0].min(w[1]), w[0].max(w[1])));
        }
    }

    let third = (2..n)
        .find(|&k| orient(points[0], points[1], points[k]) != 0.0)
        .ok_or_else(|| SpatialError::DegenerateGeometry("all points collinear".into()))?;
    let (a, b) = if orient(points[0], points[1], points[third]) > 0.0 { (0, 1) } else { (1, 0) };
    let mut tris: Vec<[usize; 3]> = vec![[a, b, third], [b, a, GHOST], [third, b, GHOST], [a, third, GHOST]];

    let mut boundary: Vec<(usize, usize)> = Vec::new();
    let mut keep: Vec<[usize; 3]> = Vec::with_capacity(2 * n + 4);
    for p in (2..n).filter(|&k| k != third) {
        boundary.clear();
        keep.clear();
        let mut bad: Vec<[usize; 3]> = Vec::new();
        for &t in &tris {
            if in_conflict(points, t, p) {
                bad.push(t);
            } else {
                keep.push(t);
            }
        }
        // Cavity boundary: directed edges of bad triangles whose twin is not bad.
        for t in &bad {
            for i in 0..3 {
                let e = (t[i], t[(i + 1) % 3]);
                let twin_bad = bad.iter().any(|s| (0..3).any(|j| s[j] == e.1 && s[(j + 1) % 3] == e.0));
                if !twin_bad {
                    boundary.push(e);
                }
            }
        }
        for &(u, v) in &boundary {
            // Keep the ghost in last position for readability of the cavity test.
            let t = if u == GHOST {
                [v, p, GHOST]
            } else if v == GHOST {
                [p, u, GHOST]
            } else {
                [u, v, p]
            };
            keep.push(t);
        }
        std::mem::swap(&mut tris, &mut keep);
    }
    Ok(tris.into_iter().filter(|t| !t.contains(&GHOST)).collect())
}

pub(crate) fn edges_of(tris: &[[usize; 3]]) -> Vec<(usize, usize)> {
    let mut edges: Vec<(usize, usize)> =
        tris.iter().flat_map(|t| (0..3).map(move |i| (t[i].min(t[(i + 1) % 3]), t[i].max(t[(i + 1) % 3])))).collect();
    edges.sort_unstable();
    edges.dedup();
    edges
}
