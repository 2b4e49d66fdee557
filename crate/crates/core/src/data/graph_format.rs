//! Versioned text format for [`PathologyGraph`].
//!
//! ```text
//! taugraph-graph 1
//! slide_id <id>
//! patient_id <id>
//! diagnosis cAD|rpAD
//! object_type plaque|tangle
//! level patient|layer:<k>
//! alpha_optimal_um <f64>
//! nodes <n>
//! <record_id>\t<x_um>\t<y_um>\t<layer>        (n lines)
//! edges <m>
//! <u>\t<v>\t<length_um>\t<alpha_um>\t<weight>  (m lines)
//! end
//! ```
//!
//! Floats are written in Rust's shortest round-trip form, so identical
//! graphs always produce identical bytes.

use std::fmt::Write as _;

use super::{DataError, Diagnosis, Layer, ObjectType};
use crate::spatial::{GraphEdge, GraphLevel, GraphNode, PathologyGraph};

pub const GRAPH_FORMAT_HEADER: &str = "taugraph-graph 1";

pub fn serialize_graph(g: &PathologyGraph) -> String {
    let mut out = String::with_capacity(64 * (g.nodes.len() + g.edges.len()) + 256);
    out.push_str(GRAPH_FORMAT_HEADER);
    out.push('\n');
    let _ = writeln!(out, "slide_id {}", g.slide_id);
    let _ = writeln!(out, "patient_id {}", g.patient_id);
    let _ = writeln!(out, "diagnosis {}", g.diagnosis);
    let _ = writeln!(out, "object_type {}", g.object_type);
    let _ = writeln!(out, "level {}", g.level);
    let _ = writeln!(out, "alpha_optimal_um {:?}", g.alpha_optimal_um);
    let _ = writeln!(out, "nodes {}", g.nodes.len());
    for n in &g.nodes {
        let _ = writeln!(out, "{}\t{:?}\t{:?}\t{}", n.record_id, n.x_um, n.y_um, n.layer);
    }
    let _ = writeln!(out, "edges {}", g.edges.len());
    for e in &g.edges {
        let _ = writeln!(out, "{}\t{}\t{:?}\t{:?}\t{:?}", e.u, e.v, e.length_um, e.alpha_um, e.weight);
    }
    out.push_str("end\n");
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str, DataError> {
        match self.inner.next() {
            Some((i, l)) => {
                self.last = i + 1;
                Ok(l)
            }
            None => Err(DataError::CorruptPayload { line: self.last + 1, reason: "unexpected end of payload".into() }),
        }
    }

    fn corrupt(&self, reason: impl Into<String>) -> DataError {
        DataError::CorruptPayload { line: self.last, reason: reason.into() }
    }

    fn keyed(&mut self, key: &str) -> Result<&'a str, DataError> {
        let line = self.next()?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok(v),
            _ => Err(self.corrupt(format!("expected `{key}`"))),
        }
    }
}

fn real(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

pub fn deserialize_graph(text: &str) -> Result<PathologyGraph, DataError> {
    let mut lines = Lines { inner: text.lines().enumerate(), last: 0 };
    if lines.next()? != GRAPH_FORMAT_HEADER {
        return Err(lines.corrupt("unknown header or version"));
    }
    let slide_id = lines.keyed("slide_id")?.to_string();
    let patient_id = lines.keyed("patient_id")?.to_string();
    let diagnosis = lines.keyed("diagnosis")?.parse::<Diagnosis>().map_err(|_| lines.corrupt("bad diagnosis"))?;
    let object_type =
        lines.keyed("object_type")?.parse::<ObjectType>().map_err(|_| lines.corrupt("bad object type"))?;
    let level = lines.keyed("level")?.parse::<GraphLevel>().map_err(|_| lines.corrupt("bad level"))?;
    let alpha_optimal_um =
        real(lines.keyed("alpha_optimal_um")?).filter(|a| *a >= 0.0).ok_or_else(|| lines.corrupt("bad alpha"))?;
    let n: usize = lines.keyed("nodes")?.parse().map_err(|_| lines.corrupt("bad node count"))?;
    let mut nodes = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let line = lines.next()?;
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 || f[0].is_empty() {
            return Err(lines.corrupt("node row needs 4 fields"));
        }
        let (Some(x_um), Some(y_um)) = (real(f[1]), real(f[2])) else {
            return Err(lines.corrupt("bad node coordinates"));
        };
        let layer = f[3].parse::<Layer>().map_err(|_| lines.corrupt("bad node layer"))?;
        nodes.push(GraphNode { record_id: f[0].to_string(), x_um, y_um, layer });
    }
    let m: usize = lines.keyed("edges")?.parse().map_err(|_| lines.corrupt("bad edge count"))?;
    let mut edges = Vec::with_capacity(m.min(1 << 20));
    for _ in 0..m {
        let line = lines.next()?;
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(lines.corrupt("edge row needs 5 fields"));
        }
        let (Ok(u), Ok(v)) = (f[0].parse::<usize>(), f[1].parse::<usize>()) else {
            return Err(lines.corrupt("bad edge endpoints"));
        };
        if u >= v || v >= n {
            return Err(lines.corrupt("edge endpoints must satisfy u < v < n"));
        }
        let (Some(length_um), Some(alpha_um), Some(weight)) = (real(f[2]), real(f[3]), real(f[4])) else {
            return Err(lines.corrupt("bad edge values"));
        };
        if length_um <= 0.0 || alpha_um <= 0.0 || weight <= 0.0 {
            return Err(lines.corrupt("edge values must be positive"));
        }
        edges.push(GraphEdge { u, v, length_um, alpha_um, weight });
    }
    if lines.next()? != "end" {
        return Err(lines.corrupt("missing end marker"));
    }
    Ok(PathologyGraph { slide_id, patient_id, diagnosis, object_type, level, alpha_optimal_um, nodes, edges })
}
