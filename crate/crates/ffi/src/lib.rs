//! C ABI over taugraph. Every fallible call returns a [`TgStatus`]; on
//! failure `tg_last_error()` describes the most recent error on the calling
//! thread. Handles are opaque and must be released with their `_free`
//! function. Buffers are caller-owned: functions taking `out` and `cap`
//! write at most `cap` values and report the required length through
//! `len_out`, returning `TG_STATUS_BUFFER_TOO_SMALL` when it exceeds `cap`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use taugraph::data::deserialize_graph;
use taugraph::gnn::{GnnModel, GraphInput};
use taugraph::metrics;
use taugraph::pipeline::{self, Command, PipelineError, RunOptions};
use taugraph::spatial::{delaunay, PathologyGraph};
use taugraph::tabular::{rf_predict, RFModel};

/// Status codes. 1 to 3 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TgStatus {
    Ok = 0,
    /// Bad usage or configuration.
    Config = 1,
    /// Unreadable or invalid input data.
    Data = 2,
    /// Non-finite loss or a clustering that failed to converge.
    Numeric = 3,
    /// Null pointer, bad UTF-8 or an out-of-range argument.
    InvalidArgument = 4,
    BufferTooSmall = 5,
    /// A Rust panic was caught at the boundary.
    Internal = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Fail(TgStatus, String);

impl From<PipelineError> for Fail {
    fn from(e: PipelineError) -> Self {
        let status = match e.exit_code() {
            1 => TgStatus::Config,
            3 => TgStatus::Numeric,
            _ => TgStatus::Data,
        };
        Fail(status, e.to_string())
    }
}

fn invalid(m: impl Into<String>) -> Fail {
    Fail(TgStatus::InvalidArgument, m.into())
}

fn data(e: impl std::fmt::Display) -> Fail {
    Fail(TgStatus::Data, e.to_string())
}

/// Runs `f`, turning errors and panics into a status plus last-error text.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> TgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            TgStatus::Ok
        }
        Ok(Err(Fail(s, m))) => {
            set_error(m);
            s
        }
        Err(p) => {
            let m = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {m}"));
            TgStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(invalid(format!("{name} is null")));
    }
    unsafe { CStr::from_ptr(p) }.to_str().map_err(|_| invalid(format!("{name} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Fail> {
    unsafe { p.as_ref() }.ok_or_else(|| invalid(format!("{name} is null")))
}

/// Copies `vals` into a caller buffer of `cap` elements.
unsafe fn fill<T: Copy>(vals: &[T], out: *mut T, cap: usize, len_out: *mut usize) -> Result<(), Fail> {
    if len_out.is_null() {
        return Err(invalid("len_out is null"));
    }
    unsafe { *len_out = vals.len() };
    if vals.len() > cap {
        return Err(Fail(TgStatus::BufferTooSmall, format!("need {} elements, have {cap}", vals.len())));
    }
    if !vals.is_empty() {
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        unsafe { ptr::copy_nonoverlapping(vals.as_ptr(), out, vals.len()) };
    }
    Ok(())
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next call on the same thread.
#[no_mangle]
pub extern "C" fn tg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn tg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---- pipeline runs ---------------------------------------------------------------

/// Settings for pipeline commands writing into one output directory.
pub struct TgRun {
    opts: RunOptions,
}

/// New run writing into `out_dir`.
#[no_mangle]
pub unsafe extern "C" fn tg_run_new(out_dir: *const c_char, run_out: *mut *mut TgRun) -> TgStatus {
    guard(|| {
        if run_out.is_null() {
            return Err(invalid("run_out is null"));
        }
        let out = unsafe { str_arg(out_dir, "out_dir") }?;
        let r = Box::new(TgRun { opts: RunOptions { out: PathBuf::from(out), ..Default::default() } });
        unsafe { *run_out = Box::into_raw(r) };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn tg_run_free(run: *mut TgRun) {
    if !run.is_null() {
        drop(unsafe { Box::from_raw(run) });
    }
}

#[no_mangle]
pub unsafe extern "C" fn tg_run_set_seed(run: *mut TgRun, seed: u64) -> TgStatus {
    guard(|| {
        let r = unsafe { run.as_mut() }.ok_or_else(|| invalid("run is null"))?;
        r.opts.seed = Some(seed);
        Ok(())
    })
}

/// TOML config file applied before any overrides.
#[no_mangle]
pub unsafe extern "C" fn tg_run_set_config(run: *mut TgRun, path: *const c_char) -> TgStatus {
    guard(|| {
        let r = unsafe { run.as_mut() }.ok_or_else(|| invalid("run is null"))?;
        r.opts.config = Some(PathBuf::from(unsafe { str_arg(path, "path") }?));
        Ok(())
    })
}

/// Adds a `key=value` override, as the command line's `--set`.
#[no_mangle]
pub unsafe extern "C" fn tg_run_set(run: *mut TgRun, assignment: *const c_char) -> TgStatus {
    guard(|| {
        let r = unsafe { run.as_mut() }.ok_or_else(|| invalid("run is null"))?;
        r.opts.overrides.push(unsafe { str_arg(assignment, "assignment") }?.to_string());
        Ok(())
    })
}

/// Slide directory read by `build-graph`; null restores the default.
#[no_mangle]
pub unsafe extern "C" fn tg_run_set_input(run: *mut TgRun, dir: *const c_char) -> TgStatus {
    guard(|| {
        let r = unsafe { run.as_mut() }.ok_or_else(|| invalid("run is null"))?;
        r.opts.input = if dir.is_null() { None } else { Some(PathBuf::from(unsafe { str_arg(dir, "dir") }?)) };
        Ok(())
    })
}

/// Executes one command by its command-line name, e.g. `"build-graph"`.
#[no_mangle]
pub unsafe extern "C" fn tg_run_execute(run: *const TgRun, command: *const c_char) -> TgStatus {
    guard(|| {
        let r = unsafe { handle(run, "run") }?;
        let cmd: Command = unsafe { str_arg(command, "command") }?.parse()?;
        let opts =
            if cmd == Command::BuildGraph { r.opts.clone() } else { RunOptions { input: None, ..r.opts.clone() } };
        pipeline::run(cmd, &opts)?;
        Ok(())
    })
}

// ---- graphs ----------------------------------------------------------------------

pub struct TgGraph {
    graph: PathologyGraph,
}

/// Loads a graph file written by `build-graph`.
#[no_mangle]
pub unsafe extern "C" fn tg_graph_load(path: *const c_char, graph_out: *mut *mut TgGraph) -> TgStatus {
    guard(|| {
        if graph_out.is_null() {
            return Err(invalid("graph_out is null"));
        }
        let p = unsafe { str_arg(path, "path") }?;
        let text = std::fs::read_to_string(p).map_err(|e| data(format!("{p}: {e}")))?;
        let graph = deserialize_graph(&text).map_err(data)?;
        unsafe { *graph_out = Box::into_raw(Box::new(TgGraph { graph })) };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn tg_graph_free(graph: *mut TgGraph) {
    if !graph.is_null() {
        drop(unsafe { Box::from_raw(graph) });
    }
}

/// Node count, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn tg_graph_n_nodes(graph: *const TgGraph) -> usize {
    unsafe { graph.as_ref() }.map_or(0, |g| g.graph.n_nodes())
}

/// Edge count, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn tg_graph_n_edges(graph: *const TgGraph) -> usize {
    unsafe { graph.as_ref() }.map_or(0, |g| g.graph.n_edges())
}

/// Endpoints as `u0, v0, u1, v1, ...`; `len_out` receives twice the edge count.
#[no_mangle]
pub unsafe extern "C" fn tg_graph_edges(
    graph: *const TgGraph,
    out: *mut usize,
    cap: usize,
    len_out: *mut usize,
) -> TgStatus {
    guard(|| {
        let g = unsafe { handle(graph, "graph") }?;
        let v: Vec<usize> = g.graph.edges.iter().flat_map(|e| [e.u, e.v]).collect();
        unsafe { fill(&v, out, cap, len_out) }
    })
}

/// Edge lengths in micrometers, in edge order.
#[no_mangle]
pub unsafe extern "C" fn tg_graph_edge_lengths(
    graph: *const TgGraph,
    out: *mut f64,
    cap: usize,
    len_out: *mut usize,
) -> TgStatus {
    guard(|| {
        let g = unsafe { handle(graph, "graph") }?;
        let v: Vec<f64> = g.graph.edges.iter().map(|e| e.length_um).collect();
        unsafe { fill(&v, out, cap, len_out) }
    })
}

/// Normalized betweenness per node.
#[no_mangle]
pub unsafe extern "C" fn tg_graph_betweenness(
    graph: *const TgGraph,
    out: *mut f64,
    cap: usize,
    len_out: *mut usize,
) -> TgStatus {
    guard(|| {
        let g = unsafe { handle(graph, "graph") }?;
        unsafe { fill(&metrics::betweenness(&g.graph), out, cap, len_out) }
    })
}

/// Closeness per node.
#[no_mangle]
pub unsafe extern "C" fn tg_graph_closeness(
    graph: *const TgGraph,
    out: *mut f64,
    cap: usize,
    len_out: *mut usize,
) -> TgStatus {
    guard(|| {
        let g = unsafe { handle(graph, "graph") }?;
        unsafe { fill(&metrics::closeness(&g.graph), out, cap, len_out) }
    })
}

/// Delaunay edges of `n` points as `u0, v0, u1, v1, ...` with `u < v`.
#[no_mangle]
pub unsafe extern "C" fn tg_delaunay(
    xs: *const f64,
    ys: *const f64,
    n: usize,
    out: *mut usize,
    cap: usize,
    len_out: *mut usize,
) -> TgStatus {
    guard(|| {
        if n > 0 && (xs.is_null() || ys.is_null()) {
            return Err(invalid("xs or ys is null"));
        }
        let pts: Vec<(f64, f64)> = if n == 0 {
            Vec::new()
        } else {
            let (x, y) = unsafe { (std::slice::from_raw_parts(xs, n), std::slice::from_raw_parts(ys, n)) };
            x.iter().copied().zip(y.iter().copied()).collect()
        };
        let edges = delaunay(&pts).map_err(data)?;
        let flat: Vec<usize> = edges.into_iter().flat_map(|(u, v)| [u.min(v), u.max(v)]).collect();
        unsafe { fill(&flat, out, cap, len_out) }
    })
}

// ---- models ---------------------------------------------------------------------

pub struct TgGnn {
    model: GnnModel,
}

/// Loads a GNN checkpoint written by `train-gnn`.
#[no_mangle]
pub unsafe extern "C" fn tg_gnn_load(path: *const c_char, model_out: *mut *mut TgGnn) -> TgStatus {
    guard(|| {
        if model_out.is_null() {
            return Err(invalid("model_out is null"));
        }
        let p = unsafe { str_arg(path, "path") }?;
        let text = std::fs::read_to_string(p).map_err(|e| data(format!("{p}: {e}")))?;
        let model = GnnModel::from_text(&text).map_err(data)?;
        unsafe { *model_out = Box::into_raw(Box::new(TgGnn { model })) };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn tg_gnn_free(model: *mut TgGnn) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Probability that the graph's slide is rpAD.
#[no_mangle]
pub unsafe extern "C" fn tg_gnn_predict(model: *const TgGnn, graph: *const TgGraph, p_out: *mut f64) -> TgStatus {
    guard(|| {
        let (m, g) = unsafe { (handle(model, "model")?, handle(graph, "graph")?) };
        if p_out.is_null() {
            return Err(invalid("p_out is null"));
        }
        let p = m.model.predict_proba(&GraphInput::from_graph(&g.graph)).map_err(data)?;
        unsafe { *p_out = p };
        Ok(())
    })
}

/// Row-major node embeddings, 12 values per node.
#[no_mangle]
pub unsafe extern "C" fn tg_gnn_embed(
    model: *const TgGnn,
    graph: *const TgGraph,
    out: *mut f64,
    cap: usize,
    len_out: *mut usize,
) -> TgStatus {
    guard(|| {
        let (m, g) = unsafe { (handle(model, "model")?, handle(graph, "graph")?) };
        let e = m.model.embed(&GraphInput::from_graph(&g.graph)).map_err(data)?;
        let flat: Vec<f64> = e.iter().copied().collect();
        unsafe { fill(&flat, out, cap, len_out) }
    })
}

pub struct TgForest {
    model: RFModel,
}

/// Loads a forest written by `train-rf`.
#[no_mangle]
pub unsafe extern "C" fn tg_rf_load(path: *const c_char, model_out: *mut *mut TgForest) -> TgStatus {
    guard(|| {
        if model_out.is_null() {
            return Err(invalid("model_out is null"));
        }
        let p = unsafe { str_arg(path, "path") }?;
        let text = std::fs::read_to_string(p).map_err(|e| data(format!("{p}: {e}")))?;
        let model = RFModel::from_text(&text).map_err(data)?;
        unsafe { *model_out = Box::into_raw(Box::new(TgForest { model })) };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn tg_rf_free(model: *mut TgForest) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Feature count the forest expects, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn tg_rf_n_features(model: *const TgForest) -> usize {
    unsafe { model.as_ref() }.map_or(0, |m| m.model.n_features)
}

/// rpAD probability for each of `n_rows` row-major rows of `n_features`.
#[no_mangle]
pub unsafe extern "C" fn tg_rf_predict(
    model: *const TgForest,
    rows: *const f64,
    n_rows: usize,
    n_features: usize,
    out: *mut f64,
    cap: usize,
    len_out: *mut usize,
) -> TgStatus {
    guard(|| {
        let m = unsafe { handle(model, "model") }?;
        if n_rows > 0 && rows.is_null() {
            return Err(invalid("rows is null"));
        }
        let total = n_rows.checked_mul(n_features).ok_or_else(|| invalid("n_rows * n_features overflows"))?;
        let flat = if total == 0 { &[][..] } else { unsafe { std::slice::from_raw_parts(rows, total) } };
        let table: Vec<Vec<f64>> = if n_features == 0 {
            vec![Vec::new(); n_rows]
        } else {
            flat.chunks(n_features).map(<[f64]>::to_vec).collect()
        };
        let p: Vec<f64> = rf_predict(&m.model, &table).map_err(data)?.iter().map(|p| p[1]).collect();
        unsafe { fill(&p, out, cap, len_out) }
    })
}
