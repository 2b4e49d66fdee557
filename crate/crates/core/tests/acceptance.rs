//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::Rng as _;
use taugraph::clustering::markov_cluster;
use taugraph::clustering::MclParams;
use taugraph::data::{Diagnosis, Layer, ObjectType};
use taugraph::explain::{
    auc, explainer_agreement, gnnx_explain, gnnx_explain_all, layer_importance, pgx_apply, pgx_train, GnnxConfig,
    LayerImportance, PgxConfig,
};
use taugraph::gnn::{max_gradient_error, train, Arch, GnnConfig, GnnModel, GraphInput, Head};
use taugraph::pipeline::{check_report_leakage, compare_embedding_rf, EmbeddingRfConfig};
use taugraph::spatial::{
    build_pathology_graph, compute_alpha_optimal, delaunay, delaunay_graph, erode, GraphEdge, GraphLevel, GraphNode,
    PathologyGraph, MAX_EDGE_LENGTH_UM,
};
use taugraph::synth::{generate_cohort, planted_motif_task, MotifConfig, SynthConfig};
use taugraph::tabular::{
    assemble_features, check_no_leakage, cross_validate, fit_forest, grouped_kfold, recursive_feature_elimination,
    rf_predict, shapley_attribution, FeatureSource, RfConfig, RfeConfig, ShapleyMode, TreeNode,
};
use taugraph::{clustering, metrics, util};

const SEED: u64 = 42;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: u32, name: &str, o: &Outcome, failures: &mut Vec<u32>) {
    println!("criterion {id:>2} {} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    if !o.pass {
        failures.push(id);
    }
}

fn template() -> PathologyGraph {
    PathologyGraph {
        slide_id: "t".into(),
        patient_id: "t".into(),
        diagnosis: Diagnosis::Cad,
        object_type: ObjectType::Plaque,
        level: GraphLevel::Patient,
        alpha_optimal_um: 0.0,
        nodes: Vec::new(),
        edges: Vec::new(),
    }
}

fn nodes_at(pts: &[(f64, f64)]) -> Vec<GraphNode> {
    pts.iter()
        .enumerate()
        .map(|(i, &(x, y))| GraphNode { record_id: format!("n{i}"), x_um: x, y_um: y, layer: Layer::Unassigned })
        .collect()
}

// ---- 1: Delaunay against an exact brute-force oracle ----------------------

fn orient(a: (i128, i128), b: (i128, i128), c: (i128, i128)) -> i128 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

/// Positive when `d` is strictly inside the circle through counter-clockwise `a, b, c`.
fn incircle(a: (i128, i128), b: (i128, i128), c: (i128, i128), d: (i128, i128)) -> i128 {
    let (adx, ady) = (a.0 - d.0, a.1 - d.1);
    let (bdx, bdy) = (b.0 - d.0, b.1 - d.1);
    let (cdx, cdy) = (c.0 - d.0, c.1 - d.1);
    (adx * adx + ady * ady) * (bdx * cdy - bdy * cdx) - (bdx * bdx + bdy * bdy) * (adx * cdy - ady * cdx)
        + (cdx * cdx + cdy * cdy) * (adx * bdy - ady * bdx)
}

/// Edges of all empty-circumcircle triangles, or `None` for sets with
/// collinear triples or co-circular quadruples (no unique answer).
fn oracle_edges(p: &[(i128, i128)]) -> Option<BTreeSet<(usize, usize)>> {
    let n = p.len();
    let mut edges = BTreeSet::new();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let o = orient(p[i], p[j], p[k]);
                if o == 0 {
                    return None;
                }
                let (a, b, c) = if o > 0 { (p[i], p[j], p[k]) } else { (p[i], p[k], p[j]) };
                let mut empty = true;
                for (l, &q) in p.iter().enumerate() {
                    if l == i || l == j || l == k {
                        continue;
                    }
                    let s = incircle(a, b, c, q);
                    if s == 0 {
                        return None;
                    }
                    if s > 0 {
                        empty = false;
                        break;
                    }
                }
                if empty {
                    edges.extend([(i, j), (i, k), (j, k)]);
                }
            }
        }
    }
    Some(edges)
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let mut rng = util::rng(SEED, 1);
    let (mut checked, mut mismatched) = (0, 0);
    while checked < 200 {
        let n = rng.random_range(3..=50);
        let ip: Vec<(i128, i128)> =
            (0..n).map(|_| (rng.random_range(0..1_000_000), rng.random_range(0..1_000_000))).collect();
        let Some(want) = oracle_edges(&ip) else { continue };
        let fp: Vec<(f64, f64)> = ip.iter().map(|&(x, y)| (x as f64, y as f64)).collect();
        let got: BTreeSet<(usize, usize)> =
            delaunay(&fp).map(|e| e.into_iter().map(|(u, v)| (u.min(v), u.max(v))).collect()).unwrap_or_default();
        checked += 1;
        if got != want {
            mismatched += 1;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    Outcome {
        pass: mismatched == 0 && secs < 30.0,
        detail: format!("{checked} point sets, {mismatched} mismatches, {secs:.1} s (limit 30 s)"),
    }
}

// ---- 2: centralities against all-paths enumeration ------------------------

fn all_paths(adj: &[Vec<(usize, u64)>], s: usize, t: usize) -> Vec<(u64, Vec<usize>)> {
    fn go(
        adj: &[Vec<(usize, u64)>],
        at: usize,
        t: usize,
        cost: u64,
        path: &mut Vec<usize>,
        out: &mut Vec<(u64, Vec<usize>)>,
    ) {
        if at == t {
            out.push((cost, path.clone()));
            return;
        }
        for &(w, c) in &adj[at] {
            if !path.contains(&w) {
                path.push(w);
                go(adj, w, t, cost + c, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(adj, s, t, 0, &mut vec![s], &mut out);
    out
}

fn criterion_2() -> Outcome {
    let mut rng = util::rng(SEED, 2);
    let mut worst: f64 = 0.0;
    let mut graphs = 0;
    while graphs < 100 {
        let n = rng.random_range(2..=8);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.random_bool(0.45) {
                    // Small integer costs make equal-cost paths common.
                    edges.push((u, v, rng.random_range(1u64..=4)));
                }
            }
        }
        let mut uf = util::UnionFind::new(n);
        for &(u, v, _) in &edges {
            uf.union(u, v);
        }
        if uf.labels().iter().any(|&l| l != 0) {
            continue;
        }
        graphs += 1;
        let g = PathologyGraph {
            nodes: nodes_at(&vec![(0.0, 0.0); n]),
            edges: edges
                .iter()
                .map(|&(u, v, c)| GraphEdge { u, v, length_um: c as f64, alpha_um: c as f64, weight: 1.0 })
                .collect(),
            ..template()
        };
        let mut adj = vec![Vec::new(); n];
        for &(u, v, c) in &edges {
            adj[u].push((v, c));
            adj[v].push((u, c));
        }
        let mut bc = vec![0.0; n];
        let mut dsum = vec![0u64; n];
        for s in 0..n {
            for t in s + 1..n {
                let paths = all_paths(&adj, s, t);
                let best = paths.iter().map(|p| p.0).min().expect("connected");
                dsum[s] += best;
                dsum[t] += best;
                let short: Vec<&Vec<usize>> = paths.iter().filter(|p| p.0 == best).map(|p| &p.1).collect();
                for (v, b) in bc.iter_mut().enumerate() {
                    if v != s && v != t {
                        *b += short.iter().filter(|p| p.contains(&v)).count() as f64 / short.len() as f64;
                    }
                }
            }
        }
        let pairs = ((n - 1) * (n.saturating_sub(2))) as f64 / 2.0;
        let got_b = metrics::betweenness(&g);
        let got_c = metrics::closeness(&g);
        for v in 0..n {
            let want_b = if pairs > 0.0 { bc[v] / pairs } else { 0.0 };
            let want_c = (n - 1) as f64 / dsum[v] as f64;
            worst = worst.max((got_b[v] - want_b).abs()).max((got_c[v] - want_c).abs());
        }
    }
    Outcome {
        pass: worst <= 1e-9,
        detail: format!("{graphs} connected graphs, max abs error {worst:.2e} (limit 1e-9)"),
    }
}

// ---- 3: erosion --------------------------------------------------------------

fn criterion_3() -> Outcome {
    let mut rng = util::rng(SEED, 3);
    let mut violations = 0;
    let mut wrongly_dropped = 0;
    let mut not_idempotent = 0;
    let mut over_cap_seen = 0;
    for _ in 0..50 {
        let n = rng.random_range(10..=150);
        let pts: Vec<(f64, f64)> =
            (0..n).map(|_| (rng.random_range(0.0..6000.0), rng.random_range(0.0..6000.0))).collect();
        let full = delaunay_graph(&template(), nodes_at(&pts)).expect("general position");
        let alpha = compute_alpha_optimal(&full.edges).expect("edges");
        let e = erode(&full, alpha, MAX_EDGE_LENGTH_UM);
        over_cap_seen += full.edges.iter().filter(|x| x.length_um > MAX_EDGE_LENGTH_UM).count();
        violations += e.edges.iter().filter(|x| !(x.alpha_um <= alpha && x.length_um <= MAX_EDGE_LENGTH_UM)).count();
        let kept = full.edges.iter().filter(|x| x.alpha_um <= alpha && x.length_um <= MAX_EDGE_LENGTH_UM).count();
        wrongly_dropped += kept - e.edges.len();
        if erode(&e, alpha, MAX_EDGE_LENGTH_UM) != e {
            not_idempotent += 1;
        }
    }
    Outcome {
        pass: violations == 0 && wrongly_dropped == 0 && not_idempotent == 0 && MAX_EDGE_LENGTH_UM == 1000.0,
        detail: format!(
            "50 graphs, cap {MAX_EDGE_LENGTH_UM} um, {violations} retained violations, {wrongly_dropped} wrongly dropped, \
             {not_idempotent} non-idempotent ({over_cap_seen} over-cap edges exercised)"
        ),
    }
}

// ---- 4: GNN gradients ---------------------------------------------------------

fn criterion_4() -> Outcome {
    let t0 = Instant::now();
    let mut rng = util::rng(SEED, 4);
    let mut edges = Vec::new();
    for u in 0..6 {
        for v in u + 1..6 {
            if rng.random_bool(0.5) {
                edges.push((u, v, rng.random_range(0.05..1.0)));
            }
        }
    }
    let x = ndarray::Array2::from_shape_fn((6, 10), |_| rng.random_range(-1.0..1.0));
    let g = GraphInput::new(6, edges, x, 1).expect("graph");
    let mask: Vec<f64> = (0..g.n_edges()).map(|i| 0.4 + 0.05 * i as f64).collect();
    let mut worst: f64 = 0.0;
    let mut worst_at = String::new();
    for arch in [Arch::Gcn, Arch::Sage, Arch::Wsage, Arch::Cheb { k: 3 }, Arch::Gat { heads: 2 }] {
        for head in [Head::NodeLevel, Head::GraphMeanPool] {
            let m = GnnModel::new(&GnnConfig { arch, head, seed: SEED, ..Default::default() }).expect("model");
            let err = max_gradient_error(&m, &g, &mask, 1e-5);
            if err > worst {
                worst = err;
                worst_at = format!("{arch}/{head:?}");
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    Outcome {
        pass: worst <= 1e-4 && secs < 60.0,
        detail: format!(
            "10 arch x head pairs, {} edges, max rel error {worst:.2e} at {worst_at} (limit 1e-4), {secs:.1} s",
            g.n_edges()
        ),
    }
}

// ---- 5: MCL -----------------------------------------------------------------------

fn criterion_5() -> Outcome {
    let pts = [(0.0, 0.0), (10.0, 0.0), (5.0, 8.0), (100.0, 0.0), (110.0, 0.0), (105.0, 8.0)];
    let tri = |a: usize, b: usize, len: f64| GraphEdge {
        u: a,
        v: b,
        length_um: len,
        alpha_um: len,
        weight: 1.0 / len.sqrt(),
    };
    let g = PathologyGraph {
        nodes: nodes_at(&pts),
        edges: vec![tri(0, 1, 10.0), tri(1, 2, 9.4), tri(0, 2, 9.4), tri(3, 4, 10.0), tri(4, 5, 9.4), tri(3, 5, 9.4)],
        ..template()
    };
    let out = markov_cluster(&g, &MclParams::default()).expect("mcl");
    let l = &out.assignment.labels;
    let split = l[0] == l[1] && l[1] == l[2] && l[3] == l[4] && l[4] == l[5] && l[0] != l[3];
    Outcome {
        pass: out.assignment.n_clusters() == 2 && split && out.max_stochasticity_error <= 1e-9,
        detail: format!(
            "{} clusters, triangles separated: {split}, max column-sum deviation {:.2e} (limit 1e-9)",
            out.assignment.n_clusters(),
            out.max_stochasticity_error
        ),
    }
}

// ---- 6: Shapley axioms ---------------------------------------------------------

fn criterion_6() -> Outcome {
    // Ten columns: 0..6 random, 7 constant (null), 8 a copy of 0, 9 noise.
    let mut rng = util::rng(SEED, 6);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for _ in 0..240 {
        let mut r: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
        r.push(3.0);
        r.push(r[0]);
        r.push(rng.random_range(-1.0..1.0));
        y.push(usize::from(r[0] + r[1] * r[2] - 0.5 * r[3] > 0.0));
        x.push(r);
    }
    let names: Vec<String> = (0..10).map(|j| format!("f{j}")).collect();
    let mut m =
        fit_forest(&x, &y, &names, &RfConfig { n_trees: 40, seed: SEED, ..Default::default() }).expect("forest");
    // Mirror every tree with columns 0 and 8 swapped so the model is
    // symmetric in the duplicated pair.
    let mirrored: Vec<_> = m
        .trees
        .iter()
        .map(|t| {
            let mut t = t.clone();
            for node in &mut t.nodes {
                if let TreeNode::Split { feature, .. } = node {
                    *feature = match *feature {
                        0 => 8,
                        8 => 0,
                        f => f,
                    };
                }
            }
            t
        })
        .collect();
    m.trees.extend(mirrored);
    let null_unused = !m.trees.iter().any(|t| t.uses_feature(7));
    let bg: Vec<Vec<f64>> = x[..40].to_vec();
    let (mut eff, mut null, mut sym): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for row in x[100..110].iter() {
        let a = shapley_attribution(&m, &bg, row, ShapleyMode::Exact).expect("shapley");
        let p = rf_predict(&m, std::slice::from_ref(row)).expect("predict")[0][1];
        eff = eff.max((a.base_value + a.phi.iter().sum::<f64>() - p).abs());
        null = null.max(a.phi[7].abs());
        sym = sym.max((a.phi[0] - a.phi[8]).abs());
    }
    Outcome {
        pass: null_unused && eff <= 1e-9 && null == 0.0 && sym <= 1e-9,
        detail: format!("M = 10, 10 rows: efficiency {eff:.2e}, null |phi| {null:.2e}, duplicate gap {sym:.2e}"),
    }
}

// ---- 8/9/10 share the synthetic cohorts ---------------------------------------

fn cohort_graphs(seed: u64) -> Vec<PathologyGraph> {
    let cohort = generate_cohort(&SynthConfig { seed, ..Default::default() }).expect("cohort");
    cohort.slides.iter().map(|d| build_pathology_graph(d, ObjectType::Plaque).expect("graph")).collect()
}

fn gnn_config(seed: u64) -> GnnConfig {
    GnnConfig { head: Head::GraphMeanPool, seed, ..Default::default() }
}

struct Run8 {
    outcome: Outcome,
    csv: String,
    leakage: Result<(), String>,
}

fn criterion_8(graphs: &[PathologyGraph]) -> Run8 {
    let t0 = Instant::now();
    let r = compare_embedding_rf(
        graphs,
        &EmbeddingRfConfig::default(),
        &gnn_config(SEED),
        &RfConfig { seed: SEED, ..Default::default() },
        SEED,
    )
    .expect("comparison");
    let secs = t0.elapsed().as_secs_f64();
    let (e, c) = (r.embedding.row_accuracy(), r.components.row_accuracy());
    Run8 {
        outcome: Outcome {
            pass: e >= 0.90 && e >= c && secs < 600.0,
            detail: format!(
                "embedding-cluster RF {e:.3} ({} rows) vs component RF {c:.3} ({} rows), slide-level {:.3} vs {:.3}, {secs:.0} s (limit 600 s)",
                r.embedding.rows,
                r.components.rows,
                r.embedding.slide_accuracy(),
                r.components.slide_accuracy()
            ),
        },
        csv: r.to_csv(),
        leakage: check_report_leakage(graphs, &r),
    }
}

struct Run9 {
    outcome: Outcome,
    csv: String,
    leakage: Result<(), String>,
}

const INNER: [u8; 2] = [3, 4];
const OUTER: [u8; 3] = [2, 5, 6];

fn ordering(li: &LayerImportance) -> (bool, String) {
    let m = |d, l: &[u8]| li.mean_of_layers(d, l).unwrap_or(f64::NAN);
    let (ri, ro) = (m(Diagnosis::Rpad, &INNER), m(Diagnosis::Rpad, &OUTER));
    let (ci, co) = (m(Diagnosis::Cad, &INNER), m(Diagnosis::Cad, &OUTER));
    (ri > ro && co > ci, format!("rpAD L3-4 {ri:.3} > L2,5,6 {ro:.3}; cAD L2,5,6 {co:.3} > L3-4 {ci:.3}"))
}

fn criterion_9(graphs: &[PathologyGraph]) -> Run9 {
    let inputs: Vec<GraphInput> = graphs.iter().map(GraphInput::from_graph).collect();
    let groups: Vec<String> = graphs.iter().map(|g| g.slide_id.clone()).collect();
    let out = train(&inputs, &groups, &gnn_config(SEED)).expect("train");
    let leakage = check_no_leakage(&groups, &out.splits);
    let refs: Vec<&GraphInput> = inputs.iter().collect();
    // Size penalty off: see the note in the README on regularizer scale.
    let gcfg = GnnxConfig { lambda_size: 0.0, ..Default::default() };
    let pcfg = PgxConfig { lambda_size: 0.0, seed: SEED, ..Default::default() };
    let a = gnnx_explain_all(&out.model, &refs, &gcfg).expect("gnnx");
    let (px, rep) = pgx_train(&out.model, &refs, &pcfg).expect("pgx");
    let b: Vec<_> = refs.iter().map(|g| pgx_apply(&px, &out.model, g, g.label).expect("pgx apply")).collect();
    let la = layer_importance(&graphs.iter().zip(&a).collect::<Vec<_>>()).expect("layers");
    let lb = layer_importance(&graphs.iter().zip(&b).collect::<Vec<_>>()).expect("layers");
    let (pa, da) = ordering(&la);
    let (pb, db) = ordering(&lb);
    let rho =
        a.iter().zip(&b).map(|(x, y)| explainer_agreement(x, y).expect("agreement").rho).sum::<f64>() / a.len() as f64;
    let gnnx_decreased = a.iter().all(|r| r.final_loss() < r.initial_loss());
    let pgx_decreased = rep.loss_history.last() < rep.loss_history.first();
    let mut csv = String::from("method,");
    csv.push_str(&la.to_csv());
    let csv = format!("{}pgx\n{}mean_rho,{rho:?}\n", csv.replacen("method,", "gnnx\n", 1), lb.to_csv());
    Run9 {
        outcome: Outcome {
            pass: pa && pb && rho >= 0.5 && gnnx_decreased && pgx_decreased,
            detail: format!(
                "gnnx [{da}] {}; pgx [{db}] {}; mean Spearman {rho:.3} (limit 0.5); objectives decreased: gnnx {gnnx_decreased}, pgx {pgx_decreased}",
                if pa { "ok" } else { "wrong order" },
                if pb { "ok" } else { "wrong order" }
            ),
        },
        csv,
        leakage,
    }
}

struct Run10 {
    outcome: Outcome,
    csv: String,
    leakage: Result<(), String>,
}

fn criterion_10() -> Run10 {
    let t0 = Instant::now();
    let task = planted_motif_task(&MotifConfig { seed: SEED, ..Default::default() }).expect("motif task");
    let graphs: Vec<PathologyGraph> =
        task.cohort.slides.iter().map(|d| build_pathology_graph(d, ObjectType::Plaque).expect("graph")).collect();
    let inputs: Vec<GraphInput> = graphs.iter().map(GraphInput::from_graph).collect();
    let per_class = task.motif_ids.iter().filter(|m| !m.is_empty()).count();
    // First half of each class trains, second half is held out.
    let held_out = |i: usize| i % per_class >= per_class / 2;
    let tr_idx: Vec<usize> = (0..graphs.len()).filter(|&i| !held_out(i)).collect();
    let tr: Vec<GraphInput> = tr_idx.iter().map(|&i| inputs[i].clone()).collect();
    let groups: Vec<String> = tr_idx.iter().map(|&i| graphs[i].slide_id.clone()).collect();
    let out = train(&tr, &groups, &gnn_config(SEED)).expect("train");
    let mut leakage = check_no_leakage(&groups, &out.splits);
    if leakage.is_ok() && tr_idx.iter().any(|&i| held_out(i)) {
        leakage = Err("held-out slide in training split".into());
    }
    let tr_refs: Vec<&GraphInput> = tr.iter().collect();
    let (px, _) = pgx_train(&out.model, &tr_refs, &PgxConfig { seed: SEED, ..Default::default() }).expect("pgx");
    let mut csv = String::from("slide,gnnx_auc,pgx_auc\n");
    let (mut sa, mut sb, mut n, mut skipped) = (0.0, 0.0, 0, 0);
    for i in (0..graphs.len()).filter(|&i| held_out(i) && !task.motif_ids[i].is_empty()) {
        let g = &graphs[i];
        let motif = &task.motif_ids[i];
        let pos: Vec<bool> = g
            .edges
            .iter()
            .map(|e| motif.contains(&g.nodes[e.u].record_id) && motif.contains(&g.nodes[e.v].record_id))
            .collect();
        let a = gnnx_explain(&out.model, &inputs[i], 1, &GnnxConfig::default()).expect("gnnx");
        let b = pgx_apply(&px, &out.model, &inputs[i], 1).expect("pgx");
        match (auc(&a.edge_importance, &pos), auc(&b.edge_importance, &pos)) {
            (Some(x), Some(y)) => {
                sa += x;
                sb += y;
                n += 1;
                csv.push_str(&format!("{},{x:?},{y:?}\n", g.slide_id));
            }
            _ => skipped += 1,
        }
    }
    let (ma, mb) = (sa / n.max(1) as f64, sb / n.max(1) as f64);
    let secs = t0.elapsed().as_secs_f64();
    Run10 {
        outcome: Outcome {
            pass: n > 0 && ma >= 0.8 && mb >= 0.8 && secs < 300.0,
            detail: format!(
                "held-out motif graphs {n} (skipped {skipped} without both edge kinds): mean AUC gnnx {ma:.3}, pgx {mb:.3} (limit 0.8), {secs:.1} s (limit 300 s)"
            ),
        },
        csv,
        leakage,
    }
}

// ---- 7: leakage across every grouped split of the run ---------------------------

fn criterion_7(graphs: &[PathologyGraph], others: &[(&str, &Result<(), String>)]) -> Outcome {
    let mut sources = Vec::new();
    let stats: Vec<(Diagnosis, Vec<clustering::ClusterStats>)> = graphs
        .iter()
        .map(|g| (g.diagnosis, clustering::cluster_stats(g, &clustering::connected_components(g)).expect("stats")))
        .collect();
    for (d, s) in &stats {
        sources.push(FeatureSource::Clusters { stats: s, diagnosis: *d });
    }
    let table = assemble_features(&sources).expect("table");
    let groups = table.groups();
    let folds = grouped_kfold(&groups, &table.labels(), 5, SEED).expect("folds");
    let forest = RfConfig { n_trees: 50, seed: SEED, ..Default::default() };
    let cv = cross_validate(&table, &folds, &forest).expect("cv");
    let rfe = recursive_feature_elimination(&table, &RfeConfig { forest, ..Default::default() }).expect("rfe");
    let mut checks: Vec<(&str, Result<(), String>)> =
        vec![("tabular cv", check_no_leakage(&groups, &folds)), ("rfe", check_no_leakage(&groups, &rfe.folds))];
    checks.extend(others.iter().map(|(n, r)| (*n, (*r).clone())));
    let bad: Vec<String> = checks.iter().filter_map(|(n, r)| r.as_ref().err().map(|e| format!("{n}: {e}"))).collect();
    Outcome {
        pass: bad.is_empty(),
        detail: format!(
            "{} split families checked ({}), cluster-row cv accuracy {:.3}{}",
            checks.len(),
            checks.iter().map(|c| c.0).collect::<Vec<_>>().join(", "),
            cv.accuracy,
            if bad.is_empty() { String::new() } else { format!("; leaks: {}", bad.join("; ")) }
        ),
    }
}

// ---- 11: determinism -----------------------------------------------------------

fn tree_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).expect("read dir") {
            let p = e.expect("entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).expect("prefix").to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).expect("read")));
            }
        }
    }
    out.sort();
    out
}

fn cli_chain(out: &Path) -> Result<(), String> {
    let exe = env!("CARGO_BIN_EXE_taugraph");
    let small = [
        "--set",
        "synth.n_slides_per_class=6",
        "--set",
        "synth.roi_width_um=2000",
        "--set",
        "synth.roi_height_um=2000",
        "--set",
        "gnn.max_epochs=8",
        "--set",
        "gnn.kfold_k=3",
        "--set",
        "rf.n_trees=30",
        "--set",
        "rf.folds=3",
        "--set",
        "explain.gnnx.epochs=20",
        "--set",
        "explain.pgx.epochs=3",
        "--set",
        "embed.n_clusters=3",
        "--set",
        "embed.restarts=4",
        "--set",
        "embed.outer_k=3",
    ];
    for cmd in
        ["gen-data", "build-graph", "metrics", "cluster", "train-rf", "shap", "train-gnn", "embed", "explain", "report"]
    {
        let st = Command::new(exe)
            .arg(cmd)
            .args(["--seed", "42", "--out"])
            .arg(out)
            .args(small)
            .output()
            .map_err(|e| e.to_string())?;
        if !st.status.success() {
            return Err(format!("{cmd}: {} {}", st.status, String::from_utf8_lossy(&st.stderr)));
        }
    }
    Ok(())
}

fn criterion_11(first: &[(&str, &str)], second: &[(&str, &str)]) -> Outcome {
    let same_tables = first == second;
    let dirs = [tempfile::tempdir().expect("tmp"), tempfile::tempdir().expect("tmp")];
    let runs: Vec<Result<(), String>> = dirs.iter().map(|d| cli_chain(d.path())).collect();
    if let Some(Err(e)) = runs.iter().find(|r| r.is_err()) {
        return Outcome { pass: false, detail: format!("CLI chain failed: {e}") };
    }
    let a = tree_bytes(dirs[0].path());
    let b = tree_bytes(dirs[1].path());
    let n_csv_svg = a.iter().filter(|(p, _)| p.ends_with(".csv") || p.ends_with(".svg")).count();
    let differing: Vec<&String> = a.iter().zip(&b).filter(|(x, y)| x != y).map(|(x, _)| &x.0).collect();
    let same_tree = a.len() == b.len() && differing.is_empty();
    Outcome {
        pass: same_tables && same_tree && n_csv_svg > 0,
        detail: format!(
            "acceptance tables identical on rerun: {same_tables}; CLI chain twice: {} files ({n_csv_svg} CSV/SVG), {} differing",
            a.len(),
            differing.len() + a.len().abs_diff(b.len())
        ),
    }
}

fn main() {
    let t0 = Instant::now();
    let mut failures = Vec::new();
    report(1, "Delaunay oracle", &criterion_1(), &mut failures);
    report(2, "centrality oracle", &criterion_2(), &mut failures);
    report(3, "erosion contract", &criterion_3(), &mut failures);
    report(4, "GNN gradient check", &criterion_4(), &mut failures);
    report(5, "MCL sanity", &criterion_5(), &mut failures);
    report(6, "Shapley axioms", &criterion_6(), &mut failures);

    let graphs = cohort_graphs(SEED);
    let r8 = criterion_8(&graphs);
    let r9 = criterion_9(&graphs);
    let r10 = criterion_10();
    report(
        7,
        "leakage guard",
        &criterion_7(
            &graphs,
            &[("embedding rf", &r8.leakage), ("gnn layers", &r9.leakage), ("gnn motif", &r10.leakage)],
        ),
        &mut failures,
    );
    report(8, "embedding-augmented RF", &r8.outcome, &mut failures);
    report(9, "layer importance", &r9.outcome, &mut failures);
    report(10, "planted motif recovery", &r10.outcome, &mut failures);

    let again = (criterion_8(&graphs), criterion_9(&graphs), criterion_10());
    let first = [("8", r8.csv.as_str()), ("9", r9.csv.as_str()), ("10", r10.csv.as_str())];
    let second = [("8", again.0.csv.as_str()), ("9", again.1.csv.as_str()), ("10", again.2.csv.as_str())];
    report(11, "determinism", &criterion_11(&first, &second), &mut failures);

    println!("acceptance finished in {:.0} s", t0.elapsed().as_secs_f64());
    if !failures.is_empty() {
        println!("failed criteria: {failures:?}");
        std::process::exit(1);
    }
}
