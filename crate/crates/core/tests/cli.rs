use std::collections::BTreeSet;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: [&str; 24] = [
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

const CHAIN: [&str; 10] =
    ["gen-data", "build-graph", "metrics", "cluster", "train-rf", "shap", "train-gnn", "embed", "explain", "report"];

fn taugraph(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_taugraph")).args(args).arg("--out").arg(out).output().expect("spawn")
}

fn small(cmd: &str, out: &Path) -> Output {
    let mut args = vec![cmd, "--seed", "42"];
    args.extend(SMALL);
    taugraph(&args, out)
}

fn files(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn manifest(root: &Path, cmd: &str) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(root.join(format!("manifests/{cmd}.json"))).unwrap()).unwrap()
}

#[test]
fn gen_data_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        assert!(small("gen-data", d.path()).status.success());
    }
    assert_eq!(files(a.path()), files(b.path()));
    let c = tempfile::tempdir().unwrap();
    let mut args = vec!["gen-data", "--seed", "43"];
    args.extend(SMALL);
    assert!(taugraph(&args, c.path()).status.success());
    assert_ne!(files(a.path()), files(c.path()));
}

#[test]
fn full_chain_declares_every_output() {
    let d = tempfile::tempdir().unwrap();
    for cmd in CHAIN {
        let o = small(cmd, d.path());
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let mut declared = BTreeSet::new();
    for cmd in CHAIN {
        let m = manifest(d.path(), cmd);
        assert_eq!(m["command"], cmd);
        assert_eq!(m["seed"], 42);
        assert_eq!(m["config"]["synth"]["n_slides_per_class"], 6);
        for o in m["outputs"].as_array().unwrap() {
            let o = o.as_str().unwrap();
            assert!(d.path().join(o).is_file(), "{cmd} declares missing {o}");
            declared.insert(o.to_string());
        }
        declared.insert(format!("manifests/{cmd}.json"));
        if cmd != "gen-data" {
            assert!(!m["inputs"].as_array().unwrap().is_empty(), "{cmd} records no inputs");
        }
    }
    let on_disk: BTreeSet<String> = files(d.path()).into_iter().map(|f| f.0).collect();
    assert_eq!(on_disk, declared);
    for f in [
        "report/correlation.csv",
        "report/correlation.svg",
        "report/layer_importance_gnnx.svg",
        "report/layer_importance_pgx.svg",
        "report/shap_summary.svg",
        "report/embedding_scatter.svg",
    ] {
        assert!(declared.contains(f), "{f}");
    }
    // Inputs are hashed as read.
    let m = manifest(d.path(), "shap");
    let model = m["inputs"].as_array().unwrap().iter().find(|i| i["path"] == "rf/model.json").unwrap();
    let bytes = std::fs::read(d.path().join("rf/model.json")).unwrap();
    assert_eq!(model["sha256"], taugraph::pipeline::sha256_hex(&bytes));

    // Rerunning report alone changes nothing.
    let before = files(d.path());
    assert!(small("report", d.path()).status.success());
    assert_eq!(files(d.path()), before);

    // Forest comparison on embedding clusters replaces the rf outputs, and
    // shap then has no single forest to explain.
    let mut args = vec!["train-rf"];
    args.extend(SMALL);
    args.extend(["--set", "rf.source=embedding"]);
    assert!(taugraph(&args, d.path()).status.success());
    assert!(d.path().join("rf/embedding_comparison.csv").is_file());
    assert!(!d.path().join("rf/model.json").exists());
    assert_eq!(small("shap", d.path()).status.code(), Some(2));
}

#[test]
fn too_few_objects_is_a_data_error() {
    let src = tempfile::tempdir().unwrap();
    std::fs::write(
        src.path().join("S1.meta"),
        "slide_id: S1\npatient_id: P1\ndiagnosis: cAD\nresolution_nm_per_px: 227\nroi:\n0 0\n1000 0\n1000 1000\n0 1000\n",
    )
    .unwrap();
    std::fs::write(
        src.path().join("S1.csv"),
        "id,type,x_um,y_um,area_um2,layer\na,plaque,10,10,5,2\nb,plaque,500,500,5,3\n",
    )
    .unwrap();
    let out = tempfile::tempdir().unwrap();
    let o = taugraph(&["build-graph", "--input", src.path().to_str().unwrap()], out.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("TooFewObjects"));
}

#[test]
fn usage_and_config_errors_exit_1() {
    let d = tempfile::tempdir().unwrap();
    for args in [
        vec!["no-such-command"],
        vec!["gen-data", "--set", "rf.trees=3"],
        vec!["gen-data", "--set", "gnn.arch=mlp"],
        vec!["gen-data", "--seed", "minus-one"],
        vec!["gen-data", "--config", "/nonexistent/run.toml"],
    ] {
        assert_eq!(taugraph(&args, d.path()).status.code(), Some(1), "{args:?}");
    }
    assert_eq!(taugraph(&["--help"], d.path()).status.code(), Some(0));
}

#[test]
fn missing_inputs_exit_2() {
    let d = tempfile::tempdir().unwrap();
    for cmd in ["build-graph", "metrics", "train-gnn", "embed", "report"] {
        assert_eq!(small(cmd, d.path()).status.code(), Some(2), "{cmd}");
    }
}

#[test]
fn config_file_and_overrides() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.toml");
    std::fs::write(&cfg, "seed = 7\n[synth]\nn_slides_per_class = 2\nroi_width_um = 1500.0\n").unwrap();
    let out = d.path().join("out");
    let o = taugraph(&["gen-data", "--config", cfg.to_str().unwrap(), "--set", "synth.roi_height_um=1500"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out, "gen-data");
    assert_eq!(m["seed"], 7);
    assert_eq!(m["config"]["synth"]["roi_height_um"], 1500.0);
    assert_eq!(m["outputs"].as_array().unwrap().len(), 2 * 2 * 2 + 1);
}
