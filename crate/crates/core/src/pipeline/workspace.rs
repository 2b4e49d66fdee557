use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputHash {
    pub path: String,
    pub sha256: String,
}

/// Written next to every command's outputs as `manifests/<command>.json`.
/// Paths are relative to the output directory, so reruns into different
/// directories give equal manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<InputHash>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// The output directory of a run, with every read and write recorded.
pub struct Workspace {
    root: PathBuf,
    inputs: BTreeMap<String, String>,
    outputs: BTreeSet<String>,
}

impl Workspace {
    pub fn new(root: &Path) -> Result<Self, PipelineError> {
        std::fs::create_dir_all(root).map_err(PipelineError::io(root))?;
        Ok(Self { root: root.to_path_buf(), inputs: BTreeMap::new(), outputs: BTreeSet::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn exists(&self, rel: &str) -> bool {
        self.root.join(rel).is_file()
    }

    /// Reads a file produced by an earlier command.
    pub fn read(&mut self, rel: &str) -> Result<String, PipelineError> {
        let p = self.root.join(rel);
        if !p.is_file() {
            return Err(PipelineError::Data(format!("missing {rel}; run the command that produces it first")));
        }
        let text = std::fs::read_to_string(&p).map_err(PipelineError::io(&p))?;
        self.inputs.insert(rel.to_string(), sha256_hex(text.as_bytes()));
        Ok(text)
    }

    /// Reads a file outside the output directory, recorded under `label`.
    pub fn read_external(&mut self, path: &Path, label: String) -> Result<String, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(PipelineError::io(path))?;
        self.inputs.insert(label, sha256_hex(text.as_bytes()));
        Ok(text)
    }

    pub fn write(&mut self, rel: &str, contents: impl AsRef<[u8]>) -> Result<(), PipelineError> {
        let p = self.root.join(rel);
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir).map_err(PipelineError::io(dir))?;
        }
        std::fs::write(&p, contents).map_err(PipelineError::io(&p))?;
        self.outputs.insert(rel.to_string());
        Ok(())
    }

    /// Empties a command-owned directory so stale files from earlier runs
    /// cannot survive next to new ones.
    pub fn reset_dir(&self, rel: &str) -> Result<(), PipelineError> {
        let p = self.root.join(rel);
        if p.exists() {
            std::fs::remove_dir_all(&p).map_err(PipelineError::io(&p))?;
        }
        Ok(())
    }

    pub fn finish(mut self, command: &str, seed: u64, config: serde_json::Value) -> Result<RunManifest, PipelineError> {
        let manifest = RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config,
            inputs: std::mem::take(&mut self.inputs)
                .into_iter()
                .map(|(path, sha256)| InputHash { path, sha256 })
                .collect(),
            outputs: self.outputs.iter().cloned().collect(),
        };
        self.write(&format!("manifests/{command}.json"), manifest.to_json())?;
        Ok(manifest)
    }
}

/// Header and rows of a CSV produced by this tool.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    name: String,
}

impl Table {
    pub fn parse(name: &str, text: &str) -> Result<Self, PipelineError> {
        let bad = |e: csv::Error| PipelineError::Data(format!("{name}: {e}"));
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header = rdr.headers().map_err(bad)?.iter().map(String::from).collect();
        let rows = rdr
            .records()
            .map(|r| r.map(|r| r.iter().map(String::from).collect()))
            .collect::<Result<_, _>>()
            .map_err(bad)?;
        Ok(Self { header, rows, name: name.to_string() })
    }

    pub fn col(&self, name: &str) -> Result<usize, PipelineError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| PipelineError::Data(format!("{}: no column `{name}`", self.name)))
    }

    pub fn num(&self, row: &[String], col: usize) -> Result<f64, PipelineError> {
        row[col].parse().map_err(|_| PipelineError::Data(format!("{}: `{}` is not a number", self.name, row[col])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_lists_reads_and_writes() {
        let dir = tempfile::tempdir().unwrap();
        let mut ws = Workspace::new(dir.path()).unwrap();
        ws.write("a/x.csv", "h\n1\n").unwrap();
        let mut ws2 = Workspace::new(dir.path()).unwrap();
        assert_eq!(ws2.read("a/x.csv").unwrap(), "h\n1\n");
        assert!(matches!(ws2.read("a/missing.csv"), Err(PipelineError::Data(_))));
        ws2.write("b/y.csv", "z").unwrap();
        let m = ws2.finish("cmd", 1, serde_json::json!({"k": 1})).unwrap();
        assert_eq!(m.inputs, vec![InputHash { path: "a/x.csv".into(), sha256: sha256_hex(b"h\n1\n") }]);
        assert_eq!(m.outputs, vec!["b/y.csv".to_string()]);
        let on_disk = std::fs::read_to_string(dir.path().join("manifests/cmd.json")).unwrap();
        assert_eq!(on_disk, m.to_json());
    }

    #[test]
    fn sha256_known_value() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn table_columns() {
        let t = Table::parse("t", "a,b\n1,x\n2.5,y\n").unwrap();
        let a = t.col("a").unwrap();
        assert_eq!(t.num(&t.rows[1], a).unwrap(), 2.5);
        assert!(t.col("c").is_err());
        assert!(t.num(&t.rows[0], t.col("b").unwrap()).is_err());
    }
}
