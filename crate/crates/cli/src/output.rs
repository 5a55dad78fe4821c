use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use harness_core::Site;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

/// Single owner of the output directory; records every file it writes so
/// the manifest can list checksums.
pub struct ArtifactWriter {
    dir: PathBuf,
    written: Vec<(String, String, usize)>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(ArtifactWriter {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        let digest = Sha256::digest(bytes);
        let hex = digest.iter().map(|b| format!("{b:02x}")).collect::<String>();
        self.written.push((name.to_string(), hex, bytes.len()));
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn csv(&mut self, name: &str, table: &Csv) -> Result<()> {
        self.write(name, table.text.as_bytes())
    }

    pub fn jsonl(&mut self, name: &str, lines: &[String]) -> Result<()> {
        let mut text = String::new();
        for l in lines {
            text.push_str(l);
            text.push('\n');
        }
        self.write(name, text.as_bytes())
    }

    pub fn manifest(mut self, command: &str, config: &Value, workers: usize) -> Result<()> {
        let artifacts: Vec<Value> = self
            .written
            .iter()
            .map(|(path, sha, bytes)| json!({"path": path, "sha256": sha, "bytes": bytes}))
            .collect();
        let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let manifest = json!({
            "schema": "harness-manifest/1",
            "command": command,
            "config": config,
            "artifacts": artifacts,
            "versions": {
                "harness-cli": env!("CARGO_PKG_VERSION"),
                "harness-core": harness_core::VERSION,
            },
            "workers": workers,
            "created_unix": created,
        });
        self.json("manifest.json", &manifest)
    }
}

/// Comma-separated table with a header row and LF line endings.
pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[String]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Csv {
            text,
            columns: header.len(),
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        debug_assert_eq!(cells.len(), self.columns);
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }
}

/// `x0, x1, ...` coordinate column names.
pub fn coord_header(dim: usize) -> Vec<String> {
    (0..dim).map(|k| format!("x{k}")).collect()
}

pub fn coord_cells(site: &Site) -> Vec<String> {
    site.coords().iter().map(|c| c.to_string()).collect()
}

/// Shortest representation that round-trips.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut t = Csv::new(&["a".into(), "b".into()]);
        t.row(&[num(1.0), num(0.1)]);
        assert_eq!(t.text, "a,b\n1.0,0.1\n");
    }

    #[test]
    fn manifest_lists_checksums() {
        let dir = std::env::temp_dir().join(format!("harness-out-test-{}", std::process::id()));
        let mut w = ArtifactWriter::new(&dir).unwrap();
        w.write("x.txt", b"abc").unwrap();
        w.manifest("kernel", &json!({}), 1).unwrap();
        let m: Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(
            m["artifacts"][0]["sha256"],
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        fs::remove_dir_all(dir).unwrap();
    }
}
