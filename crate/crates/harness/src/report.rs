//! Output-directory bookkeeping. Every run writes through a `Reporter`,
//! which applies RFC-4180 quoting to CSV, keeps a record of what it wrote,
//! and finishes by emitting `manifest.json` — a listing of every file in
//! the directory with its SHA-256 — as the last file of the run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{HarnessError, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Quote a field when RFC 4180 requires it.
pub fn csv_field(raw: &str) -> String {
    if raw.contains(',') || raw.contains('"') || raw.contains('\n') || raw.contains('\r') {
        format!("\"{}\"", raw.replace('"', "\"\""))
    } else {
        raw.to_string()
    }
}

/// Assemble a full CSV document: header row, CRLF line endings.
pub fn csv_string<I>(header: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut out = String::new();
    out.push_str(
        &header
            .iter()
            .map(|f| csv_field(f))
            .collect::<Vec<_>>()
            .join(","),
    );
    out.push_str("\r\n");
    for row in rows {
        debug_assert_eq!(row.len(), header.len(), "ragged CSV row");
        out.push_str(
            &row.iter()
                .map(|f| csv_field(f))
                .collect::<Vec<_>>()
                .join(","),
        );
        out.push_str("\r\n");
    }
    out
}

/// Format a float for CSV/SVG output: deterministic, round-trippable,
/// and free of locale surprises.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        // Shortest representation that parses back exactly.
        let mut s = format!("{v}");
        if !s.contains('.') && !s.contains('e') && !s.contains("inf") {
            s.push_str(".0");
        }
        s
    }
}

#[derive(Serialize)]
struct ManifestEntry {
    path: String,
    bytes: u64,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    experiment: &'a str,
    created_by: &'a str,
    config: serde_json::Value,
    files: Vec<ManifestEntry>,
}

pub struct Reporter {
    dir: PathBuf,
    written: BTreeMap<String, String>,
}

impl Reporter {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)
            .map_err(|e| HarnessError::io(dir.display().to_string(), e))?;
        Ok(Reporter {
            dir: dir.to_path_buf(),
            written: BTreeMap::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        if name.starts_with('/') || name.contains("..") {
            return Err(HarnessError::Config(format!(
                "output name {name:?} must be a relative path inside the run directory"
            )));
        }
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)
                .map_err(|e| HarnessError::io(parent.display().to_string(), e))?;
        }
        std::fs::write(&path, bytes)
            .map_err(|e| HarnessError::io(path.display().to_string(), e))?;
        self.written.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        self.put(name, csv_string(header, rows).as_bytes())
    }

    pub fn write_text(&mut self, name: &str, content: &str) -> Result<()> {
        self.put(name, content.as_bytes())
    }

    /// Hash everything in the directory and write `manifest.json` last.
    /// Files written outside this reporter are still listed (the manifest
    /// describes the directory, not just our own bookkeeping), but a file
    /// we wrote that has since changed on disk is an error.
    pub fn finish(self, experiment: &str, config: serde_json::Value) -> Result<PathBuf> {
        let mut names = Vec::new();
        walk(&self.dir, &self.dir, &mut names)?;
        names.sort();
        let mut files = Vec::with_capacity(names.len());
        for name in names {
            if name == "manifest.json" {
                continue;
            }
            let path = self.dir.join(&name);
            let bytes = std::fs::read(&path)
                .map_err(|e| HarnessError::io(path.display().to_string(), e))?;
            let hash = sha256_hex(&bytes);
            if let Some(recorded) = self.written.get(&name) {
                if recorded != &hash {
                    return Err(HarnessError::Config(format!(
                        "{name} changed on disk after it was written"
                    )));
                }
            }
            files.push(ManifestEntry {
                path: name,
                bytes: bytes.len() as u64,
                sha256: hash,
            });
        }
        let manifest = Manifest {
            experiment,
            created_by: concat!("lrm ", env!("CARGO_PKG_VERSION")),
            config,
            files,
        };
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| HarnessError::Config(format!("manifest serialisation failed: {e}")))?;
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, json.as_bytes())
            .map_err(|e| HarnessError::io(path.display().to_string(), e))?;
        Ok(path)
    }
}

fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    let entries =
        std::fs::read_dir(dir).map_err(|e| HarnessError::io(dir.display().to_string(), e))?;
    for entry in entries {
        let entry = entry.map_err(|e| HarnessError::io(dir.display().to_string(), e))?;
        let path = entry.path();
        if path.is_dir() {
            walk(root, &path, out)?;
        } else {
            let rel = path
                .strip_prefix(root)
                .expect("walk stays under root")
                .to_string_lossy()
                .replace('\\', "/");
            out.push(rel);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_matches_the_published_test_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn csv_quoting_follows_rfc_4180() {
        assert_eq!(csv_field("plain"), "plain");
        assert_eq!(csv_field("with,comma"), "\"with,comma\"");
        assert_eq!(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
        assert_eq!(csv_field("two\nlines"), "\"two\nlines\"");
        let doc = csv_string(&["a", "b"], vec![vec!["1".into(), "x,y".into()]]);
        assert_eq!(doc, "a,b\r\n1,\"x,y\"\r\n");
    }

    #[test]
    fn float_formatting_is_stable_and_lossless() {
        assert_eq!(fmt_f64(1.0), "1.0");
        assert_eq!(fmt_f64(0.30000000000000004), "0.30000000000000004");
        assert_eq!(fmt_f64(-2.5e-9), "-2.5e-9");
        let v = 0.1f64 + 0.2f64;
        assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn manifest_lists_every_file_and_is_written_last() {
        let tmp = tempfile::tempdir().unwrap();
        let mut rep = Reporter::create(tmp.path()).unwrap();
        rep.write_csv("table.csv", &["x"], vec![vec!["1".to_string()]])
            .unwrap();
        rep.write_text("fig/plot.svg", "<svg/>").unwrap();
        // A file produced outside the reporter still gets listed.
        std::fs::write(tmp.path().join("stray.txt"), "hello").unwrap();
        let manifest_path = rep
            .finish("cmp1d", serde_json::json!({"experiment": "cmp1d"}))
            .unwrap();
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(manifest_path).unwrap()).unwrap();
        let files: Vec<&str> = manifest["files"]
            .as_array()
            .unwrap()
            .iter()
            .map(|e| e["path"].as_str().unwrap())
            .collect();
        assert_eq!(files, vec!["fig/plot.svg", "stray.txt", "table.csv"]);
        for e in manifest["files"].as_array().unwrap() {
            assert_eq!(e["sha256"].as_str().unwrap().len(), 64);
        }
    }

    #[test]
    fn tampering_after_write_is_detected() {
        let tmp = tempfile::tempdir().unwrap();
        let mut rep = Reporter::create(tmp.path()).unwrap();
        rep.write_text("a.txt", "original").unwrap();
        std::fs::write(tmp.path().join("a.txt"), "mutated").unwrap();
        assert!(rep.finish("cmp1d", serde_json::json!({})).is_err());
    }
}
