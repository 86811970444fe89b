//! Run manifests: every artifact with its producing stage, parameters, and
//! content hash. Two runs with the same config and seed must produce
//! byte-identical manifests, so entries use logical (relative) names and
//! deterministic ordering.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Logical artifact name, relative to the run directory.
    pub name: String,
    pub stage: String,
    pub params: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn push(&mut self, name: &str, stage: &str, params: &str, sha256: String) {
        self.entries.push(ManifestEntry {
            name: name.to_string(),
            stage: stage.to_string(),
            params: params.to_string(),
            sha256,
        });
    }

    pub fn get(&self, name: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "name\tstage\tparams\tsha256")?;
        let mut sorted = self.entries.clone();
        sorted.sort_by(|a, b| a.name.cmp(&b.name));
        for e in sorted {
            writeln!(w, "{}\t{}\t{}\t{}", e.name, e.stage, e.params, e.sha256)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// SHA-256 of a file, streamed.
pub fn hash_file(path: &Path) -> Result<String> {
    let mut f =
        File::open(path).with_context(|| format!("hashing {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex(&hasher.finalize()))
}

/// SHA-256 of a list of strings (stage cache keys).
pub fn hash_strings<'a>(parts: impl IntoIterator<Item = &'a str>) -> String {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update((p.len() as u64).to_le_bytes());
        hasher.update(p.as_bytes());
    }
    hex(&hasher.finalize())
}

fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_is_sorted_and_stable() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Manifest::default();
        m.push("b.tsv", "s2", "p", "hash2".into());
        m.push("a.tsv", "s1", "p", "hash1".into());
        let path = dir.path().join("manifest.tsv");
        m.write_tsv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[1].starts_with("a.tsv"));
        assert!(lines[2].starts_with("b.tsv"));
    }

    #[test]
    fn file_hash_is_content_based() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("x");
        let p2 = dir.path().join("y");
        std::fs::write(&p1, "same").unwrap();
        std::fs::write(&p2, "same").unwrap();
        assert_eq!(hash_file(&p1).unwrap(), hash_file(&p2).unwrap());
    }
}
