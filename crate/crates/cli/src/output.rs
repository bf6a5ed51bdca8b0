//! Artifact persistence: JSON with stable key order, RFC-4180 CSV, and
//! content hashing for provenance. Serialized structs carry their fields in
//! declaration order and all maps are ordered, so identical experiments
//! serialize to identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use cglab_core::{DMat, Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

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

/// Reference to an input snapshot embedded in a report for provenance.
#[derive(Clone, Debug, Serialize, serde::Deserialize)]
pub struct SnapshotRef {
    pub file: String,
    pub sha256: String,
}

/// Envelope written around every JSON payload: what it is, the exact
/// experiment definition that produced it, and the hashes of its inputs.
#[derive(Clone, Debug, Serialize)]
pub struct Artifact<T: Serialize> {
    pub kind: String,
    pub config: BTreeMap<String, String>,
    pub snapshots: Vec<SnapshotRef>,
    pub payload: T,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| Error::format(format!("serializing {}: {e}", path.display())))?;
    bytes.push(b'\n');
    fs::write(path, bytes)
        .map_err(|e| Error::Io(std::io::Error::other(format!("writing {}: {e}", path.display()))))?;
    Ok(())
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::format(format!("opening {}: {e}", path.display())))?;
    w.write_record(header)
        .map_err(|e| Error::format(format!("writing {}: {e}", path.display())))?;
    for row in rows {
        w.write_record(row)
            .map_err(|e| Error::format(format!("writing {}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Error::format(format!("flushing {}: {e}", path.display())))?;
    Ok(())
}

/// Row-major nested view of a matrix for JSON payloads.
pub fn mat_rows(m: &DMat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn csv_quotes_when_needed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_csv(&path, &["a", "b"], &[vec!["x,y".into(), "1.5".into()]]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "a,b\n\"x,y\",1.5\n");
    }
}
