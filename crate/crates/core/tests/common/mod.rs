//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

/// Small fast-reaction sweep that exercises every artifact.
pub const SMALL_SWEEP: &str = "\
system = fast_reaction
nonlinearity.kind = piecewise_affine
grid.n = 128
eps = 1e-2, 5e-3
t_end = 0.1
dt = 1e-3
cells.time = 2
cells.space = 2
bins.u = 32
bins.v = 32
output.snapshots = true
";

/// Relative paths of all files below `root`, sorted.
pub fn list_files(root: &Path) -> Vec<PathBuf> {
    fn walk(dir: &Path, root: &Path, out: &mut Vec<PathBuf>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(&path, root, out);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}

fn key_paths(value: &Value, prefix: &str, out: &mut BTreeSet<String>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                out.insert(p.clone());
                key_paths(v, &p, out);
            }
        }
        Value::Array(items) => {
            for v in items {
                key_paths(v, &format!("{prefix}[]"), out);
            }
        }
        _ => {}
    }
}

/// Text fingerprint of the artifact layout of one sweep directory: CSV
/// headers of the first epsilon directory and every JSON key path.
pub fn schema_fingerprint(dir: &Path) -> String {
    let mut lines = Vec::new();
    let eps0 = dir.join("eps_0");
    for name in ["cells.csv", "diagnostics.csv", "identity.csv", "snapshot_final.csv", "snapshots/snapshot_00000.csv"] {
        let text = fs::read_to_string(eps0.join(name)).unwrap();
        lines.push(format!("{name}: {}", text.lines().next().unwrap_or("")));
    }
    for name in ["report.json", "timings.json", "eps_0/measures.json"] {
        let value: Value = serde_json::from_str(&fs::read_to_string(dir.join(name)).unwrap()).unwrap();
        let mut keys = BTreeSet::new();
        key_paths(&value, "", &mut keys);
        for k in keys {
            lines.push(format!("{name}: {k}"));
        }
    }
    lines.join("\n") + "\n"
}

pub fn golden_schema_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/schema.txt")
}
