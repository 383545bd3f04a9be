//! Content-addressed store of rendered reports, one directory per schema version.

use std::io;
use std::path::{Path, PathBuf};

use serde_json::Value;
use sha2::{Digest, Sha256};

use ekh::chain::SCHEMA_VERSION;

use crate::Outcome;

/// Hex digest of the request together with the schema and tool versions.
pub fn key(request: &Value) -> String {
    let mut h = Sha256::new();
    h.update(format!("schema={SCHEMA_VERSION};tool={}\n", env!("CARGO_PKG_VERSION")));
    h.update(serde_json::to_vec(request).expect("serializable"));
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("v{SCHEMA_VERSION}")).join(format!("{key}.json"))
}

/// A stored outcome; unreadable or corrupt entries count as misses.
pub fn load(dir: &Path, key: &str) -> Option<Outcome> {
    let text = std::fs::read_to_string(path(dir, key)).ok()?;
    serde_json::from_str(&text).ok()
}

pub fn store(dir: &Path, key: &str, out: &Outcome) -> io::Result<()> {
    let p = path(dir, key);
    let parent = p.parent().expect("entry has a directory");
    std::fs::create_dir_all(parent)?;
    let tmp = parent.join(format!("{key}.tmp{}", std::process::id()));
    std::fs::write(&tmp, serde_json::to_vec(out).expect("serializable"))?;
    std::fs::rename(tmp, p)
}
