use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::Result;

/// Written as `manifest.json` into every output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: Vec<String>,
    pub seeds: BTreeMap<String, u64>,
    pub config: serde_json::Value,
    pub created_unix_s: u64,
}

/// Package version plus `git describe` of the working tree when available.
pub fn version_string() -> String {
    let pkg = env!("CARGO_PKG_VERSION");
    let git = Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty());
    match git {
        Some(g) => format!("{pkg}+{g}"),
        None => pkg.to_string(),
    }
}

impl Manifest {
    pub fn new(seeds: BTreeMap<String, u64>, config: serde_json::Value) -> Self {
        Self {
            tool: "satneuro".into(),
            version: version_string(),
            command: std::env::args().collect(),
            seeds,
            config,
            created_unix_s: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        Ok(std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(self)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = Manifest::new(BTreeMap::from([("data".into(), 7)]), serde_json::json!({"a": 1}));
        m.write(dir.path()).unwrap();
        let back: Manifest =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(back.version.starts_with(env!("CARGO_PKG_VERSION")));
    }
}
