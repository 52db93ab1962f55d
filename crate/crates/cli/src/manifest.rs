//! Run manifest: written before training starts and finalized at the end.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pending,
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedStatus {
    pub seed: u64,
    pub status: Status,
    pub episodes: u64,
    pub wall_seconds: Option<f64>,
    pub error: Option<String>,
}

/// Field order matters for TOML: plain values before tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub code_version: String,
    pub status: Status,
    pub variant: String,
    pub scenario: String,
    pub reporting_unit: String,
    pub correction_depth: usize,
    pub started_unix: u64,
    pub total_wall_seconds: Option<f64>,
    pub files: Vec<String>,
    /// Resolved configuration; re-running it reproduces `metrics.csv`.
    pub config: String,
    /// Reference values reported alongside results.
    pub reference: BTreeMap<String, f64>,
    pub seeds: Vec<SeedStatus>,
}

pub fn code_version() -> String {
    format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = toml::to_string(self).context("serializing manifest")?;
        let tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
        std::fs::write(&tmp, text)?;
        std::fs::rename(&tmp, dir.join(MANIFEST_FILE))?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn seed_mut(&mut self, seed: u64) -> &mut SeedStatus {
        self.seeds.iter_mut().find(|s| s.seed == seed).expect("seed listed in manifest")
    }
}

/// Relative paths of every file under `dir`, sorted.
pub fn inventory(dir: &Path) -> Result<Vec<String>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
        for entry in std::fs::read_dir(dir)? {
            let p = entry?.path();
            if p.is_dir() {
                walk(root, &p, out)?;
            } else {
                let rel = p.strip_prefix(root).unwrap_or(&p);
                out.push(rel.to_string_lossy().replace('\\', "/"));
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out)?;
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_toml() {
        let m = RunManifest {
            command: "train".into(),
            code_version: code_version(),
            status: Status::Running,
            variant: "maddpg".into(),
            scenario: "coop_comm".into(),
            reporting_unit: "reward per episode".into(),
            correction_depth: 1,
            started_unix: 5,
            total_wall_seconds: None,
            files: vec!["a".into()],
            config: "x = 1\n".into(),
            reference: BTreeMap::from([("r".to_string(), 0.5)]),
            seeds: vec![SeedStatus {
                seed: 3,
                status: Status::Pending,
                episodes: 0,
                wall_seconds: None,
                error: None,
            }],
        };
        let text = toml::to_string(&m).unwrap();
        assert_eq!(toml::from_str::<RunManifest>(&text).unwrap(), m);
    }
}
