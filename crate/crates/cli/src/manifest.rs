//! Run manifest: which stages completed, when, and what they wrote.
//!
//! A plain append-style text file in the output directory:
//!
//! ```text
//! hypercast_manifest 1
//! config_hash <hex16>
//! stage <name> <unix_millis> <path> [<path> ...]
//! ```

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};

const MAGIC: &str = "hypercast_manifest 1";

#[derive(Debug, Clone)]
pub struct StageEntry {
    pub name: String,
    pub millis: u128,
    pub artifacts: Vec<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub config_hash: u64,
    pub stages: Vec<StageEntry>,
    path: PathBuf,
}

impl Manifest {
    /// Loads the manifest, creating one bound to `config_hash` if absent.
    /// A hash mismatch means the artifacts were produced under different
    /// settings; refuse to mix them.
    pub fn open_or_create(path: &Path, config_hash: u64) -> Result<Manifest> {
        if !path.exists() {
            let m = Manifest {
                config_hash,
                stages: Vec::new(),
                path: path.to_path_buf(),
            };
            m.write()?;
            return Ok(m);
        }
        let m = Manifest::read(path)?;
        if m.config_hash != config_hash {
            bail!(
                "config hash mismatch in {}: the output directory was built with \
                 different settings; use a fresh --out directory",
                path.display()
            );
        }
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read manifest {}", path.display()))?;
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            bail!("{}: not a manifest", path.display());
        }
        let hash_line = lines.next().unwrap_or("");
        let config_hash = hash_line
            .strip_prefix("config_hash ")
            .and_then(|h| u64::from_str_radix(h, 16).ok())
            .with_context(|| format!("{}: bad config_hash line", path.display()))?;
        let mut stages = Vec::new();
        for line in lines {
            if let Some(rest) = line.strip_prefix("stage ") {
                let mut parts = rest.split_whitespace();
                let name = parts.next().unwrap_or_default().to_string();
                let millis: u128 = parts.next().unwrap_or("0").parse().unwrap_or(0);
                let artifacts = parts.map(PathBuf::from).collect();
                stages.push(StageEntry {
                    name,
                    millis,
                    artifacts,
                });
            }
        }
        Ok(Manifest {
            config_hash,
            stages,
            path: path.to_path_buf(),
        })
    }

    fn write(&self) -> Result<()> {
        let mut out = String::new();
        out.push_str(MAGIC);
        out.push('\n');
        out.push_str(&format!("config_hash {:016x}\n", self.config_hash));
        for s in &self.stages {
            out.push_str(&format!("stage {} {}", s.name, s.millis));
            for a in &s.artifacts {
                out.push_str(&format!(" {}", a.display()));
            }
            out.push('\n');
        }
        if let Some(parent) = self.path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&self.path, out)
            .with_context(|| format!("cannot write manifest {}", self.path.display()))
    }

    pub fn has_stage(&self, name: &str) -> bool {
        self.stages.iter().any(|s| s.name == name)
    }

    pub fn require_stage(&self, name: &str) -> Result<()> {
        if !self.has_stage(name) {
            bail!("missing prerequisite stage '{name}': run `hypercast {name}` first");
        }
        Ok(())
    }

    /// Records a completed stage (replacing an earlier record of the same
    /// stage) and persists the manifest.
    pub fn record(&mut self, name: &str, artifacts: &[&Path]) -> Result<()> {
        let millis = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0);
        self.stages.retain(|s| s.name != name);
        self.stages.push(StageEntry {
            name: name.to_string(),
            millis,
            artifacts: artifacts.iter().map(|p| p.to_path_buf()).collect(),
        });
        self.write()
    }
}
