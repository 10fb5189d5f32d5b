use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use tracker_core::ppo::Curriculum;
use tracker_core::PpoConfig;

/// Training run configuration: a scenario file plus trainer settings.
///
/// Relative paths are resolved against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: PathBuf,
    #[serde(default)]
    pub ppo: PpoConfig,
    #[serde(default)]
    pub curriculum: Curriculum,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    /// Reads the file and makes its paths absolute-or-cwd-relative.
    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("{}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.scenario = resolve(base, &cfg.scenario);
        cfg.out = cfg.out.map(|o| resolve(base, &o));
        Ok(cfg)
    }
}

/// One hashed input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: PathBuf,
    pub sha256: String,
}

/// Written next to the weights so a run can be evaluated again.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub config: RunConfig,
    pub seed: u64,
    pub threads: usize,
    pub policy_weights: PathBuf,
    pub value_weights: PathBuf,
    pub scenario_files: Vec<FileHash>,
    pub updates: usize,
    pub version: String,
}

impl RunMetadata {
    pub const FILE: &'static str = "run_metadata.json";

    pub fn read(dir: &Path) -> anyhow::Result<Self> {
        let path = dir.join(Self::FILE);
        let text =
            std::fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("{}", path.display()))
    }
}
