//! Run manifest: resolved config, derived quantities, metrics and checksummed
//! artifacts. Contains no timestamps so identical runs give identical files.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Bo,
    Propagate,
    Factorize,
    Residuals,
    Trajectories,
    Plot,
}

impl Stage {
    pub const ALL: [Stage; 6] =
        [Stage::Bo, Stage::Propagate, Stage::Factorize, Stage::Residuals, Stage::Trajectories, Stage::Plot];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Bo => "bo",
            Stage::Propagate => "propagate",
            Stage::Factorize => "factorize",
            Stage::Residuals => "residuals",
            Stage::Trajectories => "trajectories",
            Stage::Plot => "plot",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Complete,
    Incomplete,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Csv,
    Snapshot,
    Factorized,
    Svg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Artifact {
    pub name: String,
    pub kind: ArtifactKind,
    pub stage: Stage,
    /// Relative to the output directory.
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Derived {
    pub dt: Option<f64>,
    pub n_steps: Option<usize>,
    pub t_end: Option<f64>,
    pub snapshot_count: Option<usize>,
    /// Stored snapshot time used for each requested render time.
    pub render_times: Vec<RenderTime>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderTime {
    pub requested: f64,
    pub t: f64,
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageFailure {
    pub stage: Stage,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub manifest_version: u32,
    pub status: Status,
    pub stages: Vec<Stage>,
    pub failure: Option<StageFailure>,
    pub config: RunConfig,
    pub derived: Derived,
    /// Scalar diagnostics keyed by name; NaN is written as null.
    pub metrics: BTreeMap<String, Option<f64>>,
    pub artifacts: Vec<Artifact>,
}

impl Manifest {
    pub fn new(config: RunConfig) -> Self {
        Manifest {
            manifest_version: MANIFEST_VERSION,
            status: Status::Incomplete,
            stages: Vec::new(),
            failure: None,
            config,
            derived: Derived::default(),
            metrics: BTreeMap::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn metric(&mut self, key: &str, value: f64) {
        self.metrics.insert(key.to_string(), value.is_finite().then_some(value));
    }

    pub fn get_metric(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).copied().flatten()
    }

    pub fn artifact(&self, name: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.name == name)
    }

    /// Path of a named artifact under `out`, failing if it is not listed or
    /// not on disk.
    pub fn require(&self, out: &Path, name: &str) -> anyhow::Result<PathBuf> {
        let Some(a) = self.artifact(name) else {
            bail!("artifact {name} is not in the manifest");
        };
        let p = out.join(&a.path);
        if !p.is_file() {
            bail!("artifact {name} is missing at {}", p.display());
        }
        Ok(p)
    }

    /// Records a file already written under `out`, replacing an entry of the
    /// same name.
    pub fn register(&mut self, out: &Path, name: &str, kind: ArtifactKind, stage: Stage, rel: &Path) -> anyhow::Result<()> {
        let data = std::fs::read(out.join(rel)).with_context(|| format!("reading back {}", rel.display()))?;
        let entry = Artifact {
            name: name.to_string(),
            kind,
            stage,
            path: rel.to_path_buf(),
            bytes: data.len() as u64,
            sha256: hex::encode(Sha256::digest(&data)),
        };
        match self.artifacts.iter_mut().find(|a| a.name == name) {
            Some(slot) => *slot = entry,
            None => self.artifacts.push(entry),
        }
        Ok(())
    }

    pub fn write(&self, out: &Path) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(out.join(MANIFEST_FILE), text + "\n").context("writing manifest")
    }

    pub fn read(out: &Path) -> anyhow::Result<Self> {
        let p = out.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
        serde_json::from_str(&text).with_context(|| format!("{} does not match the manifest schema", p.display()))
    }

    /// Recomputes every checksum and reports the first mismatch.
    pub fn verify(&self, out: &Path) -> anyhow::Result<()> {
        for a in &self.artifacts {
            let data = std::fs::read(out.join(&a.path)).with_context(|| format!("artifact {} unreadable", a.name))?;
            let sum = hex::encode(Sha256::digest(&data));
            if sum != a.sha256 {
                bail!("artifact {} checksum mismatch", a.name);
            }
        }
        Ok(())
    }

    /// `name -> sha256` for comparing runs.
    pub fn checksums(&self) -> BTreeMap<String, String> {
        self.artifacts.iter().map(|a| (a.name.clone(), a.sha256.clone())).collect()
    }
}
