//! Output directory bookkeeping: which stages and units are finished, and a
//! checksum for every file written.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG_COPY: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub sha256: String,
    pub bytes: u64,
    /// Data rows, for CSV files.
    pub rows: Option<usize>,
    /// Content depends on wall-clock measurements.
    pub timing: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageState {
    pub complete: bool,
    /// Finished units of a resumable stage.
    pub units: BTreeSet<String>,
    pub files: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub tool_version: String,
    pub stages: BTreeMap<String, StageState>,
    pub files: BTreeMap<String, FileEntry>,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Option<RunManifest>, CliError> {
        let path = dir.join(MANIFEST);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path)?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// An output directory plus its manifest.
pub struct Workspace {
    pub root: PathBuf,
    pub manifest: RunManifest,
    resume: bool,
}

impl Workspace {
    /// Opens (or creates) the output directory of `config`. A manifest left by
    /// a different configuration is a config error.
    pub fn open(config: &ExperimentConfig, resume: bool) -> Result<Workspace, CliError> {
        let root = config.output.clone();
        fs::create_dir_all(&root)?;
        let hash = config.hash();
        let manifest = match RunManifest::read(&root)? {
            Some(m) if m.config_hash != hash => {
                return Err(CliError::Config(format!(
                    "{} holds results of a different configuration (hash {}); pick another output directory",
                    root.display(),
                    m.config_hash
                )))
            }
            Some(m) => m,
            None => RunManifest {
                config_hash: hash,
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                stages: BTreeMap::new(),
                files: BTreeMap::new(),
            },
        };
        let mut ws = Workspace { root, manifest, resume };
        ws.write(None, CONFIG_COPY, config.to_portable_toml().as_bytes(), None, false)?;
        ws.save()?;
        Ok(ws)
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// True when `rel` exists and matches its recorded checksum.
    pub fn verify(&self, rel: &str) -> bool {
        match (self.manifest.files.get(rel), fs::read(self.path(rel))) {
            (Some(entry), Ok(bytes)) => entry.sha256 == sha256_hex(&bytes),
            _ => false,
        }
    }

    /// Whether `stage` finished earlier and its files are intact.
    pub fn stage_complete(&self, stage: &str) -> bool {
        self.manifest.stages.get(stage).is_some_and(|s| s.complete && s.files.iter().all(|f| self.verify(f)))
    }

    /// Marks `stage` as started. Without `--resume` finished units are
    /// forgotten so the stage restarts from scratch.
    pub fn begin_stage(&mut self, stage: &str) -> Result<(), CliError> {
        let resume = self.resume;
        let st = self.manifest.stages.entry(stage.to_string()).or_default();
        st.complete = false;
        if !resume {
            st.units.clear();
        }
        self.save()
    }

    pub fn unit_done(&self, stage: &str, unit: &str, files: &[String]) -> bool {
        self.manifest.stages.get(stage).is_some_and(|s| s.units.contains(unit)) && files.iter().all(|f| self.verify(f))
    }

    pub fn mark_unit(&mut self, stage: &str, unit: &str) -> Result<(), CliError> {
        self.manifest.stages.entry(stage.to_string()).or_default().units.insert(unit.to_string());
        self.save()
    }

    pub fn set_units<I: IntoIterator<Item = String>>(&mut self, stage: &str, units: I) -> Result<(), CliError> {
        self.manifest.stages.entry(stage.to_string()).or_default().units = units.into_iter().collect();
        self.save()
    }

    pub fn finish_stage(&mut self, stage: &str) -> Result<(), CliError> {
        self.manifest.stages.entry(stage.to_string()).or_default().complete = true;
        info!("stage `{stage}` complete");
        self.save()
    }

    /// Writes `bytes` to `rel` atomically and records its checksum under
    /// `stage`.
    pub fn write(
        &mut self,
        stage: Option<&str>,
        rel: &str,
        bytes: &[u8],
        rows: Option<usize>,
        timing: bool,
    ) -> Result<(), CliError> {
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let tmp = path.with_extension("partial");
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, &path)?;
        self.manifest.files.insert(
            rel.to_string(),
            FileEntry { sha256: sha256_hex(bytes), bytes: bytes.len() as u64, rows, timing },
        );
        if let Some(stage) = stage {
            self.manifest.stages.entry(stage.to_string()).or_default().files.insert(rel.to_string());
        }
        Ok(())
    }

    pub fn is_timing(&self, rel: &str) -> bool {
        self.manifest.files.get(rel).is_some_and(|e| e.timing)
    }

    pub fn save(&self) -> Result<(), CliError> {
        let json = serde_json::to_string_pretty(&self.manifest)?;
        let path = self.path(MANIFEST);
        let tmp = path.with_extension("partial");
        fs::write(&tmp, json + "\n")?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }
}
