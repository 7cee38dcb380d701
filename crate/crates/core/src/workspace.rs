//! Single-directory project workspace: stage outputs plus a manifest of
//! what produced them.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::sha256_hex;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOCK_FILE: &str = ".lock";
const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Parse,
    Direct,
    Shoot,
    Board,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Parse, Stage::Direct, Stage::Shoot, Stage::Board, Stage::Eval];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Parse => "parse",
            Stage::Direct => "direct",
            Stage::Shoot => "shoot",
            Stage::Board => "board",
            Stage::Eval => "eval",
        }
    }

    /// Workspace paths written by the stage.
    pub fn outputs(self) -> &'static [&'static str] {
        match self {
            Stage::Parse => &["ir"],
            Stage::Direct => &["db", "logs/director.log"],
            Stage::Shoot => &["assets"],
            Stage::Board => &["board", "logs/board.log"],
            Stage::Eval => &["eval"],
        }
    }

    pub fn predecessors(self) -> &'static [Stage] {
        let i = Stage::ALL.iter().position(|s| *s == self).expect("listed");
        &Stage::ALL[..i]
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL.into_iter().find(|st| st.as_str() == s).ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Digest of the stage parameters and upstream outputs.
    pub input_digest: String,
    /// Digest of the files the stage wrote.
    pub output_digest: String,
    /// Output digests of the predecessors when the stage ran.
    pub upstream: BTreeMap<Stage, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub seed: u64,
    pub backends_digest: String,
    pub stages: BTreeMap<Stage, StageRecord>,
}

impl Default for Manifest {
    fn default() -> Self {
        Manifest { version: MANIFEST_VERSION, seed: 0, backends_digest: String::new(), stages: BTreeMap::new() }
    }
}

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("workspace is locked by another run (remove {0} if no run is active)")]
    Locked(String),
    #[error("manifest mismatch for {stage}: {reason}")]
    ManifestMismatch { stage: Stage, reason: String },
    #[error("{path} is corrupt: {message}")]
    Corrupt { path: String, message: String },
}

/// Removes the lock file when dropped.
#[derive(Debug)]
pub struct LockGuard(PathBuf);

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

fn io_err(path: &Path, e: impl fmt::Display) -> WorkspaceError {
    WorkspaceError::Io { path: path.display().to_string(), message: e.to_string() }
}

impl Workspace {
    pub fn open(root: &Path) -> Result<Self, WorkspaceError> {
        std::fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        Ok(Workspace { root: root.to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Takes the run lock; fails if another run holds it.
    pub fn lock(&self) -> Result<LockGuard, WorkspaceError> {
        let path = self.path(LOCK_FILE);
        OpenOptions::new().write(true).create_new(true).open(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::AlreadyExists {
                WorkspaceError::Locked(path.display().to_string())
            } else {
                io_err(&path, e)
            }
        })?;
        Ok(LockGuard(path))
    }

    pub fn manifest(&self) -> Result<Manifest, WorkspaceError> {
        let path = self.path(MANIFEST_FILE);
        if !path.is_file() {
            return Ok(Manifest::default());
        }
        let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| WorkspaceError::Corrupt { path: MANIFEST_FILE.into(), message: e.to_string() })
    }

    pub fn save_manifest(&self, m: &Manifest) -> Result<(), WorkspaceError> {
        self.write(MANIFEST_FILE, serde_json::to_string_pretty(m).expect("manifest serializes").as_bytes())
    }

    pub fn write(&self, rel: &str, bytes: &[u8]) -> Result<(), WorkspaceError> {
        let path = self.path(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| io_err(&path, e))
    }

    pub fn read_to_string(&self, rel: &str) -> Result<String, WorkspaceError> {
        let path = self.path(rel);
        std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))
    }

    /// Deletes a stage's outputs before it is rerun.
    pub fn clear(&self, stage: Stage) -> Result<(), WorkspaceError> {
        for rel in stage.outputs() {
            let path = self.path(rel);
            let result = if path.is_dir() {
                std::fs::remove_dir_all(&path)
            } else if path.is_file() {
                std::fs::remove_file(&path)
            } else {
                Ok(())
            };
            result.map_err(|e| io_err(&path, e))?;
        }
        Ok(())
    }

    /// Relative paths (with `/` separators) of all files under `rel`, sorted.
    fn files_under(&self, rel: &str) -> Result<Vec<String>, WorkspaceError> {
        let mut out = Vec::new();
        let start = self.path(rel);
        if start.is_file() {
            out.push(rel.to_string());
        } else if start.is_dir() {
            let mut stack = vec![start];
            while let Some(dir) = stack.pop() {
                for entry in std::fs::read_dir(&dir).map_err(|e| io_err(&dir, e))? {
                    let p = entry.map_err(|e| io_err(&dir, e))?.path();
                    if p.is_dir() {
                        stack.push(p);
                    } else {
                        let r = p.strip_prefix(&self.root).expect("under root");
                        let r: Vec<String> = r.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
                        out.push(r.join("/"));
                    }
                }
            }
        }
        out.sort();
        Ok(out)
    }

    fn digest_files(&self, files: &[String]) -> Result<String, WorkspaceError> {
        let mut buf = Vec::new();
        for f in files {
            let path = self.path(f);
            let bytes = std::fs::read(&path).map_err(|e| io_err(&path, e))?;
            buf.extend_from_slice(f.as_bytes());
            buf.push(0);
            buf.extend_from_slice(sha256_hex(&bytes).as_bytes());
            buf.push(b'\n');
        }
        Ok(sha256_hex(&buf))
    }

    /// Digest over the current contents of a stage's outputs.
    pub fn output_digest(&self, stage: Stage) -> Result<String, WorkspaceError> {
        let mut files = Vec::new();
        for rel in stage.outputs() {
            files.extend(self.files_under(rel)?);
        }
        self.digest_files(&files)
    }

    /// Digest of every file in the workspace except the lock.
    pub fn digest(&self) -> Result<String, WorkspaceError> {
        let files: Vec<String> = self.files_under(".")?;
        let files: Vec<String> = files
            .into_iter()
            .map(|f| f.trim_start_matches("./").to_string())
            .filter(|f| f != LOCK_FILE)
            .collect();
        self.digest_files(&files)
    }

    /// Fails unless every predecessor has run, its outputs are unchanged
    /// on disk, and each ran on top of the current outputs of its own
    /// predecessors.
    pub fn check_ready(&self, stage: Stage) -> Result<(), WorkspaceError> {
        let m = self.manifest()?;
        for p in stage.predecessors() {
            let mismatch = |reason: String| WorkspaceError::ManifestMismatch { stage, reason };
            let rec = m.stages.get(p).ok_or_else(|| mismatch(format!("stage {p} has not run")))?;
            if self.output_digest(*p)? != rec.output_digest {
                return Err(mismatch(format!("outputs of {p} changed after it ran")));
            }
            for q in p.predecessors() {
                let current = m.stages.get(q).map(|r| r.output_digest.as_str());
                if rec.upstream.get(q).map(String::as_str) != current {
                    return Err(mismatch(format!("{p} is stale: {q} was rerun since")));
                }
            }
        }
        Ok(())
    }

    /// Upstream output digests as recorded in the manifest.
    pub fn upstream(&self, stage: Stage) -> Result<BTreeMap<Stage, String>, WorkspaceError> {
        let m = self.manifest()?;
        Ok(stage
            .predecessors()
            .iter()
            .filter_map(|p| m.stages.get(p).map(|r| (*p, r.output_digest.clone())))
            .collect())
    }

    /// True when the stage already ran with these inputs and its outputs
    /// are intact.
    pub fn is_current(&self, stage: Stage, input_digest: &str) -> Result<bool, WorkspaceError> {
        let m = self.manifest()?;
        let Some(rec) = m.stages.get(&stage) else {
            return Ok(false);
        };
        Ok(rec.input_digest == input_digest
            && rec.upstream == self.upstream(stage)?
            && self.output_digest(stage)? == rec.output_digest)
    }

    /// Records a finished stage and drops records of later stages.
    pub fn record(&self, stage: Stage, input_digest: String) -> Result<(), WorkspaceError> {
        let mut m = self.manifest()?;
        let upstream = self.upstream(stage)?;
        let output_digest = self.output_digest(stage)?;
        m.stages.retain(|s, _| *s < stage);
        m.stages.insert(stage, StageRecord { input_digest, output_digest, upstream });
        self.save_manifest(&m)
    }
}
