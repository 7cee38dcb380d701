//! On-disk asset tree with a manifest used as a generation cache.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CinemaError;
use crate::backends::{AssetRole, ImageAsset};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Cache key of the request that produced the asset.
    pub key: String,
    /// Pixel content hash, hex.
    pub hash: String,
    /// Path relative to the asset root.
    pub path: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetManifest {
    pub entries: BTreeMap<String, ManifestEntry>,
}

/// Relative path of an asset inside the tree.
pub fn asset_path(role: AssetRole, owner_id: &str, view_index: Option<u8>) -> String {
    match role {
        AssetRole::CharacterRef => format!("characters/{owner_id}/ref.png"),
        AssetRole::CharacterView => format!("characters/{owner_id}/view_{}.png", view_index.unwrap_or(0)),
        AssetRole::SpotRef => format!("spots/{owner_id}/ref.png"),
        AssetRole::Panel => format!("panels/{owner_id}.png"),
    }
}

fn io(path: &Path, e: impl std::fmt::Display) -> CinemaError {
    CinemaError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug)]
pub struct AssetStore {
    root: PathBuf,
    pub manifest: AssetManifest,
}

impl AssetStore {
    pub fn open(root: &Path) -> Result<Self, CinemaError> {
        let path = root.join(MANIFEST_FILE);
        let manifest = if path.is_file() {
            let text = std::fs::read_to_string(&path).map_err(|e| io(&path, e))?;
            serde_json::from_str(&text).map_err(|e| io(&path, e))?
        } else {
            AssetManifest::default()
        };
        Ok(AssetStore { root: root.to_path_buf(), manifest })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Loads an asset previously produced under the same cache key, if its
    /// file is intact.
    pub fn cached(&self, role: AssetRole, owner_id: &str, view: Option<u8>, key: &str) -> Option<ImageAsset> {
        let id = ImageAsset::new_id(role, owner_id, view);
        let entry = self.manifest.entries.get(&id)?;
        if entry.key != key {
            return None;
        }
        let bytes = std::fs::read(self.root.join(&entry.path)).ok()?;
        let asset = ImageAsset::from_png(&bytes, role, owner_id, view).ok()?;
        (format!("{:016x}", asset.content_hash) == entry.hash).then_some(asset)
    }

    /// Loads an asset regardless of how it was produced.
    pub fn load(&self, role: AssetRole, owner_id: &str, view: Option<u8>) -> Result<ImageAsset, CinemaError> {
        let path = self.root.join(asset_path(role, owner_id, view));
        let bytes = std::fs::read(&path).map_err(|e| io(&path, e))?;
        ImageAsset::from_png(&bytes, role, owner_id, view).map_err(|e| io(&path, e))
    }

    pub fn put(&mut self, asset: &ImageAsset, key: &str) -> Result<(), CinemaError> {
        let rel = asset_path(asset.role, &asset.owner_id, asset.view_index);
        let path = self.root.join(&rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        }
        std::fs::write(&path, asset.to_png()).map_err(|e| io(&path, e))?;
        self.manifest.entries.insert(
            asset.id.clone(),
            ManifestEntry { key: key.to_string(), hash: format!("{:016x}", asset.content_hash), path: rel },
        );
        Ok(())
    }

    pub fn save(&self) -> Result<(), CinemaError> {
        std::fs::create_dir_all(&self.root).map_err(|e| io(&self.root, e))?;
        let path = self.root.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| io(&path, e))
    }
}
