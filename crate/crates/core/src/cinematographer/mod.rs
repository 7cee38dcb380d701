//! Reference imagery: base prompts from refined records, one reference
//! image per character and spot, and an eight-view turnaround per
//! character.

mod prompt;
mod store;

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::backends::{AssetRole, Backend, BackendError, ImageAsset, ImageRequest, VIEW_COUNT};
use crate::digest::hash64_str;
use crate::script_ir::ScriptIR;

pub use prompt::{build_base_prompt, BasePromptConfig, Framing, Orientation, PromptSubject, MAX_PROMPT_CHARS};
pub use store::{asset_path, AssetManifest, AssetStore, ManifestEntry, MANIFEST_FILE};

#[derive(Debug, Error)]
pub enum CinemaError {
    #[error("character {0} has not been refined")]
    UnrefinedRecord(String),
    #[error("{owner}: {source}")]
    Backend { owner: String, source: BackendError },
    #[error("multi-view for {owner} returned {got} views, expected 8")]
    WrongCount { owner: String, got: usize },
    #[error("multi-view set for {0} is inconsistent")]
    InvalidViewSet(String),
    #[error("no reference image for {0}")]
    MissingReference(String),
    #[error("asset I/O: {0}")]
    Io(String),
}

/// Camera azimuth of a view in degrees, clockwise from above; view 0 is
/// frontal.
pub fn view_azimuth(view_index: u8) -> f64 {
    45.0 * view_index as f64
}

/// Eight views of one character, indexed by view.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewSet {
    pub character_id: String,
    pub views: Vec<ImageAsset>,
}

impl MultiViewSet {
    pub fn new(character_id: &str, views: Vec<ImageAsset>) -> Result<Self, CinemaError> {
        let set = MultiViewSet { character_id: character_id.to_string(), views };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), CinemaError> {
        if self.views.len() != VIEW_COUNT {
            return Err(CinemaError::WrongCount { owner: self.character_id.clone(), got: self.views.len() });
        }
        for (x, v) in self.views.iter().enumerate() {
            if v.view_index != Some(x as u8) || v.owner_id != self.character_id || v.role != AssetRole::CharacterView {
                return Err(CinemaError::InvalidViewSet(self.character_id.clone()));
            }
        }
        Ok(())
    }

    pub fn view(&self, x: u8) -> &ImageAsset {
        &self.views[x as usize]
    }
}

/// Reference images keyed by owner id, plus entities that failed.
#[derive(Debug, Default)]
pub struct ReferenceSet {
    pub characters: BTreeMap<String, ImageAsset>,
    pub spots: BTreeMap<String, ImageAsset>,
    pub failed: Vec<(String, String)>,
    /// Requests that actually reached the backend (cache misses).
    pub generated: usize,
}

struct Job {
    request: ImageRequest,
    key: String,
}

fn cache_key(req: &ImageRequest, identity: &str) -> String {
    format!(
        "{:016x}",
        hash64_str(&[
            &req.prompt,
            &req.negative_prompt,
            &req.seed.to_string(),
            &req.width.to_string(),
            &req.height.to_string(),
            req.role.as_str(),
            &req.owner_id,
            identity,
        ])
    )
}

/// Produces one reference per character and spot, reusing cached assets
/// when prompt, seed, size and backend are unchanged. Per-entity failures
/// are collected in [`ReferenceSet::failed`] after everything else has been
/// persisted.
pub fn generate_reference_images(
    ir: &ScriptIR,
    character_cfg: &BasePromptConfig,
    spot_cfg: &BasePromptConfig,
    seed: u64,
    backend: &dyn Backend,
    store: &mut AssetStore,
) -> Result<ReferenceSet, CinemaError> {
    let identity = backend.identity();
    let mut jobs = Vec::new();
    for c in &ir.characters {
        let (width, height) = character_cfg.dimensions();
        let request = ImageRequest {
            prompt: build_base_prompt(PromptSubject::Character(c), character_cfg)?,
            negative_prompt: character_cfg.negative_prompt(),
            seed,
            width,
            height,
            role: AssetRole::CharacterRef,
            owner_id: c.id.clone(),
        };
        jobs.push(Job { key: cache_key(&request, &identity), request });
    }
    for s in &ir.spots {
        let (width, height) = spot_cfg.dimensions();
        let request = ImageRequest {
            prompt: build_base_prompt(PromptSubject::Spot(s), spot_cfg)?,
            negative_prompt: spot_cfg.negative_prompt(),
            seed,
            width,
            height,
            role: AssetRole::SpotRef,
            owner_id: s.id.clone(),
        };
        jobs.push(Job { key: cache_key(&request, &identity), request });
    }

    let shared: &AssetStore = store;
    let results: Vec<(bool, Result<ImageAsset, BackendError>)> = jobs
        .par_iter()
        .map(|j| {
            let r = &j.request;
            match shared.cached(r.role, &r.owner_id, None, &j.key) {
                Some(a) => (false, Ok(a)),
                None => (true, backend.text_to_image(r)),
            }
        })
        .collect();

    let mut out = ReferenceSet::default();
    for (job, (fresh, result)) in jobs.iter().zip(results) {
        let owner = job.request.owner_id.clone();
        match result {
            Ok(asset) => {
                if fresh {
                    out.generated += 1;
                    store.put(&asset, &job.key)?;
                }
                match job.request.role {
                    AssetRole::SpotRef => out.spots.insert(owner, asset),
                    _ => out.characters.insert(owner, asset),
                };
            }
            Err(e) => out.failed.push((owner, e.to_string())),
        }
    }
    store.save()?;
    Ok(out)
}

/// Expands each character reference into eight views, cached by the
/// reference's content and the backend identity.
pub fn generate_multiview(
    references: &BTreeMap<String, ImageAsset>,
    backend: &dyn Backend,
    store: &mut AssetStore,
) -> Result<(BTreeMap<String, MultiViewSet>, usize), CinemaError> {
    let identity = backend.identity();
    let owners: Vec<(&String, &ImageAsset, String)> = references
        .iter()
        .map(|(id, r)| {
            let key = format!("{:016x}", hash64_str(&["multiview", &format!("{:016x}", r.content_hash), &identity]));
            (id, r, key)
        })
        .collect();
    let shared: &AssetStore = store;
    let results: Vec<(bool, Result<Vec<ImageAsset>, BackendError>)> = owners
        .par_iter()
        .map(|(id, r, key)| {
            let cached: Option<Vec<ImageAsset>> = (0..VIEW_COUNT as u8)
                .map(|x| shared.cached(AssetRole::CharacterView, id, Some(x), key))
                .collect();
            match cached {
                Some(v) => (false, Ok(v)),
                None => (true, backend.image_to_multiview(r)),
            }
        })
        .collect();

    let mut sets = BTreeMap::new();
    let mut generated = 0;
    for ((id, _, key), (fresh, result)) in owners.iter().zip(results) {
        let views = result.map_err(|source| CinemaError::Backend { owner: (*id).clone(), source })?;
        if views.len() != VIEW_COUNT {
            return Err(CinemaError::WrongCount { owner: (*id).clone(), got: views.len() });
        }
        let set = MultiViewSet::new(id, views)?;
        if fresh {
            generated += 1;
            for v in &set.views {
                store.put(v, key)?;
            }
        }
        sets.insert((*id).clone(), set);
    }
    store.save()?;
    Ok((sets, generated))
}
