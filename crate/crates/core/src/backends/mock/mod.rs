//! Deterministic offline backend. Every output is a pure function of the
//! configured seed and the request.

pub mod render;
pub mod responder;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use super::codec::{self, tag48, Provenance};
use super::{
    check_dimensions, check_multiview_reference, normalize_embedding, AssetRole, Backend, BackendConfig,
    BackendError, EmbedPayload, ImageAsset, ImageRequest, VIEW_COUNT,
};
use crate::digest::hash64;
use crate::script_ir::normalize_name;

/// Longest word n-gram hashed into text embeddings.
const MAX_NGRAM: usize = 6;

#[derive(Debug, Default)]
pub struct CallCounts {
    pub chat: AtomicU64,
    pub text_to_image: AtomicU64,
    pub multiview: AtomicU64,
    pub embed: AtomicU64,
}

impl CallCounts {
    pub fn total(&self) -> u64 {
        self.chat.load(Ordering::Relaxed)
            + self.text_to_image.load(Ordering::Relaxed)
            + self.multiview.load(Ordering::Relaxed)
            + self.embed.load(Ordering::Relaxed)
    }
}

#[derive(Debug)]
pub struct MockBackend {
    seed: u64,
    embedding_dim: usize,
    fixtures: BTreeMap<String, String>,
    pub calls: CallCounts,
}

impl MockBackend {
    pub fn new(seed: u64) -> Self {
        MockBackend {
            seed,
            embedding_dim: 512,
            fixtures: BTreeMap::new(),
            calls: CallCounts::default(),
        }
    }

    pub fn from_config(cfg: &BackendConfig) -> Result<Self, BackendError> {
        let mut m = Self::new(cfg.seed);
        m.embedding_dim = cfg.embedding_dim;
        if let Some(path) = &cfg.fixtures {
            let text = std::fs::read_to_string(path)
                .map_err(|e| BackendError::InvalidConfig(format!("mock fixtures {path}: {e}")))?;
            m.fixtures = serde_json::from_str(&text)
                .map_err(|e| BackendError::InvalidConfig(format!("mock fixtures {path}: {e}")))?;
        }
        Ok(m)
    }

    /// Adds a scripted chat reply for an exact (system, user) pair.
    pub fn with_fixture(mut self, system: &str, user: &str, reply: &str) -> Self {
        self.fixtures
            .insert(Self::prompt_key(self.seed, system, user), reply.to_string());
        self
    }

    pub fn with_embedding_dim(mut self, dim: usize) -> Self {
        self.embedding_dim = dim;
        self
    }

    /// Fixture table key: hex of a 64-bit hash over (seed, system, user).
    pub fn prompt_key(seed: u64, system: &str, user: &str) -> String {
        format!(
            "{:016x}",
            hash64(&[&seed.to_le_bytes(), system.as_bytes(), user.as_bytes()])
        )
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn noise_seed(&self, parts: &[&[u8]]) -> u64 {
        let mut all: Vec<&[u8]> = Vec::with_capacity(parts.len() + 1);
        let seed = self.seed.to_le_bytes();
        all.push(&seed);
        all.extend_from_slice(parts);
        hash64(&all)
    }

    fn render_views(&self, owner_id: &str, owner_tag: u64, prompt_tag: u64, w: u32, h: u32) -> Vec<ImageAsset> {
        (0..VIEW_COUNT as u8)
            .map(|view| {
                let ns = self.noise_seed(&[b"view", &owner_tag.to_le_bytes(), &prompt_tag.to_le_bytes(), &[view]]);
                let mut img =
                    render::render_character(owner_tag, prompt_tag, ns, w, h, view, render::WHITE_BACKGROUND);
                codec::stamp(
                    &mut img,
                    &Provenance { role: AssetRole::CharacterView, view_index: Some(view), owner_tag, prompt_tag },
                );
                ImageAsset::new(AssetRole::CharacterView, owner_id, Some(view), img)
            })
            .collect()
    }
}

/// Bucket and sign of a 48-bit tag inside an embedding of `dim` entries.
fn bucket(tag: u64, dim: usize) -> (usize, f32) {
    let sign = if (tag >> 47) & 1 == 1 { -1.0 } else { 1.0 };
    ((tag % dim as u64) as usize, sign)
}

/// Word slugs of a text, as used by the mock text embedding.
pub fn text_tokens(text: &str) -> Vec<String> {
    text.split_whitespace().filter_map(|w| normalize_name(w).ok()).collect()
}

/// How much of a character's identity a view shows: faces toward the
/// camera count fully, backs of heads much less.
fn view_visibility(view: Option<u8>) -> f32 {
    match view {
        Some(0) | Some(1) | Some(7) => 1.0,
        Some(2) | Some(6) => 0.6,
        Some(_) => 0.3,
        None => 1.0,
    }
}

fn embed_text(text: &str, dim: usize) -> Vec<f32> {
    let mut v = vec![0f32; dim];
    let words = text_tokens(text);
    for n in 1..=MAX_NGRAM {
        let weight = if n == 1 { 1.0 } else { 0.5 };
        for gram in words.windows(n) {
            let (i, s) = bucket(tag48(&gram.join("-")), dim);
            v[i] += s * weight;
        }
    }
    v
}

fn embed_image(asset: &ImageAsset, dim: usize) -> Vec<f32> {
    let mut v = vec![0f32; dim];
    for found in scan_blocks(&asset.pixels) {
        let weight = match found.provenance.role {
            AssetRole::SpotRef => 1.0,
            _ => 1.5 * view_visibility(found.provenance.view_index),
        };
        let (i, s) = bucket(found.provenance.owner_tag, dim);
        v[i] += s * weight;
    }
    // Coarse color histogram; keeps image embeddings informative when no
    // block survives.
    let mut hist = [0f64; 64];
    for p in asset.pixels.pixels() {
        let bin = (p[0] as usize >> 6) << 4 | (p[1] as usize >> 6) << 2 | (p[2] as usize >> 6);
        hist[bin] += 1.0;
    }
    let total = (asset.width as f64 * asset.height as f64).max(1.0);
    for (bin, count) in hist.iter().enumerate() {
        if *count > 0.0 {
            let (i, s) = bucket(tag48(&format!("color-bin-{bin}")), dim);
            v[i] += s * (0.2 * count / total) as f32;
        }
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoundBlock {
    pub x: u32,
    pub y: u32,
    pub cell: f64,
    pub provenance: Provenance,
}

/// Finds every provenance block in an image, including scaled copies
/// pasted away from the origin. A block is located by its first cell,
/// which always carries the magic byte's color.
pub fn scan_blocks(img: &image::RgbaImage) -> Vec<FoundBlock> {
    let magic = codec::byte_color(0xA7);
    let is_magic = |x: u32, y: u32| {
        let p = img.get_pixel(x, y);
        [p[0], p[1], p[2]] == magic
    };
    let mut found: Vec<FoundBlock> = Vec::new();
    for y in 0..img.height() {
        for x in 0..img.width() {
            if !is_magic(x, y) || (x > 0 && is_magic(x - 1, y)) || (y > 0 && is_magic(x, y - 1)) {
                continue;
            }
            if found.iter().any(|f| {
                let ext = f.cell * codec::GRID as f64;
                (x as f64) >= f.x as f64 && (x as f64) < f.x as f64 + ext && (y as f64) >= f.y as f64 && (y as f64) < f.y as f64 + ext
            }) {
                continue;
            }
            let mut run = 0;
            while x + run < img.width() && is_magic(x + run, y) {
                run += 1;
            }
            if run < 2 {
                continue;
            }
            // Resampling may smear one edge pixel into the neighbours.
            for cell in [run as f64, run as f64 + 1.0, run as f64 + 0.5, run as f64 + 2.0] {
                if let Some(p) = codec::decode_region(img, x as f64, y as f64, cell) {
                    found.push(FoundBlock { x, y, cell, provenance: p });
                    break;
                }
            }
        }
    }
    found
}

impl Backend for MockBackend {
    fn identity(&self) -> String {
        format!("mock(seed={})", self.seed)
    }

    fn chat_complete(&self, system: &str, user: &str) -> Result<String, BackendError> {
        self.calls.chat.fetch_add(1, Ordering::Relaxed);
        if let Some(reply) = self.fixtures.get(&Self::prompt_key(self.seed, system, user)) {
            return Ok(reply.clone());
        }
        Ok(responder::respond(self.seed, system, user))
    }

    fn text_to_image(&self, req: &ImageRequest) -> Result<ImageAsset, BackendError> {
        self.calls.text_to_image.fetch_add(1, Ordering::Relaxed);
        check_dimensions(req.width, req.height)?;
        let owner_tag = tag48(&req.owner_id);
        let prompt_tag = tag48(&req.prompt);
        let ns = self.noise_seed(&[b"t2i", req.prompt.as_bytes(), &req.seed.to_le_bytes()]);
        let lower = req.prompt.to_lowercase();
        let mut img = match req.role {
            AssetRole::SpotRef => {
                render::render_spot(owner_tag, prompt_tag, ns, req.width, req.height, lower.contains("night"))
            }
            _ => {
                let bg = if lower.contains("white background") {
                    render::WHITE_BACKGROUND
                } else {
                    render::owner_color(owner_tag)
                };
                render::render_character(owner_tag, prompt_tag, ns, req.width, req.height, 0, bg)
            }
        };
        let view_index = (req.role == AssetRole::CharacterView).then_some(0);
        codec::stamp(&mut img, &Provenance { role: req.role, view_index, owner_tag, prompt_tag });
        Ok(ImageAsset::new(req.role, &req.owner_id, view_index, img))
    }

    fn image_to_multiview(&self, reference: &ImageAsset) -> Result<Vec<ImageAsset>, BackendError> {
        self.calls.multiview.fetch_add(1, Ordering::Relaxed);
        check_multiview_reference(reference)?;
        let owner_tag = tag48(&reference.owner_id);
        let prompt_tag = codec::decode(&reference.pixels)
            .map(|p| p.prompt_tag)
            .unwrap_or(reference.content_hash & ((1 << 48) - 1));
        Ok(self.render_views(&reference.owner_id, owner_tag, prompt_tag, reference.width, reference.height))
    }

    fn embed(&self, payload: EmbedPayload<'_>) -> Result<Vec<f32>, BackendError> {
        self.calls.embed.fetch_add(1, Ordering::Relaxed);
        let v = match payload {
            EmbedPayload::Text(t) => {
                if t.trim().is_empty() {
                    return Err(BackendError::InvalidRequest("empty text payload".into()));
                }
                embed_text(t, self.embedding_dim)
            }
            EmbedPayload::Image(a) => embed_image(a, self.embedding_dim),
        };
        if v.iter().all(|x| *x == 0.0) {
            // Nothing hashed (e.g. punctuation only); fall back to a fixed
            // direction so the output stays unit-norm.
            let mut v = vec![0f32; self.embedding_dim];
            v[0] = 1.0;
            return Ok(v);
        }
        normalize_embedding(v, self.embedding_dim)
    }
}
