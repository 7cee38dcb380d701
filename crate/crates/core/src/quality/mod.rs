//! Evaluation: NIQE (no-reference naturalness, lower is better) and CLIP-T
//! (image/text agreement through the embedding backend, higher is better).

mod niqe;

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{cosine, AssetRole, Backend, BackendError, EmbedPayload, ImageAsset};
use crate::script_ir::{ProfileField, ScriptIR};
use crate::storyboard::{Panel, Storyboard};

pub use niqe::{
    compute_mscn, downsample_half, extract_niqe_features, fit_aggd, fit_ggd, fit_pristine_model, niqe_score,
    niqe_score_field, patch_features, GrayField, PatchFeatures, PristineModel, DEFAULT_PATCH_SIZE,
    DEFAULT_SHARPNESS_FRACTION, FEATURE_LEN, WINDOW_RADIUS, WINDOW_SIGMA,
};

#[derive(Debug, Error)]
pub enum QualityError {
    #[error("image {width}x{height} is smaller than {min}x{min}")]
    ImageTooSmall { width: usize, height: usize, min: usize },
    #[error("degenerate samples: {0}")]
    DegenerateSamples(String),
    #[error("corpus of {0} images is too small (need 10, each with 2 patches)")]
    CorpusTooSmall(usize),
    #[error("no patch had usable statistics")]
    NoUsablePatches,
    #[error("invalid pristine model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Cosine similarity of the image and text embeddings.
pub fn clip_t_score(image: &ImageAsset, text: &str, backend: &dyn Backend) -> Result<f64, QualityError> {
    let a = backend.embed(EmbedPayload::Image(image))?;
    let b = backend.embed(EmbedPayload::Text(text))?;
    Ok(cosine(&a, &b).clamp(-1.0, 1.0))
}

/// Text a panel is expected to show: the speaker's look, the location and
/// the line; establishing panels use the location alone.
pub fn panel_text(ir: &ScriptIR, panel: &Panel) -> String {
    let scene = ir.scenes.iter().find(|s| s.index == panel.scene);
    let spot = scene.and_then(|s| ir.spot(&s.spot_id));
    let spot_name = spot.map(|s| s.name.clone()).unwrap_or_default();
    let segment = panel.segment_id.and_then(|id| ir.dialogues.iter().find(|d| d.id == id));
    match segment {
        Some(d) => {
            let mut parts = Vec::new();
            if let Some(c) = ir.character(&d.speaker_id) {
                parts.push(c.name.clone());
                parts.extend(
                    ProfileField::ALL
                        .iter()
                        .map(|f| c.refined_profile.get(*f).to_string())
                        .filter(|v| !v.is_empty()),
                );
            }
            parts.push(spot_name);
            parts.push(d.line.clone());
            parts.retain(|p| !p.trim().is_empty());
            parts.join(". ")
        }
        None => {
            let mut parts = vec![spot_name];
            if let Some(s) = spot {
                parts.push(s.description.clone());
                parts.push(s.refined_details.clone());
            }
            if let Some(s) = scene {
                parts.push(s.heading.clone());
            }
            parts.retain(|p| !p.trim().is_empty());
            parts.join(". ")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelScore {
    pub index: usize,
    pub segment_id: Option<usize>,
    pub niqe: Option<f64>,
    pub clip_t: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub embedding_backend: String,
    pub model_digest: String,
    pub panels: Vec<PanelScore>,
    pub mean_niqe: Option<f64>,
    pub mean_clip_t: Option<f64>,
    /// Mean CLIP-T with every panel paired with the next panel's text.
    pub shuffled_clip_t: Option<f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned table with one row per panel and a closing mean row.
    pub fn to_table(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
        let mut out = String::new();
        let _ = writeln!(out, "{:>6}  {:>8}  {:>9}  {:>9}", "panel", "segment", "NIQE", "CLIP-T");
        for p in &self.panels {
            let seg = p.segment_id.map(|s| s.to_string()).unwrap_or_else(|| "-".into());
            let _ = writeln!(out, "{:>6}  {:>8}  {:>9}  {:>9}", p.index, seg, fmt(p.niqe), fmt(p.clip_t));
        }
        let _ = writeln!(out, "{:>6}  {:>8}  {:>9}  {:>9}", "mean", "", fmt(self.mean_niqe), fmt(self.mean_clip_t));
        let _ = writeln!(out, "shuffled-caption CLIP-T: {}", fmt(self.shuffled_clip_t));
        let _ = writeln!(out, "embedding backend: {}", self.embedding_backend);
        out
    }
}

/// Scores every panel. Failures are recorded on the row and leave the
/// value empty; means cover the panels that scored.
pub fn evaluate_storyboard(
    board: &Storyboard,
    ir: &ScriptIR,
    model: &PristineModel,
    backend: &dyn Backend,
) -> Result<EvalReport, QualityError> {
    model.validate()?;
    let texts: Vec<String> = board.panels.iter().map(|p| panel_text(ir, p)).collect();
    let scored: Vec<(PanelScore, Option<Vec<f32>>, Option<Vec<f32>>)> = board
        .panels
        .par_iter()
        .zip(&texts)
        .map(|(p, text)| {
            let mut errors = Vec::new();
            let niqe = niqe_score(&p.image, model).map_err(|e| errors.push(format!("niqe: {e}"))).ok();
            let asset = ImageAsset::new(AssetRole::Panel, &format!("panel_{:04}", p.index), None, p.image.clone());
            let img = backend.embed(EmbedPayload::Image(&asset)).map_err(|e| errors.push(format!("image embedding: {e}"))).ok();
            let txt = backend.embed(EmbedPayload::Text(text)).map_err(|e| errors.push(format!("text embedding: {e}"))).ok();
            let clip_t = match (&img, &txt) {
                (Some(a), Some(b)) => Some(cosine(a, b).clamp(-1.0, 1.0)),
                _ => None,
            };
            (PanelScore { index: p.index, segment_id: p.segment_id, niqe, clip_t, errors }, img, txt)
        })
        .collect();
    let n = scored.len();
    let shuffled = mean((0..n).filter_map(|i| {
        let (_, img, _) = &scored[i];
        let (_, _, txt) = &scored[(i + 1) % n];
        Some(cosine(img.as_ref()?, txt.as_ref()?).clamp(-1.0, 1.0))
    }))
    .filter(|_| n > 1);
    let panels: Vec<PanelScore> = scored.into_iter().map(|s| s.0).collect();
    Ok(EvalReport {
        embedding_backend: backend.identity(),
        model_digest: model.corpus_digest.clone(),
        mean_niqe: mean(panels.iter().filter_map(|p| p.niqe)),
        mean_clip_t: mean(panels.iter().filter_map(|p| p.clip_t)),
        shuffled_clip_t: shuffled,
        panels,
    })
}
