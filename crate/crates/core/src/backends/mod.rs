//! Pluggable generative services: chat completion, text-to-image,
//! multi-view expansion and embedding.
//!
//! Every role is reached through the [`Backend`] trait. [`MockBackend`]
//! is a deterministic offline implementation whose images carry a
//! provenance block (see [`codec`]); [`HttpBackend`] speaks the common
//! JSON conventions of hosted chat/image services.

pub mod asset;
pub mod codec;
mod config;
mod http;
mod mock;

use std::sync::Arc;

use thiserror::Error;

pub use asset::{encode_png, AssetRole, ImageAsset};
pub use config::{BackendConfig, BackendKind, BackendsConfig};
pub use http::HttpBackend;
pub use mock::{render, responder, MockBackend};

/// Number of azimuth views produced per character.
pub const VIEW_COUNT: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("request timed out after {0} s")]
    Timeout(f64),
    #[error("credential environment variable {0} is not set")]
    AuthMissing(String),
    #[error("non-retryable HTTP status {status}: {body}")]
    NonRetryableStatus { status: u16, body: String },
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("could not decode image: {0}")]
    DecodeError(String),
    #[error("image dimensions {width}x{height} outside [64, 2048]")]
    DimensionRejected { width: u32, height: u32 },
    #[error("expected {expected} images, backend returned {got}")]
    WrongCount { expected: usize, got: usize },
    #[error("embedding dimension {got} does not match configured {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid backend configuration: {0}")]
    InvalidConfig(String),
    #[error("transport error: {0}")]
    Transport(String),
}

/// Image generation request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRequest {
    pub prompt: String,
    /// Things to keep out of the image; empty when unused.
    pub negative_prompt: String,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub role: AssetRole,
    pub owner_id: String,
}

#[derive(Debug, Clone, Copy)]
pub enum EmbedPayload<'a> {
    Text(&'a str),
    Image(&'a ImageAsset),
}

pub trait Backend: Send + Sync {
    /// Stable description recorded in reports and cache keys.
    fn identity(&self) -> String;

    fn chat_complete(&self, system: &str, user: &str) -> Result<String, BackendError>;

    fn text_to_image(&self, request: &ImageRequest) -> Result<ImageAsset, BackendError>;

    /// Exactly [`VIEW_COUNT`] views, `view_index` 0..8, owned by the
    /// reference's owner.
    fn image_to_multiview(&self, reference: &ImageAsset) -> Result<Vec<ImageAsset>, BackendError>;

    /// Unit-norm vector of the configured dimension.
    fn embed(&self, payload: EmbedPayload<'_>) -> Result<Vec<f32>, BackendError>;
}

/// One backend per role.
#[derive(Clone)]
pub struct Backends {
    pub chat: Arc<dyn Backend>,
    pub image: Arc<dyn Backend>,
    pub multiview: Arc<dyn Backend>,
    pub embedding: Arc<dyn Backend>,
}

impl Backends {
    pub fn from_config(cfg: &BackendsConfig) -> Result<Self, BackendError> {
        cfg.validate()?;
        Ok(Backends {
            chat: connect(&cfg.chat)?,
            image: connect(&cfg.image)?,
            multiview: connect(&cfg.multiview)?,
            embedding: connect(&cfg.embedding)?,
        })
    }

    pub fn single(backend: Arc<dyn Backend>) -> Self {
        Backends {
            chat: backend.clone(),
            image: backend.clone(),
            multiview: backend.clone(),
            embedding: backend,
        }
    }
}

pub fn connect(cfg: &BackendConfig) -> Result<Arc<dyn Backend>, BackendError> {
    cfg.validate()?;
    Ok(match cfg.kind {
        BackendKind::Mock => Arc::new(MockBackend::from_config(cfg)?),
        BackendKind::Http => Arc::new(HttpBackend::new(cfg.clone())?),
    })
}

pub(crate) fn check_dimensions(width: u32, height: u32) -> Result<(), BackendError> {
    if (64..=2048).contains(&width) && (64..=2048).contains(&height) {
        Ok(())
    } else {
        Err(BackendError::DimensionRejected { width, height })
    }
}

pub(crate) fn check_multiview_reference(reference: &ImageAsset) -> Result<(), BackendError> {
    if reference.role != AssetRole::CharacterRef {
        return Err(BackendError::InvalidRequest(format!(
            "multi-view expansion needs a character_ref, got {}",
            reference.role.as_str()
        )));
    }
    Ok(())
}

pub(crate) fn normalize_embedding(mut v: Vec<f32>, expected: usize) -> Result<Vec<f32>, BackendError> {
    if v.len() != expected {
        return Err(BackendError::DimensionMismatch { expected, got: v.len() });
    }
    let norm = v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    if norm.is_nan() || norm <= 0.0 || !norm.is_finite() {
        return Err(BackendError::MalformedResponse("zero or non-finite embedding".into()));
    }
    for x in &mut v {
        *x = (*x as f64 / norm) as f32;
    }
    Ok(v)
}

/// Cosine similarity of two vectors.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    let na = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}
