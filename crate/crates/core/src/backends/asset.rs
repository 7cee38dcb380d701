use std::io::Cursor;

use image::{ImageFormat, RgbaImage};
use serde::{Deserialize, Serialize};

use super::BackendError;
use crate::digest::hash64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssetRole {
    CharacterRef,
    SpotRef,
    CharacterView,
    /// A composited storyboard panel.
    Panel,
}

impl AssetRole {
    pub fn as_str(self) -> &'static str {
        match self {
            AssetRole::CharacterRef => "character_ref",
            AssetRole::SpotRef => "spot_ref",
            AssetRole::CharacterView => "character_view",
            AssetRole::Panel => "panel",
        }
    }
}

/// An 8-bit RGBA image with provenance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageAsset {
    pub id: String,
    pub role: AssetRole,
    pub owner_id: String,
    pub view_index: Option<u8>,
    pub width: u32,
    pub height: u32,
    pub pixels: RgbaImage,
    pub content_hash: u64,
}

impl ImageAsset {
    /// Identifier of the form `role/owner[/view]`.
    pub fn new_id(role: AssetRole, owner_id: &str, view_index: Option<u8>) -> String {
        match view_index {
            Some(v) => format!("{}/{owner_id}/{v}", role.as_str()),
            None => format!("{}/{owner_id}", role.as_str()),
        }
    }

    pub fn new(role: AssetRole, owner_id: &str, view_index: Option<u8>, pixels: RgbaImage) -> Self {
        let id = Self::new_id(role, owner_id, view_index);
        let content_hash = pixel_hash(&pixels);
        ImageAsset {
            id,
            role,
            owner_id: owner_id.to_string(),
            view_index,
            width: pixels.width(),
            height: pixels.height(),
            pixels,
            content_hash,
        }
    }

    pub fn from_png(
        bytes: &[u8],
        role: AssetRole,
        owner_id: &str,
        view_index: Option<u8>,
    ) -> Result<Self, BackendError> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
            .map_err(|e| BackendError::DecodeError(e.to_string()))?
            .to_rgba8();
        Ok(Self::new(role, owner_id, view_index, img))
    }

    pub fn to_png(&self) -> Vec<u8> {
        encode_png(&self.pixels)
    }

    /// Same pixels under a different role/owner/view.
    pub fn relabel(&self, role: AssetRole, owner_id: &str, view_index: Option<u8>) -> Self {
        Self::new(role, owner_id, view_index, self.pixels.clone())
    }

    /// Checks `view_index` against the role and the hash against the pixels.
    pub fn validate(&self) -> Result<(), String> {
        if (self.role == AssetRole::CharacterView) != self.view_index.is_some() {
            return Err(format!("{}: view_index must be present iff role is character_view", self.id));
        }
        if self.view_index.is_some_and(|v| v > 7) {
            return Err(format!("{}: view_index out of range", self.id));
        }
        if self.content_hash != pixel_hash(&self.pixels) {
            return Err(format!("{}: content hash does not match pixels", self.id));
        }
        Ok(())
    }
}

pub fn pixel_hash(img: &RgbaImage) -> u64 {
    hash64(&[
        &img.width().to_le_bytes(),
        &img.height().to_le_bytes(),
        img.as_raw(),
    ])
}

pub fn encode_png(img: &RgbaImage) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).expect("PNG encoding to memory");
    out.into_inner()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_keeps_hash() {
        let mut img = RgbaImage::new(7, 5);
        img.put_pixel(3, 2, image::Rgba([10, 20, 30, 255]));
        let a = ImageAsset::new(AssetRole::SpotRef, "cafe", None, img);
        let b = ImageAsset::from_png(&a.to_png(), AssetRole::SpotRef, "cafe", None).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
    }

    #[test]
    fn view_index_requires_view_role() {
        let a = ImageAsset::new(AssetRole::CharacterRef, "x", Some(2), RgbaImage::new(2, 2));
        assert!(a.validate().is_err());
    }
}
