//! Machine-readable provenance block stamped into the top-left corner of
//! mock images.
//!
//! The block is a 4x4 grid of square cells, one byte per cell, row-major.
//! Each byte is painted as a flat color: bits 7..5 select the red level,
//! bits 4..2 the green level (both in steps of 28) and bits 1..0 the blue
//! level (steps of 65). Every color stays well below the white-key
//! luminance threshold, so the block survives cutout compositing.
//!
//! Payload layout:
//!
//! | bytes  | content                                   |
//! |--------|-------------------------------------------|
//! | 0      | magic `0xA7`                              |
//! | 1      | role (1 ref, 2 spot, 3 view)              |
//! | 2      | view index, `0xFF` when absent            |
//! | 3      | xor checksum of all other bytes and 0x5A  |
//! | 4..10  | 48-bit owner tag, big endian              |
//! | 10..16 | 48-bit prompt tag, big endian             |

use image::{Rgba, RgbaImage};

use super::AssetRole;
use crate::digest::hash64_str;

pub const GRID: u32 = 4;
pub const PAYLOAD_LEN: usize = 16;
const MAGIC: u8 = 0xA7;
const TAG_MASK: u64 = (1 << 48) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenance {
    pub role: AssetRole,
    pub view_index: Option<u8>,
    pub owner_tag: u64,
    pub prompt_tag: u64,
}

/// 48-bit tag of a string, as stored in the block.
pub fn tag48(s: &str) -> u64 {
    hash64_str(&["tag", s]) & TAG_MASK
}

/// Cell edge in pixels for an image of the given size.
pub fn cell_size(width: u32, height: u32) -> u32 {
    (width.min(height) / 24).max(4)
}

fn role_code(role: AssetRole) -> u8 {
    match role {
        AssetRole::CharacterRef => 1,
        AssetRole::SpotRef => 2,
        AssetRole::CharacterView => 3,
        AssetRole::Panel => 4,
    }
}

pub fn encode(p: &Provenance) -> [u8; PAYLOAD_LEN] {
    let mut b = [0u8; PAYLOAD_LEN];
    b[0] = MAGIC;
    b[1] = role_code(p.role);
    b[2] = p.view_index.unwrap_or(0xFF);
    b[4..10].copy_from_slice(&(p.owner_tag & TAG_MASK).to_be_bytes()[2..]);
    b[10..16].copy_from_slice(&(p.prompt_tag & TAG_MASK).to_be_bytes()[2..]);
    b[3] = checksum(&b);
    b
}

fn checksum(b: &[u8; PAYLOAD_LEN]) -> u8 {
    b.iter()
        .enumerate()
        .filter(|(i, _)| *i != 3)
        .fold(0x5A, |acc, (_, v)| acc ^ v)
}

pub fn decode_bytes(b: &[u8; PAYLOAD_LEN]) -> Option<Provenance> {
    if b[0] != MAGIC || b[3] != checksum(b) {
        return None;
    }
    let role = match b[1] {
        1 => AssetRole::CharacterRef,
        2 => AssetRole::SpotRef,
        3 => AssetRole::CharacterView,
        4 => AssetRole::Panel,
        _ => return None,
    };
    let view_index = match b[2] {
        0xFF => None,
        v if v <= 7 => Some(v),
        _ => return None,
    };
    let mut owner = [0u8; 8];
    owner[2..].copy_from_slice(&b[4..10]);
    let mut prompt = [0u8; 8];
    prompt[2..].copy_from_slice(&b[10..16]);
    Some(Provenance {
        role,
        view_index,
        owner_tag: u64::from_be_bytes(owner),
        prompt_tag: u64::from_be_bytes(prompt),
    })
}

pub fn byte_color(v: u8) -> [u8; 3] {
    [((v >> 5) & 7) * 28, ((v >> 2) & 7) * 28, (v & 3) * 65]
}

pub fn color_byte(c: [u8; 3]) -> u8 {
    let level = |x: u8, step: f64, max: u8| ((x as f64 / step).round() as u8).min(max);
    (level(c[0], 28.0, 7) << 5) | (level(c[1], 28.0, 7) << 2) | level(c[2], 65.0, 3)
}

/// Paints the block at the image origin.
pub fn stamp(img: &mut RgbaImage, p: &Provenance) {
    let cell = cell_size(img.width(), img.height());
    for (i, byte) in encode(p).iter().enumerate() {
        let [r, g, b] = byte_color(*byte);
        let (cx, cy) = (i as u32 % GRID, i as u32 / GRID);
        for y in cy * cell..(cy + 1) * cell {
            for x in cx * cell..(cx + 1) * cell {
                if x < img.width() && y < img.height() {
                    img.put_pixel(x, y, Rgba([r, g, b, 255]));
                }
            }
        }
    }
}

/// Reads the block stamped at the origin of an unscaled image.
pub fn decode(img: &RgbaImage) -> Option<Provenance> {
    let cell = cell_size(img.width(), img.height()) as f64;
    decode_region(img, 0.0, 0.0, cell)
}

/// Reads a block whose origin lands at `(x, y)` with cells `cell` pixels
/// wide, e.g. after the stamped image was scaled and pasted elsewhere.
pub fn decode_region(img: &RgbaImage, x: f64, y: f64, cell: f64) -> Option<Provenance> {
    let mut b = [0u8; PAYLOAD_LEN];
    for (i, slot) in b.iter_mut().enumerate() {
        let (cx, cy) = ((i as u32 % GRID) as f64, (i as u32 / GRID) as f64);
        let px = (x + (cx + 0.5) * cell).floor();
        let py = (y + (cy + 0.5) * cell).floor();
        if px < 0.0 || py < 0.0 || px >= img.width() as f64 || py >= img.height() as f64 {
            return None;
        }
        let p = img.get_pixel(px as u32, py as u32);
        *slot = color_byte([p[0], p[1], p[2]]);
    }
    decode_bytes(&b)
}

/// Pixel rectangle covered by the block of an unscaled image.
pub fn block_extent(width: u32, height: u32) -> u32 {
    cell_size(width, height) * GRID
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn every_byte_color_round_trips_and_is_dark() {
        for v in 0..=255u8 {
            let c = byte_color(v);
            assert_eq!(color_byte(c), v);
            let lum = (0.2126 * c[0] as f64 + 0.7152 * c[1] as f64 + 0.0722 * c[2] as f64) / 255.0;
            assert!(lum < 0.8, "byte {v} too bright");
        }
    }

    #[test]
    fn corrupted_payload_is_rejected() {
        let p = Provenance { role: AssetRole::CharacterView, view_index: Some(3), owner_tag: tag48("anna"), prompt_tag: 9 };
        let mut b = encode(&p);
        assert_eq!(decode_bytes(&b), Some(p));
        b[6] ^= 1;
        assert_eq!(decode_bytes(&b), None);
    }

    proptest! {
        #[test]
        fn stamped_block_decodes(owner in "[a-z]{1,12}", view in proptest::option::of(0u8..8), w in 64u32..700, h in 64u32..700) {
            let role = if view.is_some() { AssetRole::CharacterView } else { AssetRole::CharacterRef };
            let p = Provenance { role, view_index: view, owner_tag: tag48(&owner), prompt_tag: tag48("prompt") };
            let mut img = RgbaImage::from_pixel(w, h, Rgba([255, 255, 255, 255]));
            stamp(&mut img, &p);
            prop_assert_eq!(decode(&img), Some(p));
        }
    }
}
