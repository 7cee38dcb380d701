//! Deterministic panel compositing: cover-fit background, keyed character
//! cutouts pasted in z order, caption strip.

use font8x8::UnicodeFonts;
use image::imageops::{self, FilterType};
use image::{GrayImage, Luma, Rgba, RgbaImage};
use serde::{Deserialize, Serialize};

use super::layout::LayoutBoundary;
use super::{CANVAS_HEIGHT, CANVAS_WIDTH, PICTURE_BOTTOM};
use crate::backends::codec;
use crate::backends::ImageAsset;

pub const KEY_LUMINANCE: f64 = 0.92;
pub const KEY_SATURATION: f64 = 0.08;
pub const FEATHER_PX: u32 = 2;
pub const CAPTION_LINES: usize = 2;
const GLYPH_SCALE: u32 = 2;
const CAPTION_MARGIN: u32 = 16;
const STRIP_COLOR: Rgba<u8> = Rgba([22, 22, 26, 255]);
const TEXT_COLOR: Rgba<u8> = Rgba([238, 238, 232, 255]);

/// Where a character image ended up, with the block geometry of the
/// pasted copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub character_id: String,
    pub view_index: u8,
    pub x: i64,
    pub y: i64,
    pub width: u32,
    pub height: u32,
    pub block_cell: f64,
}

/// Background scaled to cover the canvas and center-cropped.
pub fn cover_fit(src: &RgbaImage, width: u32, height: u32) -> RgbaImage {
    if src.dimensions() == (width, height) {
        return src.clone();
    }
    let scale = (width as f64 / src.width() as f64).max(height as f64 / src.height() as f64);
    let sw = ((src.width() as f64 * scale).ceil() as u32).max(width);
    let sh = ((src.height() as f64 * scale).ceil() as u32).max(height);
    let scaled = imageops::resize(src, sw, sh, FilterType::Triangle);
    imageops::crop_imm(&scaled, (sw - width) / 2, (sh - height) / 2, width, height).to_image()
}

/// True where a pixel belongs to the plain white backdrop.
pub fn is_backdrop(p: &Rgba<u8>) -> bool {
    let [r, g, b] = [p[0], p[1], p[2]].map(|c| c as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let luminance = 0.2126 * r + 0.7152 * g + 0.0722 * b;
    let saturation = if max > 0.0 { (max - min) / max } else { 0.0 };
    luminance >= KEY_LUMINANCE && saturation <= KEY_SATURATION
}

/// Opacity mask with a feathered edge: pixels within `FEATHER_PX` of a
/// transparent pixel fade out. Pixels beyond the image border count as
/// opaque so cutouts touching the border keep a hard edge.
fn feather(mask: &GrayImage) -> GrayImage {
    let (w, h) = mask.dimensions();
    let r = FEATHER_PX as i64;
    let mut out = GrayImage::new(w, h);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            if mask.get_pixel(x as u32, y as u32)[0] == 0 {
                continue;
            }
            let mut nearest = r + 1;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    if mask.get_pixel(nx as u32, ny as u32)[0] == 0 {
                        nearest = nearest.min(dx.abs().max(dy.abs()));
                    }
                }
            }
            let alpha = 255 * nearest.min(r + 1) / (r + 1);
            out.put_pixel(x as u32, y as u32, Luma([alpha as u8]));
        }
    }
    out
}

/// Cuts the top `rows` share of `view`, keys out the backdrop and scales
/// both to `(w, h)`.
fn cutout(view: &RgbaImage, rows: f64, w: u32, h: u32) -> (RgbaImage, GrayImage) {
    let used = ((view.height() as f64 * rows).round() as u32).clamp(1, view.height());
    let src = imageops::crop_imm(view, 0, 0, view.width(), used).to_image();
    let mask = GrayImage::from_fn(src.width(), src.height(), |x, y| {
        Luma([if is_backdrop(src.get_pixel(x, y)) { 0 } else { 255 }])
    });
    let rgb = imageops::resize(&src, w, h, FilterType::Triangle);
    let mut mask = imageops::resize(&mask, w, h, FilterType::Triangle);
    for p in mask.pixels_mut() {
        p[0] = if p[0] >= 128 { 255 } else { 0 };
    }
    (rgb, feather(&mask))
}

fn blend(dst: &mut Rgba<u8>, src: &Rgba<u8>, alpha: u8) {
    let a = alpha as u32;
    for c in 0..3 {
        dst[c] = ((src[c] as u32 * a + dst[c] as u32 * (255 - a) + 127) / 255) as u8;
    }
    dst[3] = 255;
}

/// Pastes one character view into its box: scaled to fit while keeping the
/// aspect, flush with the frame edge it touches, top-aligned.
pub fn paste_character(canvas: &mut RgbaImage, view: &ImageAsset, b: &LayoutBoundary) -> Placement {
    let (cw, ch) = (canvas.width() as f64, canvas.height() as f64);
    let [x0, y0, x1, y1] = b.bounds;
    let (bw, bh) = ((x1 - x0) * cw, (y1 - y0) * ch);
    let used_h = (view.height as f64 * b.source_rows).round().max(1.0);
    let scale = (bw / view.width as f64).min(bh / used_h);
    let w = ((view.width as f64 * scale).round() as u32).max(1);
    let h = ((used_h * scale).round() as u32).max(1);
    let left = if x0 <= 1e-9 {
        0.0
    } else if x1 >= 1.0 - 1e-9 {
        cw - w as f64
    } else {
        x0 * cw + (bw - w as f64) / 2.0
    };
    let (px, py) = (left.round() as i64, (y0 * ch).round() as i64);
    let (rgb, alpha) = cutout(&view.pixels, b.source_rows, w, h);
    for y in 0..h {
        for x in 0..w {
            let (tx, ty) = (px + x as i64, py + y as i64);
            if tx < 0 || ty < 0 || tx >= canvas.width() as i64 || ty >= canvas.height() as i64 {
                continue;
            }
            let a = alpha.get_pixel(x, y)[0];
            if a > 0 {
                blend(canvas.get_pixel_mut(tx as u32, ty as u32), rgb.get_pixel(x, y), a);
            }
        }
    }
    let cell = codec::cell_size(view.width, view.height) as f64 * w as f64 / view.width as f64;
    Placement {
        character_id: view.owner_id.clone(),
        view_index: view.view_index.unwrap_or(0),
        x: px,
        y: py,
        width: w,
        height: h,
        block_cell: cell,
    }
}

/// Top pixel row of the caption strip.
pub fn caption_top() -> u32 {
    (CANVAS_HEIGHT as f64 * PICTURE_BOTTOM).round() as u32
}

fn chars_per_line() -> usize {
    ((CANVAS_WIDTH - 2 * CAPTION_MARGIN) / (8 * GLYPH_SCALE)) as usize
}

/// Wraps `text` into at most `CAPTION_LINES` lines. Returns the lines and
/// whether text had to be cut.
pub fn wrap_caption(text: &str) -> (Vec<String>, bool) {
    let text = deunicode::deunicode(text);
    let width = chars_per_line();
    let mut lines: Vec<String> = Vec::new();
    let mut current = String::new();
    for word in text.split_whitespace() {
        let mut word = word.to_string();
        while word.len() > width {
            let rest = word.split_off(width);
            if !current.is_empty() {
                lines.push(std::mem::take(&mut current));
            }
            lines.push(word);
            word = rest;
        }
        if current.is_empty() {
            current = word;
        } else if current.len() + 1 + word.len() <= width {
            current.push(' ');
            current.push_str(&word);
        } else {
            lines.push(std::mem::replace(&mut current, word));
        }
    }
    if !current.is_empty() {
        lines.push(current);
    }
    if lines.len() <= CAPTION_LINES {
        return (lines, false);
    }
    lines.truncate(CAPTION_LINES);
    let last = &mut lines[CAPTION_LINES - 1];
    while last.len() + 3 > width {
        last.pop();
    }
    *last = format!("{}...", last.trim_end());
    (lines, true)
}

fn draw_text(canvas: &mut RgbaImage, x: u32, y: u32, text: &str) {
    for (i, ch) in text.chars().enumerate() {
        let glyph = font8x8::BASIC_FONTS.get(ch).unwrap_or([0; 8]);
        let gx = x + i as u32 * 8 * GLYPH_SCALE;
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..8 {
                if bits >> col & 1 == 0 {
                    continue;
                }
                for dy in 0..GLYPH_SCALE {
                    for dx in 0..GLYPH_SCALE {
                        let px = gx + col * GLYPH_SCALE + dx;
                        let py = y + row as u32 * GLYPH_SCALE + dy;
                        if px < canvas.width() && py < canvas.height() {
                            canvas.put_pixel(px, py, TEXT_COLOR);
                        }
                    }
                }
            }
        }
    }
}

/// Paints the caption strip across the bottom of the canvas.
pub fn draw_caption(canvas: &mut RgbaImage, lines: &[String]) {
    let top = caption_top();
    for y in top..canvas.height() {
        for x in 0..canvas.width() {
            canvas.put_pixel(x, y, STRIP_COLOR);
        }
    }
    let line_h = 8 * GLYPH_SCALE + 6;
    let block_h = line_h * lines.len() as u32;
    let mut y = top + (canvas.height() - top).saturating_sub(block_h) / 2 + 3;
    for line in lines {
        draw_text(canvas, CAPTION_MARGIN, y, line);
        y += line_h;
    }
}

/// Thumbnails of all panels in rows of `columns`.
pub fn contact_sheet(panels: &[&RgbaImage], columns: u32) -> RgbaImage {
    let (tw, th) = (CANVAS_WIDTH / 3, CANVAS_HEIGHT / 3);
    let gap = 4;
    let rows = (panels.len() as u32).div_ceil(columns).max(1);
    let mut sheet = RgbaImage::from_pixel(
        columns * tw + (columns + 1) * gap,
        rows * th + (rows + 1) * gap,
        Rgba([255, 255, 255, 255]),
    );
    for (i, p) in panels.iter().enumerate() {
        let thumb = imageops::resize(*p, tw, th, FilterType::Triangle);
        let (c, r) = (i as u32 % columns, i as u32 / columns);
        imageops::replace(&mut sheet, &thumb, (gap + c * (tw + gap)) as i64, (gap + r * (th + gap)) as i64);
    }
    sheet
}
