//! Procedural stand-ins for generated imagery.
//!
//! Characters are drawn as a simple articulated figure defined in 3D and
//! projected orthographically after turning it to the requested azimuth,
//! so view 4 is an exact mirror silhouette of view 0. Spots are flat
//! color fields with a few shapes. Both get low-amplitude per-pixel noise.

use image::{Rgba, RgbaImage};

use crate::digest::hash64;

const S: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// (cos, sin) of 45°·view, exact at the axis-aligned views.
pub fn azimuth_trig(view: u8) -> (f64, f64) {
    match view % 8 {
        0 => (1.0, 0.0),
        1 => (S, S),
        2 => (0.0, 1.0),
        3 => (-S, S),
        4 => (-1.0, 0.0),
        5 => (-S, -S),
        6 => (0.0, -1.0),
        _ => (S, -S),
    }
}

pub const WHITE_BACKGROUND: [u8; 3] = [250, 250, 250];

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn noise(seed: u64, x: u32, y: u32, amplitude: i32) -> i32 {
    if amplitude == 0 {
        return 0;
    }
    let h = splitmix(seed ^ ((x as u64) << 32 | y as u64));
    (h % (2 * amplitude as u64 + 1)) as i32 - amplitude
}

fn add_noise(c: [u8; 3], n: i32) -> [u8; 3] {
    c.map(|v| (v as i32 + n).clamp(0, 255) as u8)
}

fn hsv(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h = h.rem_euclid(1.0) * 6.0;
    let i = h.floor();
    let f = h - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    let (r, g, b) = match i as u32 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [(r * 255.0) as u8, (g * 255.0) as u8, (b * 255.0) as u8]
}

fn unit(h: u64, salt: u64) -> f64 {
    (splitmix(h ^ salt.wrapping_mul(0x1000_0000_01B3)) >> 11) as f64 / (1u64 << 53) as f64
}

/// Background color derived from an owner tag.
pub fn owner_color(owner_tag: u64) -> [u8; 3] {
    hsv(unit(owner_tag, 1), 0.45, 0.55 + 0.2 * unit(owner_tag, 2))
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    Disc { x: f64, z: f64, y: f64, r: f64 },
    Capsule { x: f64, z: f64, y0: f64, y1: f64, r: f64 },
    Column { x: f64, z: f64, y0: f64, y1: f64, hx: f64, hz: f64 },
}

struct Part {
    shape: Shape,
    color: [u8; 3],
}

fn figure(owner_tag: u64, prompt_tag: u64) -> Vec<Part> {
    let h = hash64(&[&owner_tag.to_le_bytes(), &prompt_tag.to_le_bytes()]);
    const SKIN: [[u8; 3]; 5] = [[224, 172, 105], [198, 134, 66], [141, 85, 36], [241, 194, 125], [170, 110, 70]];
    let skin = SKIN[(splitmix(h) % 5) as usize];
    let darker = skin.map(|v| (v as f64 * 0.75) as u8);
    let hair = hsv(unit(h, 3) * 0.12, 0.6, 0.15 + 0.35 * unit(h, 4));
    let top = hsv(unit(h, 5), 0.55 + 0.35 * unit(h, 6), 0.35 + 0.4 * unit(h, 7));
    let bottom = hsv(unit(h, 8), 0.4 + 0.4 * unit(h, 9), 0.25 + 0.35 * unit(h, 10));
    let accent = hsv(unit(h, 11), 0.8, 0.6);
    let shoes = [40, 32, 30];
    let shoulder = 0.9 + 0.25 * unit(h, 12);
    let bag_side = if unit(h, 13) < 0.5 { -1.0 } else { 1.0 };
    let arm_x = 0.165 * shoulder;

    let mut parts = vec![
        Part { shape: Shape::Capsule { x: -0.06, z: 0.0, y0: 0.52, y1: 0.93, r: 0.045 }, color: bottom },
        Part { shape: Shape::Capsule { x: 0.06, z: 0.0, y0: 0.52, y1: 0.93, r: 0.045 }, color: bottom },
        Part { shape: Shape::Disc { x: -0.06, z: 0.02, y: 0.95, r: 0.04 }, color: shoes },
        Part { shape: Shape::Disc { x: 0.06, z: 0.02, y: 0.95, r: 0.04 }, color: shoes },
        Part { shape: Shape::Column { x: 0.0, z: 0.0, y0: 0.18, y1: 0.54, hx: 0.13 * shoulder, hz: 0.07 }, color: top },
        Part { shape: Shape::Capsule { x: -arm_x, z: 0.0, y0: 0.2, y1: 0.5, r: 0.035 }, color: top },
        Part { shape: Shape::Capsule { x: arm_x, z: 0.0, y0: 0.2, y1: 0.5, r: 0.035 }, color: top },
        Part { shape: Shape::Disc { x: -arm_x, z: 0.0, y: 0.53, r: 0.03 }, color: skin },
        Part { shape: Shape::Disc { x: arm_x, z: 0.0, y: 0.53, r: 0.03 }, color: skin },
        Part { shape: Shape::Column { x: 0.0, z: 0.0, y0: 0.13, y1: 0.19, hx: 0.028, hz: 0.028 }, color: skin },
        Part { shape: Shape::Disc { x: 0.0, z: -0.02, y: 0.085, r: 0.074 }, color: hair },
        Part { shape: Shape::Disc { x: 0.0, z: 0.0, y: 0.095, r: 0.064 }, color: skin },
        Part { shape: Shape::Disc { x: 0.0, z: 0.065, y: 0.1, r: 0.014 }, color: darker },
        Part { shape: Shape::Disc { x: bag_side * 0.23, z: -0.02, y: 0.47, r: 0.06 }, color: accent },
    ];
    // eyes sit on the front of the face
    for ex in [-0.024, 0.024] {
        parts.push(Part { shape: Shape::Disc { x: ex, z: 0.058, y: 0.082, r: 0.009 }, color: [30, 30, 40] });
    }
    parts
}

fn rotate(x: f64, z: f64, cos: f64, sin: f64) -> (f64, f64) {
    (x * cos + z * sin, -x * sin + z * cos)
}

/// Draws a character turned to `view` (camera azimuth 45°·view).
pub fn render_character(
    owner_tag: u64,
    prompt_tag: u64,
    noise_seed: u64,
    width: u32,
    height: u32,
    view: u8,
    background: [u8; 3],
) -> RgbaImage {
    let (cos, sin) = azimuth_trig(view);
    let unit_px = 0.84 * height as f64;
    let top = 0.1 * height as f64;
    let cx = width as f64 / 2.0;

    let mut projected: Vec<(f64, usize, &Part)> = Vec::new();
    let parts = figure(owner_tag, prompt_tag);
    for (i, p) in parts.iter().enumerate() {
        let (x, z) = match p.shape {
            Shape::Disc { x, z, .. } | Shape::Capsule { x, z, .. } | Shape::Column { x, z, .. } => (x, z),
        };
        let (_, depth) = rotate(x, z, cos, sin);
        projected.push((depth, i, p));
    }
    projected.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut img = RgbaImage::from_fn(width, height, |x, y| {
        let c = add_noise(background, noise(noise_seed, x, y, 3));
        Rgba([c[0], c[1], c[2], 255])
    });

    for (_, i, part) in projected {
        // (inside test, x range, y range) in pixel-center coordinates
        let (inside, (x0, x1), (y0, y1)): (Box<dyn Fn(f64, f64) -> bool>, (f64, f64), (f64, f64)) = match part.shape {
            Shape::Disc { x, z, y, r } => {
                let (sx, _) = rotate(x, z, cos, sin);
                let (sx, sy, r) = (sx * unit_px, top + y * unit_px, r * unit_px);
                (
                    Box::new(move |u, v| (u - sx).powi(2) + (v - sy).powi(2) <= r * r),
                    (sx - r, sx + r),
                    (sy - r, sy + r),
                )
            }
            Shape::Capsule { x, z, y0, y1, r } => {
                let (sx, _) = rotate(x, z, cos, sin);
                let (sx, a, b, r) = (sx * unit_px, top + y0 * unit_px, top + y1 * unit_px, r * unit_px);
                (
                    Box::new(move |u, v| {
                        let dy = if v < a { a - v } else if v > b { v - b } else { 0.0 };
                        (u - sx).powi(2) + dy * dy <= r * r
                    }),
                    (sx - r, sx + r),
                    (a - r, b + r),
                )
            }
            Shape::Column { x, z, y0, y1, hx, hz } => {
                let (sx, _) = rotate(x, z, cos, sin);
                let hw = ((hx * cos).powi(2) + (hz * sin).powi(2)).sqrt() * unit_px;
                let (sx, a, b) = (sx * unit_px, top + y0 * unit_px, top + y1 * unit_px);
                (Box::new(move |u, v| (u - sx).abs() <= hw && v >= a && v <= b), (sx - hw, sx + hw), (a, b))
            }
        };
        let salt = noise_seed ^ (i as u64).wrapping_mul(0x9E37);
        let clamp = |v: f64, max: u32| v.clamp(0.0, max as f64) as u32;
        let (px0, px1) = (clamp((x0 + cx - 1.0).floor(), width), clamp((x1 + cx + 1.0).ceil(), width));
        let (py0, py1) = (clamp((y0 - 1.0).floor(), height), clamp((y1 + 1.0).ceil(), height));
        for y in py0..py1 {
            let v = y as f64 + 0.5;
            for x in px0..px1 {
                let u = x as f64 + 0.5 - cx;
                if inside(u, v) {
                    let c = add_noise(part.color, noise(salt, x, y, 8));
                    img.put_pixel(x, y, Rgba([c[0], c[1], c[2], 255]));
                }
            }
        }
    }
    img
}

/// Draws a location backdrop.
pub fn render_spot(owner_tag: u64, prompt_tag: u64, noise_seed: u64, width: u32, height: u32, night: bool) -> RgbaImage {
    let base = owner_color(owner_tag);
    let dim = |c: [u8; 3], f: f64| c.map(|v| (v as f64 * f) as u8);
    let (sky, ground) = if night { (dim(base, 0.35), dim(base, 0.22)) } else { (base, dim(base, 0.7)) };
    let horizon = (0.55 + 0.15 * unit(prompt_tag, 1)) * height as f64;

    let h = hash64(&[&owner_tag.to_le_bytes(), &prompt_tag.to_le_bytes()]);
    let n_blocks = 3 + (splitmix(h) % 4) as usize;
    let blocks: Vec<(f64, f64, f64, f64, [u8; 3])> = (0..n_blocks)
        .map(|i| {
            let k = i as u64 * 7 + 20;
            let w = (0.08 + 0.18 * unit(h, k)) * width as f64;
            let x0 = unit(h, k + 1) * (width as f64 - w);
            let top = horizon - (0.1 + 0.35 * unit(h, k + 2)) * height as f64;
            let c = hsv(unit(h, k + 3), 0.35, if night { 0.2 } else { 0.45 + 0.3 * unit(h, k + 4) });
            (x0, x0 + w, top, horizon, c)
        })
        .collect();
    let orb = (
        (0.6 + 0.3 * unit(h, 90)) * width as f64,
        (0.15 + 0.15 * unit(h, 91)) * height as f64,
        0.05 * height as f64,
    );
    let orb_color = if night { [220, 220, 200] } else { [240, 200, 90] };

    RgbaImage::from_fn(width, height, |x, y| {
        let (u, v) = (x as f64 + 0.5, y as f64 + 0.5);
        let mut c = if v < horizon {
            let t = v / horizon;
            sky.map(|s| (s as f64 * (1.1 - 0.2 * t)).min(255.0) as u8)
        } else {
            ground
        };
        if (u - orb.0).powi(2) + (v - orb.1).powi(2) <= orb.2 * orb.2 {
            c = orb_color;
        }
        for &(x0, x1, t, b, bc) in &blocks {
            if u >= x0 && u <= x1 && v >= t && v <= b {
                c = bc;
            }
        }
        let c = add_noise(c, noise(noise_seed, x, y, 6));
        Rgba([c[0], c[1], c[2], 255])
    })
}
