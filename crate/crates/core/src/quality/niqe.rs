//! Native NIQE: natural-scene statistics of mean-subtracted,
//! contrast-normalized (MSCN) coefficients, compared against a model
//! fitted on pristine photographs.

use std::sync::LazyLock;

use image::RgbaImage;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use super::QualityError;
use crate::digest::sha256_hex;

pub const FEATURE_LEN: usize = 36;
pub const DEFAULT_PATCH_SIZE: usize = 96;
pub const DEFAULT_SHARPNESS_FRACTION: f64 = 0.75;
pub const WINDOW_RADIUS: usize = 3;
pub const WINDOW_SIGMA: f64 = 7.0 / 6.0;
const MIN_SIDE: usize = 32;

/// Row-major grayscale field on a 0..255 scale.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayField {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl GrayField {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height, "field size");
        GrayField { width, height, data }
    }

    /// Luma with the usual 0.2989/0.5870/0.1140 weights.
    pub fn from_rgba(img: &RgbaImage) -> Self {
        let data = img
            .pixels()
            .map(|p| 0.2989 * p[0] as f64 + 0.5870 * p[1] as f64 + 0.1140 * p[2] as f64)
            .collect();
        GrayField::new(img.width() as usize, img.height() as usize, data)
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.data.chunks(self.width) {
            data.extend(row.iter().rev());
        }
        GrayField::new(self.width, self.height, data)
    }

    fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            out.extend_from_slice(&self.data[y * self.width + x0..y * self.width + x0 + w]);
        }
        out
    }
}

/// Mirror index into `0..n` (edge sample repeated, `d c b a | a b c d`).
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut i = i.rem_euclid(period);
    if i >= n {
        i = period - 1 - i;
    }
    i as usize
}

fn gaussian_window() -> Vec<f64> {
    let r = WINDOW_RADIUS as isize;
    let w: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable filtering with reflected borders.
fn filter(field: &GrayField, taps: &[f64]) -> GrayField {
    let (w, h) = (field.width, field.height);
    let r = (taps.len() / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * field.data[y * w + reflect(x as isize + k as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * tmp[reflect(y as isize + k as isize - r, h) * w + x])
                .sum();
        }
    }
    GrayField::new(w, h, out)
}

/// MSCN coefficients `(I − μ)/(σ + 1)` and the local deviation field σ.
pub fn compute_mscn(field: &GrayField) -> Result<(GrayField, GrayField), QualityError> {
    if field.width < MIN_SIDE || field.height < MIN_SIDE {
        return Err(QualityError::ImageTooSmall { width: field.width, height: field.height, min: MIN_SIDE });
    }
    let taps = gaussian_window();
    let mu = filter(field, &taps);
    let sq = GrayField::new(field.width, field.height, field.data.iter().map(|v| v * v).collect());
    let mu_sq = filter(&sq, &taps);
    let sigma: Vec<f64> = mu.data.iter().zip(&mu_sq.data).map(|(m, m2)| (m2 - m * m).abs().sqrt()).collect();
    let mscn = field
        .data
        .iter()
        .zip(&mu.data)
        .zip(&sigma)
        .map(|((i, m), s)| (i - m) / (s + 1.0))
        .collect();
    Ok((GrayField::new(field.width, field.height, mscn), GrayField::new(field.width, field.height, sigma)))
}

fn cubic(x: f64) -> f64 {
    let a = x.abs();
    if a <= 1.0 {
        1.5 * a * a * a - 2.5 * a * a + 1.0
    } else if a < 2.0 {
        -0.5 * a * a * a + 2.5 * a * a - 4.0 * a + 2.0
    } else {
        0.0
    }
}

/// Weights and source indices for halving one axis with an antialiased
/// bicubic kernel.
fn half_taps(n: usize) -> Vec<Vec<(usize, f64)>> {
    let out_n = n.div_ceil(2);
    (0..out_n)
        .map(|i| {
            let u = 2.0 * i as f64 + 0.5;
            let lo = (u - 4.0).ceil() as isize;
            let hi = (u + 4.0).floor() as isize;
            let mut taps: Vec<(usize, f64)> =
                (lo..=hi).map(|j| (reflect(j, n), cubic((u - j as f64) / 2.0))).filter(|t| t.1 != 0.0).collect();
            let s: f64 = taps.iter().map(|t| t.1).sum();
            for t in &mut taps {
                t.1 /= s;
            }
            taps
        })
        .collect()
}

/// Half-size copy (bicubic, antialiased).
pub fn downsample_half(field: &GrayField) -> GrayField {
    let (w, h) = (field.width, field.height);
    let (xt, yt) = (half_taps(w), half_taps(h));
    let ow = xt.len();
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for (ox, taps) in xt.iter().enumerate() {
            tmp[y * ow + ox] = taps.iter().map(|(x, t)| t * field.data[y * w + x]).sum();
        }
    }
    let mut out = vec![0.0; ow * yt.len()];
    for (oy, taps) in yt.iter().enumerate() {
        for ox in 0..ow {
            out[oy * ow + ox] = taps.iter().map(|(y, t)| t * tmp[y * ow + ox]).sum();
        }
    }
    GrayField::new(ow, yt.len(), out)
}

const ALPHA_MIN: f64 = 0.2;
const ALPHA_STEP: f64 = 0.001;
const ALPHA_COUNT: usize = 9801;

/// Shape grid with the generalized Gaussian ratio
/// `Γ(2/α)² / (Γ(1/α) Γ(3/α))` for each shape.
static SHAPE_TABLE: LazyLock<Vec<(f64, f64)>> = LazyLock::new(|| {
    (0..ALPHA_COUNT)
        .map(|i| {
            let a = ALPHA_MIN + i as f64 * ALPHA_STEP;
            (a, gamma(2.0 / a).powi(2) / (gamma(1.0 / a) * gamma(3.0 / a)))
        })
        .collect()
});

fn invert_ratio(r: f64) -> f64 {
    let mut best = SHAPE_TABLE[0];
    let mut err = f64::INFINITY;
    for &(a, v) in SHAPE_TABLE.iter() {
        let e = (v - r) * (v - r);
        if e < err {
            err = e;
            best = (a, v);
        }
    }
    best.0
}

fn check_samples(x: &[f64]) -> Result<(), QualityError> {
    if x.len() < 100 {
        return Err(QualityError::DegenerateSamples(format!("{} samples, need 100", x.len())));
    }
    if x.iter().all(|v| *v == x[0]) || x.iter().any(|v| !v.is_finite()) {
        return Err(QualityError::DegenerateSamples("samples are constant or not finite".into()));
    }
    Ok(())
}

/// Symmetric generalized Gaussian fit: (shape, variance).
pub fn fit_ggd(x: &[f64]) -> Result<(f64, f64), QualityError> {
    check_samples(x)?;
    let n = x.len() as f64;
    let var = x.iter().map(|v| v * v).sum::<f64>() / n;
    let mean_abs = x.iter().map(|v| v.abs()).sum::<f64>() / n;
    if var <= 0.0 {
        return Err(QualityError::DegenerateSamples("zero variance".into()));
    }
    Ok((invert_ratio(mean_abs * mean_abs / var), var))
}

/// Asymmetric generalized Gaussian fit by moment matching:
/// (shape, mean, left variance, right variance).
pub fn fit_aggd(x: &[f64]) -> Result<(f64, f64, f64, f64), QualityError> {
    check_samples(x)?;
    let (mut left, mut nl, mut right, mut nr) = (0.0, 0usize, 0.0, 0usize);
    for v in x {
        if *v < 0.0 {
            left += v * v;
            nl += 1;
        } else if *v > 0.0 {
            right += v * v;
            nr += 1;
        }
    }
    if nl == 0 || nr == 0 {
        return Err(QualityError::DegenerateSamples("samples lie on one side of zero".into()));
    }
    let (left_std, right_std) = ((left / nl as f64).sqrt(), (right / nr as f64).sqrt());
    let n = x.len() as f64;
    let mean_abs = x.iter().map(|v| v.abs()).sum::<f64>() / n;
    let mean_sq = x.iter().map(|v| v * v).sum::<f64>() / n;
    let g = left_std / right_std;
    let r_hat = mean_abs * mean_abs / mean_sq;
    let r_norm = r_hat * (g.powi(3) + 1.0) * (g + 1.0) / (g * g + 1.0).powi(2);
    let alpha = invert_ratio(r_norm);
    let mean = (right_std - left_std) * gamma(2.0 / alpha) / gamma(1.0 / alpha)
        * (gamma(1.0 / alpha) / gamma(3.0 / alpha)).sqrt();
    Ok((alpha, mean, left_std * left_std, right_std * right_std))
}

/// The 18 statistics of one MSCN block of `w × h`.
fn block_features(block: &[f64], w: usize, h: usize) -> Result<[f64; 18], QualityError> {
    let mut out = [0.0; 18];
    let (a, var) = fit_ggd(block)?;
    out[0] = a;
    out[1] = var;
    // horizontal, vertical, main diagonal, anti-diagonal neighbours
    let shifts: [(isize, isize); 4] = [(1, 0), (0, 1), (1, 1), (-1, 1)];
    for (k, (dx, dy)) in shifts.iter().enumerate() {
        let mut prods = Vec::with_capacity(w * h);
        for y in 0..h as isize {
            for x in 0..w as isize {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                prods.push(block[y as usize * w + x as usize] * block[ny as usize * w + nx as usize]);
            }
        }
        let (a, m, l, r) = fit_aggd(&prods)?;
        out[2 + 4 * k..6 + 4 * k].copy_from_slice(&[a, m, l, r]);
    }
    Ok(out)
}

/// Per-patch features of one image plus each patch's sharpness.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchFeatures {
    pub features: Vec<[f64; FEATURE_LEN]>,
    pub sharpness: Vec<f64>,
    /// Patches skipped because a fit was degenerate (e.g. flat regions).
    pub skipped: usize,
}

/// Patch grid origin and count along one axis, centered.
fn grid(len_half: usize, patch_half: usize) -> (usize, usize) {
    let n = len_half / patch_half;
    (n, (len_half - n * patch_half) / 2)
}

/// Features of every patch on a centered grid at native and half scale.
pub fn patch_features(field: &GrayField, patch_size: usize) -> Result<PatchFeatures, QualityError> {
    if patch_size < 16 || !patch_size.is_multiple_of(2) {
        return Err(QualityError::InvalidModel(format!("patch size {patch_size} must be even and at least 16")));
    }
    if field.width < patch_size || field.height < patch_size {
        return Err(QualityError::ImageTooSmall { width: field.width, height: field.height, min: patch_size });
    }
    let half = downsample_half(field);
    let (mscn1, sigma1) = compute_mscn(field)?;
    let (mscn2, _) = compute_mscn(&half)?;
    let p2 = patch_size / 2;
    let (nx, ox2) = grid(half.width, p2);
    let (ny, oy2) = grid(half.height, p2);
    let (nx, ny) = (nx.min(field.width / patch_size), ny.min(field.height / patch_size));
    let mut out = PatchFeatures { features: Vec::new(), sharpness: Vec::new(), skipped: 0 };
    for j in 0..ny {
        for i in 0..nx {
            let (x2, y2) = (ox2 + i * p2, oy2 + j * p2);
            let (x1, y1) = ((2 * x2).min(field.width - patch_size), (2 * y2).min(field.height - patch_size));
            let b1 = mscn1.crop(x1, y1, patch_size, patch_size);
            let b2 = mscn2.crop(x2, y2, p2, p2);
            match (block_features(&b1, patch_size, patch_size), block_features(&b2, p2, p2)) {
                (Ok(f1), Ok(f2)) => {
                    let mut f = [0.0; FEATURE_LEN];
                    f[..18].copy_from_slice(&f1);
                    f[18..].copy_from_slice(&f2);
                    let s = sigma1.crop(x1, y1, patch_size, patch_size);
                    out.sharpness.push(s.iter().sum::<f64>() / s.len() as f64);
                    out.features.push(f);
                }
                _ => out.skipped += 1,
            }
        }
    }
    Ok(out)
}

/// Mean image features over all usable patches.
pub fn extract_niqe_features(field: &GrayField) -> Result<[f64; FEATURE_LEN], QualityError> {
    let p = patch_features(field, DEFAULT_PATCH_SIZE)?;
    let (mean, _) = mean_cov(&p.features).ok_or(QualityError::NoUsablePatches)?;
    let mut out = [0.0; FEATURE_LEN];
    out.copy_from_slice(mean.as_slice());
    Ok(out)
}

/// Sample mean and covariance (n − 1 denominator; zero for one sample).
fn mean_cov(rows: &[[f64; FEATURE_LEN]]) -> Option<(DVector<f64>, DMatrix<f64>)> {
    if rows.is_empty() {
        return None;
    }
    let n = rows.len();
    let mut mean = DVector::zeros(FEATURE_LEN);
    for r in rows {
        mean += DVector::from_row_slice(r);
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(FEATURE_LEN, FEATURE_LEN);
    if n > 1 {
        for r in rows {
            let d = DVector::from_row_slice(r) - &mean;
            cov += &d * d.transpose();
        }
        cov /= (n - 1) as f64;
    }
    Some((mean, cov))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PristineModel {
    pub mean: Vec<f64>,
    /// Row-major `36 × 36`.
    pub covariance: Vec<f64>,
    pub patch_size: usize,
    pub sharpness_fraction: f64,
    pub corpus_digest: String,
    pub image_count: usize,
    pub patch_count: usize,
}

static SHIPPED: &str = include_str!("../../../../models/niqe_pristine.json");

impl PristineModel {
    /// The model fitted on the bundled photo corpus.
    pub fn shipped() -> Self {
        serde_json::from_str(SHIPPED).expect("bundled model parses")
    }

    pub fn load(path: &std::path::Path) -> Result<Self, QualityError> {
        let text = std::fs::read_to_string(path).map_err(|e| QualityError::InvalidModel(format!("{}: {e}", path.display())))?;
        let m: PristineModel = serde_json::from_str(&text).map_err(|e| QualityError::InvalidModel(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(FEATURE_LEN, FEATURE_LEN, &self.covariance)
    }

    pub fn validate(&self) -> Result<(), QualityError> {
        if self.mean.len() != FEATURE_LEN || self.covariance.len() != FEATURE_LEN * FEATURE_LEN {
            return Err(QualityError::InvalidModel("wrong dimensions".into()));
        }
        if self.mean.iter().chain(&self.covariance).any(|v| !v.is_finite()) {
            return Err(QualityError::InvalidModel("non-finite entries".into()));
        }
        let c = self.covariance_matrix();
        if (&c - c.transpose()).amax() > 1e-9 {
            return Err(QualityError::InvalidModel("covariance is not symmetric".into()));
        }
        if c.symmetric_eigenvalues().min() < -1e-9 {
            return Err(QualityError::InvalidModel("covariance is not positive semi-definite".into()));
        }
        Ok(())
    }
}

/// Fits the pristine model. Each image contributes its sharpest patches
/// (top `sharpness_fraction` by mean local deviation); every image is also
/// used mirrored so the model does not prefer either diagonal.
pub fn fit_pristine_model(
    corpus: &[GrayField],
    patch_size: usize,
    sharpness_fraction: f64,
) -> Result<PristineModel, QualityError> {
    if corpus.len() < 10 {
        return Err(QualityError::CorpusTooSmall(corpus.len()));
    }
    if !(sharpness_fraction > 0.0 && sharpness_fraction <= 1.0) {
        return Err(QualityError::InvalidModel(format!("sharpness fraction {sharpness_fraction} outside (0, 1]")));
    }
    let per_image: Vec<Result<Vec<[f64; FEATURE_LEN]>, QualityError>> = corpus
        .par_iter()
        .flat_map_iter(|img| [img.clone(), img.flip_horizontal()])
        .map(|img| {
            let p = patch_features(&img, patch_size)?;
            if p.features.len() + p.skipped < 2 {
                return Err(QualityError::CorpusTooSmall(corpus.len()));
            }
            let keep = ((p.features.len() as f64 * sharpness_fraction).ceil() as usize).min(p.features.len());
            let mut order: Vec<usize> = (0..p.features.len()).collect();
            order.sort_by(|a, b| p.sharpness[*b].total_cmp(&p.sharpness[*a]).then(a.cmp(b)));
            order.truncate(keep);
            order.sort_unstable();
            Ok(order.into_iter().map(|i| p.features[i]).collect())
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_image {
        rows.extend(r?);
    }
    let (mean, cov) = mean_cov(&rows).ok_or(QualityError::NoUsablePatches)?;
    let cov = (&cov + cov.transpose()) / 2.0;
    let mut digest_input = Vec::new();
    for img in corpus {
        digest_input.extend_from_slice(&(img.width as u64).to_le_bytes());
        digest_input.extend_from_slice(&(img.height as u64).to_le_bytes());
        for v in &img.data {
            digest_input.extend_from_slice(&v.to_le_bytes());
        }
    }
    let model = PristineModel {
        mean: mean.iter().copied().collect(),
        covariance: (0..FEATURE_LEN).flat_map(|i| (0..FEATURE_LEN).map(move |j| (i, j))).map(|(i, j)| cov[(i, j)]).collect(),
        patch_size,
        sharpness_fraction,
        corpus_digest: sha256_hex(&digest_input),
        image_count: corpus.len(),
        patch_count: rows.len(),
    };
    model.validate()?;
    Ok(model)
}

/// Pseudo-inverse with the customary relative cutoff.
fn pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let tol = FEATURE_LEN as f64 * max_sv * f64::EPSILON;
    svd.pseudo_inverse(tol).expect("tolerance is non-negative")
}

/// Distance between the model and the image's patch statistics; lower
/// means more natural.
pub fn niqe_score_field(field: &GrayField, model: &PristineModel) -> Result<f64, QualityError> {
    model.validate()?;
    let p = patch_features(field, model.patch_size)?;
    let (mean, cov) = mean_cov(&p.features).ok_or(QualityError::NoUsablePatches)?;
    let d = DVector::from_column_slice(&model.mean) - mean;
    let pooled = (model.covariance_matrix() + cov) / 2.0;
    let q = (d.transpose() * pinv(&pooled) * &d)[(0, 0)];
    Ok(q.max(0.0).sqrt())
}

pub fn niqe_score(img: &RgbaImage, model: &PristineModel) -> Result<f64, QualityError> {
    niqe_score_field(&GrayField::from_rgba(img), model)
}
