//! ORB features: image pyramid, FAST-9 corners ranked by Harris score,
//! intensity-centroid orientation and steered BRIEF descriptors.
//!
//! The BRIEF sampling pattern is not the learned one from the original ORB
//! work. It is 256 point pairs drawn from an isotropic Gaussian with
//! `σ = patch_size / 5` using a seeded ChaCha8 stream, truncated to the disc of
//! radius `patch_size / 2`, so descriptors are bit-identical across runs and
//! platforms for a given `pattern_seed`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::GrayImage;

pub const DEFAULT_PATTERN_SEED: u64 = 0x0_5EED_0DB5;
pub const DESCRIPTOR_BYTES: usize = 32;
pub const DESCRIPTOR_BITS: usize = 256;

const HARRIS_K: f64 = 0.04;
const HARRIS_RADIUS: isize = 3;
const SMOOTH_RADIUS: isize = 2;

/// The 16-pixel Bresenham circle of radius 3, clockwise from 12 o'clock.
pub const FAST_CIRCLE: [(isize, isize); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];
const FAST_ARC: usize = 9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrbError {
    #[error("scale_factor must be > 1, got {0}")]
    ScaleFactor(f64),
    #[error("pyramid_levels must be >= 1")]
    PyramidLevels,
    #[error("patch_size must be odd and >= 15, got {0}")]
    PatchSize(usize),
    #[error("fast_threshold must be > 0")]
    FastThreshold,
    #[error("invalid descriptor hex: {0}")]
    DescriptorHex(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbParams {
    pub max_features: usize,
    pub pyramid_levels: usize,
    pub scale_factor: f64,
    pub fast_threshold: u8,
    pub patch_size: usize,
    pub pattern_seed: u64,
}

impl Default for OrbParams {
    fn default() -> Self {
        Self {
            max_features: 500,
            pyramid_levels: 8,
            scale_factor: 1.2,
            fast_threshold: 20,
            patch_size: 31,
            pattern_seed: DEFAULT_PATTERN_SEED,
        }
    }
}

impl OrbParams {
    pub fn validate(&self) -> Result<(), OrbError> {
        if !(self.scale_factor > 1.0 && self.scale_factor.is_finite()) {
            return Err(OrbError::ScaleFactor(self.scale_factor));
        }
        if self.pyramid_levels == 0 {
            return Err(OrbError::PyramidLevels);
        }
        if self.patch_size.is_multiple_of(2) || self.patch_size < 15 {
            return Err(OrbError::PatchSize(self.patch_size));
        }
        if self.fast_threshold == 0 {
            return Err(OrbError::FastThreshold);
        }
        Ok(())
    }

    /// Distance from a level border a keypoint must keep so that orientation,
    /// Harris and the smoothed, rotated BRIEF samples stay inside the image.
    pub fn edge_margin(&self) -> usize {
        self.patch_size / 2 + SMOOTH_RADIUS as usize + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    /// Position in level-0 pixel coordinates.
    pub x: f64,
    pub y: f64,
    pub level: usize,
    /// Orientation in `[0, 360)`, measured with y pointing down.
    pub angle_deg: f64,
    /// Harris corner score.
    pub response: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Descriptor256(pub [u8; DESCRIPTOR_BYTES]);

impl Descriptor256 {
    pub const ZERO: Self = Self([0; DESCRIPTOR_BYTES]);
    pub const ONES: Self = Self([0xff; DESCRIPTOR_BYTES]);

    pub fn bit(&self, i: usize) -> bool {
        self.0[i / 8] >> (i % 8) & 1 == 1
    }

    pub fn set_bit(&mut self, i: usize, value: bool) {
        if value {
            self.0[i / 8] |= 1 << (i % 8);
        } else {
            self.0[i / 8] &= !(1 << (i % 8));
        }
    }

    /// The descriptor as four little-endian 64-bit words.
    #[inline]
    pub fn words(&self) -> [u64; 4] {
        std::array::from_fn(|i| {
            u64::from_le_bytes(self.0[8 * i..8 * i + 8].try_into().expect("8-byte chunk"))
        })
    }

    /// 64-character lowercase hex.
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, OrbError> {
        if s.len() != 2 * DESCRIPTOR_BYTES || s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(OrbError::DescriptorHex(s.to_string()));
        }
        let mut bytes = [0u8; DESCRIPTOR_BYTES];
        hex::decode_to_slice(s, &mut bytes).map_err(|_| OrbError::DescriptorHex(s.to_string()))?;
        Ok(Self(bytes))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feature {
    pub keypoint: Keypoint,
    pub descriptor: Descriptor256,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureSet {
    pub features: Vec<Feature>,
}

impl FeatureSet {
    pub fn new(features: Vec<Feature>) -> Self {
        Self { features }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Feature> {
        self.features.iter()
    }

    pub fn descriptors(&self) -> impl Iterator<Item = &Descriptor256> + '_ {
        self.features.iter().map(|f| &f.descriptor)
    }
}

/// Bilinear resampling to an arbitrary size (pixel-center aligned).
pub fn resize_bilinear(img: &GrayImage, width: usize, height: usize) -> GrayImage {
    let sx = img.width() as f64 / width as f64;
    let sy = img.height() as f64 / height as f64;
    let max_x = (img.width() - 1) as f64;
    let max_y = (img.height() - 1) as f64;
    GrayImage::from_fn(width, height, |x, y| {
        let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, max_x);
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, max_y);
        let x0 = fx.floor() as usize;
        let y0 = fy.floor() as usize;
        let x1 = (x0 + 1).min(img.width() - 1);
        let y1 = (y0 + 1).min(img.height() - 1);
        let ax = fx - x0 as f64;
        let ay = fy - y0 as f64;
        let top = img.get(x0, y0) as f64 * (1.0 - ax) + img.get(x1, y0) as f64 * ax;
        let bottom = img.get(x0, y1) as f64 * (1.0 - ax) + img.get(x1, y1) as f64 * ax;
        (top * (1.0 - ay) + bottom * ay + 0.5)
            .floor()
            .clamp(0.0, 255.0) as u8
    })
}

/// Level 0 is the input; level `k` is `round(dim / scale_factor^k)` in each
/// dimension, resampled bilinearly from level `k - 1`. Levels whose smaller
/// side would fall below `min_size` are dropped, as are all levels after them.
pub fn build_pyramid(
    img: &GrayImage,
    levels: usize,
    scale_factor: f64,
    min_size: usize,
) -> Vec<GrayImage> {
    let mut pyramid = vec![img.clone()];
    for k in 1..levels {
        let factor = scale_factor.powi(k as i32);
        let w = (img.width() as f64 / factor).round() as usize;
        let h = (img.height() as f64 / factor).round() as usize;
        if w.min(h) < min_size || w == 0 || h == 0 {
            break;
        }
        let next = resize_bilinear(pyramid.last().expect("level 0 present"), w, h);
        pyramid.push(next);
    }
    pyramid
}

/// Bit `i` set when circle pixel `i` is brighter than `center + t` (first) or
/// darker than `center - t` (second).
#[inline]
fn circle_masks(img: &GrayImage, x: usize, y: usize, threshold: i16) -> (u32, u32) {
    let center = img.get(x, y) as i16;
    let mut bright = 0u32;
    let mut dark = 0u32;
    for (i, (dx, dy)) in FAST_CIRCLE.iter().enumerate() {
        let p = img.get((x as isize + dx) as usize, (y as isize + dy) as usize) as i16;
        if p > center + threshold {
            bright |= 1 << i;
        } else if p < center - threshold {
            dark |= 1 << i;
        }
    }
    (bright, dark)
}

/// True when the 16-bit circular mask holds a run of at least nine set bits.
#[inline]
fn has_arc(mask: u32) -> bool {
    let mut run = mask | (mask << 16);
    for _ in 1..FAST_ARC {
        run &= run >> 1;
    }
    run != 0
}

/// FAST-9 segment test at `(x, y)`. The pixel must be at least 3 px from
/// every border.
#[inline]
pub fn is_fast_corner(img: &GrayImage, x: usize, y: usize, threshold: u8) -> bool {
    let (bright, dark) = circle_masks(img, x, y, threshold as i16);
    has_arc(bright) || has_arc(dark)
}

/// Largest threshold for which `(x, y)` still passes the segment test.
fn fast_score(img: &GrayImage, x: usize, y: usize) -> i16 {
    let center = img.get(x, y) as i16;
    let diffs: [i16; 16] = std::array::from_fn(|i| {
        let (dx, dy) = FAST_CIRCLE[i];
        img.get((x as isize + dx) as usize, (y as isize + dy) as usize) as i16 - center
    });
    let mut best = 0i16;
    for start in 0..16 {
        let mut min_bright = i16::MAX;
        let mut min_dark = i16::MAX;
        for k in 0..FAST_ARC {
            let d = diffs[(start + k) % 16];
            min_bright = min_bright.min(d);
            min_dark = min_dark.min(-d);
        }
        best = best.max(min_bright - 1).max(min_dark - 1);
    }
    best
}

/// Pre-suppression FAST-9 corner mask; pixels closer than 3 px to the border
/// are never corners.
pub fn fast_corner_mask(img: &GrayImage, threshold: u8) -> Vec<bool> {
    let (w, h) = (img.width(), img.height());
    let mut mask = vec![false; w * h];
    if w < 7 || h < 7 {
        return mask;
    }
    for y in 3..h - 3 {
        for x in 3..w - 3 {
            mask[y * w + x] = is_fast_corner(img, x, y, threshold);
        }
    }
    mask
}

/// Harris response over a 7x7 window of Sobel gradients.
pub fn harris_response(img: &GrayImage, x: usize, y: usize) -> f64 {
    let (cx, cy) = (x as isize, y as isize);
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    let p = |u: isize, v: isize| img.get_clamped(u, v) as f64;
    for v in cy - HARRIS_RADIUS..=cy + HARRIS_RADIUS {
        for u in cx - HARRIS_RADIUS..=cx + HARRIS_RADIUS {
            let gx = (p(u + 1, v - 1) + 2.0 * p(u + 1, v) + p(u + 1, v + 1))
                - (p(u - 1, v - 1) + 2.0 * p(u - 1, v) + p(u - 1, v + 1));
            let gy = (p(u - 1, v + 1) + 2.0 * p(u, v + 1) + p(u + 1, v + 1))
                - (p(u - 1, v - 1) + 2.0 * p(u, v - 1) + p(u + 1, v - 1));
            sxx += gx * gx;
            syy += gy * gy;
            sxy += gx * gy;
        }
    }
    // scale keeps responses in a readable range; ranking is unaffected
    let norm = 1.0 / (4.0 * 255.0 * 49.0);
    let (sxx, syy, sxy) = (sxx * norm, syy * norm, sxy * norm);
    sxx * syy - sxy * sxy - HARRIS_K * (sxx + syy) * (sxx + syy)
}

/// Corner positions surviving 3x3 non-maximum suppression of the FAST score,
/// considering pixels at least `border` px from the edges. Equal scores are
/// resolved in favour of the pixel earlier in raster order.
fn suppressed_corners(img: &GrayImage, threshold: u8, border: usize) -> Vec<(usize, usize)> {
    let (w, h) = (img.width(), img.height());
    let border = border.max(3);
    if w < 2 * border + 1 || h < 2 * border + 1 {
        return Vec::new();
    }
    let mut score = vec![0i16; w * h];
    for y in border..h - border {
        for x in border..w - border {
            if is_fast_corner(img, x, y, threshold) {
                // corners always score >= threshold >= 1, so 0 marks "no corner"
                score[y * w + x] = fast_score(img, x, y);
            }
        }
    }
    let mut out = Vec::new();
    for y in border..h - border {
        for x in border..w - border {
            let s = score[y * w + x];
            if s == 0 {
                continue;
            }
            let mut keep = true;
            'nb: for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let n = score[(y as isize + dy) as usize * w + (x as isize + dx) as usize];
                    let earlier = dy < 0 || (dy == 0 && dx < 0);
                    if (earlier && n >= s) || (!earlier && n > s) {
                        keep = false;
                        break 'nb;
                    }
                }
            }
            if keep {
                out.push((x, y));
            }
        }
    }
    out
}

fn rank_by_harris(img: &GrayImage, corners: Vec<(usize, usize)>, max_kp: usize) -> Vec<Keypoint> {
    let mut scored: Vec<(f64, usize, usize)> = corners
        .into_iter()
        .map(|(x, y)| (harris_response(img, x, y), x, y))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.2.cmp(&b.2)).then(a.1.cmp(&b.1)));
    scored.truncate(max_kp);
    scored
        .into_iter()
        .map(|(response, x, y)| Keypoint {
            x: x as f64,
            y: y as f64,
            level: 0,
            angle_deg: 0.0,
            response,
        })
        .collect()
}

/// FAST-9 detection with 3x3 non-maximum suppression, keeping the `max_kp`
/// corners with the highest Harris response. Coordinates are in `img`'s frame.
pub fn detect_fast(img: &GrayImage, threshold: u8, max_kp: usize) -> Vec<Keypoint> {
    rank_by_harris(img, suppressed_corners(img, threshold, 3), max_kp)
}

/// Intensity-centroid orientation in degrees `[0, 360)` over the disc of the
/// given radius centred at `(x, y)`. The disc must lie inside the image.
pub fn keypoint_orientation(img: &GrayImage, x: usize, y: usize, radius: usize) -> f64 {
    let r = radius as isize;
    let mut m10 = 0i64;
    let mut m01 = 0i64;
    for dy in -r..=r {
        let row = img.row((y as isize + dy) as usize);
        for dx in -r..=r {
            if dx * dx + dy * dy > r * r {
                continue;
            }
            let v = row[(x as isize + dx) as usize] as i64;
            m10 += dx as i64 * v;
            m01 += dy as i64 * v;
        }
    }
    let deg = (m01 as f64).atan2(m10 as f64).to_degrees();
    let deg = deg.rem_euclid(360.0);
    if deg >= 360.0 {
        0.0
    } else {
        deg
    }
}

/// 5x5 box-filtered view of an image backed by an integral image. Sums are
/// compared directly, which is equivalent to comparing box means.
pub struct SmoothedImage {
    width: usize,
    height: usize,
    integral: Vec<u32>,
}

impl SmoothedImage {
    pub fn new(img: &GrayImage) -> Self {
        let (w, h) = (img.width(), img.height());
        let stride = w + 1;
        let mut integral = vec![0u32; stride * (h + 1)];
        for y in 0..h {
            let mut row_sum = 0u32;
            for x in 0..w {
                row_sum += img.get(x, y) as u32;
                integral[(y + 1) * stride + x + 1] = integral[y * stride + x + 1] + row_sum;
            }
        }
        Self {
            width: w,
            height: h,
            integral,
        }
    }

    /// Sum of the 5x5 box centred at `(x, y)`, or `None` if it leaves the image.
    #[inline]
    pub fn box_sum(&self, x: isize, y: isize) -> Option<u32> {
        let r = SMOOTH_RADIUS;
        if x - r < 0 || y - r < 0 || x + r >= self.width as isize || y + r >= self.height as isize {
            return None;
        }
        let stride = self.width + 1;
        let (x0, y0) = ((x - r) as usize, (y - r) as usize);
        let (x1, y1) = ((x + r + 1) as usize, (y + r + 1) as usize);
        Some(
            self.integral[y1 * stride + x1] + self.integral[y0 * stride + x0]
                - self.integral[y0 * stride + x1]
                - self.integral[y1 * stride + x0],
        )
    }
}

/// Fixed BRIEF sampling pattern: 256 pairs of integer offsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingPattern {
    pairs: Vec<[(i32, i32); 2]>,
}

impl SamplingPattern {
    pub fn generate(patch_size: usize, seed: u64) -> Self {
        let half = (patch_size / 2) as i32;
        let normal = Normal::new(0.0, patch_size as f64 / 5.0).expect("positive sigma");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw_point = || loop {
            let x = normal.sample(&mut rng).round() as i32;
            let y = normal.sample(&mut rng).round() as i32;
            if x * x + y * y <= half * half {
                return (x, y);
            }
        };
        let mut pairs = Vec::with_capacity(DESCRIPTOR_BITS);
        while pairs.len() < DESCRIPTOR_BITS {
            let a = draw_point();
            let b = draw_point();
            if a != b {
                pairs.push([a, b]);
            }
        }
        Self { pairs }
    }

    pub fn pairs(&self) -> &[[(i32, i32); 2]] {
        &self.pairs
    }
}

/// Steered BRIEF: each sampling offset is rotated by `angle_deg` before the
/// smoothed intensities are compared; bit `i` is set iff `I(a_i) < I(b_i)`.
/// Returns `None` when any rotated sample falls outside the image.
pub fn describe_smoothed(
    smoothed: &SmoothedImage,
    x: usize,
    y: usize,
    angle_deg: f64,
    pattern: &SamplingPattern,
) -> Option<Descriptor256> {
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let (cx, cy) = (x as isize, y as isize);
    let sample = |(px, py): (i32, i32)| {
        let (px, py) = (px as f64, py as f64);
        let rx = (cos * px - sin * py).round() as isize;
        let ry = (sin * px + cos * py).round() as isize;
        smoothed.box_sum(cx + rx, cy + ry)
    };
    let mut desc = Descriptor256::ZERO;
    for (i, [a, b]) in pattern.pairs.iter().enumerate() {
        let ia = sample(*a)?;
        let ib = sample(*b)?;
        if ia < ib {
            desc.0[i / 8] |= 1 << (i % 8);
        }
    }
    Some(desc)
}

/// Convenience wrapper over [`describe_smoothed`] for a single keypoint.
pub fn describe(
    img: &GrayImage,
    x: usize,
    y: usize,
    angle_deg: f64,
    pattern: &SamplingPattern,
) -> Option<Descriptor256> {
    describe_smoothed(&SmoothedImage::new(img), x, y, angle_deg, pattern)
}

/// Feature budget per pyramid level, proportional to level area; the
/// rounding remainder goes to level 0.
fn level_budgets(pyramid: &[GrayImage], max_features: usize) -> Vec<usize> {
    let areas: Vec<usize> = pyramid.iter().map(|l| l.width() * l.height()).collect();
    let total: usize = areas.iter().sum();
    let mut budgets: Vec<usize> = areas
        .iter()
        .map(|a| (max_features as u128 * *a as u128 / total as u128) as usize)
        .collect();
    let assigned: usize = budgets[1..].iter().sum();
    budgets[0] = max_features - assigned;
    budgets
}

/// ORB feature extractor with a cached sampling pattern.
#[derive(Debug, Clone)]
pub struct OrbExtractor {
    params: OrbParams,
    pattern: SamplingPattern,
}

impl OrbExtractor {
    pub fn new(params: OrbParams) -> Result<Self, OrbError> {
        params.validate()?;
        Ok(Self {
            pattern: SamplingPattern::generate(params.patch_size, params.pattern_seed),
            params,
        })
    }

    pub fn params(&self) -> &OrbParams {
        &self.params
    }

    pub fn pattern(&self) -> &SamplingPattern {
        &self.pattern
    }

    pub fn extract(&self, img: &GrayImage) -> FeatureSet {
        let p = &self.params;
        let pyramid = build_pyramid(img, p.pyramid_levels, p.scale_factor, p.patch_size);
        let budgets = level_budgets(&pyramid, p.max_features);
        let margin = p.edge_margin();
        let radius = p.patch_size / 2;

        let mut features = Vec::new();
        for (level, (layer, budget)) in pyramid.iter().zip(budgets).enumerate() {
            if budget == 0 {
                continue;
            }
            let corners = suppressed_corners(layer, p.fast_threshold, margin);
            let ranked = rank_by_harris(layer, corners, budget);
            if ranked.is_empty() {
                continue;
            }
            let smoothed = SmoothedImage::new(layer);
            let scale = p.scale_factor.powi(level as i32);
            for kp in ranked {
                let (lx, ly) = (kp.x as usize, kp.y as usize);
                let angle = keypoint_orientation(layer, lx, ly, radius);
                let Some(descriptor) = describe_smoothed(&smoothed, lx, ly, angle, &self.pattern)
                else {
                    continue;
                };
                let x = (kp.x * scale).min(img.width() as f64 - 1.0);
                let y = (kp.y * scale).min(img.height() as f64 - 1.0);
                features.push(Feature {
                    keypoint: Keypoint {
                        x,
                        y,
                        level,
                        angle_deg: angle,
                        response: kp.response,
                    },
                    descriptor,
                });
            }
        }
        FeatureSet::new(features)
    }
}

/// One-shot extraction; prefer [`OrbExtractor`] when extracting repeatedly.
pub fn extract(img: &GrayImage, params: &OrbParams) -> Result<FeatureSet, OrbError> {
    Ok(OrbExtractor::new(*params)?.extract(img))
}
