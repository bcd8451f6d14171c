//! Synthetic tamper generators.
//!
//! Produces the three tamper classes (blur, rotation, obstruction) plus benign
//! lighting variation from a clean frame, so calibration and evaluation can run
//! without a captured dataset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::image::GrayImage;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("gaussian sigma must be finite and >= 0, got {0}")]
    NegativeSigma(f64),
    #[error("obstruction coverage must be in (0, 1], got {0}")]
    CoverageOutOfRange(f64),
    #[error("rotation angle must be finite, got {0}")]
    NonFiniteAngle(f64),
}

/// Severity settings for each synthetic tamper.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub sigma: f64,
    pub angle_deg: f64,
    pub obstruct_level: u8,
    pub obstruct_coverage: f64,
    pub jitter_delta: i32,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            sigma: 4.0,
            angle_deg: 90.0,
            obstruct_level: 0,
            obstruct_coverage: 1.0,
            jitter_delta: 0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(SynthError::NegativeSigma(self.sigma));
        }
        if !(self.obstruct_coverage > 0.0 && self.obstruct_coverage <= 1.0) {
            return Err(SynthError::CoverageOutOfRange(self.obstruct_coverage));
        }
        if !self.angle_deg.is_finite() {
            return Err(SynthError::NonFiniteAngle(self.angle_deg));
        }
        Ok(())
    }
}

#[inline]
fn round_to_u8(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let denom = 2.0 * sigma * sigma;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / denom).exp())
        .collect();
    let sum: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|w| *w /= sum);
    kernel
}

/// Separable Gaussian blur with edge replication and a `ceil(3σ)` radius.
/// `sigma == 0` returns the input unchanged.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> Result<GrayImage, SynthError> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(SynthError::NegativeSigma(sigma));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let (w, h) = (img.width(), img.height());

    let mut horizontal = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, weight) in kernel.iter().enumerate() {
                let sx = x as isize + k as isize - radius;
                acc += weight * img.get_clamped(sx, y as isize) as f64;
            }
            horizontal[y * w + x] = acc;
        }
    }

    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, weight) in kernel.iter().enumerate() {
                let sy = (y as isize + k as isize - radius).clamp(0, h as isize - 1) as usize;
                acc += weight * horizontal[sy * w + x];
            }
            out.push(round_to_u8(acc));
        }
    }
    Ok(GrayImage::new(w, h, out).expect("dimensions preserved"))
}

/// Snaps a sampling coordinate onto the pixel grid when it lies within
/// floating-point noise of it, so quarter turns remain exact permutations.
#[inline]
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r
    } else {
        v
    }
}

/// Rotates about the image center with bilinear sampling; pixels whose source
/// falls outside the input are filled with 0.
///
/// A positive angle turns the content counter-clockwise as displayed (y axis
/// pointing down): the output pixel `p` samples the input at
/// `c + R(angle) (p - c)`.
pub fn rotate_image(img: &GrayImage, angle_deg: f64) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    let angle = angle_deg.rem_euclid(360.0);
    if angle == 0.0 {
        return img.clone();
    }
    let (sin, cos) = angle.to_radians().sin_cos();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let max_x = (w - 1) as f64;
    let max_y = (h - 1) as f64;

    GrayImage::from_fn(w, h, |x, y| {
        let dx = x as f64 - cx;
        let dy = y as f64 - cy;
        let sx = snap(cx + cos * dx - sin * dy);
        let sy = snap(cy + sin * dx + cos * dy);
        if !(0.0..=max_x).contains(&sx) || !(0.0..=max_y).contains(&sy) {
            return 0;
        }
        let x0 = sx.floor() as usize;
        let y0 = sy.floor() as usize;
        let x1 = (x0 + 1).min(w - 1);
        let y1 = (y0 + 1).min(h - 1);
        let fx = sx - x0 as f64;
        let fy = sy - y0 as f64;
        let top = img.get(x0, y0) as f64 * (1.0 - fx) + img.get(x1, y0) as f64 * fx;
        let bottom = img.get(x0, y1) as f64 * (1.0 - fx) + img.get(x1, y1) as f64 * fx;
        round_to_u8(top * (1.0 - fy) + bottom * fy)
    })
}

/// Replaces the top `ceil(coverage * height)` rows with `level`.
pub fn obstruct(img: &GrayImage, level: u8, coverage: f64) -> Result<GrayImage, SynthError> {
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(SynthError::CoverageOutOfRange(coverage));
    }
    let rows = ((coverage * img.height() as f64) - 1e-9).ceil() as usize;
    let rows = rows.clamp(1, img.height());
    let mut data = img.data().to_vec();
    data[..rows * img.width()].fill(level);
    Ok(GrayImage::new(img.width(), img.height(), data).expect("dimensions preserved"))
}

pub fn brightness_jitter(img: &GrayImage, delta: i32) -> GrayImage {
    let data = img
        .data()
        .iter()
        .map(|&p| (p as i32 + delta).clamp(0, 255) as u8)
        .collect();
    GrayImage::new(img.width(), img.height(), data).expect("dimensions preserved")
}

/// Adds independent uniform noise in `[-amplitude, amplitude]` to each pixel.
pub fn add_uniform_noise(img: &GrayImage, amplitude: u8, seed: u64) -> GrayImage {
    if amplitude == 0 {
        return img.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = amplitude as i32;
    let data = img
        .data()
        .iter()
        .map(|&p| (p as i32 + rng.random_range(-a..=a)).clamp(0, 255) as u8)
        .collect();
    GrayImage::new(img.width(), img.height(), data).expect("dimensions preserved")
}

/// The standard textured test scene: a smooth seeded background carrying 10%
/// salt noise, blurred with σ = 1.
///
/// The low-frequency background keeps the intensity spread of heavily blurred
/// copies well above the uniform-image threshold, while the salt blobs give
/// FAST plenty of corners.
pub fn textured_fixture(width: usize, height: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phases: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..std::f64::consts::TAU));
    let (wf, hf) = (width as f64, height as f64);
    let tau = std::f64::consts::TAU;
    let base = GrayImage::from_fn(width, height, |x, y| {
        let (u, v) = (x as f64 / wf, y as f64 / hf);
        let background = 100.0
            + 22.0 * (tau * 1.3 * u + phases[0]).sin()
            + 18.0 * (tau * (0.9 * v + 0.4 * u) + phases[1]).sin()
            + 10.0 * (tau * (2.1 * v - 1.7 * u) + phases[2]).sin();
        if rng.random_bool(0.10) {
            255
        } else {
            round_to_u8(background)
        }
    });
    gaussian_blur(&base, 1.0).expect("positive sigma")
}
