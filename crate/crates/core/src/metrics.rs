//! Scalar image-quality measures used by the abnormal branch of the classifier.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::GrayImage;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("laplacian needs at least a 3x3 image, got {width}x{height}")]
pub struct TooSmall {
    pub width: usize,
    pub height: usize,
}

/// Thresholds for the blur and uniform-image tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityThresholds {
    /// Laplacian variance below which a frame counts as blurred.
    pub blur_sharpness_min: f64,
    /// Intensity standard deviation below which a frame counts as uniform.
    pub noimage_std_min: f64,
}

impl Default for QualityThresholds {
    fn default() -> Self {
        Self {
            blur_sharpness_min: 0.0,
            noimage_std_min: 10.0,
        }
    }
}

/// Population variance of the 4-neighbour Laplacian over the valid region
/// (the one-pixel border is excluded).
pub fn laplacian_variance(img: &GrayImage) -> Result<f64, TooSmall> {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(TooSmall {
            width: w,
            height: h,
        });
    }
    let mut sum = 0i64;
    let mut sum_sq = 0i64;
    for y in 1..h - 1 {
        let above = img.row(y - 1);
        let row = img.row(y);
        let below = img.row(y + 1);
        for x in 1..w - 1 {
            let r = above[x] as i64 + below[x] as i64 + row[x - 1] as i64 + row[x + 1] as i64
                - 4 * row[x] as i64;
            sum += r;
            sum_sq += r * r;
        }
    }
    let n = ((w - 2) * (h - 2)) as f64;
    let mean = sum as f64 / n;
    Ok((sum_sq as f64 / n - mean * mean).max(0.0))
}

/// Population standard deviation of all pixel intensities.
pub fn intensity_std(img: &GrayImage) -> f64 {
    let n = img.data().len() as f64;
    let (sum, sum_sq) = img.data().iter().fold((0u64, 0u64), |(s, sq), &p| {
        (s + p as u64, sq + (p as u64) * (p as u64))
    });
    let mean = sum as f64 / n;
    (sum_sq as f64 / n - mean * mean).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{brightness_jitter, gaussian_blur, textured_fixture};
    use proptest::prelude::*;

    fn checkerboard(n: usize) -> GrayImage {
        GrayImage::from_fn(n, n, |x, y| if (x + y) % 2 == 0 { 0 } else { 255 })
    }

    #[test]
    fn uniform_has_zero_metrics() {
        let img = GrayImage::filled(8, 6, 77);
        assert_eq!(laplacian_variance(&img).unwrap(), 0.0);
        assert_eq!(intensity_std(&img), 0.0);
    }

    #[test]
    fn checkerboard_laplacian_variance() {
        // interior responses are +-1020 with mean zero
        assert_eq!(laplacian_variance(&checkerboard(4)).unwrap(), 1_040_400.0);
    }

    #[test]
    fn checkerboard_std() {
        assert_eq!(intensity_std(&checkerboard(4)), 127.5);
        assert_eq!(intensity_std(&checkerboard(10)), 127.5);
    }

    #[test]
    fn laplacian_rejects_tiny_images() {
        let img = GrayImage::filled(2, 5, 0);
        assert_eq!(
            laplacian_variance(&img),
            Err(TooSmall {
                width: 2,
                height: 5
            })
        );
        assert!(laplacian_variance(&GrayImage::filled(3, 3, 0)).is_ok());
    }

    #[test]
    fn blur_lowers_fixture_sharpness() {
        let img = textured_fixture(160, 120, 3);
        let blurred = gaussian_blur(&img, 2.0).unwrap();
        assert!(laplacian_variance(&blurred).unwrap() < laplacian_variance(&img).unwrap());
    }

    proptest! {
        #[test]
        fn metrics_are_shift_invariant(seed in any::<u64>(), delta in -20i32..20) {
            let mut state = seed | 1;
            let img = GrayImage::from_fn(12, 9, |_, _| {
                state ^= state << 13; state ^= state >> 7; state ^= state << 17;
                30 + (state % 190) as u8
            });
            let shifted = brightness_jitter(&img, delta);
            prop_assert_eq!(laplacian_variance(&img).unwrap(), laplacian_variance(&shifted).unwrap());
            prop_assert!((intensity_std(&img) - intensity_std(&shifted)).abs() < 1e-9);
        }
    }
}
