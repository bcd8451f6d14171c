//! Planar homography estimation: Hartley-normalized DLT, a seeded RANSAC
//! wrapper, and the rotation angle of the closest similarity.
//!
//! Correspondences map test-image points `(x1, y1)` to reference points
//! `(x2, y2)`, so the estimated `H` satisfies `[x2, y2, 1] ~ H [x1, y1, 1]`.

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_RANSAC_SEED: u64 = 0x00C0_FFEE;

/// Relative area below which three normalized points count as collinear.
const COLLINEAR_TOL: f64 = 1e-6;
const SINGULAR_TOL: f64 = 1e-9;
const INFINITY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HomographyError {
    #[error("need at least 4 correspondences, got {0}")]
    TooFewPairs(usize),
    #[error("degenerate point configuration")]
    Degenerate,
    #[error("no consensus: best model had {best} inliers, {required} required")]
    NoConsensus { best: usize, required: usize },
    #[error("rotation angle undefined for this homography")]
    UndefinedAngle,
    #[error("invalid ransac parameters: {0}")]
    InvalidParams(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl Correspondence {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { x1, y1, x2, y2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacParams {
    pub max_iterations: usize,
    /// Reprojection distance in pixels.
    pub inlier_threshold: f64,
    pub min_inliers: usize,
    pub rng_seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            inlier_threshold: 3.0,
            min_inliers: 10,
            rng_seed: DEFAULT_RANSAC_SEED,
        }
    }
}

impl RansacParams {
    pub fn validate(&self) -> Result<(), HomographyError> {
        if self.max_iterations == 0 {
            return Err(HomographyError::InvalidParams(
                "max_iterations must be >= 1",
            ));
        }
        if !(self.inlier_threshold > 0.0 && self.inlier_threshold.is_finite()) {
            return Err(HomographyError::InvalidParams(
                "inlier_threshold must be > 0",
            ));
        }
        Ok(())
    }
}

/// A 3x3 projective transform, scaled so that `h[2][2] = 1` when possible and
/// otherwise to unit Frobenius norm with a positive first nonzero entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(Matrix3<f64>);

impl Homography {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Normalizes and checks that the matrix is non-singular.
    pub fn new(m: Matrix3<f64>) -> Result<Self, HomographyError> {
        let norm = m.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(HomographyError::Degenerate);
        }
        if (m.determinant() / norm.powi(3)).abs() < SINGULAR_TOL {
            return Err(HomographyError::Degenerate);
        }
        let h = if m[(2, 2)].abs() > INFINITY_TOL {
            m / m[(2, 2)]
        } else {
            let unit = m / norm;
            let first = unit
                .transpose()
                .iter()
                .copied()
                .find(|v| *v != 0.0)
                .unwrap_or(1.0);
            if first < 0.0 {
                -unit
            } else {
                unit
            }
        };
        Ok(Self(h))
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self, HomographyError> {
        Self::new(Matrix3::from_fn(|r, c| rows[r][c]))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0[(row, col)]
    }

    /// Maps a point; `None` for points sent to infinity.
    pub fn apply(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let p = self.0 * Vector3::new(x, y, 1.0);
        if p.z.abs() < INFINITY_TOL {
            None
        } else {
            Some((p.x / p.z, p.y / p.z))
        }
    }
}

/// Distance between the mapped test point and the reference point; points
/// mapped to infinity are infinitely far.
pub fn reprojection_error(h: &Homography, pair: &Correspondence) -> f64 {
    match h.apply(pair.x1, pair.y1) {
        Some((x, y)) => (x - pair.x2).hypot(y - pair.y2),
        None => f64::INFINITY,
    }
}

/// Similarity moving the centroid to the origin with RMS distance sqrt(2).
fn normalizing_transform(points: &[(f64, f64)]) -> Option<Matrix3<f64>> {
    let n = points.len() as f64;
    let (mx, my) = points
        .iter()
        .fold((0.0, 0.0), |(sx, sy), (x, y)| (sx + x, sy + y));
    let (mx, my) = (mx / n, my / n);
    let rms = (points
        .iter()
        .map(|(x, y)| (x - mx).powi(2) + (y - my).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    if !(rms > 0.0 && rms.is_finite()) {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / rms;
    Some(Matrix3::new(
        s,
        0.0,
        -s * mx,
        0.0,
        s,
        -s * my,
        0.0,
        0.0,
        1.0,
    ))
}

fn transform_points(t: &Matrix3<f64>, points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    points
        .iter()
        .map(|&(x, y)| (t[(0, 0)] * x + t[(0, 2)], t[(1, 1)] * y + t[(1, 2)]))
        .collect()
}

fn twice_area(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

/// For minimal samples every triple must span a triangle; for larger sets the
/// points must not all lie on one line.
fn is_degenerate(points: &[(f64, f64)]) -> bool {
    if points.len() == 4 {
        for skip in 0..4 {
            let tri: Vec<_> = (0..4).filter(|&i| i != skip).map(|i| points[i]).collect();
            if twice_area(tri[0], tri[1], tri[2]).abs() < COLLINEAR_TOL {
                return true;
            }
        }
        return false;
    }
    // second moment of centred points: rank < 2 means collinear
    let n = points.len() as f64;
    let (mx, my) = points
        .iter()
        .fold((0.0, 0.0), |(sx, sy), (x, y)| (sx + x, sy + y));
    let (mx, my) = (mx / n, my / n);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in points {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    let det = (sxx * syy - sxy * sxy) / (n * n);
    det.abs() < COLLINEAR_TOL
}

/// Normalized direct linear transform over four or more correspondences.
pub fn dlt_homography(pairs: &[Correspondence]) -> Result<Homography, HomographyError> {
    let n = pairs.len();
    if n < 4 {
        return Err(HomographyError::TooFewPairs(n));
    }
    if pairs
        .iter()
        .any(|p| !(p.x1.is_finite() && p.y1.is_finite() && p.x2.is_finite() && p.y2.is_finite()))
    {
        return Err(HomographyError::Degenerate);
    }
    let src: Vec<(f64, f64)> = pairs.iter().map(|p| (p.x1, p.y1)).collect();
    let dst: Vec<(f64, f64)> = pairs.iter().map(|p| (p.x2, p.y2)).collect();
    let t_src = normalizing_transform(&src).ok_or(HomographyError::Degenerate)?;
    let t_dst = normalizing_transform(&dst).ok_or(HomographyError::Degenerate)?;
    let src_n = transform_points(&t_src, &src);
    let dst_n = transform_points(&t_dst, &dst);
    if is_degenerate(&src_n) || is_degenerate(&dst_n) {
        return Err(HomographyError::Degenerate);
    }

    // pad to at least 9 rows so the SVD yields a full right-singular basis
    let rows = (2 * n).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (&(x, y), &(u, v))) in src_n.iter().zip(&dst_n).enumerate() {
        let r = 2 * i;
        a[(r, 0)] = -x;
        a[(r, 1)] = -y;
        a[(r, 2)] = -1.0;
        a[(r, 6)] = u * x;
        a[(r, 7)] = u * y;
        a[(r, 8)] = u;
        a[(r + 1, 3)] = -x;
        a[(r + 1, 4)] = -y;
        a[(r + 1, 5)] = -1.0;
        a[(r + 1, 6)] = v * x;
        a[(r + 1, 7)] = v * y;
        a[(r + 1, 8)] = v;
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(HomographyError::Degenerate)?;
    let smallest = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .ok_or(HomographyError::Degenerate)?;
    let h_n = Matrix3::from_fn(|r, c| v_t[(smallest, 3 * r + c)]);
    let t_dst_inv = t_dst.try_inverse().ok_or(HomographyError::Degenerate)?;
    Homography::new(t_dst_inv * h_n * t_src)
}

/// Seeded RANSAC around [`dlt_homography`]. Returns the model refit on the
/// consensus set together with the sample-stage inlier indices (ascending).
pub fn ransac_homography(
    pairs: &[Correspondence],
    params: &RansacParams,
) -> Result<(Homography, Vec<usize>), HomographyError> {
    params.validate()?;
    if pairs.len() < 4 {
        return Err(HomographyError::TooFewPairs(pairs.len()));
    }
    let required = params.min_inliers.max(4);
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let mut best: Vec<usize> = Vec::new();
    let mut sample = Vec::with_capacity(4);

    for _ in 0..params.max_iterations {
        sample.clear();
        sample.extend(
            index::sample(&mut rng, pairs.len(), 4)
                .iter()
                .map(|i| pairs[i]),
        );
        let Ok(model) = dlt_homography(&sample) else {
            continue;
        };
        let inliers: Vec<usize> = pairs
            .iter()
            .enumerate()
            .filter(|(_, p)| reprojection_error(&model, p) <= params.inlier_threshold)
            .map(|(i, _)| i)
            .collect();
        if inliers.len() > best.len() {
            best = inliers;
            if best.len() == pairs.len() {
                break;
            }
        }
    }

    if best.len() < required {
        return Err(HomographyError::NoConsensus {
            best: best.len(),
            required,
        });
    }
    let consensus: Vec<Correspondence> = best.iter().map(|&i| pairs[i]).collect();
    let refit = dlt_homography(&consensus)?;
    Ok((refit, best))
}

/// Rotation of the orthogonal matrix closest to the upper-left 2x2 block, in
/// degrees within (-180, 180].
pub fn rotation_angle(h: &Homography) -> Result<f64, HomographyError> {
    let m = h.matrix();
    let sign = if m[(2, 2)] < 0.0 { -1.0 } else { 1.0 };
    let (a, b, c, d) = (
        sign * m[(0, 0)],
        sign * m[(0, 1)],
        sign * m[(1, 0)],
        sign * m[(1, 1)],
    );
    let sin_part = c - b;
    let cos_part = a + d;
    let scale = m.norm().max(f64::MIN_POSITIVE);
    if sin_part.abs() / scale < INFINITY_TOL && cos_part.abs() / scale < INFINITY_TOL {
        return Err(HomographyError::UndefinedAngle);
    }
    let deg = sin_part.atan2(cos_part).to_degrees();
    Ok(if deg <= -180.0 { 180.0 } else { deg })
}
