//! Calibration from normal reference frames and the four-way tamper decision.
//!
//! Classification order:
//!
//! 1. Extract ORB features and take the best good-match count over all
//!    references.
//! 2. Below `match_count_min` the frame is abnormal: a near-uniform frame is
//!    `obstructed`, a low-sharpness frame is `blurred`, anything else falls
//!    back to `obstructed`.
//! 3. Otherwise a RANSAC homography against the best reference gives the
//!    rotation; `|angle| > rotation_limit_deg` is `rotated`, else `normal`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::homography::{
    ransac_homography, rotation_angle, Correspondence, HomographyError, RansacParams,
};
use crate::image::GrayImage;
use crate::matching::{good_match_count, good_matches, MatchParams};
use crate::metrics::{intensity_std, laplacian_variance, QualityThresholds};
use crate::orb::{FeatureSet, OrbError, OrbExtractor, OrbParams};

pub const PROFILE_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("calibration needs at least 2 reference images, got {0}")]
    TooFewReferences(usize),
    #[error("reference {name:?} yields {found} features, at least {required} required")]
    TooFewFeatures {
        name: String,
        found: usize,
        required: usize,
    },
    #[error("references {a:?} and {b:?} share no good matches; calibration refused")]
    InconsistentReferences { a: String, b: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Orb(#[from] OrbError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TamperLabel {
    Normal,
    Blurred,
    Rotated,
    Obstructed,
}

impl TamperLabel {
    pub const ALL: [TamperLabel; 4] = [
        TamperLabel::Normal,
        TamperLabel::Blurred,
        TamperLabel::Rotated,
        TamperLabel::Obstructed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TamperLabel::Normal => "normal",
            TamperLabel::Blurred => "blurred",
            TamperLabel::Rotated => "rotated",
            TamperLabel::Obstructed => "obstructed",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_abnormal(self) -> bool {
        self != TamperLabel::Normal
    }
}

impl fmt::Display for TamperLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TamperLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TamperLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown label: {s}"))
    }
}

/// Rules recorded in [`Classification::decision_path`], in firing order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionRule {
    MatchesBelowThreshold,
    MatchesAtOrAboveThreshold,
    UniformIntensity,
    LowSharpness,
    AbnormalFallback,
    RansacNoConsensus,
    RotationUndefined,
    RotationExceedsLimit,
    RotationWithinLimit,
}

impl DecisionRule {
    pub fn as_str(self) -> &'static str {
        match self {
            DecisionRule::MatchesBelowThreshold => "matches_below_threshold",
            DecisionRule::MatchesAtOrAboveThreshold => "matches_at_or_above_threshold",
            DecisionRule::UniformIntensity => "uniform_intensity",
            DecisionRule::LowSharpness => "low_sharpness",
            DecisionRule::AbnormalFallback => "abnormal_fallback",
            DecisionRule::RansacNoConsensus => "ransac_no_consensus",
            DecisionRule::RotationUndefined => "rotation_undefined",
            DecisionRule::RotationExceedsLimit => "rotation_exceeds_limit",
            DecisionRule::RotationWithinLimit => "rotation_within_limit",
        }
    }
}

/// Everything calibration needs besides the reference frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationConfig {
    pub orb: OrbParams,
    pub matching: MatchParams,
    pub ransac: RansacParams,
    pub noimage_std_min: f64,
    /// Fraction of the weakest reference-pair agreement used as the match gate.
    pub beta: f64,
    /// Lower bound on the match gate.
    pub match_floor: usize,
    /// Fraction of the least-sharp reference used as the blur gate.
    pub gamma: f64,
    pub min_ref_features: usize,
    pub rotation_limit_deg: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            orb: OrbParams::default(),
            matching: MatchParams::default(),
            ransac: RansacParams::default(),
            noimage_std_min: QualityThresholds::default().noimage_std_min,
            beta: 0.5,
            match_floor: 10,
            gamma: 0.25,
            min_ref_features: 30,
            rotation_limit_deg: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceImage {
    pub name: String,
    pub features: FeatureSet,
    /// Laplacian variance of the reference frame.
    pub sharpness: f64,
}

/// Reference features plus every threshold derived during calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationProfile {
    pub version: u32,
    pub orb_params: OrbParams,
    pub match_params: MatchParams,
    pub ransac_params: RansacParams,
    pub quality: QualityThresholds,
    pub match_count_min: usize,
    pub rotation_limit_deg: f64,
    pub references: Vec<ReferenceImage>,
}

impl CalibrationProfile {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: String| Err(PipelineError::Config(msg));
        if self.version != PROFILE_VERSION {
            return bad(format!("unsupported profile version {}", self.version));
        }
        self.orb_params.validate()?;
        self.ransac_params
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.match_params.good_distance_max > 256 {
            return bad("good_distance_max must be in [0, 256]".into());
        }
        if self.references.len() < 2 {
            return bad(format!(
                "profile needs at least 2 references, has {}",
                self.references.len()
            ));
        }
        if self.match_count_min < 1 {
            return bad("match_count_min must be >= 1".into());
        }
        if !(self.rotation_limit_deg > 0.0 && self.rotation_limit_deg.is_finite()) {
            return bad("rotation_limit_deg must be > 0".into());
        }
        let q = &self.quality;
        if !(q.blur_sharpness_min >= 0.0 && q.noimage_std_min >= 0.0) {
            return bad("quality thresholds must be >= 0".into());
        }
        if let Some(r) = self.references.iter().find(|r| r.features.is_empty()) {
            return bad(format!("reference {:?} has no features", r.name));
        }
        Ok(())
    }
}

/// Per-image verdict with the evidence behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub label: TamperLabel,
    pub best_ref: String,
    pub good_matches: usize,
    pub sharpness: f64,
    pub std_dev: f64,
    /// Present iff a homography was estimated.
    pub rotation_deg: Option<f64>,
    pub decision_path: Vec<DecisionRule>,
}

/// Builds a profile from named normal frames.
pub fn calibrate(
    refs: &[(String, GrayImage)],
    config: &CalibrationConfig,
) -> Result<CalibrationProfile, PipelineError> {
    if refs.len() < 2 {
        return Err(PipelineError::TooFewReferences(refs.len()));
    }
    if !(config.beta > 0.0 && config.gamma >= 0.0) {
        return Err(PipelineError::Config(
            "beta must be > 0 and gamma >= 0".into(),
        ));
    }
    let extractor = OrbExtractor::new(config.orb)?;

    let mut references = Vec::with_capacity(refs.len());
    for (name, img) in refs {
        let features = extractor.extract(img);
        if features.len() < config.min_ref_features {
            return Err(PipelineError::TooFewFeatures {
                name: name.clone(),
                found: features.len(),
                required: config.min_ref_features,
            });
        }
        references.push(ReferenceImage {
            name: name.clone(),
            features,
            sharpness: laplacian_variance(img).unwrap_or(0.0),
        });
    }

    let mut weakest = usize::MAX;
    for (i, a) in references.iter().enumerate() {
        for (j, b) in references.iter().enumerate() {
            if i == j {
                continue;
            }
            let count = good_match_count(&a.features, &b.features, &config.matching);
            if count == 0 {
                return Err(PipelineError::InconsistentReferences {
                    a: a.name.clone(),
                    b: b.name.clone(),
                });
            }
            weakest = weakest.min(count);
        }
    }
    let match_count_min = ((config.beta * weakest as f64).floor() as usize)
        .max(config.match_floor)
        .max(1);
    let least_sharp = references
        .iter()
        .map(|r| r.sharpness)
        .fold(f64::INFINITY, f64::min);

    let profile = CalibrationProfile {
        version: PROFILE_VERSION,
        orb_params: config.orb,
        match_params: config.matching,
        ransac_params: config.ransac,
        quality: QualityThresholds {
            blur_sharpness_min: config.gamma * least_sharp,
            noimage_std_min: config.noimage_std_min,
        },
        match_count_min,
        rotation_limit_deg: config.rotation_limit_deg,
        references,
    };
    profile.validate()?;
    Ok(profile)
}

/// A validated profile with its feature extractor ready; shareable across
/// threads.
#[derive(Debug, Clone)]
pub struct Classifier {
    profile: CalibrationProfile,
    extractor: OrbExtractor,
}

impl Classifier {
    pub fn new(profile: CalibrationProfile) -> Result<Self, PipelineError> {
        profile.validate()?;
        let extractor = OrbExtractor::new(profile.orb_params)?;
        Ok(Self { profile, extractor })
    }

    pub fn profile(&self) -> &CalibrationProfile {
        &self.profile
    }

    pub fn classify(&self, img: &GrayImage) -> Classification {
        let p = &self.profile;
        let features = self.extractor.extract(img);
        let sharpness = laplacian_variance(img).unwrap_or(0.0);
        let std_dev = intensity_std(img);

        let (best_idx, good) = p
            .references
            .iter()
            .map(|r| good_match_count(&features, &r.features, &p.match_params))
            .enumerate()
            .fold(
                (0, 0),
                |best, (i, c)| if c > best.1 { (i, c) } else { best },
            );
        let best_ref = &p.references[best_idx];

        let mut path = Vec::with_capacity(3);
        let verdict = |label, rotation_deg, path: Vec<DecisionRule>| Classification {
            label,
            best_ref: best_ref.name.clone(),
            good_matches: good,
            sharpness,
            std_dev,
            rotation_deg,
            decision_path: path,
        };

        if good < p.match_count_min {
            path.push(DecisionRule::MatchesBelowThreshold);
            if std_dev < p.quality.noimage_std_min {
                path.push(DecisionRule::UniformIntensity);
                return verdict(TamperLabel::Obstructed, None, path);
            }
            if sharpness < p.quality.blur_sharpness_min {
                path.push(DecisionRule::LowSharpness);
                return verdict(TamperLabel::Blurred, None, path);
            }
            path.push(DecisionRule::AbnormalFallback);
            return verdict(TamperLabel::Obstructed, None, path);
        }

        path.push(DecisionRule::MatchesAtOrAboveThreshold);
        let pairs: Vec<Correspondence> =
            good_matches(&features, &best_ref.features, &p.match_params)
                .iter()
                .map(|m| {
                    let t = features.features[m.query_idx].keypoint;
                    let r = best_ref.features.features[m.train_idx].keypoint;
                    Correspondence::new(t.x, t.y, r.x, r.y)
                })
                .collect();
        let angle = match ransac_homography(&pairs, &p.ransac_params) {
            Ok((h, _)) => rotation_angle(&h),
            Err(e) => Err(e),
        };
        match angle {
            Ok(deg) if deg.abs() > p.rotation_limit_deg => {
                path.push(DecisionRule::RotationExceedsLimit);
                verdict(TamperLabel::Rotated, Some(deg), path)
            }
            Ok(deg) => {
                path.push(DecisionRule::RotationWithinLimit);
                verdict(TamperLabel::Normal, Some(deg), path)
            }
            Err(HomographyError::UndefinedAngle) => {
                path.push(DecisionRule::RotationUndefined);
                path.push(DecisionRule::AbnormalFallback);
                verdict(TamperLabel::Obstructed, None, path)
            }
            Err(_) => {
                path.push(DecisionRule::RansacNoConsensus);
                path.push(DecisionRule::AbnormalFallback);
                verdict(TamperLabel::Obstructed, None, path)
            }
        }
    }
}

/// Classifies one frame; builds a [`Classifier`] per call, so prefer that type
/// for batches.
pub fn classify(
    img: &GrayImage,
    profile: &CalibrationProfile,
) -> Result<Classification, PipelineError> {
    Ok(Classifier::new(profile.clone())?.classify(img))
}
