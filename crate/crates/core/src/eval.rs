//! Dataset ingestion, evaluation metrics and profile persistence.
//!
//! Metrics treat `abnormal` (blurred, rotated or obstructed) as the positive
//! class. Ratios whose denominator is zero are reported as 0 and flagged
//! undefined rather than failing the run.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::homography::RansacParams;
use crate::image::{read_gray, ImageError};
use crate::matching::MatchParams;
use crate::metrics::QualityThresholds;
use crate::orb::{Descriptor256, Feature, FeatureSet, Keypoint, OrbParams};
use crate::pipeline::{
    CalibrationProfile, Classification, Classifier, PipelineError, ReferenceImage, TamperLabel,
    PROFILE_VERSION,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot decode {path}: {source}")]
    Image { path: PathBuf, source: ImageError },
    #[error("unknown label: {0}")]
    UnknownLabel(String),
    #[error("dataset schema error: {0}")]
    Schema(String),
    #[error("evaluation needs at least one sample")]
    EmptyDataset,
    #[error("malformed profile JSON: {0}")]
    Json(String),
    #[error("unsupported profile version {found} (expected {expected})")]
    Version { found: u64, expected: u32 },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub path: PathBuf,
    pub label: TamperLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabeledDataset {
    pub samples: Vec<Sample>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    let mut paths = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .map(|e| e.map(|e| e.path()).map_err(io_err(dir)))
        .collect::<Result<Vec<_>, _>>()?;
    paths.sort();
    Ok(paths)
}

/// Reads `root/{normal,blurred,rotated,obstructed}/*`, labelling each image
/// by its folder. Every file is decoded once to validate it.
pub fn load_dataset(root: &Path) -> Result<LabeledDataset, EvalError> {
    let mut samples = Vec::new();
    for dir in sorted_entries(root)? {
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        if !dir.is_dir() {
            return Err(EvalError::Schema(format!(
                "unexpected file at dataset root: {}",
                dir.display()
            )));
        }
        let label: TamperLabel = name
            .parse()
            .map_err(|_| EvalError::UnknownLabel(name.clone()))?;
        for path in sorted_entries(&dir)? {
            if !path.is_file() {
                continue;
            }
            read_gray(&path).map_err(|source| EvalError::Image {
                path: path.clone(),
                source,
            })?;
            samples.push(Sample { path, label });
        }
    }
    samples.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(LabeledDataset { samples })
}

/// Loads every image file in `dir` (sorted by name) as a named reference.
pub fn load_references(dir: &Path) -> Result<Vec<(String, crate::image::GrayImage)>, EvalError> {
    let mut refs = Vec::new();
    for path in sorted_entries(dir)? {
        if !path.is_file() {
            continue;
        }
        let img = read_gray(&path).map_err(|source| EvalError::Image {
            path: path.clone(),
            source,
        })?;
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        refs.push((name, img));
    }
    Ok(refs)
}

/// One classified sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub truth: TamperLabel,
    pub predicted: TamperLabel,
    pub seconds: f64,
}

/// Normal-vs-abnormal counts, abnormal positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BinaryConfusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub positive_class: String,
    pub n_samples: usize,
    /// Rows are true labels, columns predictions, both in
    /// normal/blurred/rotated/obstructed order.
    pub confusion: [[usize; 4]; 4],
    pub binary_confusion: BinaryConfusion,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Metrics whose denominator was zero and were reported as 0.
    pub undefined: Vec<String>,
    pub mean_seconds_per_image: f64,
    pub max_seconds_per_image: f64,
}

fn ratio(num: usize, den: usize, name: &str, undefined: &mut Vec<String>) -> f64 {
    if den == 0 {
        undefined.push(name.to_string());
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl EvalReport {
    pub fn from_outcomes(outcomes: &[Outcome]) -> Result<Self, EvalError> {
        if outcomes.is_empty() {
            return Err(EvalError::EmptyDataset);
        }
        let mut confusion = [[0usize; 4]; 4];
        let mut b = BinaryConfusion::default();
        for o in outcomes {
            confusion[o.truth.index()][o.predicted.index()] += 1;
            match (o.truth.is_abnormal(), o.predicted.is_abnormal()) {
                (true, true) => b.tp += 1,
                (false, true) => b.fp += 1,
                (false, false) => b.tn += 1,
                (true, false) => b.fn_ += 1,
            }
        }
        let n = outcomes.len();
        let mut undefined = Vec::new();
        let accuracy = (b.tp + b.tn) as f64 / n as f64;
        let precision = ratio(b.tp, b.tp + b.fp, "precision", &mut undefined);
        let recall = ratio(b.tp, b.tp + b.fn_, "recall", &mut undefined);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            undefined.push("f1".into());
            0.0
        };
        let mean = outcomes.iter().map(|o| o.seconds).sum::<f64>() / n as f64;
        let max = outcomes.iter().map(|o| o.seconds).fold(0.0, f64::max);
        Ok(Self {
            positive_class: "abnormal".into(),
            n_samples: n,
            confusion,
            binary_confusion: b,
            accuracy,
            precision,
            recall,
            f1,
            undefined,
            mean_seconds_per_image: mean,
            max_seconds_per_image: max,
        })
    }

    /// Fraction of samples of `label` predicted as `label`; `None` when the
    /// class is absent.
    pub fn class_recall(&self, label: TamperLabel) -> Option<f64> {
        let row = &self.confusion[label.index()];
        let total: usize = row.iter().sum();
        (total > 0).then(|| row[label.index()] as f64 / total as f64)
    }

    pub fn is_undefined(&self, metric: &str) -> bool {
        self.undefined.iter().any(|m| m == metric)
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flag = |m: &str| {
            if self.is_undefined(m) {
                " (undefined)"
            } else {
                ""
            }
        };
        writeln!(
            f,
            "Performance evaluation (positive class: {})",
            self.positive_class
        )?;
        writeln!(f, "  Samples                       {}", self.n_samples)?;
        writeln!(f, "  Accuracy                      {:.4}", self.accuracy)?;
        writeln!(
            f,
            "  Precision                     {:.4}{}",
            self.precision,
            flag("precision")
        )?;
        writeln!(
            f,
            "  F1-Score                      {:.4}{}",
            self.f1,
            flag("f1")
        )?;
        writeln!(
            f,
            "  Recall                        {:.4}{}",
            self.recall,
            flag("recall")
        )?;
        writeln!(
            f,
            "  Mean processing time / image  {:.4} sec (max {:.4})",
            self.mean_seconds_per_image, self.max_seconds_per_image
        )?;
        let b = &self.binary_confusion;
        writeln!(
            f,
            "  Binary confusion              TP={} FP={} TN={} FN={}",
            b.tp, b.fp, b.tn, b.fn_
        )?;
        writeln!(f, "  Confusion (rows true, cols predicted):")?;
        write!(f, "  {:>12}", "")?;
        for l in TamperLabel::ALL {
            write!(f, "{:>12}", l.as_str())?;
        }
        writeln!(f)?;
        for l in TamperLabel::ALL {
            write!(f, "  {:>12}", l.as_str())?;
            for count in self.confusion[l.index()] {
                write!(f, "{count:>12}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Classifies every sample, timing `classify` alone (decode excluded).
pub fn evaluate_detailed(
    classifier: &Classifier,
    dataset: &LabeledDataset,
) -> Result<(EvalReport, Vec<Classification>), EvalError> {
    if dataset.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let mut outcomes = Vec::with_capacity(dataset.len());
    let mut results = Vec::with_capacity(dataset.len());
    for sample in &dataset.samples {
        let img = read_gray(&sample.path).map_err(|source| EvalError::Image {
            path: sample.path.clone(),
            source,
        })?;
        let start = Instant::now();
        let c = classifier.classify(&img);
        let seconds = start.elapsed().as_secs_f64();
        outcomes.push(Outcome {
            truth: sample.label,
            predicted: c.label,
            seconds,
        });
        results.push(c);
    }
    Ok((EvalReport::from_outcomes(&outcomes)?, results))
}

pub fn evaluate(
    profile: &CalibrationProfile,
    dataset: &LabeledDataset,
) -> Result<EvalReport, EvalError> {
    let classifier = Classifier::new(profile.clone())?;
    evaluate_detailed(&classifier, dataset).map(|(report, _)| report)
}

#[derive(Serialize, Deserialize)]
struct ReferenceRecord {
    name: String,
    sharpness: f64,
    keypoints: Vec<Keypoint>,
    descriptors: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct ProfileRecord {
    version: u32,
    orb_params: OrbParams,
    match_params: MatchParams,
    ransac_params: RansacParams,
    quality: QualityThresholds,
    match_count_min: usize,
    rotation_limit_deg: f64,
    references: Vec<ReferenceRecord>,
}

/// Version-1 profile JSON. Keys are emitted in a fixed order, so identical
/// profiles serialize to identical bytes.
pub fn profile_to_json(profile: &CalibrationProfile) -> String {
    let record = ProfileRecord {
        version: profile.version,
        orb_params: profile.orb_params,
        match_params: profile.match_params,
        ransac_params: profile.ransac_params,
        quality: profile.quality,
        match_count_min: profile.match_count_min,
        rotation_limit_deg: profile.rotation_limit_deg,
        references: profile
            .references
            .iter()
            .map(|r| ReferenceRecord {
                name: r.name.clone(),
                sharpness: r.sharpness,
                keypoints: r.features.iter().map(|f| f.keypoint).collect(),
                descriptors: r.features.iter().map(|f| f.descriptor.to_hex()).collect(),
            })
            .collect(),
    };
    let mut out = serde_json::to_string_pretty(&record).expect("profile serializes");
    out.push('\n');
    out
}

pub fn profile_from_json(text: &str) -> Result<CalibrationProfile, EvalError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| EvalError::Json(e.to_string()))?;
    let version = value
        .get("version")
        .ok_or_else(|| EvalError::Json("missing field `version`".into()))?
        .as_u64()
        .ok_or_else(|| EvalError::Json("`version` must be a non-negative integer".into()))?;
    if version != PROFILE_VERSION as u64 {
        return Err(EvalError::Version {
            found: version,
            expected: PROFILE_VERSION,
        });
    }
    let record: ProfileRecord =
        serde_json::from_value(value).map_err(|e| EvalError::Json(e.to_string()))?;
    let mut references = Vec::with_capacity(record.references.len());
    for r in record.references {
        if r.keypoints.len() != r.descriptors.len() {
            return Err(EvalError::Json(format!(
                "reference {:?}: {} keypoints but {} descriptors",
                r.name,
                r.keypoints.len(),
                r.descriptors.len()
            )));
        }
        let features = r
            .keypoints
            .into_iter()
            .zip(&r.descriptors)
            .map(|(keypoint, hex)| {
                Descriptor256::from_hex(hex)
                    .map(|descriptor| Feature {
                        keypoint,
                        descriptor,
                    })
                    .map_err(|e| EvalError::Json(format!("reference {:?}: {e}", r.name)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        references.push(ReferenceImage {
            name: r.name,
            features: FeatureSet::new(features),
            sharpness: r.sharpness,
        });
    }
    let profile = CalibrationProfile {
        version: record.version,
        orb_params: record.orb_params,
        match_params: record.match_params,
        ransac_params: record.ransac_params,
        quality: record.quality,
        match_count_min: record.match_count_min,
        rotation_limit_deg: record.rotation_limit_deg,
        references,
    };
    profile.validate()?;
    Ok(profile)
}

pub fn save_profile(profile: &CalibrationProfile, path: &Path) -> Result<(), EvalError> {
    std::fs::write(path, profile_to_json(profile)).map_err(io_err(path))
}

pub fn load_profile(path: &Path) -> Result<CalibrationProfile, EvalError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    profile_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{encode_pgm, GrayImage};
    use TamperLabel::*;

    fn outcome(truth: TamperLabel, predicted: TamperLabel) -> Outcome {
        Outcome {
            truth,
            predicted,
            seconds: 0.01,
        }
    }

    #[test]
    fn hand_fixture_metrics() {
        // TP=2, FP=1, TN=2, FN=1
        let outcomes = [
            outcome(Blurred, Blurred),
            outcome(Rotated, Obstructed),
            outcome(Normal, Rotated),
            outcome(Normal, Normal),
            outcome(Normal, Normal),
            outcome(Obstructed, Normal),
        ];
        let r = EvalReport::from_outcomes(&outcomes).unwrap();
        assert_eq!(
            r.binary_confusion,
            BinaryConfusion {
                tp: 2,
                fp: 1,
                tn: 2,
                fn_: 1
            }
        );
        for v in [r.accuracy, r.precision, r.recall, r.f1] {
            assert!((v - 2.0 / 3.0).abs() < 1e-9);
        }
        assert!(r.undefined.is_empty());
        assert_eq!(r.confusion.iter().flatten().sum::<usize>(), 6);
    }

    #[test]
    fn perfect_predictions() {
        let outcomes: Vec<_> = (0..10)
            .map(|i| TamperLabel::ALL[i % 4])
            .map(|l| outcome(l, l))
            .collect();
        let r = EvalReport::from_outcomes(&outcomes).unwrap();
        assert_eq!(r.accuracy, 1.0);
        for (i, row) in r.confusion.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                if i != j {
                    assert_eq!(c, 0);
                }
            }
        }
        assert_eq!(r.class_recall(Rotated), Some(1.0));
    }

    #[test]
    fn all_normal_dataset_flags_undefined() {
        let outcomes = vec![outcome(Normal, Normal); 5];
        let r = EvalReport::from_outcomes(&outcomes).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
        assert!(r.is_undefined("precision") && r.is_undefined("recall"));
        assert_eq!(r.class_recall(Blurred), None);
    }

    #[test]
    fn empty_outcomes_rejected() {
        assert!(matches!(
            EvalReport::from_outcomes(&[]),
            Err(EvalError::EmptyDataset)
        ));
    }

    #[test]
    fn report_renders_table() {
        let r = EvalReport::from_outcomes(&[outcome(Normal, Normal), outcome(Blurred, Normal)])
            .unwrap();
        let text = r.to_string();
        assert!(text.contains("Accuracy"));
        assert!(text.contains("0.5000"));
        assert!(text.contains("positive class: abnormal"));
    }

    fn write_img(path: &Path) {
        std::fs::write(path, encode_pgm(&GrayImage::filled(4, 4, 9))).unwrap();
    }

    #[test]
    fn dataset_layout() {
        let dir = tempfile::tempdir().unwrap();
        for (sub, files) in [("normal", 2), ("blurred", 1)] {
            std::fs::create_dir(dir.path().join(sub)).unwrap();
            for i in 0..files {
                write_img(&dir.path().join(sub).join(format!("{i}.pgm")));
            }
        }
        let ds = load_dataset(dir.path()).unwrap();
        assert_eq!(ds.len(), 3);
        let labels: Vec<_> = ds.samples.iter().map(|s| s.label).collect();
        assert_eq!(labels, vec![Blurred, Normal, Normal]);
    }

    #[test]
    fn dataset_unknown_folder() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("misc")).unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert_eq!(err.to_string(), "unknown label: misc");
    }

    #[test]
    fn dataset_undecodable_file_named() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("normal")).unwrap();
        std::fs::write(dir.path().join("normal/broken.pgm"), b"P5\n4 4\n255\n").unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(err.to_string().contains("broken.pgm"), "{err}");
    }

    #[test]
    fn empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_dataset(dir.path()).unwrap().is_empty());
    }

    #[test]
    fn profile_version_checked_first() {
        let err = profile_from_json(r#"{"version": 999}"#).unwrap_err();
        assert!(matches!(err, EvalError::Version { found: 999, .. }));
        let err = profile_from_json("{not json").unwrap_err();
        assert!(matches!(err, EvalError::Json(_)));
    }
}
